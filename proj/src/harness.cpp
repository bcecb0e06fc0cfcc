#include "comid/harness.hpp"

#include <chrono>
#include <fstream>

#include "comid/error.hpp"
#include "comid/rng.hpp"

namespace comid {

using nlohmann::json;

const char* to_string(Ablation a) noexcept {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::context_only: return "context-only";
        case Ablation::multi_only: return "multi-only";
        case Ablation::baseline: return "baseline";
    }
    return "?";
}

Ablation ablation_from_string(const std::string& s) {
    for (auto a : kAllAblations) {
        if (s == to_string(a)) return a;
    }
    throw UnknownAblation("unknown ablation '" + s + "'");
}

void EvalConfig::validate() const {
    if (folds < 2) throw InvalidSpec("folds must be at least 2");
}

PipelineConfig apply_ablation(const EvalConfig& cfg) {
    PipelineConfig p = cfg.pipeline;
    switch (cfg.ablation) {
        case Ablation::full:
            p.mode = ContextMode::clustered;
            break;
        case Ablation::context_only:
            p.mode = ContextMode::clustered;
            p.inference.subset_ratios.clear();
            break;
        case Ablation::multi_only:
            p.mode = ContextMode::global;
            break;
        case Ablation::baseline:
            p.mode = ContextMode::global;
            p.inference.subset_ratios.clear();
            p.uncertainty.reset();
            p.detector.window = 1;
            p.detector.delta = 0.0;
            p.detector.aggregation = Aggregation::any_family;
            break;
    }
    return p;
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
    if (folds == 0) throw InvalidSpec("folds must be positive");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    std::vector<std::vector<std::size_t>> out(folds);
    for (std::size_t i = 0; i < n; ++i) out[i % folds].push_back(order[i]);
    return out;
}

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

EvalRow cross_validate(const AttributeSchema& schema, const std::vector<Trace>& traces, const EvalConfig& cfg,
                       const std::string& scenario) {
    return cross_validate(schema, traces, cfg, scenario, [](const Trace& t, const Model& m, const DetectorConfig& d) {
        return classify_trace(t, m, d).classification == Classification::failing;
    });
}

EvalRow cross_validate(const AttributeSchema& schema, const std::vector<Trace>& traces, const EvalConfig& cfg,
                       const std::string& scenario, const TraceClassifier& classify) {
    cfg.validate();
    std::vector<const Trace*> safe, unsafe;
    for (const auto& t : traces) (t.label == Label::unsafe ? unsafe : safe).push_back(&t);
    if (safe.size() < cfg.folds || unsafe.empty()) {
        throw TooFewTraces("scenario " + scenario + ": need at least " + std::to_string(cfg.folds) +
                           " safe traces and one unsafe trace");
    }

    const PipelineConfig pipeline = apply_ablation(cfg);
    const DetectorConfig det = pipeline.resolved_detector();
    const auto folds = make_folds(safe.size(), cfg.folds, cfg.rng_seed);

    EvalRow row;
    row.scenario = scenario;
    row.ablation = cfg.ablation;
    row.safe = safe.size();
    row.unsafe = unsafe.size();

    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<bool> held(safe.size(), false);
        for (auto i : folds[f]) held[i] = true;
        std::vector<Trace> train;
        for (std::size_t i = 0; i < safe.size(); ++i) {
            if (!held[i]) train.push_back(*safe[i]);
        }

        auto t0 = std::chrono::steady_clock::now();
        const Model model = train_model(schema, train, pipeline);
        row.train_ms += ms_since(t0);

        t0 = std::chrono::steady_clock::now();
        std::size_t fp = 0, tp = 0;
        for (auto i : folds[f]) {
            if (classify(*safe[i], model, det)) ++fp;
        }
        for (const auto* t : unsafe) {
            if (classify(*t, model, det)) ++tp;
        }
        row.check_ms += ms_since(t0);

        row.fp += static_cast<double>(fp) / static_cast<double>(folds[f].size());
        row.tp += static_cast<double>(tp) / static_cast<double>(unsafe.size());
        row.invariants += static_cast<double>(model.invariant_count());
        row.groups += static_cast<double>(model.groups.size());
    }
    const auto n = static_cast<double>(folds.size());
    row.tp /= n;
    row.fp /= n;
    row.invariants /= n;
    row.groups /= n;
    return row;
}

std::string scenario_of(const std::string& trace_id) {
    const auto dash = trace_id.rfind('-');
    if (dash == std::string::npos || dash + 1 == trace_id.size()) return trace_id;
    for (auto i = dash + 1; i < trace_id.size(); ++i) {
        if (trace_id[i] < '0' || trace_id[i] > '9') return trace_id;
    }
    return trace_id.substr(0, dash);
}

std::map<std::string, std::vector<Trace>> split_by_scenario(const std::vector<Trace>& traces) {
    std::map<std::string, std::vector<Trace>> out;
    for (const auto& t : traces) out[scenario_of(t.trace_id)].push_back(t);
    return out;
}

EvalReport evaluate(const AttributeSchema& schema, const std::vector<Trace>& traces, const EvalConfig& base,
                    const std::vector<Ablation>& ablations) {
    EvalReport report;
    for (const auto& [name, group] : split_by_scenario(traces)) {
        for (auto a : ablations) {
            EvalConfig cfg = base;
            cfg.ablation = a;
            report.rows.push_back(cross_validate(schema, group, cfg, name));
        }
    }
    return report;
}

namespace {

ArmStats run_arm(const sim::ScenarioConfig& scenario, std::size_t runs, std::size_t first_run,
                 const MonitorFactory* monitor) {
    ArmStats s;
    s.runs = runs;
    double steps = 0;
    for (std::size_t r = first_run; r < first_run + runs; ++r) {
        auto cfg = scenario;
        cfg.rng_seed = sim::run_seed(scenario, r);
        std::unique_ptr<sim::RunMonitor> m = monitor ? (*monitor)() : nullptr;
        const auto res = sim::run_scenario(cfg, m.get());
        s.remedies += res.remedies;
        if (res.label == Label::safe) {
            ++s.successes;
            steps += static_cast<double>(res.steps_used);
        }
    }
    s.success_rate = runs ? static_cast<double>(s.successes) / static_cast<double>(runs) : 0.0;
    s.mean_steps = s.successes ? steps / static_cast<double>(s.successes) : 0.0;
    return s;
}

}  // namespace

SuccessRow success_rate_experiment(const sim::ScenarioConfig& scenario, std::size_t runs, std::size_t first_run,
                                   const MonitorFactory& monitor) {
    SuccessRow row;
    row.scenario = scenario.name;
    row.unmonitored = run_arm(scenario, runs, first_run, nullptr);
    row.monitored = run_arm(scenario, runs, first_run, &monitor);
    return row;
}

SuccessRow success_rate_experiment(const sim::ScenarioConfig& scenario, std::size_t runs, std::size_t first_run,
                                   const Model& model, const DetectorConfig& cfg) {
    return success_rate_experiment(scenario, runs, first_run, [&] {
        return std::make_unique<sim::DetectorMonitor>(model, cfg);
    });
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    return out;
}

std::filesystem::path json_mirror(const std::filesystem::path& path) {
    auto p = path;
    p.replace_extension(".json");
    return p;
}

}  // namespace

void write_csv(const EvalReport& report, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "scenario,ablation,tp,fp,safe,unsafe,invariants,groups,train_ms,check_ms\n";
    for (const auto& r : report.rows) {
        out << r.scenario << ',' << to_string(r.ablation) << ',' << r.tp << ',' << r.fp << ',' << r.safe << ','
            << r.unsafe << ',' << r.invariants << ',' << r.groups << ',' << r.train_ms << ',' << r.check_ms << '\n';
    }
}

void write_csv(const SuccessReport& report, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "scenario,arm,runs,successes,success_rate,mean_steps,remedies\n";
    for (const auto& r : report.rows) {
        for (const auto& [arm, s] : {std::pair{"unmonitored", r.unmonitored}, std::pair{"monitored", r.monitored}}) {
            out << r.scenario << ',' << arm << ',' << s.runs << ',' << s.successes << ',' << s.success_rate << ','
                << s.mean_steps << ',' << s.remedies << '\n';
        }
    }
}

json to_json(const EvalReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"scenario", r.scenario},
                        {"ablation", to_string(r.ablation)},
                        {"tp", r.tp},
                        {"fp", r.fp},
                        {"safe", r.safe},
                        {"unsafe", r.unsafe},
                        {"invariants", r.invariants},
                        {"groups", r.groups},
                        {"train_ms", r.train_ms},
                        {"check_ms", r.check_ms}});
    }
    return {{"rows", std::move(rows)}};
}

namespace {

json arm_json(const ArmStats& s) {
    return {{"runs", s.runs},
            {"successes", s.successes},
            {"success_rate", s.success_rate},
            {"mean_steps", s.mean_steps},
            {"remedies", s.remedies}};
}

}  // namespace

json to_json(const SuccessReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"scenario", r.scenario}, {"unmonitored", arm_json(r.unmonitored)}, {"monitored", arm_json(r.monitored)}});
    }
    return {{"rows", std::move(rows)}};
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
    write_csv(report, path);
    open_out(json_mirror(path)) << to_json(report).dump(2) << '\n';
}

void write_report(const SuccessReport& report, const std::filesystem::path& path) {
    write_csv(report, path);
    open_out(json_mirror(path)) << to_json(report).dump(2) << '\n';
}

}  // namespace comid
