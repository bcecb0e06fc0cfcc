#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "comid/error.hpp"
#include "comid/harness.hpp"
#include "comid/rng.hpp"

using namespace comid;
using nlohmann::json;

namespace {

std::vector<sim::ScenarioConfig> scenarios_or_builtin(const std::string& file) {
    return file.empty() ? sim::builtin_scenarios() : sim::load_scenarios(file);
}

PipelineConfig read_config(const std::string& file) {
    if (file.empty()) return {};
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file);
    try {
        return pipeline_config_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw InvalidSpec(e.what());
    }
}

void print_eval(const EvalReport& r) {
    std::printf("%-18s %-13s %7s %7s %6s %6s %10s\n", "scenario", "ablation", "TP", "FP", "safe", "unsafe", "invariants");
    for (const auto& row : r.rows) {
        std::printf("%-18s %-13s %7.3f %7.3f %6zu %6zu %10.1f\n", row.scenario.c_str(), to_string(row.ablation), row.tp,
                    row.fp, row.safe, row.unsafe, row.invariants);
    }
}

void print_success(const SuccessReport& r) {
    std::printf("%-18s %12s %12s %12s %12s\n", "scenario", "unmon.rate", "mon.rate", "unmon.steps", "mon.steps");
    for (const auto& row : r.rows) {
        std::printf("%-18s %12.3f %12.3f %12.1f %12.1f\n", row.scenario.c_str(), row.unmonitored.success_rate,
                    row.monitored.success_rate, row.unmonitored.mean_steps, row.monitored.mean_steps);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Context-based multi-invariant failure detection for sense-act programs"};
    app.require_subcommand(1);

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "Simulate scenarios and write labeled traces");
    std::string gen_scenario, gen_out;
    std::size_t gen_runs = 50;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--scenario", gen_scenario, "Scenario JSON file (default: built-in scenarios)");
    gen->add_option("--runs", gen_runs, "Runs per scenario")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "Overrides every scenario seed");
    gen->add_option("--out", gen_out, "Output directory")->required();

    // scenarios
    auto* scen = app.add_subcommand("scenarios", "Write the built-in scenarios as JSON");
    std::string scen_out;
    scen->add_option("--out", scen_out, "Output file")->required();

    // train
    auto* train = app.add_subcommand("train", "Learn a model from safe traces");
    std::string train_traces, train_config, train_model_path;
    train->add_option("--traces", train_traces, "Trace file or directory")->required();
    train->add_option("--config", train_config, "Pipeline configuration JSON");
    train->add_option("--model", train_model_path, "Output model file")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Cross-validated TP/FP per scenario and ablation");
    std::string eval_model, eval_traces, eval_ablation = "full", eval_report, eval_config;
    std::size_t eval_folds = 10;
    std::uint64_t eval_seed = 1;
    std::optional<double> eval_delta;
    auto* eval_model_opt = eval->add_option("--model", eval_model, "Model file whose configuration is used");
    eval->add_option("--config", eval_config, "Pipeline configuration JSON")->excludes(eval_model_opt);
    eval->add_option("--traces", eval_traces, "Trace file or directory")->required();
    eval->add_option("--ablation", eval_ablation, "full|context-only|multi-only|baseline|all");
    eval->add_option("--report", eval_report, "CSV report (JSON mirror written alongside)");
    eval->add_option("--folds", eval_folds, "Cross-validation folds");
    eval->add_option("--seed", eval_seed, "Fold shuffle seed");
    eval->add_option("--delta", eval_delta, "Overrides the solved threshold");

    // monitor-run
    auto* mon = app.add_subcommand("monitor-run", "Success rate with and without the monitor");
    std::string mon_model, mon_traces, mon_config, mon_scenario, mon_report;
    std::size_t mon_runs = 50, mon_first = 1000;
    auto* mon_model_opt = mon->add_option("--model", mon_model, "Model file applied to every scenario");
    auto* mon_traces_opt = mon->add_option("--traces", mon_traces, "Train one model per scenario from these traces");
    mon_model_opt->excludes(mon_traces_opt);
    mon->add_option("--config", mon_config, "Pipeline configuration JSON (with --traces)");
    mon->add_option("--scenario", mon_scenario, "Scenario JSON file (default: built-in scenarios)");
    mon->add_option("--runs", mon_runs, "Runs per arm")->check(CLI::PositiveNumber);
    mon->add_option("--first-run", mon_first, "Index of the first run seed");
    mon->add_option("--report", mon_report, "CSV report (JSON mirror written alongside)");

    // detect
    auto* det = app.add_subcommand("detect", "Stream per-iteration verdicts as JSON-Lines");
    std::string det_model, det_traces, det_out;
    std::optional<double> det_delta;
    det->add_option("--model", det_model, "Model file")->required();
    det->add_option("--traces", det_traces, "Trace file or directory")->required();
    det->add_option("--out", det_out, "Output file (default: stdout)");
    det->add_option("--delta", det_delta, "Overrides the solved threshold");

    // solve-delta
    auto* solve = app.add_subcommand("solve-delta", "Threshold for an uncertainty model");
    std::string solve_dist = "uniform";
    double solve_u = 1.0, solve_sigma = 1.0, solve_conf = 0.9;
    solve->add_option("--dist", solve_dist, "uniform|normal")->check(CLI::IsMember({"uniform", "normal"}));
    solve->add_option("--u", solve_u, "Error range bound U")->required();
    solve->add_option("--sigma", solve_sigma, "Standard deviation (normal)");
    solve->add_option("--confidence", solve_conf, "Confidence level C")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            auto scenarios = scenarios_or_builtin(gen_scenario);
            if (gen_seed) {
                for (auto& s : scenarios) s.rng_seed = combine_seed(*gen_seed, hash_string(s.name));
            }
            const auto corpus = sim::generate_corpus(scenarios, gen_runs);
            sim::write_corpus(corpus, gen_out);
            std::size_t unsafe = 0;
            for (const auto& e : corpus.manifest) unsafe += e.label == Label::unsafe;
            std::printf("%zu traces (%zu unsafe) written to %s\n", corpus.traces.size(), unsafe, gen_out.c_str());
        } else if (*scen) {
            json arr = json::array();
            for (const auto& s : sim::builtin_scenarios()) arr.push_back(sim::to_json(s));
            std::ofstream out(scen_out);
            if (!out) throw IoError("cannot write " + scen_out);
            out << arr.dump(2) << '\n';
        } else if (*train) {
            const auto file = load_trace_set(train_traces);
            const auto cfg = read_config(train_config);
            const auto model = train_model(file.schema, file.traces, cfg);
            save_model(model, cfg, train_model_path);
            std::printf("%zu groups, %zu families, %zu invariants\n", model.groups.size(), model.families.size(),
                        model.invariant_count());
        } else if (*eval) {
            EvalConfig cfg;
            cfg.folds = eval_folds;
            cfg.rng_seed = eval_seed;
            cfg.pipeline = eval_model.empty() ? read_config(eval_config) : load_model(eval_model).config;
            if (eval_delta) {
                cfg.pipeline.uncertainty.reset();
                cfg.pipeline.detector.delta = *eval_delta;
            }
            std::vector<Ablation> ablations;
            if (eval_ablation == "all") {
                ablations.assign(kAllAblations.begin(), kAllAblations.end());
            } else {
                ablations.push_back(ablation_from_string(eval_ablation));
            }
            const auto file = load_trace_set(eval_traces);
            const auto report = evaluate(file.schema, file.traces, cfg, ablations);
            print_eval(report);
            if (!eval_report.empty()) write_report(report, eval_report);
        } else if (*mon) {
            SuccessReport report;
            const auto scenarios = scenarios_or_builtin(mon_scenario);
            if (!mon_model.empty()) {
                const auto mf = load_model(mon_model);
                const auto det_cfg = mf.config.resolved_detector();
                for (const auto& s : scenarios) {
                    report.rows.push_back(success_rate_experiment(s, mon_runs, mon_first, mf.model, det_cfg));
                }
            } else if (!mon_traces.empty()) {
                const auto cfg = read_config(mon_config);
                const auto file = load_trace_set(mon_traces);
                const auto by_scenario = split_by_scenario(file.traces);
                for (const auto& s : scenarios) {
                    const auto it = by_scenario.find(s.name);
                    if (it == by_scenario.end()) throw TooFewTraces("no traces for scenario " + s.name);
                    const auto model = train_model(file.schema, it->second, cfg);
                    report.rows.push_back(
                        success_rate_experiment(s, mon_runs, mon_first, model, cfg.resolved_detector()));
                }
            } else {
                throw InvalidSpec("monitor-run needs --model or --traces");
            }
            print_success(report);
            if (!mon_report.empty()) write_report(report, mon_report);
        } else if (*det) {
            auto mf = load_model(det_model);
            auto cfg = mf.config.resolved_detector();
            if (det_delta) cfg.delta = *det_delta;
            const auto file = load_trace_set(det_traces);
            std::ofstream fout;
            if (!det_out.empty()) {
                fout.open(det_out);
                if (!fout) throw IoError("cannot write " + det_out);
            }
            std::ostream& out = det_out.empty() ? std::cout : fout;
            for (const auto& t : file.traces) {
                Detector d(mf.model, cfg);
                for (const auto& seg : t.segments) out << to_json(d.step(seg), t.trace_id).dump() << '\n';
            }
        } else if (*solve) {
            UncertaintySpec spec;
            spec.dist = solve_dist == "normal" ? Distribution::normal : Distribution::uniform;
            spec.range_bound = solve_u;
            spec.sigma = solve_sigma;
            spec.confidence = solve_conf;
            const auto sol = solve_delta(spec);
            std::printf("%.9f%s\n", sol.delta, sol.saturated ? " (saturated)" : "");
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
