#include "comid/pipeline.hpp"

#include <fstream>

#include "comid/error.hpp"

namespace comid {

using nlohmann::json;

DetectorConfig PipelineConfig::resolved_detector() const {
    DetectorConfig d = detector;
    if (uncertainty) d.delta = solve_delta(*uncertainty).delta;
    return d;
}

Model train_model(const AttributeSchema& schema, const std::vector<Trace>& traces, const PipelineConfig& cfg) {
    std::vector<Trace> safe;
    for (const auto& t : traces) {
        if (t.label != Label::unsafe) safe.push_back(t);
    }
    if (safe.empty()) throw TooFewTraces("no safe traces to train on");
    const auto segments = collect_segments(safe);
    const SegmentIndex index(segments);

    Model m;
    m.schema = schema;
    m.mode = cfg.mode;
    if (cfg.mode == ContextMode::clustered) {
        auto g = group_segments(segments, cfg.grouping);
        m.clusters = std::move(g.clusters);
        m.groups = std::move(g.groups);
    } else {
        std::vector<EnvContext> contexts;
        for (const auto& s : segments) contexts.push_back(s.segment->env);
        m.clusters = cluster_env(contexts, 1, cfg.grouping.rng_seed);
        GroupModel all;
        all.group_id = 0;
        all.cluster = 0;
        all.centroid = m.clusters.centroids.front();
        all.representative_prog = segments.front().segment->prog;
        for (const auto& s : segments) all.members.push_back(s.ref);
        m.groups.push_back(std::move(all));
    }
    m.families = build_families(m.groups, index, cfg.inference);
    return m;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const json& need(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw Error("ParseError", std::string("missing field '") + key + "'");
    return *it;
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

const char* to_string(KMode m) { return m == KMode::grid_search ? "grid-search" : "fixed-percent"; }
const char* to_string(Aggregation a) { return a == Aggregation::any_family ? "any-family" : "fraction-of-families"; }
const char* to_string(ContextMode m) { return m == ContextMode::global ? "global" : "clustered"; }
const char* to_string(Distribution d) {
    switch (d) {
        case Distribution::uniform: return "uniform";
        case Distribution::normal: return "normal";
        case Distribution::custom: return "custom";
    }
    return "?";
}

json slot_to_json(const VariableSlot& s) {
    return {{"method", s.method},
            {"position", s.is_return() ? json("ret") : json(s.position)},
            {"point", s.point == ProgramPoint::entry ? "entry" : "exit"}};
}

VariableSlot slot_from_json(const json& j) {
    VariableSlot s;
    s.method = need(j, "method").get<std::string>();
    const auto& pos = need(j, "position");
    s.position = pos.is_string() ? VariableSlot::kReturn : pos.get<int>();
    s.point = need(j, "point").get<std::string>() == "exit" ? ProgramPoint::exit : ProgramPoint::entry;
    return s;
}

}  // namespace

json to_json(const PipelineConfig& cfg) {
    json tmpl = json::array();
    for (auto t : cfg.inference.templates) tmpl.push_back(to_string(t));
    json j = {
        {"mode", to_string(cfg.mode)},
        {"grouping",
         {{"k_mode", to_string(cfg.grouping.k_mode)},
          {"k_percent", cfg.grouping.k_percent},
          {"dos_threshold", cfg.grouping.dos_threshold},
          {"candidate_percents", cfg.grouping.candidate_percents},
          {"folds", cfg.grouping.folds},
          {"rng_seed", cfg.grouping.rng_seed}}},
        {"inference",
         {{"min_group_size", cfg.inference.min_group_size},
          {"subset_ratios", cfg.inference.subset_ratios},
          {"templates", tmpl},
          {"max_hull_vertices", cfg.inference.max_hull_vertices},
          {"rng_seed", cfg.inference.rng_seed}}},
        {"detector",
         {{"window", cfg.detector.window},
          {"delta", cfg.detector.delta},
          {"dos_threshold", cfg.detector.dos_threshold},
          {"aggregation", to_string(cfg.detector.aggregation)},
          {"family_fraction", cfg.detector.family_fraction},
          {"require_full_window", cfg.detector.require_full_window}}},
    };
    if (cfg.uncertainty) {
        const auto& u = *cfg.uncertainty;
        if (u.dist == Distribution::custom) throw Error("InvalidConfig", "custom CDFs cannot be serialized");
        j["uncertainty"] = {{"dist", to_string(u.dist)}, {"U", u.range_bound}, {"sigma", u.sigma},
                            {"confidence", u.confidence}};
    }
    return j;
}

PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig cfg;
    if (auto m = j.find("mode"); m != j.end()) cfg.mode = m->get<std::string>() == "global" ? ContextMode::global : ContextMode::clustered;
    if (auto g = j.find("grouping"); g != j.end()) {
        std::string mode;
        read_opt(*g, "k_mode", mode);
        if (!mode.empty()) {
            if (mode != "grid-search" && mode != "fixed-percent") throw Error("InvalidConfig", "unknown k_mode " + mode);
            cfg.grouping.k_mode = mode == "grid-search" ? KMode::grid_search : KMode::fixed_percent;
        }
        read_opt(*g, "k_percent", cfg.grouping.k_percent);
        read_opt(*g, "dos_threshold", cfg.grouping.dos_threshold);
        read_opt(*g, "candidate_percents", cfg.grouping.candidate_percents);
        read_opt(*g, "folds", cfg.grouping.folds);
        read_opt(*g, "rng_seed", cfg.grouping.rng_seed);
    }
    if (auto i = j.find("inference"); i != j.end()) {
        read_opt(*i, "min_group_size", cfg.inference.min_group_size);
        read_opt(*i, "subset_ratios", cfg.inference.subset_ratios);
        read_opt(*i, "max_hull_vertices", cfg.inference.max_hull_vertices);
        read_opt(*i, "rng_seed", cfg.inference.rng_seed);
        if (auto t = i->find("templates"); t != i->end()) {
            cfg.inference.templates.clear();
            for (const auto& name : *t) cfg.inference.templates.push_back(template_from_string(name.get<std::string>()));
        }
    }
    if (auto d = j.find("detector"); d != j.end()) {
        read_opt(*d, "window", cfg.detector.window);
        read_opt(*d, "delta", cfg.detector.delta);
        read_opt(*d, "dos_threshold", cfg.detector.dos_threshold);
        read_opt(*d, "family_fraction", cfg.detector.family_fraction);
        read_opt(*d, "require_full_window", cfg.detector.require_full_window);
        std::string agg;
        read_opt(*d, "aggregation", agg);
        if (!agg.empty()) {
            if (agg != "any-family" && agg != "fraction-of-families") throw Error("InvalidConfig", "unknown aggregation " + agg);
            cfg.detector.aggregation = agg == "any-family" ? Aggregation::any_family : Aggregation::fraction_of_families;
        }
    }
    if (auto u = j.find("uncertainty"); u != j.end() && !u->is_null()) {
        UncertaintySpec spec;
        const auto dist = need(*u, "dist").get<std::string>();
        if (dist == "uniform") {
            spec.dist = Distribution::uniform;
        } else if (dist == "normal") {
            spec.dist = Distribution::normal;
        } else {
            throw InvalidSpec("unsupported distribution '" + dist + "'");
        }
        read_opt(*u, "U", spec.range_bound);
        read_opt(*u, "sigma", spec.sigma);
        read_opt(*u, "confidence", spec.confidence);
        spec.validate();
        cfg.uncertainty = spec;
    }
    cfg.grouping.validate();
    cfg.detector.validate();
    return cfg;
}

json to_json(const Model& m) {
    json clusters = json::array();
    for (std::size_t i = 0; i < m.clusters.centroids.size(); ++i) {
        clusters.push_back({{"index", i}, {"centroid", m.clusters.centroids[i].values}});
    }
    json groups = json::array();
    for (const auto& g : m.groups) {
        json refs = json::array();
        for (const auto& r : g.members) refs.push_back(json::array({r.trace_id, r.index}));
        groups.push_back({{"group_id", g.group_id},
                          {"cluster", g.cluster},
                          {"centroid", g.centroid.values},
                          {"representative_prog", g.representative_prog.ids()},
                          {"member_refs", std::move(refs)}});
    }
    json families = json::array();
    for (const auto& f : m.families) {
        json slots = json::array();
        for (const auto& s : f.slots) slots.push_back(slot_to_json(s));
        json members = json::array();
        for (const auto& inv : f.members) {
            json hull = json::array();
            for (const auto& pt : inv.params.hull) hull.push_back(json::array({pt.x, pt.y}));
            members.push_back({{"p", inv.p}, {"params", {{"constants", inv.params.constants}, {"hull", std::move(hull)}}}});
        }
        families.push_back({{"family_id", f.family_id},
                            {"group_id", f.group_id},
                            {"template", to_string(f.tmpl)},
                            {"slots", std::move(slots)},
                            {"members", std::move(members)}});
    }
    return {{"format", kModelFormat},
            {"attributes", m.schema.names},
            {"mode", to_string(m.mode)},
            {"stats", {{"variances", m.clusters.stats.variances}}},
            {"clusters", std::move(clusters)},
            {"groups", std::move(groups)},
            {"families", std::move(families)}};
}

Model model_from_json(const json& j) {
    if (need(j, "format").get<std::string>() != kModelFormat) throw Error("ParseError", "not a comid-model/1 file");
    Model m;
    m.schema.names = need(j, "attributes").get<std::vector<std::string>>();
    m.mode = need(j, "mode").get<std::string>() == "global" ? ContextMode::global : ContextMode::clustered;
    m.clusters.stats = EnvStats::from_variances(need(need(j, "stats"), "variances").get<std::vector<double>>());
    for (const auto& c : need(j, "clusters")) {
        if (need(c, "index").get<std::size_t>() != m.clusters.centroids.size()) {
            throw Error("ParseError", "cluster indices must be consecutive");
        }
        m.clusters.centroids.push_back({need(c, "centroid").get<std::vector<double>>()});
    }
    m.clusters.k = m.clusters.centroids.size();
    for (const auto& g : need(j, "groups")) {
        GroupModel gm;
        gm.group_id = need(g, "group_id").get<std::size_t>();
        gm.cluster = need(g, "cluster").get<std::size_t>();
        gm.centroid.values = need(g, "centroid").get<std::vector<double>>();
        gm.representative_prog = ProgContext(need(g, "representative_prog").get<std::vector<std::string>>());
        for (const auto& r : need(g, "member_refs")) gm.members.push_back({r.at(0).get<std::string>(), r.at(1).get<std::size_t>()});
        if (gm.group_id != m.groups.size()) throw Error("ParseError", "group ids must be consecutive");
        m.groups.push_back(std::move(gm));
    }
    for (const auto& f : need(j, "families")) {
        InvariantFamily fam;
        fam.family_id = need(f, "family_id").get<std::size_t>();
        fam.group_id = need(f, "group_id").get<std::size_t>();
        fam.tmpl = template_from_string(need(f, "template").get<std::string>());
        for (const auto& s : need(f, "slots")) fam.slots.push_back(slot_from_json(s));
        for (const auto& inv : need(f, "members")) {
            Invariant i;
            i.tmpl = fam.tmpl;
            i.slots = fam.slots;
            i.p = need(inv, "p").get<double>();
            const auto& params = need(inv, "params");
            i.params.constants = need(params, "constants").get<std::vector<double>>();
            for (const auto& pt : need(params, "hull")) i.params.hull.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
            fam.members.push_back(std::move(i));
        }
        if (fam.family_id != m.families.size() || fam.group_id >= m.groups.size() || fam.members.empty()) {
            throw Error("ParseError", "inconsistent family " + std::to_string(fam.family_id));
        }
        m.families.push_back(std::move(fam));
    }
    return m;
}

void save_model(const Model& model, const PipelineConfig& cfg, const std::filesystem::path& path) {
    json j = to_json(model);
    j["config"] = to_json(cfg);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("ParseError", e.what());
    }
    ModelFile f{model_from_json(j), {}};
    if (auto c = j.find("config"); c != j.end()) f.config = pipeline_config_from_json(*c);
    return f;
}

json to_json(const Verdict& v, const std::string& trace_id) {
    json fams = json::array();
    for (const auto& s : v.scores) {
        fams.push_back({{"family_id", s.family_id}, {"est", s.est}, {"windowed_est", s.windowed_est}});
    }
    return {{"trace_id", trace_id},
            {"index", v.iteration},
            {"classification", to_string(v.classification)},
            {"matched", v.matched},
            {"families", std::move(fams)}};
}

}  // namespace comid
