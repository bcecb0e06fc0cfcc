#include "comid/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "comid/error.hpp"
#include "comid/rng.hpp"

namespace comid::sim {

using nlohmann::json;

const char* to_string(FloorType f) noexcept {
    switch (f) {
        case FloorType::wood: return "wood";
        case FloorType::brick: return "brick";
        case FloorType::slippery: return "slippery";
    }
    return "?";
}

const char* to_string(ObstacleHeight h) noexcept { return h == ObstacleHeight::low ? "low" : "high"; }

const char* to_string(FailureKind k) noexcept {
    switch (k) {
        case FailureKind::fall: return "fall";
        case FailureKind::crash: return "crash";
        case FailureKind::trapped: return "trapped";
    }
    return "?";
}

namespace {

// Pressure signatures (left, right) per floor; the sensor resolution keeps
// small noise from changing the reading.
constexpr double kPressureResolution = 4.0;
constexpr double kDistanceRange = 5.0;
constexpr std::size_t kTrappedSteps = 20;

struct Signature {
    double left;
    double right;
};

Signature signature(FloorType f) {
    switch (f) {
        case FloorType::wood: return {48.0, 48.0};
        case FloorType::brick: return {56.0, 40.0};
        case FloorType::slippery: return {44.0, 44.0};
    }
    return {0.0, 0.0};
}

FloorType floor_from_string(const std::string& s) {
    if (s == "wood") return FloorType::wood;
    if (s == "brick") return FloorType::brick;
    if (s == "slippery") return FloorType::slippery;
    throw InvalidScenario("unknown floor type '" + s + "'");
}

double quantize(double v, double step) { return std::round(v / step) * step; }

double sample_noise(const UncertaintySpec& spec, Rng& rng) {
    const double u = rng.uniform01();
    if (spec.range_bound <= 0.0) return 0.0;
    switch (spec.dist) {
        case Distribution::uniform: return (2.0 * u - 1.0) * spec.range_bound;
        case Distribution::normal: {
            // Box-Muller from u and a second draw.
            double u1 = u > 0.0 ? u : 0x1.0p-53;
            return spec.sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * rng.uniform01());
        }
        case Distribution::custom: {
            double lo = -10.0 * spec.range_bound, hi = 10.0 * spec.range_bound;
            for (int i = 0; i < 80; ++i) {
                const double mid = 0.5 * (lo + hi);
                if (spec.cdf(mid) < u) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
    }
    return 0.0;
}

json noise_to_json(const UncertaintySpec& s) {
    return {{"dist", s.dist == Distribution::normal ? "normal" : "uniform"}, {"U", s.range_bound}, {"sigma", s.sigma}};
}

UncertaintySpec noise_from_json(const json& j) {
    UncertaintySpec s;
    const auto dist = j.value("dist", std::string("uniform"));
    if (dist == "uniform") {
        s.dist = Distribution::uniform;
    } else if (dist == "normal") {
        s.dist = Distribution::normal;
    } else {
        throw InvalidScenario("unsupported noise distribution '" + dist + "'");
    }
    s.range_bound = j.value("U", 0.0);
    s.sigma = j.value("sigma", 1.0);
    return s;
}

struct Emitter {
    std::vector<RawEvent> events;
    std::size_t iteration_start = 0;

    void sense(std::vector<double> v) {
        iteration_start = events.size();
        events.emplace_back(SenseEvent{std::move(v)});
    }
    void stm(const char* id) { events.emplace_back(StatementEvent{id}); }
    void call(const char* name, std::vector<double> args, std::optional<double> ret) {
        events.emplace_back(MethodEntryEvent{name, std::move(args)});
        events.emplace_back(MethodExitEvent{name, ret});
    }
    void act() { events.emplace_back(ActEvent{}); }

    Segment last_segment(const AttributeSchema& schema, std::size_t index) const {
        std::vector<RawEvent> tail(events.begin() + static_cast<std::ptrdiff_t>(iteration_start), events.end());
        auto segs = segment_events(tail, schema);
        segs.front().index = index;
        return segs.front();
    }
};

}  // namespace

NoiseModel NoiseModel::scaled(double factor) const {
    NoiseModel n = *this;
    for (auto* s : {&n.pressure, &n.distance, &n.imu, &n.odometry}) {
        s->range_bound *= factor;
        s->sigma *= factor;
    }
    return n;
}

void ScenarioConfig::validate() const {
    if (length == 0) throw InvalidScenario("corridor length must be positive");
    if (steps_max == 0) throw InvalidScenario("steps_max must be positive");
    if (zones.empty()) throw InvalidScenario("no floor zones");
    auto sorted = zones;
    std::sort(sorted.begin(), sorted.end(), [](const Zone& a, const Zone& b) { return a.begin < b.begin; });
    std::size_t expect = 0;
    for (const auto& z : sorted) {
        if (z.begin != expect || z.end <= z.begin) throw InvalidScenario("zones must tile the corridor exactly");
        expect = z.end;
    }
    if (expect != length) throw InvalidScenario("zones must tile the corridor exactly");
    for (const auto& o : obstacles) {
        if (o.cell == 0 || o.cell >= length) throw InvalidScenario("obstacle out of bounds");
    }
    if (wetness_min < 0.0 || wetness_max < wetness_min) throw InvalidScenario("invalid wetness range");
    if (!(tilt_limit > 0.0)) throw InvalidScenario("tilt limit must be positive");
    for (const auto* s : {&noise.pressure, &noise.distance, &noise.imu, &noise.odometry}) {
        if (s->range_bound < 0.0 || (s->dist == Distribution::normal && s->range_bound > 0.0 && !(s->sigma > 0.0))) {
            throw InvalidScenario("invalid noise model");
        }
        if (s->dist == Distribution::custom && s->range_bound > 0.0 && !s->cdf) throw InvalidScenario("custom noise needs a CDF");
    }
}

FloorType ScenarioConfig::floor_at(std::size_t cell) const {
    for (const auto& z : zones) {
        if (cell >= z.begin && cell < z.end) return z.floor;
    }
    return zones.back().floor;
}

json to_json(const ScenarioConfig& c) {
    json zones = json::array();
    for (const auto& z : c.zones) zones.push_back({{"begin", z.begin}, {"end", z.end}, {"floor", to_string(z.floor)}});
    json obstacles = json::array();
    for (const auto& o : c.obstacles) obstacles.push_back({{"cell", o.cell}, {"height", to_string(o.height)}});
    return {{"name", c.name},
            {"length", c.length},
            {"zones", std::move(zones)},
            {"obstacles", std::move(obstacles)},
            {"noise",
             {{"pressure", noise_to_json(c.noise.pressure)},
              {"distance", noise_to_json(c.noise.distance)},
              {"imu", noise_to_json(c.noise.imu)},
              {"odometry", noise_to_json(c.noise.odometry)}}},
            {"steps_max", c.steps_max},
            {"rng_seed", c.rng_seed},
            {"wetness_min", c.wetness_min},
            {"wetness_max", c.wetness_max},
            {"tilt_limit", c.tilt_limit},
            {"remedy_delay", c.remedy_delay}};
}

ScenarioConfig scenario_from_json(const json& j) {
    ScenarioConfig c;
    try {
        c.name = j.value("name", c.name);
        c.length = j.at("length").get<std::size_t>();
        for (const auto& z : j.at("zones")) {
            c.zones.push_back({z.at("begin").get<std::size_t>(), z.at("end").get<std::size_t>(),
                               floor_from_string(z.at("floor").get<std::string>())});
        }
        for (const auto& o : j.value("obstacles", json::array())) {
            const auto h = o.value("height", std::string("high"));
            if (h != "low" && h != "high") throw InvalidScenario("unknown obstacle height '" + h + "'");
            c.obstacles.push_back({o.at("cell").get<std::size_t>(), h == "low" ? ObstacleHeight::low : ObstacleHeight::high});
        }
        if (auto n = j.find("noise"); n != j.end()) {
            if (n->contains("pressure")) c.noise.pressure = noise_from_json(n->at("pressure"));
            if (n->contains("distance")) c.noise.distance = noise_from_json(n->at("distance"));
            if (n->contains("imu")) c.noise.imu = noise_from_json(n->at("imu"));
            if (n->contains("odometry")) c.noise.odometry = noise_from_json(n->at("odometry"));
        }
        c.steps_max = j.value("steps_max", c.steps_max);
        c.rng_seed = j.value("rng_seed", c.rng_seed);
        c.wetness_min = j.value("wetness_min", c.wetness_min);
        c.wetness_max = j.value("wetness_max", c.wetness_max);
        c.tilt_limit = j.value("tilt_limit", c.tilt_limit);
        c.remedy_delay = j.value("remedy_delay", c.remedy_delay);
    } catch (const json::exception& e) {
        throw InvalidScenario(e.what());
    }
    c.validate();
    return c;
}

std::vector<ScenarioConfig> load_scenarios(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidScenario(e.what());
    }
    std::vector<ScenarioConfig> out;
    if (j.is_array()) {
        for (const auto& s : j) out.push_back(scenario_from_json(s));
    } else {
        out.push_back(scenario_from_json(j));
    }
    return out;
}

AttributeSchema robot_schema() {
    return {{"pressure_left", "pressure_right", "distance_ahead"}, {"kPa", "kPa", "cells"}};
}

bool DetectorMonitor::observe(const Segment& segment) {
    return detector_.step(segment).classification == Classification::failing;
}

std::uint64_t run_seed(const ScenarioConfig& cfg, std::size_t run) {
    return combine_seed(cfg.rng_seed, run + 1);
}

RunResult run_scenario(const ScenarioConfig& cfg, RunMonitor* monitor) {
    cfg.validate();
    const auto schema = robot_schema();

    // Independent streams so that sensor noise draws do not shift physics.
    Rng env_rng(combine_seed(cfg.rng_seed, 1));
    Rng sensor_rng(combine_seed(cfg.rng_seed, 2));
    Rng physics_rng(combine_seed(cfg.rng_seed, 3));

    RunResult result;
    result.wetness = env_rng.uniform(cfg.wetness_min, cfg.wetness_max);

    RobotState st;
    std::vector<bool> bypassed(cfg.obstacles.size(), false);
    bool cautious = false;
    std::size_t halt_remaining = 0;
    Emitter em;
    std::size_t iteration = 0;

    auto nearest_obstacle = [&]() -> std::optional<std::size_t> {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < cfg.obstacles.size(); ++i) {
            const double d = static_cast<double>(cfg.obstacles[i].cell) - st.position;
            if (bypassed[i] || d <= 0.0) continue;
            if (!best || cfg.obstacles[i].cell < cfg.obstacles[*best].cell) best = i;
        }
        return best;
    };

    for (; iteration < cfg.steps_max; ++iteration) {
        if (st.position >= static_cast<double>(cfg.length)) break;
        const auto cell = static_cast<std::size_t>(st.position);
        const FloorType floor = cfg.floor_at(cell);

        // -- sense
        const auto sig = signature(floor);
        const double pl = quantize(sig.left + sample_noise(cfg.noise.pressure, sensor_rng), kPressureResolution);
        const double pr = quantize(sig.right + sample_noise(cfg.noise.pressure, sensor_rng), kPressureResolution);
        const auto obstacle = nearest_obstacle();
        const double true_dist =
            obstacle ? std::min(kDistanceRange, static_cast<double>(cfg.obstacles[*obstacle].cell) - st.position)
                     : kDistanceRange;
        const double dist =
            std::clamp(std::round(true_dist + sample_noise(cfg.noise.distance, sensor_rng)), 0.0, kDistanceRange);
        const double tilt_meas = st.tilt + sample_noise(cfg.noise.imu, sensor_rng);
        const double odo_noise = sample_noise(cfg.noise.odometry, sensor_rng);

        em.sense({pl, pr, dist});
        em.stm("loop.begin");
        em.stm("sense.read");

        const double before = st.position;
        bool crashed = false;

        if (halt_remaining > 0) {
            // -- remedy: stand still and let the body settle
            em.stm("remedy.halt");
            em.call("balance.adjust", {tilt_meas}, -0.1 * tilt_meas);
            st.arm_angle = std::clamp(20.0 + 3.0 * std::abs(tilt_meas), 0.0, 90.0);
            em.call("motion.angleMove", {st.arm_angle}, st.arm_angle);
            em.act();
            st.tilt *= 0.3;
            --halt_remaining;
        } else {
            // -- decide
            em.stm("floor.classify");
            const bool brick = std::abs(pl - pr) >= 8.0;
            em.call("floor.classify", {pl, pr}, brick ? 1.0 : 0.0);
            em.stm(brick ? "floor.is_brick" : "floor.is_wood");

            em.stm("balance.check");
            em.call("balance.adjust", {tilt_meas}, -0.1 * tilt_meas);
            if (std::abs(tilt_meas) > 6.0) em.stm("balance.strong");
            st.arm_angle = std::clamp(20.0 + 3.0 * std::abs(tilt_meas), 0.0, 90.0);
            em.call("motion.angleMove", {st.arm_angle}, st.arm_angle);

            if (dist <= 1.0) {
                em.stm("nav.avoid");
                em.stm("nav.sidestep");
                em.call("nav.sidestep", {dist}, 1.0);
                em.act();
                // Step around whatever is really there.
                if (obstacle && true_dist <= 2.0) bypassed[*obstacle] = true;
                st.tilt = 0.5 * st.tilt + physics_rng.uniform(-0.5, 0.5);
            } else {
                em.stm(cautious ? "gait.slow" : "gait.normal");
                if (cautious) em.stm("remedy.cautious");
                const double stride = cautious ? 0.5 : 1.0;
                const double next = st.position + stride;

                // Obstacles crossed by this stride.
                for (std::size_t i = 0; i < cfg.obstacles.size(); ++i) {
                    const auto oc = static_cast<double>(cfg.obstacles[i].cell);
                    if (bypassed[i] || oc <= st.position || oc > next) continue;
                    if (cfg.obstacles[i].height == ObstacleHeight::high) {
                        crashed = true;
                    } else {
                        st.tilt += 6.0;
                        bypassed[i] = true;
                    }
                }

                const double slide = floor == FloorType::slippery ? result.wetness * stride * stride : 0.0;
                const double grip = (floor == FloorType::slippery && stride >= 0.8) ? 0.9 : 0.5;
                double kick = 0.0, terrain = 0.0;
                switch (floor) {
                    case FloorType::wood:
                        kick = physics_rng.uniform(-1.0, 1.0);
                        terrain = physics_rng.uniform(0.0, 0.3);
                        break;
                    case FloorType::brick:
                        kick = physics_rng.uniform(-3.0, 3.0);
                        terrain = physics_rng.uniform(0.0, 4.5);
                        break;
                    case FloorType::slippery:
                        kick = physics_rng.uniform(-0.5, 0.5);
                        terrain = physics_rng.uniform(0.0, 0.6);
                        break;
                }
                const double slip = slide + terrain + odo_noise;
                em.call("gait.step", {stride}, slip);
                em.act();

                if (!crashed) st.position = next;
                st.tilt = grip * st.tilt + 0.8 * slide + kick;
            }
        }

        st.fallen = std::abs(st.tilt) > cfg.tilt_limit;
        st.trapped_counter = st.position > before ? 0 : st.trapped_counter + 1;

        if (crashed) {
            result.failure_kind = FailureKind::crash;
        } else if (st.fallen) {
            result.failure_kind = FailureKind::fall;
        } else if (st.trapped_counter >= kTrappedSteps) {
            result.failure_kind = FailureKind::trapped;
        }
        if (result.failure_kind) {
            ++iteration;
            break;
        }

        if (monitor && monitor->observe(em.last_segment(schema, iteration))) {
            halt_remaining = cfg.remedy_delay;
            cautious = true;
            ++result.remedies;
            monitor->on_remedy();
        }
    }

    if (!result.failure_kind && st.position < static_cast<double>(cfg.length)) {
        result.failure_kind = FailureKind::trapped;  // ran out of steps
    }
    result.steps_used = iteration;
    result.label = result.failure_kind ? Label::unsafe : Label::safe;
    result.trace.label = result.label;
    result.trace.trace_id = cfg.name;
    result.trace.segments = segment_events(em.events, schema);
    return result;
}

Corpus generate_corpus(const std::vector<ScenarioConfig>& scenarios, std::size_t runs_per_scenario) {
    if (runs_per_scenario == 0) throw InvalidScenario("runs_per_scenario must be at least 1");
    Corpus corpus;
    for (const auto& sc : scenarios) {
        for (std::size_t r = 0; r < runs_per_scenario; ++r) {
            auto cfg = sc;
            cfg.rng_seed = run_seed(sc, r);
            auto res = run_scenario(cfg);
            char id[32];
            std::snprintf(id, sizeof id, "-%04zu", r);
            res.trace.trace_id = sc.name + id;
            corpus.manifest.push_back({sc.name, cfg.rng_seed, res.label, res.trace.trace_id});
            corpus.traces.push_back(std::move(res.trace));
        }
    }
    return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> names;
    for (const auto& e : corpus.manifest) {
        if (std::find(names.begin(), names.end(), e.scenario) == names.end()) names.push_back(e.scenario);
    }
    for (const auto& name : names) {
        std::vector<Trace> traces;
        for (std::size_t i = 0; i < corpus.manifest.size(); ++i) {
            if (corpus.manifest[i].scenario == name) traces.push_back(corpus.traces[i]);
        }
        save_traces(robot_schema(), traces, dir / (name + ".jsonl"));
    }
    std::ofstream m(dir / "manifest.csv");
    if (!m) throw IoError("cannot write manifest in " + dir.string());
    m << "scenario,seed,label,trace_id\n";
    for (const auto& e : corpus.manifest) m << e.scenario << ',' << e.seed << ',' << to_string(e.label) << ',' << e.trace_id << '\n';
}

namespace {

UncertaintySpec uniform_noise(double u) {
    UncertaintySpec s;
    s.range_bound = u;
    return s;
}

UncertaintySpec normal_noise(double u, double sigma) {
    UncertaintySpec s;
    s.dist = Distribution::normal;
    s.range_bound = u;
    s.sigma = sigma;
    return s;
}

ScenarioConfig base(std::string name, std::uint64_t seed) {
    ScenarioConfig c;
    c.name = std::move(name);
    c.rng_seed = seed;
    c.length = 40;
    c.steps_max = 150;
    c.noise.pressure = uniform_noise(1.0);
    c.noise.distance = uniform_noise(0.3);
    c.noise.imu = uniform_noise(0.5);
    c.noise.odometry = uniform_noise(0.1);
    c.wetness_min = 0.5;
    return c;
}

}  // namespace

std::vector<ScenarioConfig> builtin_scenarios() {
    using F = FloorType;
    std::vector<ScenarioConfig> out;

    auto s1 = base("slip-patch", 101);
    s1.zones = {{0, 12, F::wood}, {12, 24, F::slippery}, {24, 32, F::wood}, {32, 40, F::brick}};
    s1.wetness_max = 4.2;
    out.push_back(s1);

    auto s2 = base("brick-then-slip", 202);
    s2.zones = {{0, 8, F::wood}, {8, 18, F::brick}, {18, 30, F::slippery}, {30, 40, F::wood}};
    s2.wetness_max = 4.5;
    out.push_back(s2);

    auto s3 = base("slip-obstacles", 303);
    s3.zones = {{0, 10, F::brick}, {10, 14, F::wood}, {14, 28, F::slippery}, {28, 40, F::wood}};
    s3.obstacles = {{6, ObstacleHeight::low}, {34, ObstacleHeight::high}, {37, ObstacleHeight::low}};
    s3.wetness_max = 4.0;
    out.push_back(s3);

    auto s4 = base("two-patches", 404);
    s4.zones = {{0, 6, F::wood}, {6, 16, F::slippery}, {16, 24, F::brick}, {24, 34, F::slippery}, {34, 40, F::wood}};
    s4.wetness_max = 4.0;
    out.push_back(s4);

    auto s5 = base("obstacle-course", 505);
    s5.zones = {{0, 10, F::wood}, {10, 22, F::brick}, {22, 34, F::slippery}, {34, 40, F::wood}};
    s5.obstacles = {{5, ObstacleHeight::high}, {15, ObstacleHeight::high}, {38, ObstacleHeight::high}};
    s5.noise.distance = uniform_noise(0.45);
    s5.wetness_max = 4.0;
    out.push_back(s5);

    auto s6 = base("noisy-mixed", 606);
    s6.zones = {{0, 8, F::brick}, {8, 20, F::slippery}, {20, 30, F::wood}, {30, 40, F::brick}};
    s6.obstacles = {{26, ObstacleHeight::low}};
    s6.noise.imu = normal_noise(1.0, 0.4);
    s6.noise.odometry = normal_noise(0.3, 0.12);
    s6.wetness_max = 4.3;
    out.push_back(s6);

    return out;
}

ScenarioConfig easy_scenario() {
    ScenarioConfig c;
    c.name = "wood-easy";
    c.length = 30;
    c.zones = {{0, 30, FloorType::wood}};
    c.rng_seed = 7;
    return c;
}

}  // namespace comid::sim
