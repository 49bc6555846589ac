#pragma once

// Scenario configuration: JSON (de)serialization, validation and the three
// built-in presets.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cardiomr/error.hpp"
#include "cardiomr/fvcore.hpp"
#include "cardiomr/mrtree.hpp"
#include "cardiomr/timeint.hpp"

namespace cardiomr {

using json = nlohmann::json;

enum class Method { fv, mr, mr_lts, mr_rkf };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::fv: return "fv";
        case Method::mr: return "mr";
        case Method::mr_lts: return "mr_lts";
        case Method::mr_rkf: return "mr_rkf";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "fv") return Method::fv;
    if (s == "mr") return Method::mr;
    if (s == "mr_lts") return Method::mr_lts;
    if (s == "mr_rkf") return Method::mr_rkf;
    throw ConfigError("unknown method '" + s + "' (expected fv, mr, mr_lts, mr_rkf)");
}

/// Analytic initial profile of one field.
struct FieldShape {
    std::string type = "constant";  // constant | disc | radial_sigmoid
    double value = 0.0;             // constant
    std::array<double, 2> center{0.0, 0.0};
    double radius = 0.0;     // disc
    double amplitude = 1.0;  // disc, radial_sigmoid
    double steepness = 50.0; // radial_sigmoid: A (1 - 1/(1 + exp(-k r - shift)))
    double shift = 0.1;

    ScalarField function() const {
        if (type == "constant") {
            const double c = value;
            return [c](double, double) { return c; };
        }
        if (type == "disc") {
            const auto s = *this;
            return [s](double x, double y) {
                const double dx = x - s.center[0], dy = y - s.center[1];
                return dx * dx + dy * dy < s.radius * s.radius ? s.amplitude : 0.0;
            };
        }
        if (type == "radial_sigmoid") {
            const auto s = *this;
            return [s](double x, double y) {
                const double r = std::hypot(x - s.center[0], y - s.center[1]);
                return s.amplitude * (1.0 - 1.0 / (1.0 + std::exp(-s.steepness * r - s.shift)));
            };
        }
        throw ConfigError("initial field type '" + type + "' is not one of constant, disc, radial_sigmoid");
    }
};

struct ScenarioConfig {
    std::string name = "custom";
    Method method = Method::mr;
    ModelSpec model;
    GridSpec grid;

    std::optional<double> eps_R;  // explicit tolerance, else from C and alpha
    double C = 1.0;
    double alpha = kDefaultAlpha;
    int stencil = 2;
    DetailRule detail_rule = DetailRule::min_refine_max_coarsen;

    double cfl_factor = 1.0;      // Euler and LTS: dt = cfl_factor * CFL bound at level L
    RkfController rkf;
    double rkf_initial_cfl = 0.5;

    std::array<FieldShape, kNumFields> initial{};  // v, u_e, w
    std::vector<StimulusEvent> stimuli;
    double t_end = 1.0;
    std::vector<double> snapshot_times;
    std::string output_dir = "out";
    std::optional<int> reference_level;  // compare: defaults to L + 1
    unsigned seed = 0;                   // reserved; every preset is deterministic

    InitialData initial_data() const {
        InitialData d;
        d.v = initial[kV].function();
        d.ue = initial[kUe].function();
        d.w = initial[kW].function();
        return d;
    }
    int ref_level() const { return reference_level.value_or(grid.max_level + 1); }
};

inline void validate(const ScenarioConfig& c) {
    validate(c.model);
    validate(c.grid);
    prediction_gammas(c.stencil);
    if (c.eps_R && !(*c.eps_R >= 0)) throw ConfigError("mr.eps_R must be non-negative");
    if (!c.eps_R && !(c.C > 0)) throw ConfigError("mr.C must be positive");
    if (!(c.t_end > 0)) throw ConfigError("t_end must be positive");
    if (!(c.cfl_factor > 0)) throw ConfigError("integrator.cfl_factor must be positive");
    if (!(c.rkf_initial_cfl > 0)) throw ConfigError("integrator.rkf.initial_cfl must be positive");
    validate(c.rkf);
    for (const auto& s : c.stimuli) {
        if (!(s.radius_sq >= 0)) throw ConfigError("stimulus radius_sq must be non-negative");
        if (s.target == kW) throw ConfigError("stimulus target must be v or u_e");
        if (s.target == kUe && !c.model.bidomain()) throw ConfigError("u_e stimuli need the bidomain model");
    }
    for (const double t : c.snapshot_times)
        if (!(t >= 0) || t > c.t_end) throw ConfigError("snapshot times must lie in [0, t_end]");
    if (c.reference_level && *c.reference_level < c.grid.max_level)
        throw ConfigError("reference_level must be at least grid.max_level");
    for (const auto& f : c.initial) f.function();
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline const json& object(const json& j, const char* key) {
    const json& o = j.at(key);
    if (!o.is_object()) throw ConfigError(std::string("config key '") + key + "' must be an object");
    return o;
}

inline Field parse_target(const std::string& s) {
    if (s == "v") return kV;
    if (s == "u_e") return kUe;
    throw ConfigError("stimulus target '" + s + "' must be v or u_e");
}

inline std::string target_name(Field f) { return f == kV ? "v" : f == kUe ? "u_e" : "w"; }

inline void read_conductivity(const json& j, ConductivitySpec& c) {
    read(j, "sigma_l", c.sigma_l);
    read(j, "sigma_t", c.sigma_t);
    read(j, "fiber_angle", c.fiber_angle);
}

inline json conductivity_json(const ConductivitySpec& c) {
    return {{"sigma_l", c.sigma_l}, {"sigma_t", c.sigma_t}, {"fiber_angle", c.fiber_angle}};
}

inline void read_shape(const json& j, FieldShape& s) {
    if (j.is_number()) {
        s = FieldShape{};
        s.value = j.get<double>();
        return;
    }
    if (!j.is_object()) throw ConfigError("initial field must be a number or an object");
    std::string type = s.type;
    read(j, "type", type);
    if (type != s.type) s = FieldShape{};
    s.type = type;
    read(j, "value", s.value);
    read(j, "center", s.center);
    read(j, "radius", s.radius);
    read(j, "amplitude", s.amplitude);
    read(j, "steepness", s.steepness);
    read(j, "shift", s.shift);
}

inline json shape_json(const FieldShape& s) {
    json j{{"type", s.type}};
    if (s.type == "constant") j["value"] = s.value;
    if (s.type == "disc") {
        j["center"] = s.center;
        j["radius"] = s.radius;
        j["amplitude"] = s.amplitude;
    }
    if (s.type == "radial_sigmoid") {
        j["center"] = s.center;
        j["amplitude"] = s.amplitude;
        j["steepness"] = s.steepness;
        j["shift"] = s.shift;
    }
    return j;
}

}  // namespace detail

inline const std::vector<std::string>& known_top_level_keys() {
    static const std::vector<std::string> keys{"name",    "method",  "model",  "grid",           "mr",
                                               "integrator", "initial", "stimuli", "t_end",       "snapshot_times",
                                               "output_dir", "reference_level", "seed", "preset"};
    return keys;
}

/// Overlays the JSON document on `base`; absent keys keep the base values.
inline ScenarioConfig from_json(const json& j, ScenarioConfig c = {}) {
    using namespace detail;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(known_top_level_keys().begin(), known_top_level_keys().end(), key) ==
            known_top_level_keys().end())
            throw ConfigError("unknown config key '" + key + "'");
    try {
        read(j, "name", c.name);
        if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
        if (j.contains("model")) {
            const json& m = object(j, "model");
            if (m.contains("type")) {
                const auto t = m.at("type").get<std::string>();
                if (t == "monodomain") c.model.kind = ModelKind::monodomain;
                else if (t == "bidomain") c.model.kind = ModelKind::bidomain;
                else throw ConfigError("model.type must be monodomain or bidomain");
            }
            read(m, "beta", c.model.constants.beta);
            read(m, "c_m", c.model.constants.c_m);
            read(m, "lambda", c.model.constants.lambda_mono);
            if (m.contains("kinetics")) {
                const json& k = object(m, "kinetics");
                std::string type = std::holds_alternative<FhnParams>(c.model.kinetics) ? "fhn" : "mitchell_schaeffer";
                read(k, "type", type);
                if (type == "fhn") {
                    FhnParams p = std::holds_alternative<FhnParams>(c.model.kinetics)
                                      ? std::get<FhnParams>(c.model.kinetics)
                                      : FhnParams{};
                    read(k, "a", p.a);
                    read(k, "b", p.b);
                    read(k, "lambda", p.lambda);
                    read(k, "theta", p.theta);
                    c.model.kinetics = p;
                } else if (type == "mitchell_schaeffer") {
                    MsParams p = std::holds_alternative<MsParams>(c.model.kinetics)
                                     ? std::get<MsParams>(c.model.kinetics)
                                     : MsParams{};
                    read(k, "v_p", p.v_p);
                    read(k, "R_m", p.R_m);
                    read(k, "eta1", p.eta1);
                    read(k, "eta2", p.eta2);
                    read(k, "eta3", p.eta3);
                    read(k, "eta4", p.eta4);
                    read(k, "eta5", p.eta5);
                    c.model.kinetics = p;
                } else {
                    throw ConfigError("model.kinetics.type must be fhn or mitchell_schaeffer");
                }
            }
            if (m.contains("conductivity")) {
                const json& s = object(m, "conductivity");
                if (s.contains("intra")) read_conductivity(object(s, "intra"), c.model.intra);
                if (s.contains("extra")) read_conductivity(object(s, "extra"), c.model.extra);
            }
        }
        if (j.contains("grid")) {
            const json& g = object(j, "grid");
            read(g, "max_level", c.grid.max_level);
            read(g, "domain_size", c.grid.side);
            read(g, "origin", c.grid.origin);
        }
        if (j.contains("mr")) {
            const json& m = object(j, "mr");
            if (m.contains("eps_R")) {
                if (m.at("eps_R").is_null()) c.eps_R.reset();
                else c.eps_R = m.at("eps_R").get<double>();
            }
            read(m, "C", c.C);
            read(m, "alpha", c.alpha);
            read(m, "stencil", c.stencil);
            if (m.contains("detail_rule")) {
                const auto r = m.at("detail_rule").get<std::string>();
                if (r == "min_refine_max_coarsen") c.detail_rule = DetailRule::min_refine_max_coarsen;
                else if (r == "max_both") c.detail_rule = DetailRule::max_both;
                else throw ConfigError("mr.detail_rule must be min_refine_max_coarsen or max_both");
            }
        }
        if (j.contains("integrator")) {
            const json& it = object(j, "integrator");
            if (it.contains("method")) c.method = parse_method(it.at("method").get<std::string>());
            read(it, "cfl_factor", c.cfl_factor);
            if (it.contains("rkf")) {
                const json& r = object(it, "rkf");
                read(r, "delta_desired", c.rkf.delta_desired);
                read(r, "S0", c.rkf.S0);
                read(r, "S_min", c.rkf.S_min);
                read(r, "p", c.rkf.p);
                read(r, "initial_cfl", c.rkf_initial_cfl);
                read(r, "literal_branch", c.rkf.literal_branch);
            }
        }
        if (j.contains("initial")) {
            const json& in = object(j, "initial");
            if (in.contains("v")) read_shape(in.at("v"), c.initial[kV]);
            if (in.contains("u_e")) read_shape(in.at("u_e"), c.initial[kUe]);
            if (in.contains("w")) read_shape(in.at("w"), c.initial[kW]);
        }
        if (j.contains("stimuli")) {
            c.stimuli.clear();
            for (const auto& s : j.at("stimuli")) {
                StimulusEvent e;
                read(s, "time", e.time);
                read(s, "center", e.center);
                read(s, "radius_sq", e.radius_sq);
                read(s, "amplitude", e.amplitude);
                if (s.contains("target")) e.target = parse_target(s.at("target").get<std::string>());
                c.stimuli.push_back(e);
            }
        }
        read(j, "t_end", c.t_end);
        read(j, "snapshot_times", c.snapshot_times);
        read(j, "output_dir", c.output_dir);
        if (j.contains("reference_level")) {
            if (j.at("reference_level").is_null()) c.reference_level.reset();
            else c.reference_level = j.at("reference_level").get<int>();
        }
        read(j, "seed", c.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    validate(c);
    return c;
}

inline json to_json(const ScenarioConfig& c) {
    using namespace detail;
    json kin;
    if (const auto* f = std::get_if<FhnParams>(&c.model.kinetics)) {
        kin = {{"type", "fhn"}, {"a", f->a}, {"b", f->b}, {"lambda", f->lambda}, {"theta", f->theta}};
    } else {
        const auto& p = std::get<MsParams>(c.model.kinetics);
        kin = {{"type", "mitchell_schaeffer"}, {"v_p", p.v_p},   {"R_m", p.R_m},   {"eta1", p.eta1},
               {"eta2", p.eta2},               {"eta3", p.eta3}, {"eta4", p.eta4}, {"eta5", p.eta5}};
    }
    json stimuli = json::array();
    for (const auto& e : c.stimuli)
        stimuli.push_back({{"time", e.time},
                           {"center", e.center},
                           {"radius_sq", e.radius_sq},
                           {"amplitude", e.amplitude},
                           {"target", target_name(e.target)}});
    json j;
    j["name"] = c.name;
    j["method"] = to_string(c.method);
    j["model"] = {{"type", c.model.bidomain() ? "bidomain" : "monodomain"},
                  {"beta", c.model.constants.beta},
                  {"c_m", c.model.constants.c_m},
                  {"lambda", c.model.constants.lambda_mono},
                  {"kinetics", kin},
                  {"conductivity", {{"intra", conductivity_json(c.model.intra)},
                                    {"extra", conductivity_json(c.model.extra)}}}};
    j["grid"] = {{"max_level", c.grid.max_level}, {"domain_size", c.grid.side}, {"origin", c.grid.origin}};
    j["mr"] = {{"eps_R", c.eps_R ? json(*c.eps_R) : json(nullptr)},
               {"C", c.C},
               {"alpha", c.alpha},
               {"stencil", c.stencil},
               {"detail_rule",
                c.detail_rule == DetailRule::max_both ? "max_both" : "min_refine_max_coarsen"}};
    j["integrator"] = {{"cfl_factor", c.cfl_factor},
                       {"rkf",
                        {{"delta_desired", c.rkf.delta_desired},
                         {"S0", c.rkf.S0},
                         {"S_min", c.rkf.S_min},
                         {"p", c.rkf.p},
                         {"initial_cfl", c.rkf_initial_cfl},
                         {"literal_branch", c.rkf.literal_branch}}}};
    j["initial"] = {{"v", shape_json(c.initial[kV])},
                    {"u_e", shape_json(c.initial[kUe])},
                    {"w", shape_json(c.initial[kW])}};
    j["stimuli"] = stimuli;
    j["t_end"] = c.t_end;
    j["snapshot_times"] = c.snapshot_times;
    j["output_dir"] = c.output_dir;
    j["reference_level"] = c.reference_level ? json(*c.reference_level) : json(nullptr);
    j["seed"] = c.seed;
    return j;
}

// ---------------------------------------------------------------------------
// Presets

/// Monodomain FitzHugh-Nagumo on the unit square with a corner sigmoid and a central
/// stimulus at t = 4 ms. Desk-scale resolution L = 7.
inline ScenarioConfig preset_example1() {
    ScenarioConfig c;
    c.name = "example1";
    c.method = Method::mr;
    c.model.kind = ModelKind::monodomain;
    c.model.constants = {1.0, 1.0, 1.0};
    c.model.kinetics = FhnParams{0.16875, 1.0, -100.0, 0.25};
    c.model.intra = {0.02, 0.02, 0.0};  // (1 + lambda)^-1 M_i = diag(0.01, 0.01)
    c.model.extra = {0.02, 0.02, 0.0};
    c.grid = {1.0, 7, {0.0, 0.0}};
    c.eps_R = 1e-3;
    c.initial[kV].type = "radial_sigmoid";
    c.initial[kV].center = {0.0, 0.0};
    c.initial[kV].amplitude = 1.0;
    c.initial[kV].steepness = 50.0;
    c.initial[kV].shift = 0.1;
    c.stimuli = {{4.0, {0.5, 0.5}, 0.04, 1.0, kV}};
    c.t_end = 5.5;
    c.snapshot_times = {1.5, 3.5, 4.5, 5.5};
    c.output_dir = "out/example1";
    return c;
}

/// Bidomain Mitchell-Schaeffer on [0, 5 cm]^2, fibres at pi/4, central u_e stimulus.
inline ScenarioConfig preset_example2() {
    ScenarioConfig c;
    c.name = "example2";
    c.method = Method::mr;
    c.model.kind = ModelKind::bidomain;
    c.model.constants = {2000.0, 1.0, 1.0};
    c.model.kinetics = MsParams{};
    c.model.intra = {6.0, 0.6, std::numbers::pi / 4};
    c.model.extra = {24.0, 12.0, std::numbers::pi / 4};
    c.grid = {5.0, 9, {0.0, 0.0}};
    c.eps_R = 5e-4;
    c.rkf.delta_desired = 1e-4;
    c.stimuli = {{0.0, {2.5, 2.5}, 0.25, 1.0, kUe}};
    c.t_end = 3.5;
    c.snapshot_times = {0.1, 0.5, 2.0, 3.5};
    c.output_dir = "out/example2";
    return c;
}

/// Example 2 with extra u_e stimuli at the corners, integrated with MR-RKF.
inline ScenarioConfig preset_example3() {
    ScenarioConfig c = preset_example2();
    c.name = "example3";
    c.method = Method::mr_rkf;
    c.eps_R = 2.5e-3;
    c.rkf.delta_desired = 1e-3;
    c.stimuli = {{0.0, {2.5, 2.5}, 0.25, 1.0, kUe},
                 {0.2, {0.5, 4.5}, 0.25, 1.0, kUe},
                 {1.0, {4.5, 4.5}, 0.25, 1.0, kUe},
                 {1.0, {0.5, 0.5}, 0.25, 1.0, kUe}};
    c.t_end = 3.5;
    c.snapshot_times = {0.5, 1.5, 2.5, 3.5};
    c.output_dir = "out/example3";
    return c;
}

inline ScenarioConfig preset(const std::string& name) {
    if (name == "example1") return preset_example1();
    if (name == "example2") return preset_example2();
    if (name == "example3") return preset_example3();
    throw ConfigError("unknown preset '" + name + "' (expected example1, example2, example3)");
}

/// Resolves the base preset (explicit name first, else the document's "preset" key)
/// and overlays the document on it.
inline ScenarioConfig load_config(const json& j, const std::optional<std::string>& preset_name = std::nullopt) {
    ScenarioConfig base;
    if (preset_name) {
        base = preset(*preset_name);
    } else if (j.is_object() && j.contains("preset")) {
        if (!j.at("preset").is_string()) throw ConfigError("config key 'preset' must be a string");
        base = preset(j.at("preset").get<std::string>());
    }
    return from_json(j, base);
}

}  // namespace cardiomr
