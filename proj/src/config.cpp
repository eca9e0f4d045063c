#include "subtrack/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <string>

#include "subtrack/error.hpp"

namespace subtrack::control {

using nlohmann::json;

namespace {

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys)
{
    if (!obj.is_object())
        throw ConfigError(where + ": expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where)
{
    if (!obj.contains(key) || obj.at(key).is_null())
        return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <int N>
Eigen::Matrix<double, N, 1> vec_or(const json& obj, const char* key, const Eigen::Matrix<double, N, 1>& fallback,
                                   const std::string& where)
{
    if (!obj.contains(key) || obj.at(key).is_null())
        return fallback;
    const auto& a = obj.at(key);
    if (!a.is_array() || a.size() != N)
        throw ConfigError(where + "." + key + ": expected an array of " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> v;
    for (int k = 0; k < N; ++k) {
        if (!a[k].is_number())
            throw ConfigError(where + "." + key + ": expected numbers");
        v(k) = a[k].get<double>();
    }
    return v;
}

acoustics::PropagationField parse_field(const json& obj, acoustics::PropagationField f, const std::string& where)
{
    if (obj.is_null())
        return f;
    allow_keys(obj, where, {"source_depth", "water_depth", "base_offset", "spreading_coeff", "absorption",
                            "modulation_amp", "cz_period", "loss_floor", "loss_ceiling"});
    f.source_depth = get_or(obj, "source_depth", f.source_depth, where);
    f.water_depth = get_or(obj, "water_depth", f.water_depth, where);
    f.base_offset = get_or(obj, "base_offset", f.base_offset, where);
    f.spreading_coeff = get_or(obj, "spreading_coeff", f.spreading_coeff, where);
    f.absorption = get_or(obj, "absorption", f.absorption, where);
    f.modulation_amp = get_or(obj, "modulation_amp", f.modulation_amp, where);
    f.cz_period = get_or(obj, "cz_period", f.cz_period, where);
    f.loss_floor = get_or(obj, "loss_floor", f.loss_floor, where);
    f.loss_ceiling = get_or(obj, "loss_ceiling", f.loss_ceiling, where);
    return f;
}

ScenarioKind parse_kind(const std::string& s)
{
    if (s == "known_single")
        return ScenarioKind::known_single;
    if (s == "known_double")
        return ScenarioKind::known_double;
    if (s == "bot_single")
        return ScenarioKind::bot_single;
    if (s == "bot_tradeoff")
        return ScenarioKind::bot_tradeoff;
    throw ConfigError("scenario_kind: unknown value '" + s + "'");
}

dp::CostMode default_mode(ScenarioKind kind)
{
    switch (kind) {
    case ScenarioKind::known_double:
        return dp::CostMode::multi_target;
    case ScenarioKind::bot_tradeoff:
        return dp::CostMode::tradeoff;
    default:
        return dp::CostMode::single_target;
    }
}

CarrierSpec parse_carrier(const json& obj)
{
    const std::string where = "carrier";
    CarrierSpec c;
    if (obj.is_null())
        return c;
    allow_keys(obj, where, {"initial", "deltas", "ranges", "depth_bounds", "horizontal_box", "cruise", "field"});
    c.initial.s = vec_or<3>(obj, "initial", Eigen::Vector3d(0.0, 0.0, 300.0), where);
    c.space.deltas = vec_or<3>(obj, "deltas", c.space.deltas, where);
    if (obj.contains("ranges")) {
        const auto& r = obj.at("ranges");
        if (!r.is_array() || r.size() != 3)
            throw ConfigError("carrier.ranges: expected three integers");
        for (int j = 0; j < 3; ++j) {
            if (!r[j].is_number_integer())
                throw ConfigError("carrier.ranges: expected integers");
            c.space.ranges[j] = r[j].get<int>();
        }
    }
    const Eigen::Vector2d bounds = vec_or<2>(obj, "depth_bounds", Eigen::Vector2d(0.0, 1000.0), where);
    c.space.min_depth = bounds(0);
    c.space.max_depth = bounds(1);
    if (obj.contains("horizontal_box") && !obj.at("horizontal_box").is_null()) {
        const Eigen::Vector4d b = vec_or<4>(obj, "horizontal_box", Eigen::Vector4d::Zero(), where);
        c.space.horizontal_box = dynamics::HorizontalBox{b(0), b(1), b(2), b(3)};
    }
    c.cruise = vec_or<3>(obj, "cruise", Eigen::Vector3d::Zero(), where);
    c.field = parse_field(obj.value("field", json()), acoustics::PropagationField{}, where + ".field");
    return c;
}

TargetSpec parse_target(const json& obj, double T, std::size_t k)
{
    const std::string where = "targets[" + std::to_string(k) + "]";
    allow_keys(obj, where, {"initial", "depth", "sigma_eps", "mu0", "sigma0_diag", "sigma0", "field"});
    TargetSpec t;
    t.model.T = T;
    t.initial = vec_or<4>(obj, "initial", dynamics::Vec4::Zero(), where);
    t.model.depth = get_or(obj, "depth", t.model.depth, where);
    t.model.sigma_eps = get_or(obj, "sigma_eps", t.model.sigma_eps, where);
    t.model.mu0 = vec_or<4>(obj, "mu0", t.initial, where);
    if (obj.contains("sigma0_diag") && obj.contains("sigma0"))
        throw ConfigError(where + ": give either sigma0_diag or sigma0, not both");
    if (obj.contains("sigma0_diag"))
        t.model.Sigma0 = vec_or<4>(obj, "sigma0_diag", dynamics::Vec4::Zero(), where).asDiagonal();
    if (obj.contains("sigma0")) {
        const auto& m = obj.at("sigma0");
        if (!m.is_array() || m.size() != 4)
            throw ConfigError(where + ".sigma0: expected a 4x4 array");
        for (int i = 0; i < 4; ++i) {
            if (!m[i].is_array() || m[i].size() != 4)
                throw ConfigError(where + ".sigma0: expected a 4x4 array");
            for (int j = 0; j < 4; ++j)
                t.model.Sigma0(i, j) = m[i][j].get<double>();
        }
    }
    acoustics::PropagationField base;
    base.source_depth = t.model.depth;
    t.field = parse_field(obj.value("field", json()), base, where + ".field");
    return t;
}

} // namespace

ScenarioConfig parse_config(const json& doc)
{
    allow_keys(doc, "config",
               {"scenario_kind", "total_steps", "step_seconds", "seed", "workers", "period1_end", "subinterval_length",
                "truth_from_prior", "carrier", "targets", "maneuvers", "quantization", "cost", "measurement", "ukf",
                "diagram"});
    ScenarioConfig c;
    if (!doc.contains("scenario_kind"))
        throw ConfigError("config: scenario_kind is required");
    c.kind = parse_kind(get_or<std::string>(doc, "scenario_kind", "", "config"));
    c.total_steps = get_or(doc, "total_steps", c.total_steps, "config");
    c.step_seconds = get_or(doc, "step_seconds", c.step_seconds, "config");
    c.seed = get_or<std::uint64_t>(doc, "seed", c.seed, "config");
    c.workers = get_or(doc, "workers", c.workers, "config");
    c.truth_from_prior = get_or(doc, "truth_from_prior", c.truth_from_prior, "config");
    c.period1_end = get_or(doc, "period1_end", c.is_bot() ? c.total_steps / 2 : 0, "config");
    c.subinterval_length = get_or(doc, "subinterval_length", c.total_steps - c.period1_end, "config");
    if (c.subinterval_length < 1)
        c.subinterval_length = std::max(1, c.total_steps);

    c.carrier = parse_carrier(doc.value("carrier", json()));

    if (!doc.contains("targets") || !doc.at("targets").is_array())
        throw ConfigError("config: targets must be an array");
    for (std::size_t k = 0; k < doc.at("targets").size(); ++k)
        c.targets.push_back(parse_target(doc.at("targets")[k], c.step_seconds, k));

    if (doc.contains("maneuvers")) {
        const auto& arr = doc.at("maneuvers");
        if (!arr.is_array())
            throw ConfigError("config: maneuvers must be an array");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            const std::string where = "maneuvers[" + std::to_string(k) + "]";
            allow_keys(arr[k], where, {"start", "duration", "displacement"});
            Maneuver m;
            m.start = get_or(arr[k], "start", 0, where);
            m.duration = get_or(arr[k], "duration", 0, where);
            m.displacement = vec_or<3>(arr[k], "displacement", Eigen::Vector3d::Zero(), where);
            c.maneuvers.push_back(m);
        }
    }

    if (doc.contains("quantization")) {
        const auto& q = doc.at("quantization");
        const std::string where = "quantization";
        allow_keys(q, where, {"M", "NR", "NS", "gamma0", "gamma_decay", "metric_lambda"});
        c.quantization.M = get_or(q, "M", c.quantization.M, where);
        c.quantization.NR = get_or(q, "NR", c.quantization.NR, where);
        c.quantization.NS = get_or(q, "NS", c.quantization.NS, where);
        c.quantization.gamma0 = get_or(q, "gamma0", c.quantization.gamma0, where);
        if (q.contains("gamma_decay") && !q.at("gamma_decay").is_null())
            c.quantization.gamma_decay = q.at("gamma_decay").get<double>();
        c.quantization.metric_lambda = get_or(q, "metric_lambda", c.quantization.metric_lambda, where);
    }

    c.cost.mode = default_mode(c.kind);
    if (c.cost.mode == dp::CostMode::multi_target)
        c.cost.alphas.assign(c.targets.size(), 1.0 / static_cast<double>(std::max<std::size_t>(1, c.targets.size())));
    if (doc.contains("cost")) {
        const auto& j = doc.at("cost");
        const std::string where = "cost";
        allow_keys(j, where, {"mode", "alphas", "epsilon", "terminal_mode", "direction"});
        if (j.contains("mode")) {
            const auto m = j.at("mode").get<std::string>();
            if (m == "single_target")
                c.cost.mode = dp::CostMode::single_target;
            else if (m == "multi_target")
                c.cost.mode = dp::CostMode::multi_target;
            else if (m == "tradeoff")
                c.cost.mode = dp::CostMode::tradeoff;
            else
                throw ConfigError("cost.mode: unknown value '" + m + "'");
        }
        if (j.contains("alphas"))
            c.cost.alphas = j.at("alphas").get<std::vector<double>>();
        c.cost.epsilon = get_or(j, "epsilon", c.cost.epsilon, where);
        const auto terminal = get_or<std::string>(j, "terminal_mode", "same_as_stage", where);
        if (terminal == "zero")
            c.cost.terminal_mode = dp::TerminalMode::zero;
        else if (terminal == "same_as_stage")
            c.cost.terminal_mode = dp::TerminalMode::same_as_stage;
        else
            throw ConfigError("cost.terminal_mode: unknown value '" + terminal + "'");
        const auto dir = get_or<std::string>(j, "direction", "min", where);
        if (dir == "min")
            c.direction = dp::Direction::minimize;
        else if (dir == "max")
            c.direction = dp::Direction::maximize;
        else
            throw ConfigError("cost.direction: expected 'min' or 'max'");
    }
    for (const auto& t : c.targets)
        c.cost.target_fields.push_back(t.field);
    c.cost.carrier_field = c.carrier.field;

    if (doc.contains("measurement")) {
        const auto& m = doc.at("measurement");
        const std::string where = "measurement";
        allow_keys(m, where, {"f0", "c_sound", "sigma_bearing_deg", "sigma_freq"});
        c.measurement.f0 = get_or(m, "f0", c.measurement.f0, where);
        c.measurement.c_sound = get_or(m, "c_sound", c.measurement.c_sound, where);
        if (m.contains("sigma_bearing_deg"))
            c.measurement.sigma_bearing = m.at("sigma_bearing_deg").get<double>() * std::numbers::pi / 180.0;
        c.measurement.sigma_freq = get_or(m, "sigma_freq", c.measurement.sigma_freq, where);
    }
    if (doc.contains("ukf")) {
        const auto& u = doc.at("ukf");
        const std::string where = "ukf";
        allow_keys(u, where, {"alpha", "beta", "kappa"});
        c.ukf.alpha_sp = get_or(u, "alpha", c.ukf.alpha_sp, where);
        c.ukf.beta_sp = get_or(u, "beta", c.ukf.beta_sp, where);
        c.ukf.kappa_sp = get_or(u, "kappa", c.ukf.kappa_sp, where);
    }
    if (doc.contains("diagram")) {
        const auto& d = doc.at("diagram");
        const std::string where = "diagram";
        allow_keys(d, where, {"range_max", "n_r", "n_z", "saturation"});
        c.diagram.range_max = get_or(d, "range_max", c.diagram.range_max, where);
        c.diagram.n_r = get_or(d, "n_r", c.diagram.n_r, where);
        c.diagram.n_z = get_or(d, "n_z", c.diagram.n_z, where);
        c.diagram.saturation =
            get_or(d, "saturation", std::numeric_limits<double>::infinity(), where);
    }
    c.validate();
    return c;
}

json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

ScenarioConfig load_config(const std::filesystem::path& path)
{
    return parse_config(read_json_file(path));
}

} // namespace subtrack::control
