#include "subtrack/control.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/LU>

#include "subtrack/error.hpp"

namespace subtrack::control {

using dynamics::CarrierState;
using dynamics::LatticeStep;
using dynamics::Vec4;

std::string to_string(ScenarioKind kind)
{
    switch (kind) {
    case ScenarioKind::known_single:
        return "known_single";
    case ScenarioKind::known_double:
        return "known_double";
    case ScenarioKind::bot_single:
        return "bot_single";
    case ScenarioKind::bot_tradeoff:
        return "bot_tradeoff";
    }
    return "unknown";
}

std::vector<double> ScenarioConfig::target_depths() const
{
    std::vector<double> d;
    for (const auto& t : targets)
        d.push_back(t.model.depth);
    return d;
}

namespace {

bool is_move(const dynamics::ActionSpace& space, const Eigen::Vector3d& d)
{
    const auto step = dynamics::step_of(space, d);
    if (!step)
        return false;
    for (int j = 0; j < 3; ++j)
        if (std::abs((*step)[j]) > space.ranges[j])
            return false;
    return true;
}

} // namespace

void ScenarioConfig::validate() const
{
    if (total_steps < 1)
        throw ConfigError("config: total_steps must be at least 1");
    if (!(step_seconds > 0.0))
        throw ConfigError("config: step_seconds must be positive");
    if (period1_end < 0 || period1_end > total_steps)
        throw ConfigError("config: period1_end must lie in [0, total_steps]");
    if (subinterval_length < 1)
        throw ConfigError("config: subinterval_length must be at least 1");
    const std::size_t expected = kind == ScenarioKind::known_double ? 2 : 1;
    if (targets.size() != expected)
        throw ConfigError("config: " + to_string(kind) + " needs " + std::to_string(expected) + " target(s)");
    carrier.space.validate();
    if (!carrier.space.admits(carrier.initial))
        throw ConfigError("config: initial carrier position violates the action-space bounds");
    for (const auto& t : targets) {
        t.model.validate();
        if (t.model.T != step_seconds)
            throw ConfigError("config: target step must equal step_seconds");
        t.field.validate();
        if (t.model.depth < 0.0 || t.model.depth > t.field.water_depth)
            throw ConfigError("config: target depth outside the water column");
        if (carrier.space.max_depth > t.field.water_depth || carrier.space.min_depth < 0.0)
            throw ConfigError("config: carrier depth bounds exceed the water column");
    }
    cost.validate(targets.size());
    if (carrier.space.max_depth > cost.carrier_field.water_depth)
        throw ConfigError("config: carrier depth bounds exceed the water column of the carrier field");
    switch (kind) {
    case ScenarioKind::known_single:
    case ScenarioKind::bot_single:
        if (cost.mode != dp::CostMode::single_target)
            throw ConfigError("config: " + to_string(kind) + " uses the single_target cost");
        break;
    case ScenarioKind::known_double:
        if (cost.mode != dp::CostMode::multi_target)
            throw ConfigError("config: known_double uses the multi_target cost");
        break;
    case ScenarioKind::bot_tradeoff:
        if (cost.mode != dp::CostMode::tradeoff)
            throw ConfigError("config: bot_tradeoff uses the tradeoff cost");
        break;
    }
    if (quantization.M < 1 || quantization.NR < 0 || quantization.NS < 1)
        throw ConfigError("config: quantization needs M >= 1, NR >= 0, NS >= 1");
    if (is_bot()) {
        measurement.validate();
        ukf.validate();
        if (!is_move(carrier.space, carrier.cruise))
            throw ConfigError("config: cruise displacement is not on the action lattice");
        for (const auto& m : maneuvers) {
            if (m.start < 0 || m.duration < 0)
                throw ConfigError("config: maneuver start and duration must be non-negative");
            if (!is_move(carrier.space, m.displacement))
                throw ConfigError("config: maneuver displacement is not on the action lattice");
        }
    }
}

namespace {

struct Truth {
    std::vector<dynamics::TargetModel> models;
    std::vector<Vec4> states;
    Rng rng;

    Truth(const ScenarioConfig& config)
        : rng(derive_seed(config.seed, "truth"))
    {
        Rng init(derive_seed(config.seed, "truth-initial"));
        for (const auto& t : config.targets) {
            models.push_back(t.model);
            if (config.truth_from_prior) {
                const Eigen::MatrixXd L = dynamics::psd_factor(t.model.Sigma0);
                states.push_back(t.model.mu0 + L * standard_normal(init, 4));
            } else {
                states.push_back(t.initial);
            }
        }
    }

    Eigen::VectorXd stacked() const
    {
        Eigen::VectorXd w(4 * states.size());
        for (std::size_t k = 0; k < states.size(); ++k)
            w.segment<4>(4 * k) = states[k];
        return w;
    }

    std::vector<dp::TargetPosition> positions() const
    {
        std::vector<dp::TargetPosition> p;
        for (std::size_t k = 0; k < states.size(); ++k)
            p.push_back({states[k](0), states[k](2), models[k].depth});
        return p;
    }

    void advance()
    {
        for (std::size_t k = 0; k < states.size(); ++k) {
            const Eigen::Vector2d noise = models[k].sigma_eps * standard_normal(rng, 2);
            states[k] = dynamics::step_target(models[k], {states[k], models[k].depth}, noise).w;
        }
    }
};

void log_costs(StepRecord& rec, const ScenarioConfig& config, const CarrierState& s, const Truth& truth)
{
    const auto pos = truth.positions();
    rec.stage_cost = dp::stage_cost(config.cost, s, pos);
    rec.c_w = dp::target_loss(config.cost, s, pos[0], 0);
    rec.c_s = dp::carrier_exposure(config.cost, s, pos[0]);
}

quantize::ClvqParams clvq_params(const ScenarioConfig& config, int horizon, int cycle)
{
    quantize::ClvqParams p;
    p.M = config.quantization.M;
    p.NR = config.quantization.NR;
    p.N = horizon;
    p.gamma0 = config.quantization.gamma0;
    p.gamma_decay = config.quantization.gamma_decay;
    p.seed = derive_seed(config.seed, "cycle", static_cast<std::uint64_t>(cycle));
    return p;
}

LatticeStep lattice_step(const ScenarioConfig& config, const Eigen::Vector3d& displacement)
{
    const auto step = dynamics::step_of(config.carrier.space, displacement);
    if (!step)
        throw ConfigError("scheduled displacement is not on the action lattice");
    return *step;
}

Eigen::Vector3d scheduled_displacement(const ScenarioConfig& config, int t)
{
    for (const auto& m : config.maneuvers)
        if (t >= m.start && t < m.start + m.duration)
            return m.displacement;
    return config.carrier.cruise;
}

LatticeStep policy_step(const dp::DpSolution& sol, int k, const CarrierState& s, Eigen::Index i)
{
    const auto offset = sol.lattice.offset_of(s);
    if (!offset)
        throw ContractError("control: carrier left the planning lattice");
    return sol.action(k, *offset, i);
}

} // namespace

ScenarioLog run_known(const ScenarioConfig& config, const RunOptions& options)
{
    config.validate();
    if (config.kind != ScenarioKind::known_single && config.kind != ScenarioKind::known_double)
        throw ConfigError("run_known: scenario kind must be known_single or known_double");

    const int N = config.total_steps;
    const int n_targets = static_cast<int>(config.targets.size());
    const auto sim = n_targets == 1 ? dynamics::LinearGaussianChain::from_target(config.targets[0].model)
                                    : dynamics::LinearGaussianChain::from_joint(dynamics::join_models(
                                          config.targets[0].model, config.targets[1].model));
    const Eigen::VectorXd metric = quantize::default_metric_weights(n_targets, config.quantization.metric_lambda);

    ScenarioLog log;
    log.kind = config.kind;
    log.period1_end = 0;
    log.n_targets = n_targets;

    std::optional<quantize::QuantizedChain> chain;
    std::optional<dp::DpSolution> sol;
    if (!options.baseline) {
        chain = quantize::build_chain(sim, clvq_params(config, N, 0), config.quantization.NS, metric, config.workers);
        const auto costs = dp::make_cost_functions(config.cost, config.target_depths());
        sol = dp::solve(*chain, config.carrier.space, config.carrier.initial, costs, N,
                        {config.direction, config.workers, 1e-12});
        log.cycles = 1;
    }

    Truth truth(config);
    CarrierState s = config.carrier.initial;
    for (int t = 0; t <= N; ++t) {
        StepRecord rec;
        rec.t = t;
        rec.carrier = s.s;
        rec.truth = truth.states;
        log_costs(rec, config, s, truth);
        if (t < N) {
            LatticeStep step{0, 0, 0};
            if (sol) {
                double dist = 0.0;
                const Eigen::Index i = quantize::nearest(chain->grids[t], truth.stacked(), metric, dist);
                rec.nearest_index = static_cast<int>(i);
                rec.nearest_sq_distance = dist;
                rec.grid_epoch = 0;
                step = policy_step(*sol, t, s, i);
            }
            const CarrierState next = dynamics::apply_step(config.carrier.space, s, step);
            rec.action = next.s - s.s;
            s = next;
        }
        log.records.push_back(std::move(rec));
        truth.advance();
    }
    return log;
}

ScenarioLog run_bot(const ScenarioConfig& config, const RunOptions& options)
{
    config.validate();
    if (!config.is_bot())
        throw ConfigError("run_bot: scenario kind must be bot_single or bot_tradeoff");

    const int N = config.total_steps;
    const auto& target = config.targets[0];
    const auto& model = target.model;
    const double T = config.step_seconds;
    const Eigen::VectorXd metric = quantize::default_metric_weights(1, config.quantization.metric_lambda);
    const auto costs = dp::make_cost_functions(config.cost, config.target_depths());
    const auto base_sim = dynamics::LinearGaussianChain::from_target(model);

    ScenarioLog log;
    log.kind = config.kind;
    log.period1_end = config.period1_end;
    log.n_targets = 1;

    Truth truth(config);
    Rng meas_rng(derive_seed(config.seed, "measurement"));
    tma::UkfState filter{model.mu0, model.Sigma0, 0};
    CarrierState s = config.carrier.initial;
    Eigen::Vector3d velocity = config.carrier.cruise / T;

    std::optional<quantize::QuantizedChain> chain;
    std::optional<dp::DpSolution> plan;
    int plan_start = 0;
    int plan_length = 0;

    for (int t = 0; t <= N; ++t) {
        StepRecord rec;
        rec.t = t;
        rec.carrier = s.s;
        rec.truth = truth.states;
        log_costs(rec, config, s, truth);

        const Eigen::Vector2d noise = standard_normal(meas_rng, 2);
        try {
            const auto z = tma::measure({truth.states[0], model.depth}, s, velocity, config.measurement, noise, t);
            rec.bearing = z.bearing;
            rec.frequency = z.frequency;
            if (t > 0)
                filter = tma::ukf_predict(filter, model);
            filter = tma::ukf_update(filter, z, s, velocity, config.measurement, config.ukf);
            filter.t = t;
        } catch (const NumericalError& e) {
            rec.flagged = true;
            log.records.push_back(std::move(rec));
            log.aborted = true;
            log.failure = e.what();
            return log;
        }
        rec.filter_mean = filter.mean;
        rec.filter_cov = filter.cov;

        if (t < N) {
            LatticeStep step{0, 0, 0};
            if (t < config.period1_end) {
                step = lattice_step(config, scheduled_displacement(config, t));
            } else if (!options.baseline) {
                if (!plan || t >= plan_start + plan_length) {
                    plan_length = std::min(config.subinterval_length, N - t);
                    plan_start = t;
                    const auto sim = base_sim.with_initial_law(filter.mean, filter.cov);
                    chain = quantize::build_chain(sim, clvq_params(config, plan_length, log.cycles),
                                                  config.quantization.NS, metric, config.workers);
                    plan = dp::solve(*chain, config.carrier.space, s, costs, plan_length,
                                     {config.direction, config.workers, 1e-12});
                    ++log.cycles;
                }
                const int k = t - plan_start;
                double dist = 0.0;
                const Eigen::Index i = quantize::nearest(chain->grids[k], filter.mean, metric, dist);
                rec.nearest_index = static_cast<int>(i);
                rec.nearest_sq_distance = dist;
                rec.grid_epoch = log.cycles - 1;
                step = policy_step(*plan, k, s, i);
            }
            const CarrierState next = dynamics::apply_step(config.carrier.space, s, step);
            rec.action = next.s - s.s;
            velocity = rec.action / T;
            s = next;
        }
        log.records.push_back(std::move(rec));
        truth.advance();
    }
    return log;
}

ScenarioLog run_scenario(const ScenarioConfig& config, const RunOptions& options)
{
    return config.is_bot() ? run_bot(config, options) : run_known(config, options);
}

// --- metrics ----------------------------------------------------------------

namespace {

PeriodMetrics period_metrics(const ScenarioLog& log, int t_begin, int t_end)
{
    PeriodMetrics m;
    double pos_err = 0.0;
    int filtered = 0;
    for (const auto& r : log.records) {
        if (r.t < t_begin || r.t >= t_end)
            continue;
        ++m.steps;
        m.mean_stage_cost += r.stage_cost;
        m.mean_c_w += r.c_w;
        m.mean_c_s += r.c_s;
        if (r.filter_mean.allFinite() && !r.truth.empty()) {
            const double ex = r.filter_mean(0) - r.truth[0](0);
            const double ey = r.filter_mean(2) - r.truth[0](2);
            pos_err += ex * ex + ey * ey;
            ++filtered;
        }
    }
    if (m.steps > 0) {
        m.mean_stage_cost /= m.steps;
        m.mean_c_w /= m.steps;
        m.mean_c_s /= m.steps;
    } else {
        m.mean_stage_cost = m.mean_c_w = m.mean_c_s = std::nan("");
    }
    if (filtered > 0)
        m.position_rmse = std::sqrt(pos_err / filtered);
    return m;
}

PeriodMetrics minus(const PeriodMetrics& b, const PeriodMetrics& a)
{
    PeriodMetrics d;
    d.steps = b.steps - a.steps;
    d.mean_stage_cost = b.mean_stage_cost - a.mean_stage_cost;
    d.mean_c_w = b.mean_c_w - a.mean_c_w;
    d.mean_c_s = b.mean_c_s - a.mean_c_s;
    d.position_rmse = b.position_rmse - a.position_rmse;
    return d;
}

} // namespace

RunMetrics summarize(const ScenarioLog& log)
{
    constexpr int kEnd = std::numeric_limits<int>::max();
    return {period_metrics(log, 0, log.period1_end), period_metrics(log, log.period1_end, kEnd),
            period_metrics(log, 0, kEnd)};
}

Comparison compare_runs(const ScenarioLog& a, const ScenarioLog& b)
{
    if (a.records.size() != b.records.size())
        throw ContractError("compare_runs: logs cover a different number of steps");
    for (std::size_t k = 0; k < a.records.size(); ++k)
        if (a.records[k].t != b.records[k].t)
            throw ContractError("compare_runs: logs are not aligned in time");
    Comparison c{summarize(a), summarize(b), {}};
    c.difference = {minus(c.b.period1, c.a.period1), minus(c.b.period2, c.a.period2),
                    minus(c.b.overall, c.a.overall)};
    return c;
}

// --- CSV ------------------------------------------------------------------

void write_log_csv(std::ostream& out, const ScenarioLog& log)
{
    out << "t,s_x,s_y,s_z,a_x,a_y,a_z";
    for (int k = 0; k < log.n_targets; ++k)
        out << ",target" << k + 1 << "_x,target" << k + 1 << "_y";
    out << ",wbar_x,wbar_vx,wbar_y,wbar_vy,trace_cov,bearing,frequency,nearest_index,stage_cost,C_W,C_S\n";

    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, ",%.6g", v);
        out << buf;
    };
    for (const auto& r : log.records) {
        out << r.t;
        for (int j = 0; j < 3; ++j)
            num(r.carrier(j));
        for (int j = 0; j < 3; ++j)
            num(r.action(j));
        for (int k = 0; k < log.n_targets; ++k) {
            num(r.truth.at(k)(0));
            num(r.truth.at(k)(2));
        }
        for (int j = 0; j < 4; ++j)
            num(r.filter_mean(j));
        num(r.filter_trace());
        num(r.bearing);
        num(r.frequency);
        out << ',' << r.nearest_index;
        num(r.stage_cost);
        num(r.c_w);
        num(r.c_s);
        out << '\n';
    }
}

ScenarioLog read_log_csv(std::istream& in, int period1_end)
{
    std::string line;
    if (!std::getline(in, line))
        throw IoError("read_log_csv: empty input");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            header.push_back(cell);
    }
    const std::size_t fixed = 7 + 4 + 7;
    if (header.size() < fixed + 2 || (header.size() - fixed) % 2 != 0 || header[0] != "t")
        throw IoError("read_log_csv: unexpected header");
    ScenarioLog log;
    log.period1_end = period1_end;
    log.n_targets = static_cast<int>((header.size() - fixed) / 2);

    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<double> v;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            v.push_back(std::strtod(cell.c_str(), nullptr));
        if (v.size() != header.size())
            throw IoError("read_log_csv: row with " + std::to_string(v.size()) + " fields");
        StepRecord r;
        std::size_t c = 0;
        r.t = static_cast<int>(v[c++]);
        for (int j = 0; j < 3; ++j)
            r.carrier(j) = v[c++];
        for (int j = 0; j < 3; ++j)
            r.action(j) = v[c++];
        for (int k = 0; k < log.n_targets; ++k) {
            Vec4 w = Vec4::Constant(std::nan(""));
            w(0) = v[c++];
            w(2) = v[c++];
            r.truth.push_back(w);
        }
        for (int j = 0; j < 4; ++j)
            r.filter_mean(j) = v[c++];
        const double trace = v[c++];
        r.filter_cov = dynamics::Mat4::Zero();
        r.filter_cov(0, 0) = trace; // only the trace survives the CSV
        r.bearing = v[c++];
        r.frequency = v[c++];
        r.nearest_index = static_cast<int>(v[c++]);
        r.stage_cost = v[c++];
        r.c_w = v[c++];
        r.c_s = v[c++];
        log.records.push_back(std::move(r));
    }
    return log;
}

// --- Monte Carlo filtering ------------------------------------------------

TmaStatistics tma_monte_carlo(const ScenarioConfig& config, int runs, int step)
{
    if (!config.is_bot())
        throw ConfigError("tma_monte_carlo: needs a bearings-only scenario");
    if (runs < 1 || step < 0)
        throw ContractError("tma_monte_carlo: need runs >= 1 and step >= 0");
    TmaStatistics stats;
    stats.step = step;
    stats.runs = runs;
    double sq = 0.0;
    double nees = 0.0;
    for (int r = 0; r < runs; ++r) {
        ScenarioConfig cfg = config;
        cfg.seed = derive_seed(config.seed, "tma-monte-carlo", static_cast<std::uint64_t>(r));
        cfg.truth_from_prior = true;
        cfg.total_steps = std::max(step, 1);
        cfg.period1_end = cfg.total_steps;
        const auto log = run_bot(cfg);
        if (log.aborted)
            throw NumericalError("tma_monte_carlo: filter diverged in run " + std::to_string(r) + ": " + log.failure);
        const auto& rec = log.records.at(static_cast<std::size_t>(step));
        const Vec4 e = rec.filter_mean - rec.truth[0];
        sq += e(0) * e(0) + e(2) * e(2);
        nees += e.dot(rec.filter_cov.fullPivLu().solve(e));
    }
    stats.position_rmse = std::sqrt(sq / runs);
    stats.mean_nees = nees / runs;
    return stats;
}

// --- horizon splitting on a known path -------------------------------------

SplitComparison compare_horizon_split(const Eigen::MatrixXd& target_path, const dynamics::ActionSpace& space,
                                      const CarrierState& s0, const dp::CostFunctions& cost, int H)
{
    if (H < 1)
        throw ContractError("compare_horizon_split: H must be at least 1");
    const int N = static_cast<int>(target_path.rows()) - 1;
    const Eigen::VectorXd metric = Eigen::VectorXd::Ones(target_path.cols());

    SplitComparison out;
    {
        const auto chain = quantize::deterministic_chain(target_path, metric);
        const auto sol = dp::solve(chain, space, s0, cost, N);
        out.unsplit = sol.value(0, {0, 0, 0}, 0);
    }

    CarrierState s = s0;
    double total = 0.0;
    for (int t0 = 0; t0 < N;) {
        const int h = std::min(H, N - t0);
        const auto chain = quantize::deterministic_chain(target_path.middleRows(t0, h + 1), metric);
        const auto sol = dp::solve(chain, space, s, cost, h);
        for (int k = 0; k < h; ++k) {
            s = dynamics::apply_step(space, s, policy_step(sol, k, s, 0));
            total += cost.stage(s, target_path.row(t0 + k + 1).transpose());
        }
        t0 += h;
        ++out.cycles;
    }
    total += cost.terminal(s, target_path.row(N).transpose());
    out.split = total;
    return out;
}

} // namespace subtrack::control
