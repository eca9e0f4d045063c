#include "subtrack/dp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "subtrack/error.hpp"
#include "subtrack/parallel.hpp"

namespace subtrack::dp {

using dynamics::CarrierState;
using dynamics::LatticeStep;

void CostModel::validate(std::size_t n_targets) const
{
    if (n_targets == 0)
        throw ConfigError("cost model: at least one target is required");
    if (target_fields.size() < n_targets)
        throw ConfigError("cost model: one propagation field per target emitter is required");
    for (const auto& f : target_fields)
        f.validate();
    carrier_field.validate();
    switch (mode) {
    case CostMode::single_target:
        if (n_targets != 1)
            throw ConfigError("cost model: single_target mode needs exactly one target");
        break;
    case CostMode::multi_target: {
        if (alphas.size() != n_targets)
            throw ConfigError("cost model: multi_target needs one weight per target");
        if (std::any_of(alphas.begin(), alphas.end(), [](double a) { return a < 0.0; }))
            throw ConfigError("cost model: weights must be non-negative");
        const double sum = std::accumulate(alphas.begin(), alphas.end(), 0.0);
        if (std::abs(sum - 1.0) > 1e-12)
            throw ConfigError("cost model: weights must sum to 1");
        break;
    }
    case CostMode::tradeoff:
        if (n_targets != 1)
            throw ConfigError("cost model: tradeoff mode needs exactly one target");
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw ConfigError("cost model: epsilon must lie in (0, 1)");
        break;
    }
}

double f_multiplier(double x, double epsilon)
{
    if (x < 80.0)
        return 1.0;
    if (x >= 200.0)
        return epsilon;
    const double a = (epsilon - 1.0) / 120.0;
    const double b = (200.0 - 80.0 * epsilon) / 120.0;
    return a * x + b;
}

namespace {

double horizontal_range(const CarrierState& l, const TargetPosition& w)
{
    return std::hypot(w.x - l.x(), w.y - l.y());
}

} // namespace

double target_loss(const CostModel& cost, const CarrierState& l, const TargetPosition& w, std::size_t k)
{
    const auto field = cost.target_fields.at(k).with_source_depth(w.depth);
    return acoustics::loss_at(field, horizontal_range(l, w), l.depth());
}

double carrier_exposure(const CostModel& cost, const CarrierState& l, const TargetPosition& w)
{
    const auto field = cost.carrier_field.with_source_depth(l.depth());
    return acoustics::loss_at(field, horizontal_range(l, w), w.depth);
}

double stage_cost(const CostModel& cost, const CarrierState& l, std::span<const TargetPosition> targets)
{
    switch (cost.mode) {
    case CostMode::single_target:
        if (targets.size() != 1)
            throw ConfigError("stage_cost: single_target mode expects one target");
        return target_loss(cost, l, targets[0], 0);
    case CostMode::multi_target: {
        if (targets.size() != cost.alphas.size())
            throw ConfigError("stage_cost: number of targets does not match the weights");
        double c = 0.0;
        for (std::size_t k = 0; k < targets.size(); ++k)
            c += cost.alphas[k] * target_loss(cost, l, targets[k], k);
        return c;
    }
    case CostMode::tradeoff:
        if (targets.size() != 1)
            throw ConfigError("stage_cost: tradeoff mode expects one target");
        return target_loss(cost, l, targets[0], 0) * f_multiplier(carrier_exposure(cost, l, targets[0]), cost.epsilon);
    }
    throw ConfigError("stage_cost: unknown mode");
}

std::vector<TargetPosition> target_positions(const Eigen::Ref<const Eigen::VectorXd>& w, std::span<const double> depths)
{
    if (w.size() != 4 * static_cast<Eigen::Index>(depths.size()))
        throw ContractError("target_positions: state dimension does not match the number of targets");
    std::vector<TargetPosition> out(depths.size());
    for (std::size_t k = 0; k < depths.size(); ++k)
        out[k] = {w(4 * k), w(4 * k + 2), depths[k]};
    return out;
}

CostFunctions make_cost_functions(const CostModel& cost, std::vector<double> target_depths)
{
    cost.validate(target_depths.size());
    StageCostFn stage = [cost, depths = target_depths](const CarrierState& l, const Eigen::VectorXd& w) {
        const auto targets = target_positions(w, depths);
        return stage_cost(cost, l, targets);
    };
    StageCostFn terminal;
    if (cost.terminal_mode == TerminalMode::zero)
        terminal = [](const CarrierState&, const Eigen::VectorXd&) { return 0.0; };
    else
        terminal = stage;
    return {std::move(stage), std::move(terminal)};
}

// --- CarrierLattice -------------------------------------------------------

namespace {

constexpr std::int32_t kReached = -2;

} // namespace

CarrierLattice::CarrierLattice(const dynamics::ActionSpace& space, const CarrierState& s0, int horizon)
    : space_(space), origin_(s0)
{
    if (horizon < 0)
        throw ContractError("carrier lattice: negative horizon");
    space_.validate();
    if (!space_.admits(s0))
        throw ContractError("carrier lattice: initial carrier position is not admissible");

    const auto& L = space_.ranges;
    layers_.resize(horizon + 1);
    {
        Layer& first = layers_[0];
        first.points.push_back({0, 0, 0});
        first.dense.assign(1, 0);
    }
    for (int t = 0; t <= horizon; ++t) {
        Layer& cur = layers_[t];
        cur.extent = {t * L[0], t * L[1], t * L[2]};
        if (t == 0)
            continue;
        const Layer& prev = layers_[t - 1];
        const std::size_t box = static_cast<std::size_t>(2 * cur.extent[0] + 1) * (2 * cur.extent[1] + 1) *
                                (2 * cur.extent[2] + 1);
        cur.dense.assign(box, -1);
        // Mark reachable points, then number them in lexicographic order.
        std::vector<std::vector<LatticeStep>> prev_steps(prev.points.size());
        for (std::size_t p = 0; p < prev.points.size(); ++p) {
            prev_steps[p] = dynamics::feasible_steps(space_, position(prev.points[p]));
            for (const auto& s : prev_steps[p]) {
                const LatticeStep n{prev.points[p][0] + s[0], prev.points[p][1] + s[1], prev.points[p][2] + s[2]};
                cur.dense[*box_index(cur, n)] = kReached;
            }
        }
        for (int n1 = -cur.extent[0]; n1 <= cur.extent[0]; ++n1)
            for (int n2 = -cur.extent[1]; n2 <= cur.extent[1]; ++n2)
                for (int n3 = -cur.extent[2]; n3 <= cur.extent[2]; ++n3) {
                    const LatticeStep n{n1, n2, n3};
                    auto& slot = cur.dense[*box_index(cur, n)];
                    if (slot == kReached) {
                        slot = static_cast<std::int32_t>(cur.points.size());
                        cur.points.push_back(n);
                    }
                }
        Layer& from = layers_[t - 1];
        from.move_begin.assign(1, 0);
        for (std::size_t p = 0; p < from.points.size(); ++p) {
            for (const auto& s : prev_steps[p]) {
                const LatticeStep n{from.points[p][0] + s[0], from.points[p][1] + s[1], from.points[p][2] + s[2]};
                from.moves.push_back({s, static_cast<std::size_t>(cur.dense[*box_index(cur, n)])});
            }
            from.move_begin.push_back(from.moves.size());
        }
    }
}

std::optional<std::size_t> CarrierLattice::box_index(const Layer& layer, const LatticeStep& n) const
{
    std::size_t idx = 0;
    for (int j = 0; j < 3; ++j) {
        const int e = layer.extent[j];
        if (n[j] < -e || n[j] > e)
            return std::nullopt;
        idx = idx * static_cast<std::size_t>(2 * e + 1) + static_cast<std::size_t>(n[j] + e);
    }
    return idx;
}

std::optional<std::size_t> CarrierLattice::index(int t, const LatticeStep& n) const
{
    if (t < 0 || t > horizon())
        return std::nullopt;
    const Layer& layer = layers_[t];
    const auto box = box_index(layer, n);
    if (!box || layer.dense[*box] < 0)
        return std::nullopt;
    return static_cast<std::size_t>(layer.dense[*box]);
}

std::span<const CarrierLattice::Move> CarrierLattice::moves(int t, std::size_t idx) const
{
    if (t < 0 || t >= horizon())
        throw ContractError("carrier lattice: no moves out of the last layer");
    const Layer& layer = layers_[t];
    return std::span<const Move>(layer.moves).subspan(layer.move_begin[idx],
                                                      layer.move_begin[idx + 1] - layer.move_begin[idx]);
}

CarrierState CarrierLattice::position(const LatticeStep& n) const
{
    return {origin_.s + space_.displacement(n)};
}

std::optional<LatticeStep> CarrierLattice::offset_of(const CarrierState& s) const
{
    return dynamics::step_of(space_, s.s - origin_.s);
}

// --- DpSolution -------------------------------------------------------------

double DpSolution::value(int t, const LatticeStep& l, Eigen::Index i) const
{
    const auto idx = lattice.index(t, l);
    if (!idx || i < 0 || i >= M)
        throw ContractError("dp: state (t=" + std::to_string(t) + ") is not reachable");
    return values[t](static_cast<Eigen::Index>(*idx), i);
}

LatticeStep DpSolution::action(int t, const LatticeStep& l, Eigen::Index i) const
{
    if (t < 0 || t > horizon())
        throw ContractError("dp: time outside the planning horizon");
    if (t == horizon())
        return {0, 0, 0};
    const auto idx = lattice.index(t, l);
    if (!idx || i < 0 || i >= M)
        throw ContractError("dp: state (t=" + std::to_string(t) + ") is not reachable");
    return policy[t][*idx * static_cast<std::size_t>(M) + static_cast<std::size_t>(i)];
}

// --- solve ----------------------------------------------------------------

namespace {

std::vector<Eigen::VectorXd> grid_rows(const quantize::QuantizationGrid& g)
{
    std::vector<Eigen::VectorXd> rows(g.size());
    for (Eigen::Index j = 0; j < g.size(); ++j)
        rows[j] = g.points.row(j).transpose();
    return rows;
}

} // namespace

DpSolution solve(const quantize::QuantizedChain& chain, const dynamics::ActionSpace& space, const CarrierState& s0,
                 const CostFunctions& cost, int N, const DpOptions& options)
{
    if (N < 0)
        throw ConfigError("dp: negative horizon");
    if (chain.horizon() != N || static_cast<int>(chain.grids.size()) != N + 1)
        throw ConfigError("dp: chain horizon " + std::to_string(chain.horizon()) + " does not match N = " +
                          std::to_string(N));
    if (!cost.stage || !cost.terminal)
        throw ConfigError("dp: stage and terminal costs are required");

    DpSolution sol{CarrierLattice(space, s0, N), chain.size(), {}, {}};
    const Eigen::Index M = sol.M;
    const bool minimize = options.direction == Direction::minimize;
    const int workers = std::max(1, options.workers);
    const auto& lat = sol.lattice;

    sol.values.resize(N + 1);
    sol.policy.resize(N);

    {
        const auto& pts = lat.layer(N);
        const auto rows = grid_rows(chain.grids[N]);
        Eigen::MatrixXd& J = sol.values[N];
        J.resize(static_cast<Eigen::Index>(pts.size()), M);
        parallel_for(pts.size(), workers, [&](std::size_t b, std::size_t e) {
            for (std::size_t m = b; m < e; ++m) {
                const CarrierState pos = lat.position(pts[m]);
                for (Eigen::Index j = 0; j < M; ++j)
                    J(static_cast<Eigen::Index>(m), j) = cost.terminal(pos, rows[j]);
            }
        });
    }

    for (int t = N - 1; t >= 0; --t) {
        const auto& next_pts = lat.layer(t + 1);
        const auto rows = grid_rows(chain.grids[t + 1]);
        const Eigen::MatrixXd& J_next = sol.values[t + 1];

        // G(m, j) = c(m, j) + J_{t+1}(m, j); Q(m, i) = sum_j P_ij G(m, j).
        Eigen::MatrixXd G(static_cast<Eigen::Index>(next_pts.size()), M);
        parallel_for(next_pts.size(), workers, [&](std::size_t b, std::size_t e) {
            for (std::size_t m = b; m < e; ++m) {
                const CarrierState pos = lat.position(next_pts[m]);
                for (Eigen::Index j = 0; j < M; ++j)
                    G(static_cast<Eigen::Index>(m), j) = cost.stage(pos, rows[j]) + J_next(static_cast<Eigen::Index>(m), j);
            }
        });
        if (!G.allFinite())
            throw NumericalError("dp: non-finite cost at t=" + std::to_string(t + 1));
        const Eigen::MatrixXd Q = G * chain.transitions[t].transpose();

        const auto& pts = lat.layer(t);
        Eigen::MatrixXd& J = sol.values[t];
        J.resize(static_cast<Eigen::Index>(pts.size()), M);
        auto& pol = sol.policy[t];
        pol.assign(pts.size() * static_cast<std::size_t>(M), LatticeStep{0, 0, 0});

        parallel_for(pts.size(), workers, [&](std::size_t b, std::size_t e) {
            for (std::size_t l = b; l < e; ++l) {
                const auto moves = lat.moves(t, l);
                for (Eigen::Index i = 0; i < M; ++i) {
                    double opt = minimize ? std::numeric_limits<double>::infinity()
                                          : -std::numeric_limits<double>::infinity();
                    for (const auto& mv : moves) {
                        const double v = Q(static_cast<Eigen::Index>(mv.destination), i);
                        if (minimize ? v < opt : v > opt)
                            opt = v;
                    }
                    const double tol = options.tie_tolerance * std::max(1.0, std::abs(opt));
                    for (const auto& mv : moves) {
                        if (std::abs(Q(static_cast<Eigen::Index>(mv.destination), i) - opt) <= tol) {
                            pol[l * static_cast<std::size_t>(M) + static_cast<std::size_t>(i)] = mv.step;
                            break;
                        }
                    }
                    J(static_cast<Eigen::Index>(l), i) = opt;
                }
            }
        });
    }
    return sol;
}

// --- evaluate_policy ------------------------------------------------------

namespace {

struct RowSampler {
    std::vector<std::vector<double>> cumulative;

    explicit RowSampler(const Eigen::MatrixXd& P)
    {
        cumulative.resize(P.rows());
        for (Eigen::Index i = 0; i < P.rows(); ++i) {
            auto& c = cumulative[i];
            c.resize(P.cols());
            double acc = 0.0;
            for (Eigen::Index j = 0; j < P.cols(); ++j)
                c[j] = (acc += P(i, j));
        }
    }

    Eigen::Index draw(Eigen::Index row, Rng& rng) const
    {
        const auto& c = cumulative[row];
        const double u = std::uniform_real_distribution<double>(0.0, c.back())(rng);
        const auto it = std::upper_bound(c.begin(), c.end(), u);
        return std::min<Eigen::Index>(static_cast<Eigen::Index>(it - c.begin()), static_cast<Eigen::Index>(c.size()) - 1);
    }
};

PolicyEstimate summarize(const std::vector<double>& totals)
{
    PolicyEstimate est;
    est.runs = static_cast<long>(totals.size());
    if (totals.empty())
        return est;
    const double n = static_cast<double>(totals.size());
    est.mean = std::accumulate(totals.begin(), totals.end(), 0.0) / n;
    if (totals.size() > 1) {
        double ss = 0.0;
        for (double x : totals)
            ss += (x - est.mean) * (x - est.mean);
        est.std_error = std::sqrt(ss / (n - 1.0) / n);
    }
    return est;
}

LatticeStep add(const LatticeStep& a, const LatticeStep& b)
{
    return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

} // namespace

PolicyEstimate evaluate_policy(const DpSolution& solution, const quantize::QuantizedChain& chain,
                               const CostFunctions& cost, long runs, std::uint64_t seed,
                               std::optional<Eigen::Index> initial_index)
{
    const int N = solution.horizon();
    if (chain.horizon() != N)
        throw ConfigError("evaluate_policy: chain horizon does not match the policy");
    std::vector<RowSampler> samplers;
    for (const auto& P : chain.transitions)
        samplers.emplace_back(P);
    const RowSampler initial(chain.weights[0].transpose());

    Rng rng(seed);
    std::vector<double> totals;
    totals.reserve(static_cast<std::size_t>(std::max(0L, runs)));
    for (long r = 0; r < runs; ++r) {
        Eigen::Index i = initial_index ? *initial_index : initial.draw(0, rng);
        LatticeStep l{0, 0, 0};
        double total = 0.0;
        for (int t = 0; t < N; ++t) {
            l = add(l, solution.action(t, l, i));
            i = samplers[t].draw(i, rng);
            total += cost.stage(solution.lattice.position(l), chain.grids[t + 1].points.row(i).transpose());
        }
        total += cost.terminal(solution.lattice.position(l), chain.grids[N].points.row(i).transpose());
        totals.push_back(total);
    }
    return summarize(totals);
}

PolicyEstimate evaluate_policy(const DpSolution& solution, const quantize::QuantizedChain& chain,
                               const dynamics::ChainSimulator& truth, const CostFunctions& cost, long runs,
                               std::uint64_t seed)
{
    const int N = solution.horizon();
    if (chain.horizon() != N)
        throw ConfigError("evaluate_policy: chain horizon does not match the policy");
    Rng rng(seed);
    std::vector<double> totals;
    for (long r = 0; r < runs; ++r) {
        const Eigen::MatrixXd path = truth.simulate(rng, N);
        LatticeStep l{0, 0, 0};
        double total = 0.0;
        for (int t = 0; t < N; ++t) {
            const Eigen::Index i = quantize::nearest(chain.grids[t], path.row(t).transpose(), chain.metric_weights);
            l = add(l, solution.action(t, l, i));
            total += cost.stage(solution.lattice.position(l), path.row(t + 1).transpose());
        }
        total += cost.terminal(solution.lattice.position(l), path.row(N).transpose());
        totals.push_back(total);
    }
    return summarize(totals);
}

} // namespace subtrack::dp
