#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "subtrack/dp.hpp"
#include "subtrack/error.hpp"

#include "support.hpp"

using namespace subtrack;
using namespace subtrack::dp;
using dynamics::ActionSpace;
using dynamics::CarrierState;
using dynamics::LatticeStep;

namespace {

/// Arbitrary but fixed cost surface on (carrier position, chain state).
CostFunctions wiggly_costs(double scale = 1.0, double shift = 0.0)
{
    auto c = [=](const CarrierState& l, const Eigen::VectorXd& w) {
        return scale * (std::sin(0.013 * l.depth() + 0.7 * w(0)) + 0.4 * std::cos(0.002 * l.x() - 0.3 * w(0) * w(0)) +
                        0.001 * l.depth()) +
               shift;
    };
    return {c, c};
}

CostFunctions scaled(const CostFunctions& base, double lambda, double kappa, bool shift_terminal)
{
    return {[=](const CarrierState& l, const Eigen::VectorXd& w) { return lambda * base.stage(l, w) + kappa; },
            [=](const CarrierState& l, const Eigen::VectorXd& w) {
                return lambda * base.terminal(l, w) + (shift_terminal ? kappa : 0.0);
            }};
}

ActionSpace depth_only(double max_depth = 1000.0)
{
    ActionSpace a;
    a.max_depth = max_depth;
    return a;
}

LatticeStep add(const LatticeStep& a, const LatticeStep& b)
{
    return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

/// Expected cost from (t, l, i) of a fully specified decision rule, summing over chain paths.
double policy_cost(const quantize::QuantizedChain& chain, const CarrierLattice& lat, const CostFunctions& cost,
                   const std::function<LatticeStep(int, const LatticeStep&, Eigen::Index)>& rule, int t,
                   const LatticeStep& l, Eigen::Index i)
{
    const int N = chain.horizon();
    if (t == N)
        return cost.terminal(lat.position(l), chain.grids[N].points.row(i).transpose());
    const LatticeStep m = add(l, rule(t, l, i));
    double total = 0.0;
    for (Eigen::Index j = 0; j < chain.size(); ++j) {
        const double p = chain.transitions[t](i, j);
        if (p == 0.0)
            continue;
        total += p * (cost.stage(lat.position(m), chain.grids[t + 1].points.row(j).transpose()) +
                      policy_cost(chain, lat, cost, rule, t + 1, m, j));
    }
    return total;
}

} // namespace

TEST(Multiplier, ContinuityAndMidpoint)
{
    for (double eps : {0.01, 0.1, 0.5}) {
        EXPECT_NEAR(f_multiplier(80.0, eps), 1.0, 1e-12);
        EXPECT_NEAR(f_multiplier(200.0, eps), eps, 1e-12);
        EXPECT_NEAR(f_multiplier(79.999, eps), 1.0, 1e-12);
        EXPECT_NEAR(f_multiplier(250.0, eps), eps, 1e-12);
    }
    EXPECT_NEAR(f_multiplier(140.0, 0.1), 0.55, 1e-12);
}

TEST(StageCost, ModesAgreeWithHandValues)
{
    CostModel cost;
    cost.target_fields = {acoustics::PropagationField{}, acoustics::PropagationField{}};
    const CarrierState l{Eigen::Vector3d(0, 0, 300)};
    const std::vector<TargetPosition> two{{20000, 0, 500}, {0, 31000, 100}};
    cost.mode = CostMode::single_target;
    const double beta1 = stage_cost(cost, l, std::span(two.data(), 1));
    const double beta2 = target_loss(cost, l, two[1], 1);

    cost.mode = CostMode::multi_target;
    cost.alphas = {1.0, 0.0};
    EXPECT_DOUBLE_EQ(stage_cost(cost, l, two), beta1);
    cost.alphas = {0.5, 0.5};
    EXPECT_DOUBLE_EQ(stage_cost(cost, l, two), 0.5 * beta1 + 0.5 * beta2);
}

TEST(StageCost, MultiTargetMidpoint)
{
    // choose fields whose losses are exactly 100 and 140
    CostModel cost;
    acoustics::PropagationField a, b;
    a.spreading_coeff = b.spreading_coeff = a.absorption = b.absorption = 0.0;
    a.modulation_amp = b.modulation_amp = 0.0;
    a.base_offset = 100.0;
    b.base_offset = 140.0;
    cost.target_fields = {a, b};
    cost.mode = CostMode::multi_target;
    cost.alphas = {0.5, 0.5};
    const std::vector<TargetPosition> two{{1000, 0, 500}, {0, 1000, 100}};
    EXPECT_DOUBLE_EQ(stage_cost(cost, CarrierState{Eigen::Vector3d(0, 0, 300)}, two), 120.0);
}

TEST(StageCost, TradeoffSaturatesAtEpsilon)
{
    CostModel cost;
    acoustics::PropagationField target, carrier;
    target.spreading_coeff = target.absorption = target.modulation_amp = 0.0;
    target.base_offset = 100.0;
    carrier.spreading_coeff = carrier.absorption = carrier.modulation_amp = 0.0;
    carrier.base_offset = 250.0; // clamps to the 200 ceiling
    cost.target_fields = {target};
    cost.carrier_field = carrier;
    cost.mode = CostMode::tradeoff;
    cost.epsilon = 0.1;
    const std::vector<TargetPosition> one{{5000, 0, 300}};
    EXPECT_NEAR(stage_cost(cost, CarrierState{Eigen::Vector3d(0, 0, 300)}, one), 10.0, 1e-12);
}

TEST(StageCost, TradeoffBounds)
{
    Rng rng(1);
    for (int k = 0; k < 10000; ++k) {
        CostModel cost;
        cost.mode = CostMode::tradeoff;
        cost.epsilon = gen::uniform(rng, 0.01, 0.99);
        cost.target_fields = {gen::random_field(rng)};
        cost.carrier_field = gen::random_field(rng);
        cost.carrier_field.water_depth = cost.target_fields[0].water_depth;
        cost.carrier_field.source_depth = std::min(cost.carrier_field.source_depth, cost.carrier_field.water_depth);
        const double wd = cost.target_fields[0].water_depth;
        const CarrierState l{Eigen::Vector3d(gen::uniform(rng, -5e4, 5e4), gen::uniform(rng, -5e4, 5e4),
                                             gen::uniform(rng, 0, wd))};
        const std::vector<TargetPosition> w{
            {gen::uniform(rng, -5e4, 5e4), gen::uniform(rng, -5e4, 5e4), gen::uniform(rng, 0, wd)}};
        const double c = stage_cost(cost, l, w);
        EXPECT_GE(c, 80.0 * cost.epsilon - 1e-12);
        EXPECT_LE(c, 200.0 + 1e-12);
    }
}

TEST(StageCost, ArityAndWeightErrors)
{
    CostModel cost;
    cost.target_fields = {acoustics::PropagationField{}};
    EXPECT_NO_THROW(cost.validate(1));
    EXPECT_THROW(cost.validate(2), ConfigError);
    cost.mode = CostMode::multi_target;
    cost.target_fields.resize(2);
    cost.alphas = {0.3, 0.3};
    EXPECT_THROW(cost.validate(2), ConfigError);
    cost.mode = CostMode::tradeoff;
    cost.epsilon = 1.5;
    EXPECT_THROW(cost.validate(1), ConfigError);
}

TEST(Lattice, LayersMatchClosedFormReachability)
{
    ActionSpace space;
    space.deltas = Eigen::Vector3d(300, 300, 50);
    space.ranges = {1, 1, 1};
    space.max_depth = 400;
    const CarrierState s0{Eigen::Vector3d(0, 0, 300)};
    const CarrierLattice lat(space, s0, 4);
    for (int t = 0; t <= 4; ++t) {
        std::size_t expected = 0;
        for (int n3 = -t; n3 <= t; ++n3)
            if (300 + 50 * n3 >= 0 && 300 + 50 * n3 <= 400)
                ++expected;
        expected *= (2 * t + 1) * (2 * t + 1);
        EXPECT_EQ(lat.layer(t).size(), expected) << "t=" << t;
        for (std::size_t k = 0; k < lat.layer(t).size(); ++k)
            EXPECT_EQ(lat.index(t, lat.layer(t)[k]), k);
    }
    EXPECT_FALSE(lat.index(1, {2, 0, 0}));
    EXPECT_TRUE(lat.offset_of({Eigen::Vector3d(600, -300, 350)}));
    EXPECT_FALSE(lat.offset_of({Eigen::Vector3d(100, 0, 300)}));
}

TEST(Solve, ZeroCost)
{
    Rng rng(2);
    const auto chain = gen::random_chain(rng, 3, 3, 1, 1.0);
    const CostFunctions zero{[](const CarrierState&, const Eigen::VectorXd&) { return 0.0; },
                             [](const CarrierState&, const Eigen::VectorXd&) { return 0.0; }};
    const ActionSpace space = depth_only();
    const CarrierState s0{Eigen::Vector3d(0, 0, 300)};
    const auto sol = solve(chain, space, s0, zero, 3);
    for (int t = 0; t <= 3; ++t)
        EXPECT_EQ(sol.values[t].cwiseAbs().maxCoeff(), 0.0);
    for (int t = 0; t < 3; ++t)
        for (std::size_t l = 0; l < sol.lattice.layer(t).size(); ++l)
            for (Eigen::Index i = 0; i < 3; ++i)
                EXPECT_EQ(sol.action(t, sol.lattice.layer(t)[l], i),
                          dynamics::feasible_steps(space, sol.lattice.position(sol.lattice.layer(t)[l])).front());
    EXPECT_EQ(evaluate_policy(sol, chain, zero, 200, 3).mean, 0.0);
}

TEST(Solve, MatchesMarkovPolicyEnumeration)
{
    // N=2, M=2, depths {0, 100, 200}; enumerate every decision rule over reachable states.
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const auto chain = gen::random_chain(rng, 2, 2, 1, 2.0);
        const ActionSpace space = depth_only(200.0);
        const CarrierState s0{Eigen::Vector3d(0, 0, 0)};
        const auto cost = wiggly_costs();
        const auto sol = solve(chain, space, s0, cost, 2);
        const auto& lat = sol.lattice;

        // decision slots: (t, l, i) for reachable l
        struct Slot {
            int t;
            LatticeStep l;
            Eigen::Index i;
            std::vector<LatticeStep> options;
        };
        std::vector<Slot> slots;
        for (int t = 0; t < 2; ++t)
            for (const auto& l : lat.layer(t))
                for (Eigen::Index i = 0; i < 2; ++i)
                    slots.push_back({t, l, i, dynamics::feasible_steps(space, lat.position(l))});
        std::vector<std::size_t> choice(slots.size(), 0);
        std::array<double, 2> best{1e300, 1e300};
        for (;;) {
            auto rule = [&](int t, const LatticeStep& l, Eigen::Index i) {
                for (std::size_t k = 0; k < slots.size(); ++k)
                    if (slots[k].t == t && slots[k].l == l && slots[k].i == i)
                        return slots[k].options[choice[k]];
                throw std::logic_error("unreachable slot");
            };
            for (Eigen::Index i0 = 0; i0 < 2; ++i0)
                best[i0] = std::min(best[i0], policy_cost(chain, lat, cost, rule, 0, {0, 0, 0}, i0));
            std::size_t k = 0;
            while (k < slots.size() && ++choice[k] == slots[k].options.size())
                choice[k++] = 0;
            if (k == slots.size())
                break;
        }
        for (Eigen::Index i0 = 0; i0 < 2; ++i0)
            EXPECT_NEAR(sol.value(0, {0, 0, 0}, i0), best[i0], 1e-9);
    }
}

TEST(Solve, DeterministicChainMatchesPathEnumeration)
{
    Eigen::MatrixXd path(5, 4);
    for (int t = 0; t <= 4; ++t)
        path.row(t) << 18000.0 + 600.0 * t, 10.0, 4000.0, 0.0;
    const auto chain = quantize::deterministic_chain(path, Eigen::Vector4d::Ones());
    CostModel model;
    model.target_fields = {acoustics::PropagationField{}};
    const auto cost = make_cost_functions(model, {500.0});
    const ActionSpace space = depth_only();
    const CarrierState s0{Eigen::Vector3d(0, 0, 300)};
    const auto sol = solve(chain, space, s0, cost, 4);

    double best = 1e300;
    std::function<void(int, CarrierState, double)> walk = [&](int t, CarrierState s, double acc) {
        if (t == 4) {
            best = std::min(best, acc + cost.terminal(s, path.row(4).transpose()));
            return;
        }
        for (const auto& a : dynamics::feasible_actions(space, s)) {
            const auto next = dynamics::apply_action(space, s, a);
            walk(t + 1, next, acc + cost.stage(next, path.row(t + 1).transpose()));
        }
    };
    walk(0, s0, 0.0);
    EXPECT_NEAR(sol.value(0, {0, 0, 0}, 0), best, 1e-9);
}

TEST(Solve, BellmanConsistency)
{
    Rng rng(5);
    const auto chain = gen::random_chain(rng, 6, 5, 1, 3.0);
    const auto cost = wiggly_costs();
    const ActionSpace space = depth_only();
    const auto sol = solve(chain, space, {Eigen::Vector3d(0, 0, 300)}, cost, 6);
    const auto& lat = sol.lattice;
    for (int t = 0; t < 6; ++t)
        for (std::size_t l = 0; l < lat.layer(t).size(); ++l)
            for (Eigen::Index i = 0; i < 5; ++i) {
                double opt = 1e300;
                LatticeStep arg{};
                for (const auto& mv : lat.moves(t, l)) {
                    const auto pos = lat.position(lat.layer(t + 1)[mv.destination]);
                    double q = 0.0;
                    for (Eigen::Index j = 0; j < 5; ++j)
                        q += chain.transitions[t](i, j) *
                             (cost.stage(pos, chain.grids[t + 1].points.row(j).transpose()) +
                              sol.values[t + 1](static_cast<Eigen::Index>(mv.destination), j));
                    if (q < opt - 1e-12) {
                        opt = q;
                        arg = mv.step;
                    }
                }
                EXPECT_NEAR(sol.values[t](static_cast<Eigen::Index>(l), i), opt, 1e-9);
                EXPECT_EQ(sol.policy[t][l * 5 + i], arg);
            }
}

TEST(Solve, ScalingShiftAndDuality)
{
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const int N = gen::uniform_int(rng, 1, 6);
        const auto chain = gen::random_chain(rng, N, gen::uniform_int(rng, 1, 6), 1, 3.0);
        const auto base = wiggly_costs(gen::uniform(rng, 0.5, 20.0));
        const ActionSpace space = depth_only(500.0);
        const CarrierState s0{Eigen::Vector3d(0, 0, 200)};
        const auto ref = solve(chain, space, s0, base, N);

        const auto up = solve(chain, space, s0, scaled(base, 3.7, 0.0, false), N);
        const auto shifted = solve(chain, space, s0, scaled(base, 1.0, 12.0, false), N);
        const auto dual = solve(chain, space, s0, scaled(base, -1.0, 0.0, false), N, {Direction::maximize});
        EXPECT_EQ(up.policy, ref.policy);
        EXPECT_EQ(shifted.policy, ref.policy);
        EXPECT_EQ(dual.policy, ref.policy);
        for (int t = 0; t <= N; ++t) {
            EXPECT_LE((up.values[t] - 3.7 * ref.values[t]).cwiseAbs().maxCoeff(), 1e-9);
            EXPECT_LE(((shifted.values[t] - ref.values[t]).array() - 12.0 * (N - t)).abs().maxCoeff(), 1e-9);
            EXPECT_LE((dual.values[t] + ref.values[t]).cwiseAbs().maxCoeff(), 1e-9);
        }
    }
}

TEST(Solve, ParallelSweepIsBitIdentical)
{
    Rng rng(7);
    const auto chain = gen::random_chain(rng, 5, 8, 1, 3.0);
    ActionSpace space;
    space.deltas = Eigen::Vector3d(300, 300, 50);
    space.ranges = {1, 1, 1};
    const CarrierState s0{Eigen::Vector3d(0, 0, 300)};
    auto cost = wiggly_costs();
    const auto a = solve(chain, space, s0, cost, 5, {Direction::minimize, 1});
    const auto b = solve(chain, space, s0, cost, 5, {Direction::minimize, 4});
    EXPECT_EQ(a.policy, b.policy);
    for (int t = 0; t <= 5; ++t)
        EXPECT_EQ(a.values[t], b.values[t]);
}

TEST(Solve, HorizonMismatchAndBadStates)
{
    Rng rng(8);
    const auto chain = gen::random_chain(rng, 3, 2, 1, 1.0);
    const auto cost = wiggly_costs();
    const CarrierState s0{Eigen::Vector3d(0, 0, 300)};
    EXPECT_THROW(solve(chain, depth_only(), s0, cost, 4), ConfigError);
    const auto sol = solve(chain, depth_only(), s0, cost, 3);
    EXPECT_THROW(sol.value(1, {0, 0, 5}, 0), ContractError);
    EXPECT_THROW(sol.action(0, {0, 0, 0}, 7), ContractError);
    EXPECT_EQ(sol.action(3, {0, 0, 0}, 1), (LatticeStep{0, 0, 0}));
    const CostFunctions broken{[](const CarrierState&, const Eigen::VectorXd&) { return std::nan(""); },
                               [](const CarrierState&, const Eigen::VectorXd&) { return 0.0; }};
    EXPECT_THROW(solve(chain, depth_only(), s0, broken, 3), NumericalError);
}

TEST(Evaluate, UnitCostCountsStages)
{
    Rng rng(9);
    const auto chain = gen::random_chain(rng, 7, 3, 1, 1.0);
    const CostFunctions unit{[](const CarrierState&, const Eigen::VectorXd&) { return 1.0; },
                             [](const CarrierState&, const Eigen::VectorXd&) { return 0.0; }};
    const auto sol = solve(chain, depth_only(), {Eigen::Vector3d(0, 0, 300)}, unit, 7);
    const auto est = evaluate_policy(sol, chain, unit, 100, 1);
    EXPECT_EQ(est.mean, 7.0);
    EXPECT_EQ(est.std_error, 0.0);
}

TEST(Evaluate, MonteCarloMatchesValue)
{
    Rng rng(10);
    const auto chain = gen::random_chain(rng, 5, 4, 1, 3.0);
    const auto cost = wiggly_costs(10.0);
    const auto sol = solve(chain, depth_only(), {Eigen::Vector3d(0, 0, 300)}, cost, 5);
    for (Eigen::Index i0 = 0; i0 < 4; ++i0) {
        const auto est = evaluate_policy(sol, chain, cost, 20000, 100 + static_cast<std::uint64_t>(i0), i0);
        EXPECT_NEAR(est.mean, sol.value(0, {0, 0, 0}, i0), 3.0 * est.std_error + 1e-12);
    }
}

TEST(Evaluate, TrueSimulatorRunsThePolicy)
{
    const dynamics::TargetModel model{60.0, 0.01, dynamics::Vec4(20000, 0, 0, 10), dynamics::Vec4(1e4, 1, 1e4, 1).asDiagonal(), 500};
    const auto sim = dynamics::LinearGaussianChain::from_target(model);
    quantize::ClvqParams p;
    p.M = 5;
    p.N = 4;
    p.NR = 2000;
    p.seed = 3;
    const auto chain = quantize::build_chain(sim, p, 2000, quantize::default_metric_weights(1));
    CostModel m;
    m.target_fields = {acoustics::PropagationField{}};
    const auto cost = make_cost_functions(m, {500.0});
    const auto sol = solve(chain, depth_only(), {Eigen::Vector3d(0, 0, 300)}, cost, 4);
    const auto a = evaluate_policy(sol, chain, sim, cost, 200, 1);
    const auto b = evaluate_policy(sol, chain, sim, cost, 200, 1);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_GT(a.mean, 5 * 80.0 - 1e-9);
    EXPECT_LT(a.mean, 5 * 200.0 + 1e-9);
}
