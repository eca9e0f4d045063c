#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "subtrack/acoustics.hpp"
#include "subtrack/dynamics.hpp"
#include "subtrack/quantize.hpp"

namespace subtrack::dp {

enum class CostMode { single_target, multi_target, tradeoff };
enum class TerminalMode { zero, same_as_stage };
enum class Direction { minimize, maximize };

struct TargetPosition {
    double x = 0.0;
    double y = 0.0;
    double depth = 0.0;
};

/// Geometric stage cost built from propagation loss.
///
/// Target fields are re-centred on each target's depth and the carrier field on the
/// carrier's current depth before being sampled.
struct CostModel {
    CostMode mode = CostMode::single_target;
    std::vector<double> alphas;   // multi_target weights, sum to 1
    double epsilon = 0.1;         // tradeoff floor of f
    std::vector<acoustics::PropagationField> target_fields;
    acoustics::PropagationField carrier_field;
    TerminalMode terminal_mode = TerminalMode::same_as_stage;

    void validate(std::size_t n_targets) const;
};

/// Piecewise-linear multiplier: 1 below 80 dB, epsilon from 200 dB, linear in between.
double f_multiplier(double x, double epsilon);

/// beta / C^W: loss of target k's emission received at the carrier.
double target_loss(const CostModel& cost, const dynamics::CarrierState& l, const TargetPosition& w, std::size_t k = 0);
/// C^S: loss of the carrier's emission received at the target.
double carrier_exposure(const CostModel& cost, const dynamics::CarrierState& l, const TargetPosition& w);

double stage_cost(const CostModel& cost, const dynamics::CarrierState& l, std::span<const TargetPosition> targets);

/// Positions of the targets stacked in a chain state (4 entries per target).
std::vector<TargetPosition> target_positions(const Eigen::Ref<const Eigen::VectorXd>& w,
                                             std::span<const double> depths);

using StageCostFn = std::function<double(const dynamics::CarrierState&, const Eigen::VectorXd&)>;

/// Stage cost c(m, w) and terminal cost C_N(m, w) on (carrier position, chain state).
struct CostFunctions {
    StageCostFn stage;
    StageCostFn terminal;
};

CostFunctions make_cost_functions(const CostModel& cost, std::vector<double> target_depths);

/// Reachable carrier positions X_t^S, indexed by integer offsets from s0.
class CarrierLattice {
public:
    struct Move {
        dynamics::LatticeStep step;
        std::size_t destination; // index in layer t + 1
    };

    CarrierLattice(const dynamics::ActionSpace& space, const dynamics::CarrierState& s0, int horizon);

    int horizon() const { return static_cast<int>(layers_.size()) - 1; }
    const dynamics::CarrierState& origin() const { return origin_; }
    const dynamics::ActionSpace& space() const { return space_; }

    const std::vector<dynamics::LatticeStep>& layer(int t) const { return layers_.at(t).points; }
    std::optional<std::size_t> index(int t, const dynamics::LatticeStep& n) const;
    /// Feasible moves from point `idx` of layer t (t < horizon), in lexicographic step order.
    std::span<const Move> moves(int t, std::size_t idx) const;

    dynamics::CarrierState position(const dynamics::LatticeStep& n) const;
    /// Lattice offset of a carrier position; nullopt if it is off the lattice.
    std::optional<dynamics::LatticeStep> offset_of(const dynamics::CarrierState& s) const;

private:
    struct Layer {
        std::vector<dynamics::LatticeStep> points;
        std::array<int, 3> extent{};       // per-axis radius t * L_j
        std::vector<std::int32_t> dense;   // box index -> point index or -1
        std::vector<Move> moves;
        std::vector<std::size_t> move_begin; // points.size() + 1 entries
    };

    std::optional<std::size_t> box_index(const Layer& layer, const dynamics::LatticeStep& n) const;

    dynamics::ActionSpace space_;
    dynamics::CarrierState origin_;
    std::vector<Layer> layers_;
};

struct DpOptions {
    Direction direction = Direction::minimize;
    int workers = 1;
    /// Actions within tie_tolerance * max(1, |opt|) of the optimum count as ties;
    /// the lexicographically first one is chosen.
    double tie_tolerance = 1e-12;
};

/// Value function J*_t and policy a*_t over (carrier point, grid index).
struct DpSolution {
    CarrierLattice lattice;
    Eigen::Index M = 0;
    std::vector<Eigen::MatrixXd> values;                 // t = 0..N, (|X_t^S| x M)
    std::vector<std::vector<dynamics::LatticeStep>> policy; // t = 0..N-1, row-major (point, index)

    int horizon() const { return static_cast<int>(policy.size()); }
    /// Throw ContractError for states outside the reachable grid.
    double value(int t, const dynamics::LatticeStep& l, Eigen::Index i) const;
    dynamics::LatticeStep action(int t, const dynamics::LatticeStep& l, Eigen::Index i) const;
};

/// Backward recursion
///   J_N(l, i) = C_N(l, grid_N[i])
///   J_t(l, i) = opt_a sum_j P^t_ij [c(l + a, grid_{t+1}[j]) + J_{t+1}(l + a, j)].
DpSolution solve(const quantize::QuantizedChain& chain, const dynamics::ActionSpace& space,
                 const dynamics::CarrierState& s0, const CostFunctions& cost, int N, const DpOptions& options = {});

struct PolicyEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long runs = 0;
};

/// Monte Carlo cost of following the policy on the quantized chain itself. The initial
/// index is drawn from weights_0 unless given.
PolicyEstimate evaluate_policy(const DpSolution& solution, const quantize::QuantizedChain& chain,
                               const CostFunctions& cost, long runs, std::uint64_t seed,
                               std::optional<Eigen::Index> initial_index = std::nullopt);

/// Monte Carlo cost of the policy driven by nearest-cell coding of true trajectories.
PolicyEstimate evaluate_policy(const DpSolution& solution, const quantize::QuantizedChain& chain,
                               const dynamics::ChainSimulator& truth, const CostFunctions& cost, long runs,
                               std::uint64_t seed);

} // namespace subtrack::dp
