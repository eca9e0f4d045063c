#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "subtrack/dynamics.hpp"

namespace subtrack::quantize {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// M-point grid for the law of w_t; cells are the (weighted) Voronoi regions of its points.
struct QuantizationGrid {
    int t = 0;
    PointMatrix points; // M x d

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }
    bool operator==(const QuantizationGrid& o) const;
};

/// Finite chain on per-step grids: marginal weights and transition matrices P^t (t = 0..N-1).
struct QuantizedChain {
    std::vector<QuantizationGrid> grids;       // N + 1
    std::vector<Eigen::VectorXd> weights;      // N + 1, each of length M
    std::vector<Eigen::MatrixXd> transitions;  // N, each M x M row-stochastic
    Eigen::VectorXd metric_weights;            // d, used by every nearest-cell lookup

    int horizon() const { return static_cast<int>(transitions.size()); }
    Eigen::Index size() const { return grids.empty() ? 0 : grids.front().size(); }
    Eigen::Index dim() const { return grids.empty() ? 0 : grids.front().dim(); }

    /// Throws NumericalError when weights or rows are not probability vectors within `tol`.
    void validate(double tol = 1e-9) const;
    /// Exact equality of every stored number (shape mismatches compare unequal).
    bool operator==(const QuantizedChain& o) const;
};

struct ClvqParams {
    int M = 20;
    int NR = 20000;
    int N = 10;
    double gamma0 = 0.1;
    /// c in gamma_m = gamma0 / (1 + c m); defaults to gamma0 / M when unset.
    std::optional<double> gamma_decay;
    std::uint64_t seed = 0;

    double decay() const { return gamma_decay ? *gamma_decay : gamma0 / M; }
    double step(long m) const { return gamma0 / (1.0 + decay() * static_cast<double>(m)); }
    void validate() const;
};

/// Weights (1, lambda^2, 1, lambda^2) per target so a velocity error counts like the
/// position error it produces over `lambda` seconds.
Eigen::VectorXd default_metric_weights(int n_targets, double lambda = 60.0);

/// Index of the grid point closest to p in the weighted squared metric; ties go to the lowest index.
Eigen::Index nearest(const QuantizationGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& p,
                     const Eigen::VectorXd& metric_weights);
/// Same, also returning the weighted squared distance.
Eigen::Index nearest(const QuantizationGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& p,
                     const Eigen::VectorXd& metric_weights, double& sq_distance);

/// First M distinct simulated values at each time index (duplicates resampled).
std::vector<QuantizationGrid> initial_grids(const dynamics::ChainSimulator& sim, int M, int N, Rng& rng);

/// Extended CLVQ: for each simulated trajectory and each t, move the nearest grid point
/// towards w_t by gamma_m. Deterministic given params.seed.
std::vector<QuantizationGrid> clvq_train(const dynamics::ChainSimulator& sim, const ClvqParams& params,
                                         const Eigen::VectorXd& metric_weights,
                                         std::optional<std::vector<QuantizationGrid>> init = std::nullopt);

/// Monte Carlo weights and transition matrices on fixed grids. NS trajectories are drawn in
/// fixed-size shards with derived seeds, so the result does not depend on `workers`.
QuantizedChain estimate_transitions(const dynamics::ChainSimulator& sim, std::vector<QuantizationGrid> grids,
                                    long NS, std::uint64_t seed, const Eigen::VectorXd& metric_weights,
                                    int workers = 1);

/// Mean weighted squared distance from each sample (row) to its nearest grid point.
double distortion(const QuantizationGrid& grid, const PointMatrix& samples, const Eigen::VectorXd& metric_weights);
double distortion(const QuantizationGrid& grid, const PointMatrix& samples);

/// One-point-per-step chain following a known path ((N+1) x d).
QuantizedChain deterministic_chain(const Eigen::MatrixXd& path, const Eigen::VectorXd& metric_weights);

/// Convenience: train grids then estimate transitions.
QuantizedChain build_chain(const dynamics::ChainSimulator& sim, const ClvqParams& params, long NS,
                           const Eigen::VectorXd& metric_weights, int workers = 1);

} // namespace subtrack::quantize
