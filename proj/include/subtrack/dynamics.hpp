#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "subtrack/random.hpp"

namespace subtrack::dynamics {

using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;

/// Horizontal target state, ordered (x, vx, y, vy), plus its constant depth.
struct TargetState {
    Vec4 w = Vec4::Zero();
    double depth = 0.0;

    double x() const { return w(0); }
    double y() const { return w(2); }
};

/// Nearly-constant-velocity model w' = F w + K eps, eps ~ N(0, sigma_eps^2 I2).
struct TargetModel {
    double T = 60.0;         // s
    double sigma_eps = 0.01; // m/s^2
    Vec4 mu0 = Vec4::Zero();
    Mat4 Sigma0 = Vec4(1000.0 * 1000.0, 4.0, 1000.0 * 1000.0, 4.0).asDiagonal();
    double depth = 500.0;

    Mat4 F() const;
    Eigen::Matrix<double, 4, 2> K() const;
    /// K Sigma_eps K^T.
    Mat4 process_noise() const;

    void validate() const;
};

TargetState step_target(const TargetModel& model, const TargetState& w, const Eigen::Vector2d& noise);

/// Independent targets stacked into one chain with block-diagonal F and K.
struct JointTargetModel {
    std::vector<TargetModel> models;

    Eigen::Index dim() const { return 4 * static_cast<Eigen::Index>(models.size()); }
    Eigen::MatrixXd F() const;
    Eigen::MatrixXd K() const;
    Eigen::VectorXd mean0() const;
    Eigen::MatrixXd cov0() const;
    /// noise has 2 entries per target.
    Eigen::VectorXd step(const Eigen::VectorXd& w, const Eigen::VectorXd& noise) const;
};

/// Throws ConfigError when the step lengths differ.
JointTargetModel join_models(const TargetModel& m1, const TargetModel& m2);

/// Source of i.i.d. trajectories (w_0 .. w_N) of a Markov chain.
class ChainSimulator {
public:
    virtual ~ChainSimulator() = default;
    virtual Eigen::Index dim() const = 0;
    /// Returns a (horizon + 1) x dim matrix, one row per time step.
    virtual Eigen::MatrixXd simulate(Rng& rng, int horizon) const = 0;
};

/// Product of independent linear-Gaussian blocks
///   w_{t+1} = A w_t + B xi_t,  xi_t ~ N(0, I),  w_0 ~ N(m, S).
/// Each block consumes its random draws contiguously, so a block simulated alone with
/// the same seed reproduces the first block of a joint simulation exactly.
class LinearGaussianChain : public ChainSimulator {
public:
    struct Block {
        Eigen::MatrixXd transition;
        Eigen::MatrixXd noise_gain;
        Eigen::VectorXd mean0;
        Eigen::MatrixXd cov0_factor; // L with L L^T = S
    };

    LinearGaussianChain(const Eigen::MatrixXd& transition, const Eigen::MatrixXd& noise_gain,
                        const Eigen::VectorXd& mean0, const Eigen::MatrixXd& cov0);

    static LinearGaussianChain from_target(const TargetModel& model);
    static LinearGaussianChain from_joint(const JointTargetModel& joint);

    /// Single-block chains only: replace the initial law by N(mean, cov).
    LinearGaussianChain with_initial_law(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) const;

    Eigen::Index dim() const override { return dim_; }
    Eigen::MatrixXd simulate(Rng& rng, int horizon) const override;

    const std::vector<Block>& blocks() const { return blocks_; }

private:
    LinearGaussianChain() = default;
    void add_block(const Eigen::MatrixXd& transition, const Eigen::MatrixXd& noise_gain,
                   const Eigen::VectorXd& mean0, const Eigen::MatrixXd& cov0);

    std::vector<Block> blocks_;
    Eigen::Index dim_ = 0;
};

/// Factor L of a symmetric PSD matrix with L L^T = S (eigen-decomposition, tolerant of singular S).
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& S);

/// Carrier position (x, y, depth), depth positive down.
struct CarrierState {
    Eigen::Vector3d s = Eigen::Vector3d::Zero();

    double x() const { return s(0); }
    double y() const { return s(1); }
    double depth() const { return s(2); }
};

/// Integer lattice coordinates (i1, i2, i3) of an action or a carrier offset.
using LatticeStep = std::array<int, 3>;

struct HorizontalBox {
    double x_min, x_max, y_min, y_max;
};

struct ActionSpace {
    Eigen::Vector3d deltas = Eigen::Vector3d(0.0, 0.0, 100.0);
    std::array<int, 3> ranges{0, 0, 1};
    double min_depth = 0.0;
    double max_depth = 1000.0;
    std::optional<HorizontalBox> horizontal_box;

    /// Number of actions before feasibility filtering: prod(2 L_j + 1).
    std::size_t cardinality() const;
    Eigen::Vector3d displacement(const LatticeStep& step) const;
    /// True when s is an admissible underwater position.
    bool admits(const CarrierState& s) const;
    void validate() const;
};

/// Feasible lattice steps at s in lexicographic (i1, i2, i3) order. Never empty.
std::vector<LatticeStep> feasible_steps(const ActionSpace& space, const CarrierState& s);
/// The same actions expressed in meters.
std::vector<Eigen::Vector3d> feasible_actions(const ActionSpace& space, const CarrierState& s);

CarrierState apply_step(const ActionSpace& space, const CarrierState& s, const LatticeStep& step);
/// Throws ContractError unless `a` is one of feasible_actions(space, s).
CarrierState apply_action(const ActionSpace& space, const CarrierState& s, const Eigen::Vector3d& a);
/// Lattice coordinates of a displacement (any multiple of the steps, ranges not checked);
/// nullopt if it is off the lattice.
std::optional<LatticeStep> step_of(const ActionSpace& space, const Eigen::Vector3d& a);

} // namespace subtrack::dynamics
