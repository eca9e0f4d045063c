#include "subtrack/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "subtrack/error.hpp"

namespace subtrack::dynamics {

namespace {

constexpr double kBoundSlack = 1e-9;

} // namespace

// State order is (x, vx, y, vy): each axis carries its own [[1, T], [0, 1]] block.
Mat4 TargetModel::F() const
{
    Mat4 f = Mat4::Identity();
    f(0, 1) = T;
    f(2, 3) = T;
    return f;
}

Eigen::Matrix<double, 4, 2> TargetModel::K() const
{
    Eigen::Matrix<double, 4, 2> k = Eigen::Matrix<double, 4, 2>::Zero();
    k(0, 0) = T * T / 2.0;
    k(1, 0) = T;
    k(2, 1) = T * T / 2.0;
    k(3, 1) = T;
    return k;
}

Mat4 TargetModel::process_noise() const
{
    const auto k = K();
    return sigma_eps * sigma_eps * k * k.transpose();
}

void TargetModel::validate() const
{
    if (!(T > 0.0))
        throw ConfigError("target model: step T must be positive");
    if (sigma_eps < 0.0)
        throw ConfigError("target model: sigma_eps must be non-negative");
    if ((Sigma0 - Sigma0.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, Sigma0.cwiseAbs().maxCoeff()))
        throw ConfigError("target model: Sigma0 must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat4> eig(Sigma0);
    if (eig.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff()))
        throw ConfigError("target model: Sigma0 must be positive semi-definite");
}

TargetState step_target(const TargetModel& model, const TargetState& w, const Eigen::Vector2d& noise)
{
    return {model.F() * w.w + model.K() * noise, w.depth};
}

Eigen::MatrixXd JointTargetModel::F() const
{
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(dim(), dim());
    for (std::size_t k = 0; k < models.size(); ++k)
        f.block<4, 4>(4 * k, 4 * k) = models[k].F();
    return f;
}

Eigen::MatrixXd JointTargetModel::K() const
{
    const auto n = static_cast<Eigen::Index>(models.size());
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(4 * n, 2 * n);
    for (Eigen::Index k = 0; k < n; ++k)
        g.block<4, 2>(4 * k, 2 * k) = models[k].K();
    return g;
}

Eigen::VectorXd JointTargetModel::mean0() const
{
    Eigen::VectorXd m(dim());
    for (std::size_t k = 0; k < models.size(); ++k)
        m.segment<4>(4 * k) = models[k].mu0;
    return m;
}

Eigen::MatrixXd JointTargetModel::cov0() const
{
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(dim(), dim());
    for (std::size_t k = 0; k < models.size(); ++k)
        c.block<4, 4>(4 * k, 4 * k) = models[k].Sigma0;
    return c;
}

Eigen::VectorXd JointTargetModel::step(const Eigen::VectorXd& w, const Eigen::VectorXd& noise) const
{
    return F() * w + K() * noise;
}

JointTargetModel join_models(const TargetModel& m1, const TargetModel& m2)
{
    if (m1.T != m2.T)
        throw ConfigError("join_models: targets must share the same time step");
    return JointTargetModel{{m1, m2}};
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& S)
{
    if (S.rows() != S.cols())
        throw DomainError("psd_factor: matrix must be square");
    if (S.size() == 0)
        return S;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (S + S.transpose()));
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    if (lambda.minCoeff() < -1e-9 * scale)
        throw DomainError("psd_factor: matrix is not positive semi-definite");
    return eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

LinearGaussianChain::LinearGaussianChain(const Eigen::MatrixXd& transition, const Eigen::MatrixXd& noise_gain,
                                         const Eigen::VectorXd& mean0, const Eigen::MatrixXd& cov0)
{
    add_block(transition, noise_gain, mean0, cov0);
}

void LinearGaussianChain::add_block(const Eigen::MatrixXd& transition, const Eigen::MatrixXd& noise_gain,
                                    const Eigen::VectorXd& mean0, const Eigen::MatrixXd& cov0)
{
    const Eigen::Index d = mean0.size();
    if (transition.rows() != d || transition.cols() != d || noise_gain.rows() != d || cov0.rows() != d ||
        cov0.cols() != d)
        throw ConfigError("linear Gaussian chain: inconsistent block dimensions");
    blocks_.push_back({transition, noise_gain, mean0, psd_factor(cov0)});
    dim_ += d;
}

LinearGaussianChain LinearGaussianChain::from_target(const TargetModel& model)
{
    model.validate();
    return LinearGaussianChain(model.F(), model.sigma_eps * model.K(), model.mu0, model.Sigma0);
}

LinearGaussianChain LinearGaussianChain::from_joint(const JointTargetModel& joint)
{
    LinearGaussianChain chain;
    for (const auto& m : joint.models) {
        m.validate();
        chain.add_block(m.F(), m.sigma_eps * m.K(), m.mu0, m.Sigma0);
    }
    return chain;
}

LinearGaussianChain LinearGaussianChain::with_initial_law(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) const
{
    if (blocks_.size() != 1)
        throw ContractError("with_initial_law: only single-block chains can be re-seeded");
    const Block& b = blocks_.front();
    return LinearGaussianChain(b.transition, b.noise_gain, mean, cov);
}

Eigen::MatrixXd LinearGaussianChain::simulate(Rng& rng, int horizon) const
{
    Eigen::MatrixXd path(horizon + 1, dim_);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::Index offset = 0;
    for (const Block& b : blocks_) {
        const Eigen::Index d = b.mean0.size();
        Eigen::VectorXd xi(d);
        for (Eigen::Index k = 0; k < d; ++k)
            xi(k) = gauss(rng);
        Eigen::VectorXd w = b.mean0 + b.cov0_factor * xi;
        path.row(0).segment(offset, d) = w.transpose();
        Eigen::VectorXd eps(b.noise_gain.cols());
        for (int t = 1; t <= horizon; ++t) {
            for (Eigen::Index k = 0; k < eps.size(); ++k)
                eps(k) = gauss(rng);
            w = b.transition * w + b.noise_gain * eps;
            path.row(t).segment(offset, d) = w.transpose();
        }
        offset += d;
    }
    return path;
}

std::size_t ActionSpace::cardinality() const
{
    std::size_t n = 1;
    for (int L : ranges)
        n *= static_cast<std::size_t>(2 * L + 1);
    return n;
}

Eigen::Vector3d ActionSpace::displacement(const LatticeStep& step) const
{
    return {step[0] * deltas(0), step[1] * deltas(1), step[2] * deltas(2)};
}

bool ActionSpace::admits(const CarrierState& s) const
{
    if (s.depth() < min_depth - kBoundSlack || s.depth() > max_depth + kBoundSlack)
        return false;
    if (horizontal_box) {
        const auto& b = *horizontal_box;
        if (s.x() < b.x_min - kBoundSlack || s.x() > b.x_max + kBoundSlack || s.y() < b.y_min - kBoundSlack ||
            s.y() > b.y_max + kBoundSlack)
            return false;
    }
    return true;
}

void ActionSpace::validate() const
{
    for (int j = 0; j < 3; ++j) {
        if (ranges[j] < 0)
            throw ConfigError("action space: ranges must be non-negative");
        if (deltas(j) < 0.0 || (ranges[j] > 0 && !(deltas(j) > 0.0)))
            throw ConfigError("action space: active axes need a positive step");
    }
    if (min_depth > max_depth)
        throw ConfigError("action space: depth bounds are inverted");
    if (horizontal_box && (horizontal_box->x_min > horizontal_box->x_max || horizontal_box->y_min > horizontal_box->y_max))
        throw ConfigError("action space: horizontal box is inverted");
}

std::vector<LatticeStep> feasible_steps(const ActionSpace& space, const CarrierState& s)
{
    if (!space.admits(s))
        throw ContractError("feasible_actions: carrier state outside admissible bounds");
    std::vector<LatticeStep> out;
    const auto& L = space.ranges;
    for (int i1 = -L[0]; i1 <= L[0]; ++i1)
        for (int i2 = -L[1]; i2 <= L[1]; ++i2)
            for (int i3 = -L[2]; i3 <= L[2]; ++i3) {
                const LatticeStep step{i1, i2, i3};
                if (space.admits({s.s + space.displacement(step)}))
                    out.push_back(step);
            }
    return out;
}

std::vector<Eigen::Vector3d> feasible_actions(const ActionSpace& space, const CarrierState& s)
{
    std::vector<Eigen::Vector3d> out;
    for (const auto& step : feasible_steps(space, s))
        out.push_back(space.displacement(step));
    return out;
}

std::optional<LatticeStep> step_of(const ActionSpace& space, const Eigen::Vector3d& a)
{
    LatticeStep step{};
    for (int j = 0; j < 3; ++j) {
        const double d = space.deltas(j);
        if (d == 0.0) {
            if (std::abs(a(j)) > kBoundSlack)
                return std::nullopt;
            step[j] = 0;
            continue;
        }
        const double q = std::round(a(j) / d);
        if (std::abs(a(j) - q * d) > 1e-9 * std::max(1.0, d))
            return std::nullopt;
        step[j] = static_cast<int>(q);
    }
    return step;
}

CarrierState apply_step(const ActionSpace& space, const CarrierState& s, const LatticeStep& step)
{
    for (int j = 0; j < 3; ++j)
        if (std::abs(step[j]) > space.ranges[j])
            throw ContractError("apply_action: step exceeds the control range");
    if (!space.admits(s))
        throw ContractError("apply_action: carrier state outside admissible bounds");
    CarrierState next{s.s + space.displacement(step)};
    if (!space.admits(next))
        throw ContractError("apply_action: action leads outside admissible bounds");
    return next;
}

CarrierState apply_action(const ActionSpace& space, const CarrierState& s, const Eigen::Vector3d& a)
{
    const auto step = step_of(space, a);
    if (!step)
        throw ContractError("apply_action: displacement is not on the action lattice");
    return apply_step(space, s, *step);
}

} // namespace subtrack::dynamics
