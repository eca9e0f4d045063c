#include "subtrack/tma.hpp"

#include <array>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "subtrack/error.hpp"

namespace subtrack::tma {

void MeasurementModel::validate() const
{
    if (!(sigma_bearing > 0.0) || !(sigma_freq > 0.0))
        throw ConfigError("measurement model: standard deviations must be positive");
    if (!(c_sound > 0.0))
        throw ConfigError("measurement model: sound speed must be positive");
}

Eigen::Matrix2d MeasurementModel::noise_covariance() const
{
    return Eigen::Vector2d(sigma_bearing * sigma_bearing, sigma_freq * sigma_freq).asDiagonal();
}

void UkfParams::validate(int n) const
{
    const double lambda = alpha_sp * alpha_sp * (n + kappa_sp) - n;
    if (!(n + lambda > 0.0))
        throw ConfigError("ukf: sigma-point scaling gives n + lambda <= 0");
}

double wrap_angle(double a)
{
    using std::numbers::pi;
    double r = std::remainder(a, 2.0 * pi); // [-pi, pi]
    if (r <= -pi)
        r += 2.0 * pi;
    return r;
}

Eigen::Vector2d observe(const Vec4& w, const Eigen::Vector2d& observer_xy, const Eigen::Vector2d& observer_velocity,
                        const MeasurementModel& model)
{
    const double dx = w(0) - observer_xy(0);
    const double dy = w(2) - observer_xy(1);
    const double r = std::hypot(dx, dy);
    if (r == 0.0)
        throw DomainError("measure: target and observer are horizontally coincident");
    const double dvx = w(1) - observer_velocity(0);
    const double dvy = w(3) - observer_velocity(1);
    const double range_rate = (dx * dvx + dy * dvy) / r;
    return {std::atan2(dx, dy), model.f0 * (1.0 - range_rate / model.c_sound)};
}

Measurement measure(const dynamics::TargetState& target, const dynamics::CarrierState& observer,
                    const Eigen::Vector3d& observer_velocity, const MeasurementModel& model,
                    const Eigen::Vector2d& noise, int t)
{
    const Eigen::Vector2d z = observe(target.w, observer.s.head<2>(), observer_velocity.head<2>(), model);
    return {wrap_angle(z(0) + noise(0) * model.sigma_bearing), z(1) + noise(1) * model.sigma_freq, t};
}

void check_covariance(const Mat4& cov, const char* where)
{
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if (!cov.allFinite())
        throw NumericalError(std::string(where) + ": covariance has non-finite entries");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
        throw NumericalError(std::string(where) + ": covariance is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat4> eig(cov);
    const double min_eig = eig.eigenvalues().minCoeff();
    if (min_eig < -1e-9 * scale)
        throw NumericalError(std::string(where) + ": covariance is not PSD (min eigenvalue " +
                             std::to_string(min_eig) + ")");
}

UkfState ukf_predict(const UkfState& state, const dynamics::TargetModel& model)
{
    check_covariance(state.cov, "ukf_predict");
    const Mat4 F = model.F();
    UkfState out;
    out.mean = F * state.mean;
    const Mat4 P = F * state.cov * F.transpose() + model.process_noise();
    out.cov = 0.5 * (P + P.transpose());
    out.t = state.t + 1;
    return out;
}

namespace {

/// Columns are sqrt((n + lambda) P); one jittered retry before giving up.
Mat4 scaled_sqrt(const Mat4& P, double scale)
{
    Eigen::LLT<Mat4> llt(scale * P);
    if (llt.info() == Eigen::Success)
        return llt.matrixL();
    const double jitter = 1e-9 * P.trace() / 4.0;
    Eigen::LLT<Mat4> retry(scale * (P + jitter * Mat4::Identity()));
    if (retry.info() == Eigen::Success)
        return retry.matrixL();
    throw NumericalError("ukf: Cholesky factorization failed (covariance trace " + std::to_string(P.trace()) + ")");
}

} // namespace

UkfCorrection ukf_correct(const UkfState& state, const Eigen::VectorXd& z, const MeasurementFunction& f,
                          const UkfParams& params)
{
    constexpr int n = 4;
    params.validate(n);
    check_covariance(state.cov, "ukf_update");
    const Eigen::Index m = z.size();
    if (f.R.rows() != m || f.R.cols() != m)
        throw ContractError("ukf_update: measurement noise dimension mismatch");
    auto is_angle = [&](Eigen::Index k) { return static_cast<std::size_t>(k) < f.angular.size() && f.angular[k]; };

    const double a2 = params.alpha_sp * params.alpha_sp;
    const double lambda = a2 * (n + params.kappa_sp) - n;
    const double wm0 = lambda / (n + lambda);
    const double wc0 = wm0 + (1.0 - a2 + params.beta_sp);
    const double wi = 1.0 / (2.0 * (n + lambda));

    const Mat4 S = scaled_sqrt(state.cov, n + lambda);
    std::array<Vec4, 2 * n + 1> chi;
    chi[0] = state.mean;
    for (int k = 0; k < n; ++k) {
        chi[1 + k] = state.mean + S.col(k);
        chi[1 + n + k] = state.mean - S.col(k);
    }

    std::vector<Eigen::VectorXd> Z(chi.size());
    for (std::size_t k = 0; k < chi.size(); ++k) {
        Z[k] = f.h(chi[k]);
        if (Z[k].size() != m)
            throw ContractError("ukf_update: measurement function returned the wrong dimension");
    }

    // Angular components are averaged as offsets from the central sigma point.
    auto residual = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        Eigen::VectorXd d = a - b;
        for (Eigen::Index k = 0; k < m; ++k)
            if (is_angle(k))
                d(k) = wrap_angle(d(k));
        return d;
    };
    Eigen::VectorXd zhat = Eigen::VectorXd::Zero(m);
    for (std::size_t k = 0; k < Z.size(); ++k)
        zhat += (k == 0 ? wm0 : wi) * residual(Z[k], Z[0]);
    zhat += Z[0];
    for (Eigen::Index k = 0; k < m; ++k)
        if (is_angle(k))
            zhat(k) = wrap_angle(zhat(k));

    Eigen::MatrixXd Pzz = f.R;
    Eigen::Matrix<double, n, Eigen::Dynamic> Pxz = Eigen::Matrix<double, n, Eigen::Dynamic>::Zero(n, m);
    for (std::size_t k = 0; k < Z.size(); ++k) {
        const double w = k == 0 ? wc0 : wi;
        const Eigen::VectorXd dz = residual(Z[k], zhat);
        Pzz += w * dz * dz.transpose();
        Pxz += w * (chi[k] - state.mean) * dz.transpose();
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(Pzz);
    if (!lu.isInvertible() || !Pzz.allFinite())
        throw NumericalError("ukf_update: innovation covariance is singular (filter divergence)");
    const Eigen::MatrixXd gain = Pxz * lu.inverse();
    const Eigen::VectorXd innovation = residual(z, zhat);

    UkfCorrection out;
    out.posterior.mean = state.mean + gain * innovation;
    const Mat4 P = state.cov - gain * Pzz * gain.transpose();
    out.posterior.cov = 0.5 * (P + P.transpose());
    out.posterior.t = state.t;
    out.predicted = zhat;
    out.innovation = innovation;
    out.innovation_cov = Pzz;
    if (!out.posterior.mean.allFinite())
        throw NumericalError("ukf_update: non-finite posterior mean (filter divergence)");
    return out;
}

MeasurementFunction bearing_frequency_function(const dynamics::CarrierState& observer,
                                               const Eigen::Vector3d& observer_velocity, const MeasurementModel& model)
{
    model.validate();
    const Eigen::Vector2d pos = observer.s.head<2>();
    const Eigen::Vector2d vel = observer_velocity.head<2>();
    MeasurementFunction f;
    f.h = [pos, vel, model](const Vec4& w) -> Eigen::VectorXd {
        return observe(w, pos, vel, model);
    };
    f.R = model.noise_covariance();
    f.angular = {true, false};
    return f;
}

UkfState ukf_update(const UkfState& state, const Measurement& z, const dynamics::CarrierState& observer,
                    const Eigen::Vector3d& observer_velocity, const MeasurementModel& model, const UkfParams& params)
{
    const auto f = bearing_frequency_function(observer, observer_velocity, model);
    return ukf_correct(state, Eigen::Vector2d(z.bearing, z.frequency), f, params).posterior;
}

} // namespace subtrack::tma
