#pragma once

#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "subtrack/dynamics.hpp"

namespace subtrack::tma {

using dynamics::Mat4;
using dynamics::Vec4;

struct Measurement {
    double bearing = 0.0;   // rad, clockwise from north (+y), in (-pi, pi]
    double frequency = 0.0; // Hz
    int t = 0;
};

/// Passive bearing + Doppler-shifted frequency of a tonal emitted at f0.
struct MeasurementModel {
    double f0 = 300.0;
    double c_sound = 1500.0;
    double sigma_bearing = std::numbers::pi / 180.0;
    double sigma_freq = 0.05;

    void validate() const;
    Eigen::Matrix2d noise_covariance() const;
};

struct UkfParams {
    double alpha_sp = 0.5;
    double beta_sp = 2.0;
    double kappa_sp = 0.0;

    void validate(int n = 4) const;
};

struct UkfState {
    Vec4 mean = Vec4::Zero();
    Mat4 cov = Mat4::Identity();
    int t = 0;
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Noise-free (bearing, frequency) of a target state seen from an observer at (x, y)
/// moving with horizontal velocity (vx, vy).
Eigen::Vector2d observe(const Vec4& w, const Eigen::Vector2d& observer_xy, const Eigen::Vector2d& observer_velocity,
                        const MeasurementModel& model);

/// noise is in standard-deviation units (scaled by sigma_bearing, sigma_freq).
Measurement measure(const dynamics::TargetState& target, const dynamics::CarrierState& observer,
                    const Eigen::Vector3d& observer_velocity, const MeasurementModel& model,
                    const Eigen::Vector2d& noise, int t = 0);

/// Exact linear-Gaussian prediction: mean <- F mean, cov <- F cov F^T + Q.
UkfState ukf_predict(const UkfState& state, const dynamics::TargetModel& model);

/// Generic measurement map for the unscented update. Components flagged in `angular`
/// are averaged and differenced modulo 2 pi.
struct MeasurementFunction {
    std::function<Eigen::VectorXd(const Vec4&)> h;
    Eigen::MatrixXd R;
    std::vector<bool> angular;
};

struct UkfCorrection {
    UkfState posterior;
    Eigen::VectorXd predicted; // z-hat
    Eigen::VectorXd innovation;
    Eigen::MatrixXd innovation_cov;
};

UkfCorrection ukf_correct(const UkfState& state, const Eigen::VectorXd& z, const MeasurementFunction& f,
                          const UkfParams& params);

MeasurementFunction bearing_frequency_function(const dynamics::CarrierState& observer,
                                               const Eigen::Vector3d& observer_velocity, const MeasurementModel& model);

UkfState ukf_update(const UkfState& state, const Measurement& z, const dynamics::CarrierState& observer,
                    const Eigen::Vector3d& observer_velocity, const MeasurementModel& model, const UkfParams& params);

/// Throws NumericalError unless cov is symmetric PSD up to round-off.
void check_covariance(const Mat4& cov, const char* where);

} // namespace subtrack::tma
