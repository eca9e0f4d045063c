#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "subtrack/acoustics.hpp"
#include "subtrack/dp.hpp"
#include "subtrack/dynamics.hpp"
#include "subtrack/quantize.hpp"
#include "subtrack/tma.hpp"

namespace subtrack::control {

enum class ScenarioKind { known_single, known_double, bot_single, bot_tradeoff };

std::string to_string(ScenarioKind kind);

/// Fixed per-step displacement override applied for `duration` steps from `start`.
struct Maneuver {
    int start = 0;
    int duration = 0;
    Eigen::Vector3d displacement = Eigen::Vector3d::Zero();
};

struct CarrierSpec {
    dynamics::CarrierState initial;
    dynamics::ActionSpace space;
    acoustics::PropagationField field; // carrier emitter, re-centred on the carrier depth
    Eigen::Vector3d cruise = Eigen::Vector3d::Zero(); // period-1 displacement outside maneuvers
};

struct TargetSpec {
    dynamics::TargetModel model;   // mu0 / Sigma0 are the prior (and the filter initialization)
    dynamics::Vec4 initial = dynamics::Vec4::Zero(); // true initial state
    acoustics::PropagationField field;               // target emitter, re-centred on the target depth
};

struct QuantizationSpec {
    int M = 20;
    int NR = 20000;
    long NS = 20000;
    double gamma0 = 0.1;
    std::optional<double> gamma_decay;
    double metric_lambda = 60.0;
};

struct DiagramSpec {
    double range_max = 50000.0;
    int n_r = 201;
    int n_z = 101;
    double saturation = 120.0;
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::known_single;
    int total_steps = 40;
    double step_seconds = 60.0;
    CarrierSpec carrier;
    std::vector<TargetSpec> targets;
    std::vector<Maneuver> maneuvers;
    int period1_end = 0;
    int subinterval_length = 40;
    QuantizationSpec quantization;
    dp::CostModel cost;
    dp::Direction direction = dp::Direction::minimize;
    tma::MeasurementModel measurement;
    tma::UkfParams ukf;
    DiagramSpec diagram;
    std::uint64_t seed = 1;
    int workers = 1;
    /// Draw the true initial target state from the prior N(mu0, Sigma0) instead of `initial`.
    bool truth_from_prior = false;

    bool is_bot() const { return kind == ScenarioKind::bot_single || kind == ScenarioKind::bot_tradeoff; }
    std::vector<double> target_depths() const;
    void validate() const;
};

struct RunOptions {
    /// Zero action wherever the optimizer would act (period 2 / the whole known run).
    bool baseline = false;
};

struct StepRecord {
    int t = 0;
    Eigen::Vector3d carrier = Eigen::Vector3d::Zero();
    Eigen::Vector3d action = Eigen::Vector3d::Zero(); // applied at t (s_{t+1} - s_t)
    std::vector<dynamics::Vec4> truth;                // one per target
    dynamics::Vec4 filter_mean = dynamics::Vec4::Constant(std::nan(""));
    dynamics::Mat4 filter_cov = dynamics::Mat4::Constant(std::nan(""));
    double bearing = std::nan("");
    double frequency = std::nan("");
    int nearest_index = -1;
    double nearest_sq_distance = std::nan("");
    int grid_epoch = -1; // quantize/solve cycle that produced the action, -1 when none
    double stage_cost = 0.0;
    double c_w = 0.0;
    double c_s = 0.0;
    bool flagged = false;

    double filter_trace() const { return filter_cov.trace(); }
};

struct ScenarioLog {
    ScenarioKind kind = ScenarioKind::known_single;
    int period1_end = 0;
    int n_targets = 1;
    std::vector<StepRecord> records;
    int cycles = 0;
    bool aborted = false;
    std::string failure;
};

/// Scenarios 1-2: quantize the prior over the whole horizon, solve once, act on nearest cells
/// of the true target state.
ScenarioLog run_known(const ScenarioConfig& config, const RunOptions& options = {});

/// Scenarios 3-4: filtering-only period with scheduled maneuvers, then horizon-split
/// quantize -> solve -> act cycles seeded by the filter posterior.
ScenarioLog run_bot(const ScenarioConfig& config, const RunOptions& options = {});

/// Dispatches on config.kind.
ScenarioLog run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

struct PeriodMetrics {
    int steps = 0;
    double mean_stage_cost = 0.0;
    double mean_c_w = 0.0;
    double mean_c_s = 0.0;
    double position_rmse = std::nan(""); // filter position error, nan without a filter
};

struct RunMetrics {
    PeriodMetrics period1; // t < period1_end
    PeriodMetrics period2; // t >= period1_end
    PeriodMetrics overall;
};

RunMetrics summarize(const ScenarioLog& log);

struct Comparison {
    RunMetrics a;
    RunMetrics b;
    RunMetrics difference; // b - a
};

/// Throws ContractError when the logs do not cover the same steps.
Comparison compare_runs(const ScenarioLog& a, const ScenarioLog& b);

/// Fixed-column CSV of a log; floats with 6 significant digits.
void write_log_csv(std::ostream& out, const ScenarioLog& log);
ScenarioLog read_log_csv(std::istream& in, int period1_end);

/// Filtering statistics over seeded Monte Carlo runs of the period-1 loop (no optimization).
struct TmaStatistics {
    int step = 0;
    int runs = 0;
    double position_rmse = 0.0;
    double mean_nees = 0.0;
};

TmaStatistics tma_monte_carlo(const ScenarioConfig& config, int runs, int step);

/// Known deterministic target path: optimal cost of one solve over the whole horizon and
/// realized cost of re-solving every H steps. Both are sum_{t=1..N} c(s_t, w_t) + C_N.
struct SplitComparison {
    double unsplit = 0.0;
    double split = 0.0;
    int cycles = 0;
    double ratio() const { return split / unsplit; }
};

SplitComparison compare_horizon_split(const Eigen::MatrixXd& target_path, const dynamics::ActionSpace& space,
                                      const dynamics::CarrierState& s0, const dp::CostFunctions& cost, int H);

} // namespace subtrack::control
