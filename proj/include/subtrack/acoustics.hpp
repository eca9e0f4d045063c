#pragma once

#include <iosfwd>
#include <limits>

#include <Eigen/Core>

namespace subtrack::acoustics {

/// Parametric stand-in for a transmission-loss code.
///
/// loss(r, z) = base + spreading*log10(max(r,1)) + absorption*r/1000
///            + modulation*cos(2*pi*r/cz_period)*sin(pi*z/water_depth)*sin(pi*source_depth/water_depth)
///
/// clamped to [loss_floor, loss_ceiling]. The cosine term produces range-periodic
/// convergence-zone lobes whose depth structure depends on both source and receiver depth.
struct PropagationField {
    double source_depth = 500.0;  // m
    double water_depth = 1000.0;  // m
    double base_offset = 40.0;    // dB
    double spreading_coeff = 20.0; // dB per decade of range
    double absorption = 0.3;      // dB per km
    double modulation_amp = 25.0; // dB
    double cz_period = 35000.0;   // m
    double loss_floor = 80.0;     // dB
    double loss_ceiling = 200.0;  // dB

    /// Throws DomainError when the invariants do not hold.
    void validate() const;

    /// Same field re-centred on an emitter at `depth`.
    PropagationField with_source_depth(double depth) const;
};

/// Signal loss in dB at horizontal `range` for a receiver at `receiver_depth`.
double loss_at(const PropagationField& field, double range, double receiver_depth);

struct LossDiagram {
    Eigen::VectorXd range_axis; // n_r
    Eigen::VectorXd depth_axis; // n_z
    Eigen::MatrixXd values;     // n_z x n_r, dB
};

/// Samples the field on a uniform (depth, range) grid; values are capped at `saturation`.
LossDiagram render_diagram(const PropagationField& field, double range_max, int n_r, int n_z,
                           double saturation = std::numeric_limits<double>::infinity());

/// CSV matrix: first row is the range axis, first column the depth axis, cells with 2 decimals.
void write_diagram_csv(std::ostream& out, const LossDiagram& diagram);

} // namespace subtrack::acoustics
