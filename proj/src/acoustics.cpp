#include "subtrack/acoustics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <string>

#include "subtrack/error.hpp"

namespace subtrack::acoustics {

void PropagationField::validate() const
{
    if (!(water_depth > 0.0))
        throw DomainError("propagation field: water_depth must be positive");
    if (source_depth < 0.0 || source_depth > water_depth)
        throw DomainError("propagation field: source_depth outside [0, water_depth]");
    if (!(loss_floor < loss_ceiling))
        throw DomainError("propagation field: loss_floor must be below loss_ceiling");
    if (!(cz_period > 0.0))
        throw DomainError("propagation field: cz_period must be positive");
}

PropagationField PropagationField::with_source_depth(double depth) const
{
    PropagationField f = *this;
    f.source_depth = depth;
    return f;
}

double loss_at(const PropagationField& field, double range, double receiver_depth)
{
    using std::numbers::pi;
    if (range < 0.0 || std::isnan(range))
        throw DomainError("loss_at: range must be non-negative");
    if (receiver_depth < 0.0 || receiver_depth > field.water_depth || std::isnan(receiver_depth))
        throw DomainError("loss_at: receiver depth " + std::to_string(receiver_depth) +
                          " outside [0, " + std::to_string(field.water_depth) + "]");

    const double spreading = field.spreading_coeff * std::log10(std::max(range, 1.0));
    const double absorption = field.absorption * range / 1000.0;
    const double lobes = field.modulation_amp * std::cos(2.0 * pi * range / field.cz_period) *
                         std::sin(pi * receiver_depth / field.water_depth) *
                         std::sin(pi * field.source_depth / field.water_depth);
    const double raw = field.base_offset + spreading + absorption + lobes;
    return std::clamp(raw, field.loss_floor, field.loss_ceiling);
}

LossDiagram render_diagram(const PropagationField& field, double range_max, int n_r, int n_z, double saturation)
{
    if (n_r < 2 || n_z < 2)
        throw DomainError("render_diagram: need at least 2 bins per axis");
    if (!(range_max > 0.0))
        throw DomainError("render_diagram: range_max must be positive");

    LossDiagram d;
    d.range_axis = Eigen::VectorXd::LinSpaced(n_r, 0.0, range_max);
    d.depth_axis = Eigen::VectorXd::LinSpaced(n_z, 0.0, field.water_depth);
    // LinSpaced may round the last node; pin the endpoints exactly.
    d.range_axis(n_r - 1) = range_max;
    d.depth_axis(n_z - 1) = field.water_depth;
    d.values.resize(n_z, n_r);
    for (int i = 0; i < n_z; ++i)
        for (int j = 0; j < n_r; ++j) {
            const double v = loss_at(field, d.range_axis(j), d.depth_axis(i));
            d.values(i, j) = std::isfinite(saturation) ? std::min(v, saturation) : v;
        }
    return d;
}

void write_diagram_csv(std::ostream& out, const LossDiagram& diagram)
{
    char buf[64];
    out << "depth\\range";
    for (Eigen::Index j = 0; j < diagram.range_axis.size(); ++j) {
        std::snprintf(buf, sizeof buf, ",%.2f", diagram.range_axis(j));
        out << buf;
    }
    out << '\n';
    for (Eigen::Index i = 0; i < diagram.depth_axis.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.2f", diagram.depth_axis(i));
        out << buf;
        for (Eigen::Index j = 0; j < diagram.range_axis.size(); ++j) {
            std::snprintf(buf, sizeof buf, ",%.2f", diagram.values(i, j));
            out << buf;
        }
        out << '\n';
    }
}

} // namespace subtrack::acoustics
