#pragma once

// Small hand-rolled generators shared by the property tests.

#include <random>
#include <vector>

#include "subtrack/acoustics.hpp"
#include "subtrack/dynamics.hpp"
#include "subtrack/quantize.hpp"
#include "subtrack/random.hpp"

namespace subtrack::gen {

inline double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline acoustics::PropagationField random_field(Rng& rng)
{
    acoustics::PropagationField f;
    f.water_depth = uniform(rng, 200.0, 4000.0);
    f.source_depth = uniform(rng, 0.0, f.water_depth);
    f.base_offset = uniform(rng, 0.0, 80.0);
    f.spreading_coeff = uniform(rng, 0.0, 30.0);
    f.absorption = uniform(rng, 0.0, 1.0);
    f.modulation_amp = uniform(rng, 0.0, 40.0);
    f.cz_period = uniform(rng, 5000.0, 60000.0);
    return f;
}

/// Row-stochastic M x M matrix with some exact zeros.
inline Eigen::MatrixXd random_stochastic(Rng& rng, Eigen::Index M)
{
    Eigen::MatrixXd P(M, M);
    for (Eigen::Index i = 0; i < M; ++i) {
        for (Eigen::Index j = 0; j < M; ++j)
            P(i, j) = uniform(rng, 0.0, 1.0) < 0.3 ? 0.0 : uniform(rng, 0.0, 1.0);
        if (P.row(i).sum() == 0.0)
            P(i, i) = 1.0;
        P.row(i) /= P.row(i).sum();
    }
    return P;
}

/// Random chain on hand-placed grids: d-dimensional points, any horizon.
inline quantize::QuantizedChain random_chain(Rng& rng, int N, Eigen::Index M, Eigen::Index d, double spread)
{
    quantize::QuantizedChain c;
    c.metric_weights = Eigen::VectorXd::Ones(d);
    for (int t = 0; t <= N; ++t) {
        quantize::QuantizationGrid g;
        g.t = t;
        g.points.resize(M, d);
        for (Eigen::Index i = 0; i < M; ++i)
            for (Eigen::Index k = 0; k < d; ++k)
                g.points(i, k) = uniform(rng, -spread, spread);
        c.grids.push_back(g);
        Eigen::VectorXd w = Eigen::VectorXd::Constant(M, 1.0 / static_cast<double>(M));
        c.weights.push_back(w);
        if (t < N)
            c.transitions.push_back(random_stochastic(rng, M));
    }
    return c;
}

} // namespace subtrack::gen
