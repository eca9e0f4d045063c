#include "subtrack/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "subtrack/error.hpp"
#include "subtrack/parallel.hpp"

namespace subtrack::quantize {

namespace {

constexpr long kShardSize = 1024;

using CountMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

struct Counts {
    std::vector<Eigen::Matrix<long long, Eigen::Dynamic, 1>> visits; // N + 1
    std::vector<CountMatrix> joint;                                  // N

    Counts(int N, Eigen::Index M)
    {
        visits.assign(N + 1, Eigen::Matrix<long long, Eigen::Dynamic, 1>::Zero(M));
        joint.assign(N, CountMatrix::Zero(M, M));
    }

    void add(const Counts& o)
    {
        for (std::size_t t = 0; t < visits.size(); ++t)
            visits[t] += o.visits[t];
        for (std::size_t t = 0; t < joint.size(); ++t)
            joint[t] += o.joint[t];
    }
};

void check_grids(const std::vector<QuantizationGrid>& grids, Eigen::Index d)
{
    if (grids.empty())
        throw ContractError("quantize: no grids");
    const Eigen::Index M = grids.front().size();
    for (const auto& g : grids)
        if (g.size() != M || g.dim() != d || M == 0)
            throw ContractError("quantize: grids must all be M x d with M > 0");
}

template <typename A, typename B>
bool same(const A& a, const B& b)
{
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

} // namespace

bool QuantizationGrid::operator==(const QuantizationGrid& o) const
{
    return t == o.t && same(points, o.points);
}

bool QuantizedChain::operator==(const QuantizedChain& o) const
{
    if (grids != o.grids || weights.size() != o.weights.size() || transitions.size() != o.transitions.size() ||
        !same(metric_weights, o.metric_weights))
        return false;
    for (std::size_t t = 0; t < weights.size(); ++t)
        if (!same(weights[t], o.weights[t]))
            return false;
    for (std::size_t t = 0; t < transitions.size(); ++t)
        if (!same(transitions[t], o.transitions[t]))
            return false;
    return true;
}

void QuantizedChain::validate(double tol) const
{
    if (grids.size() != weights.size() || grids.size() != transitions.size() + 1)
        throw ContractError("quantized chain: inconsistent horizon");
    for (std::size_t t = 0; t < weights.size(); ++t) {
        if (weights[t].minCoeff() < 0.0 || std::abs(weights[t].sum() - 1.0) > tol)
            throw NumericalError("quantized chain: weights at t=" + std::to_string(t) + " are not a distribution");
    }
    for (std::size_t t = 0; t < transitions.size(); ++t) {
        const auto& P = transitions[t];
        if (P.minCoeff() < 0.0)
            throw NumericalError("quantized chain: negative transition entry at t=" + std::to_string(t));
        if (((P.rowwise().sum().array() - 1.0).abs() > tol).any())
            throw NumericalError("quantized chain: transition rows at t=" + std::to_string(t) + " do not sum to 1");
    }
}

void ClvqParams::validate() const
{
    if (M < 1 || NR < 0 || N < 0)
        throw ConfigError("clvq: need M >= 1, NR >= 0, N >= 0");
    if (gamma0 < 0.0 || gamma0 > 1.0)
        throw ConfigError("clvq: gamma0 must lie in [0, 1]");
    if (decay() < 0.0)
        throw ConfigError("clvq: gamma_decay must be non-negative");
}

Eigen::VectorXd default_metric_weights(int n_targets, double lambda)
{
    Eigen::VectorXd w(4 * n_targets);
    for (int k = 0; k < n_targets; ++k)
        w.segment<4>(4 * k) << 1.0, lambda * lambda, 1.0, lambda * lambda;
    return w;
}

Eigen::Index nearest(const QuantizationGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& p,
                     const Eigen::VectorXd& metric_weights, double& sq_distance)
{
    const Eigen::Index M = grid.size();
    const Eigen::Index d = grid.dim();
    if (M == 0)
        throw ContractError("nearest: empty grid");
    if (p.size() != d || metric_weights.size() != d)
        throw ContractError("nearest: dimension mismatch");
    const double* w = metric_weights.data();
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < M; ++i) {
        const double* y = grid.points.data() + i * d;
        double acc = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
            const double diff = p(k) - y[k];
            acc += w[k] * diff * diff;
        }
        if (acc < best_d) {
            best_d = acc;
            best = i;
        }
    }
    sq_distance = best_d;
    return best;
}

Eigen::Index nearest(const QuantizationGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& p,
                     const Eigen::VectorXd& metric_weights)
{
    double unused = 0.0;
    return nearest(grid, p, metric_weights, unused);
}

std::vector<QuantizationGrid> initial_grids(const dynamics::ChainSimulator& sim, int M, int N, Rng& rng)
{
    const Eigen::Index d = sim.dim();
    std::vector<QuantizationGrid> grids(N + 1);
    std::vector<int> filled(N + 1, 0);
    for (int t = 0; t <= N; ++t) {
        grids[t].t = t;
        grids[t].points.resize(M, d);
    }
    const long max_draws = 100L * M + 1000;
    int complete = 0;
    for (long draw = 0; draw < max_draws && complete <= N; ++draw) {
        const Eigen::MatrixXd path = sim.simulate(rng, N);
        for (int t = 0; t <= N; ++t) {
            if (filled[t] == M)
                continue;
            bool duplicate = false;
            for (int i = 0; i < filled[t] && !duplicate; ++i)
                duplicate = (grids[t].points.row(i) == path.row(t));
            if (duplicate)
                continue;
            grids[t].points.row(filled[t]++) = path.row(t);
            if (filled[t] == M)
                ++complete;
        }
    }
    if (complete <= N)
        throw ConfigError("clvq: fewer than M = " + std::to_string(M) +
                          " distinct initial samples available at some time step");
    return grids;
}

std::vector<QuantizationGrid> clvq_train(const dynamics::ChainSimulator& sim, const ClvqParams& params,
                                         const Eigen::VectorXd& metric_weights,
                                         std::optional<std::vector<QuantizationGrid>> init)
{
    params.validate();
    const Eigen::Index d = sim.dim();
    std::vector<QuantizationGrid> grids;
    if (init) {
        grids = std::move(*init);
        if (static_cast<int>(grids.size()) != params.N + 1)
            throw ContractError("clvq: initial grids must cover t = 0..N");
        check_grids(grids, d);
    } else {
        Rng init_rng(derive_seed(params.seed, "clvq-init"));
        grids = initial_grids(sim, params.M, params.N, init_rng);
    }

    Rng rng(derive_seed(params.seed, "clvq-train"));
    for (long m = 0; m < params.NR; ++m) {
        const Eigen::MatrixXd path = sim.simulate(rng, params.N);
        const double gamma = params.step(m);
        for (int t = 0; t <= params.N; ++t) {
            const Eigen::VectorXd w = path.row(t).transpose();
            const Eigen::Index y = nearest(grids[t], w, metric_weights);
            auto point = grids[t].points.row(y);
            point -= gamma * (point - w.transpose());
        }
    }
    return grids;
}

QuantizedChain estimate_transitions(const dynamics::ChainSimulator& sim, std::vector<QuantizationGrid> grids,
                                    long NS, std::uint64_t seed, const Eigen::VectorXd& metric_weights, int workers)
{
    if (NS < 1)
        throw ContractError("estimate_transitions: NS must be at least 1");
    check_grids(grids, sim.dim());
    const int N = static_cast<int>(grids.size()) - 1;
    const Eigen::Index M = grids.front().size();

    const long shards = (NS + kShardSize - 1) / kShardSize;
    const int w = std::max(1, workers);
    std::vector<Counts> partial(static_cast<std::size_t>(std::min<long>(w, shards)), Counts(N, M));
    // One contiguous range of shards per partial accumulator; counts are integers, so the
    // merged totals are exact whatever the split.
    const std::size_t n_parts = partial.size();
    parallel_for(n_parts, static_cast<int>(n_parts), [&](std::size_t begin, std::size_t end) {
        for (std::size_t part = begin; part < end; ++part) {
            Counts& c = partial[part];
            const long s_begin = static_cast<long>(part) * shards / static_cast<long>(n_parts);
            const long s_end = static_cast<long>(part + 1) * shards / static_cast<long>(n_parts);
            std::vector<Eigen::Index> cells(N + 1);
            for (long s = s_begin; s < s_end; ++s) {
                Rng rng(derive_seed(seed, "transitions", static_cast<std::uint64_t>(s)));
                const long n = std::min(kShardSize, NS - s * kShardSize);
                for (long k = 0; k < n; ++k) {
                    const Eigen::MatrixXd path = sim.simulate(rng, N);
                    for (int t = 0; t <= N; ++t) {
                        cells[t] = nearest(grids[t], path.row(t).transpose(), metric_weights);
                        ++c.visits[t](cells[t]);
                    }
                    for (int t = 0; t < N; ++t)
                        ++c.joint[t](cells[t], cells[t + 1]);
                }
            }
        }
    });
    for (std::size_t k = 1; k < partial.size(); ++k)
        partial[0].add(partial[k]);
    const Counts& total = partial[0];

    QuantizedChain chain;
    chain.metric_weights = metric_weights;
    chain.weights.resize(N + 1);
    for (int t = 0; t <= N; ++t)
        chain.weights[t] = total.visits[t].cast<double>() / static_cast<double>(NS);
    chain.transitions.resize(N);
    for (int t = 0; t < N; ++t) {
        Eigen::MatrixXd P = Eigen::MatrixXd::Zero(M, M);
        for (Eigen::Index i = 0; i < M; ++i) {
            const long long row = total.visits[t](i);
            if (row == 0) {
                // Unvisited cell: send it to the nearest point of the next grid.
                const Eigen::Index j = nearest(grids[t + 1], grids[t].points.row(i).transpose(), metric_weights);
                P(i, j) = 1.0;
                continue;
            }
            for (Eigen::Index j = 0; j < M; ++j)
                P(i, j) = static_cast<double>(total.joint[t](i, j)) / static_cast<double>(row);
        }
        chain.transitions[t] = std::move(P);
    }
    chain.grids = std::move(grids);
    return chain;
}

double distortion(const QuantizationGrid& grid, const PointMatrix& samples, const Eigen::VectorXd& metric_weights)
{
    if (samples.rows() == 0)
        throw ContractError("distortion: no samples");
    double acc = 0.0;
    for (Eigen::Index k = 0; k < samples.rows(); ++k) {
        double dist = 0.0;
        nearest(grid, samples.row(k).transpose(), metric_weights, dist);
        acc += dist;
    }
    return acc / static_cast<double>(samples.rows());
}

double distortion(const QuantizationGrid& grid, const PointMatrix& samples)
{
    return distortion(grid, samples, Eigen::VectorXd::Ones(grid.dim()));
}

QuantizedChain deterministic_chain(const Eigen::MatrixXd& path, const Eigen::VectorXd& metric_weights)
{
    QuantizedChain chain;
    chain.metric_weights = metric_weights;
    const int N = static_cast<int>(path.rows()) - 1;
    for (int t = 0; t <= N; ++t) {
        chain.grids.push_back({t, path.row(t)});
        chain.weights.push_back(Eigen::VectorXd::Ones(1));
        if (t < N)
            chain.transitions.push_back(Eigen::MatrixXd::Ones(1, 1));
    }
    return chain;
}

QuantizedChain build_chain(const dynamics::ChainSimulator& sim, const ClvqParams& params, long NS,
                           const Eigen::VectorXd& metric_weights, int workers)
{
    auto grids = clvq_train(sim, params, metric_weights);
    return estimate_transitions(sim, std::move(grids), NS, derive_seed(params.seed, "estimate"), metric_weights,
                                workers);
}

} // namespace subtrack::quantize
