#include "subtrack/archive.hpp"

#include <fstream>

#include "subtrack/error.hpp"

namespace subtrack::archive {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        a.push_back(v(i));
    return a;
}

template <typename Mat>
json matrix_json(const Mat& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::VectorXd json_vector(const json& a, Eigen::Index n, const char* what)
{
    if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != n)
        throw ConfigError(std::string("chain archive: bad ") + what);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = a[i].get<double>();
    return v;
}

template <typename Mat>
Mat json_matrix(const json& rows, Eigen::Index r, Eigen::Index c, const char* what)
{
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != r)
        throw ConfigError(std::string("chain archive: bad ") + what);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const auto& row = rows[i];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
            throw ConfigError(std::string("chain archive: bad ") + what);
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = row[j].get<double>();
    }
    return m;
}

json step_json(const dynamics::LatticeStep& s)
{
    return json::array({s[0], s[1], s[2]});
}

} // namespace

json chain_to_json(const quantize::QuantizedChain& chain)
{
    json doc;
    doc["format"] = "subtrack-chain";
    doc["version"] = 1;
    doc["horizon"] = chain.horizon();
    doc["M"] = chain.size();
    doc["d"] = chain.dim();
    doc["metric_weights"] = vector_json(chain.metric_weights);
    json steps = json::array();
    for (int t = 0; t <= chain.horizon(); ++t) {
        json s;
        s["t"] = chain.grids[t].t;
        s["points"] = matrix_json(chain.grids[t].points);
        s["weights"] = vector_json(chain.weights[t]);
        if (t < chain.horizon())
            s["transition"] = matrix_json(chain.transitions[t]);
        steps.push_back(std::move(s));
    }
    doc["steps"] = std::move(steps);
    return doc;
}

quantize::QuantizedChain chain_from_json(const json& doc)
{
    try {
        if (doc.at("format") != "subtrack-chain" || doc.at("version") != 1)
            throw ConfigError("chain archive: unrecognised format");
        const int N = doc.at("horizon").get<int>();
        const auto M = doc.at("M").get<Eigen::Index>();
        const auto d = doc.at("d").get<Eigen::Index>();
        const auto& steps = doc.at("steps");
        if (N < 0 || M < 1 || d < 1 || static_cast<int>(steps.size()) != N + 1)
            throw ConfigError("chain archive: inconsistent sizes");
        quantize::QuantizedChain chain;
        chain.metric_weights = json_vector(doc.at("metric_weights"), d, "metric_weights");
        for (int t = 0; t <= N; ++t) {
            const auto& s = steps[t];
            quantize::QuantizationGrid g;
            g.t = s.at("t").get<int>();
            g.points = json_matrix<quantize::PointMatrix>(s.at("points"), M, d, "points");
            chain.grids.push_back(std::move(g));
            chain.weights.push_back(json_vector(s.at("weights"), M, "weights"));
            if (t < N)
                chain.transitions.push_back(json_matrix<Eigen::MatrixXd>(s.at("transition"), M, M, "transition"));
        }
        chain.validate();
        return chain;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("chain archive: ") + e.what());
    }
}

void save_chain(const quantize::QuantizedChain& chain, const std::filesystem::path& path)
{
    write_atomic(path, chain_to_json(chain).dump(1) + "\n");
}

quantize::QuantizedChain load_chain(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return chain_from_json(doc);
}

json solution_to_json(const dp::DpSolution& solution)
{
    json doc;
    doc["format"] = "subtrack-policy";
    doc["version"] = 1;
    doc["horizon"] = solution.horizon();
    doc["M"] = solution.M;
    json entries = json::array();
    for (int t = 0; t <= solution.horizon(); ++t) {
        const auto& layer = solution.lattice.layer(t);
        for (std::size_t p = 0; p < layer.size(); ++p)
            for (Eigen::Index i = 0; i < solution.M; ++i) {
                const auto a = t < solution.horizon() ? solution.policy[t][p * solution.M + i]
                                                      : dynamics::LatticeStep{0, 0, 0};
                entries.push_back({{"t", t},
                                   {"offset", step_json(layer[p])},
                                   {"index", i},
                                   {"J", solution.values[t](static_cast<Eigen::Index>(p), i)},
                                   {"action", step_json(a)}});
            }
    }
    doc["entries"] = std::move(entries);
    return doc;
}

void write_atomic(const std::filesystem::path& path, const std::string& text)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + tmp.string());
        out << text;
        out.flush();
        if (!out)
            throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

} // namespace subtrack::archive
