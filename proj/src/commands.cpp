#include "subtrack/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include <Eigen/Core>

#include "subtrack/archive.hpp"
#include "subtrack/config.hpp"
#include "subtrack/error.hpp"
#include "subtrack/random.hpp"

#ifndef SUBTRACK_VERSION
#define SUBTRACK_VERSION "0.0.0"
#endif

namespace subtrack::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::pair<std::string, std::string>> versions()
{
    return {{"subtrack", SUBTRACK_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

/// Collects outputs and phase timings for one command.
class Session {
public:
    Session(std::string command, const CommandOptions& options, const LoadedConfig* loaded)
        : out_(options.out)
    {
        manifest_.command = std::move(command);
        manifest_.versions = versions();
        if (loaded) {
            manifest_.config_hash = loaded->hash;
            manifest_.seed = loaded->config.seed;
        }
        std::error_code ec;
        fs::create_directories(out_, ec);
        if (ec || !fs::is_directory(out_))
            throw IoError("cannot create output directory " + out_.string());
    }

    template <typename F>
    auto phase(const std::string& name, F&& body)
    {
        const auto start = std::chrono::steady_clock::now();
        auto finish = [&] {
            const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
            manifest_.phase_seconds.emplace_back(name, dt.count());
        };
        if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
            body();
            finish();
        } else {
            auto result = body();
            finish();
            return result;
        }
    }

    void write(const std::string& name, const std::string& text)
    {
        archive::write_atomic(out_ / name, text);
        manifest_.outputs.emplace_back(name, fnv1a64(text));
    }

    RunManifest finish()
    {
        archive::write_atomic(out_ / "manifest.json", manifest_.to_json().dump(2) + "\n");
        return manifest_;
    }

private:
    fs::path out_;
    RunManifest manifest_;
};

json period_json(const control::PeriodMetrics& m)
{
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    return {{"steps", m.steps},
            {"mean_stage_cost", num(m.mean_stage_cost)},
            {"mean_C_W", num(m.mean_c_w)},
            {"mean_C_S", num(m.mean_c_s)},
            {"position_rmse", num(m.position_rmse)}};
}

json metrics_json(const control::RunMetrics& m)
{
    return {{"period1", period_json(m.period1)}, {"period2", period_json(m.period2)}, {"overall", period_json(m.overall)}};
}

control::ScenarioLog read_log(const fs::path& path, int period1_end)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    return control::read_log_csv(in, period1_end);
}

} // namespace

std::uint64_t RunManifest::hash() const
{
    std::string text = command + "\n" + hex64(config_hash) + "\n" + std::to_string(seed) + "\n";
    for (const auto& [k, v] : versions)
        text += k + "=" + v + "\n";
    for (const auto& [k, h] : outputs)
        text += k + ":" + hex64(h) + "\n";
    return fnv1a64(text);
}

json RunManifest::to_json() const
{
    json doc;
    doc["command"] = command;
    doc["config_hash"] = hex64(config_hash);
    doc["seed"] = seed;
    json v = json::object();
    for (const auto& [k, s] : versions)
        v[k] = s;
    doc["versions"] = v;
    json files = json::array();
    for (const auto& [k, h] : outputs)
        files.push_back({{"file", k}, {"hash", hex64(h)}});
    doc["outputs"] = files;
    json timings = json::object();
    for (const auto& [k, s] : phase_seconds)
        timings[k] = s;
    doc["wall_clock_seconds"] = timings;
    doc["manifest_hash"] = hex64(hash());
    return doc;
}

LoadedConfig load(const CommandOptions& options)
{
    if (options.config.empty())
        throw ConfigError("--config is required");
    json doc = control::read_json_file(options.config);
    if (!doc.is_object())
        throw ConfigError("config: expected a JSON object");
    if (options.seed)
        doc["seed"] = *options.seed;
    if (options.workers)
        doc["workers"] = *options.workers;
    LoadedConfig loaded;
    loaded.config = control::parse_config(doc);
    doc.erase("workers");
    loaded.hash = fnv1a64(doc.dump());
    return loaded;
}

quantize::QuantizedChain scenario_chain(const control::ScenarioConfig& config)
{
    const int n = static_cast<int>(config.targets.size());
    const auto sim = n == 1 ? dynamics::LinearGaussianChain::from_target(config.targets[0].model)
                            : dynamics::LinearGaussianChain::from_joint(
                                  dynamics::join_models(config.targets[0].model, config.targets[1].model));
    const int horizon = config.is_bot() ? std::min(config.subinterval_length, config.total_steps - config.period1_end)
                                        : config.total_steps;
    quantize::ClvqParams p;
    p.M = config.quantization.M;
    p.NR = config.quantization.NR;
    p.N = horizon;
    p.gamma0 = config.quantization.gamma0;
    p.gamma_decay = config.quantization.gamma_decay;
    p.seed = derive_seed(config.seed, "cycle", 0);
    return quantize::build_chain(sim, p, config.quantization.NS,
                                 quantize::default_metric_weights(n, config.quantization.metric_lambda),
                                 config.workers);
}

RunManifest cmd_diagram(const CommandOptions& options)
{
    const auto loaded = load(options);
    const auto& c = loaded.config;
    Session session("diagram", options, &loaded);
    session.phase("render", [&] {
        auto emit = [&](const std::string& name, const acoustics::PropagationField& field) {
            const auto d = acoustics::render_diagram(field, c.diagram.range_max, c.diagram.n_r, c.diagram.n_z,
                                                     c.diagram.saturation);
            std::ostringstream os;
            acoustics::write_diagram_csv(os, d);
            session.write(name, os.str());
        };
        for (std::size_t k = 0; k < c.targets.size(); ++k)
            emit("diagram_target" + std::to_string(k + 1) + ".csv", c.targets[k].field);
        emit("diagram_carrier.csv", c.carrier.field.with_source_depth(c.carrier.initial.depth()));
    });
    return session.finish();
}

RunManifest cmd_quantize(const CommandOptions& options)
{
    const auto loaded = load(options);
    Session session("quantize", options, &loaded);
    const auto chain = session.phase("quantize", [&] { return scenario_chain(loaded.config); });
    session.write("chain.json", archive::chain_to_json(chain).dump(1) + "\n");
    return session.finish();
}

RunManifest cmd_solve(const CommandOptions& options)
{
    const auto loaded = load(options);
    const auto& c = loaded.config;
    if (options.chain.empty())
        throw ConfigError("solve: --chain is required");
    Session session("solve", options, &loaded);
    const auto chain = session.phase("load", [&] { return archive::load_chain(options.chain); });
    if (chain.dim() != 4 * static_cast<Eigen::Index>(c.targets.size()))
        throw ConfigError("solve: chain dimension does not match the configured targets");
    const auto sol = session.phase("solve", [&] {
        return dp::solve(chain, c.carrier.space, c.carrier.initial,
                         dp::make_cost_functions(c.cost, c.target_depths()), chain.horizon(),
                         {c.direction, c.workers, 1e-12});
    });
    session.write("policy.json", archive::solution_to_json(sol).dump(1) + "\n");
    return session.finish();
}

RunManifest cmd_run(const CommandOptions& options)
{
    const auto loaded = load(options);
    Session session(options.baseline ? "run-baseline" : "run", options, &loaded);
    const auto log = session.phase("run", [&] { return control::run_scenario(loaded.config, {options.baseline}); });
    std::ostringstream csv;
    control::write_log_csv(csv, log);
    session.write("log.csv", csv.str());
    json metrics = metrics_json(control::summarize(log));
    metrics["scenario"] = control::to_string(log.kind);
    metrics["baseline"] = options.baseline;
    metrics["cycles"] = log.cycles;
    metrics["aborted"] = log.aborted;
    if (log.aborted)
        metrics["failure"] = log.failure;
    session.write("metrics.json", metrics.dump(2) + "\n");
    auto manifest = session.finish();
    if (log.aborted)
        throw NumericalError("run aborted at t=" + std::to_string(log.records.back().t) + ": " + log.failure);
    return manifest;
}

RunManifest cmd_compare(const CommandOptions& options)
{
    if (options.log_a.empty() || options.log_b.empty())
        throw ConfigError("compare: --a and --b are required");
    std::optional<LoadedConfig> loaded;
    if (!options.config.empty())
        loaded = load(options);
    const int p1 = loaded && loaded->config.is_bot() ? loaded->config.period1_end : 0;
    Session session("compare", options, loaded ? &*loaded : nullptr);
    const auto cmp = session.phase("compare", [&] {
        return control::compare_runs(read_log(options.log_a, p1), read_log(options.log_b, p1));
    });
    json doc = {{"a", metrics_json(cmp.a)}, {"b", metrics_json(cmp.b)}, {"b_minus_a", metrics_json(cmp.difference)}};
    session.write("comparison.json", doc.dump(2) + "\n");
    return session.finish();
}

int dispatch(const std::string& command, const CommandOptions& options, std::ostream& err)
{
    static const std::vector<std::pair<std::string, std::function<RunManifest(const CommandOptions&)>>> table = {
        {"diagram", cmd_diagram}, {"quantize", cmd_quantize}, {"solve", cmd_solve},
        {"run", cmd_run},         {"compare", cmd_compare}};
    try {
        for (const auto& [name, fn] : table)
            if (name == command) {
                fn(options);
                return 0;
            }
        err << "unknown command: " << command << "\n";
        return 2;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace subtrack::cli
