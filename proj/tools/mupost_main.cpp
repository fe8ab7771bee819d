// mupost: amortized Bayesian parameter estimation for diffusion-MRI
// compartment models. Subcommands cover training-set simulation, flow
// training, per-voxel inference, the MCMC baseline and the validation
// experiments. Exit codes: 0 success, 2 configuration/validation error,
// 3 runtime/numeric error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "mupost/dataset_io.hpp"
#include "mupost/errors.hpp"
#include "mupost/harness.hpp"
#include "mupost/mcmc.hpp"
#include "mupost/parallel.hpp"
#include "mupost/posterior.hpp"
#include "mupost/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mupost;

namespace {

constexpr const char* kVersion = "1.0.0";

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Resolution order for every setting: explicit flag > config file > default.
struct ConfigSource {
    json file;

    template <typename T>
    T resolve(const std::optional<T>& flag, const std::string& key, T fallback) const {
        if (flag.has_value()) return *flag;
        if (file.contains(key)) return file.at(key).get<T>();
        return fallback;
    }
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
}

std::string resolve_out_dir(const std::optional<std::string>& flag, const ConfigSource& cfg) {
    if (flag.has_value()) return *flag;
    if (cfg.file.contains("out_dir")) return cfg.file.at("out_dir").get<std::string>();
    if (const char* env = std::getenv("MUPOST_OUT")) return env;
    return "out";
}

void write_manifest(const std::string& out_dir, const std::string& command, const json& resolved,
                    double wall_seconds) {
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["config"] = resolved;
    m["config_hash"] = fnv1a(resolved.dump());
    m["wall_seconds"] = wall_seconds;
    m["timestamp"] = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    std::ofstream out(out_dir + "/manifest.json");
    if (!out) throw ConfigError("cannot write manifest in " + out_dir);
    out << m.dump(2) << "\n";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
    if (text.empty() || text.back() != '\n') out << "\n";
}

AcquisitionProtocol load_protocol_masked(const std::string& path, double bmax,
                                         std::vector<std::size_t>* kept = nullptr) {
    AcquisitionProtocol protocol = load_protocol(path);
    if (bmax > 0.0) return protocol.shell_mask(bmax, kept);
    if (kept) {
        kept->resize(protocol.size());
        std::iota(kept->begin(), kept->end(), 0);
    }
    return protocol;
}

struct VoxelNormalization {
    bool ok = false;
    std::string error;
};

/// Normalize one voxel row by its mean b0 signal, in place.
VoxelNormalization normalize_voxel(std::span<double> row, const AcquisitionProtocol& protocol) {
    VoxelNormalization res;
    const auto& b0 = protocol.b0_entries();
    if (b0.empty()) {
        res.error = "no_b0_entries";
        return res;
    }
    double mean = 0.0;
    for (auto i : b0) mean += row[i];
    mean /= static_cast<double>(b0.size());
    if (!(mean > 0.0)) {
        res.error = "b0_nonpositive";
        return res;
    }
    for (double& v : row) v /= mean;
    res.ok = true;
    return res;
}

struct CommonArgs {
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<uint64_t> seed;
    std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "JSON config file; flags override its values");
    cmd->add_option("--out", a.out_dir, "output directory");
    cmd->add_option("--seed", a.seed, "RNG seed (required for stochastic commands)");
    cmd->add_option("--workers", a.workers, "worker pool size (0 = hardware)");
}

uint64_t require_seed(const std::optional<uint64_t>& flag, const ConfigSource& cfg) {
    if (flag.has_value()) return *flag;
    if (cfg.file.contains("seed")) return cfg.file.at("seed").get<uint64_t>();
    throw ConfigError("a --seed is required for reproducible runs");
}

int cmd_simulate(const CommonArgs& common, const std::optional<std::string>& model,
                 const std::optional<std::string>& protocol_path, const std::optional<long>& n,
                 const std::optional<double>& snr, const std::optional<int>& quad,
                 const std::optional<double>& bmax) {
    auto t0 = std::chrono::steady_clock::now();
    ConfigSource cfg{load_config_file(common.config_path)};
    std::string model_name = cfg.resolve(model, "model", std::string());
    std::string proto = cfg.resolve(protocol_path, "protocol", std::string());
    long count = cfg.resolve(n, "n", 0L);
    double noise = cfg.resolve(snr, "snr", 0.0);
    int order = cfg.resolve(quad, "quadrature_order", 32);
    double bcut = cfg.resolve(bmax, "bmax", 0.0);
    uint64_t seed = require_seed(common.seed, cfg);
    std::string out_dir = resolve_out_dir(common.out_dir, cfg);
    if (model_name.empty()) throw ConfigError("--model is required");
    if (proto.empty()) throw ConfigError("--protocol is required");
    if (count < 1) throw ConfigError("--n must be >= 1");

    fs::create_directories(out_dir);
    PriorSpec spec = PriorSpec::for_model(model_id_from_name(model_name));
    AcquisitionProtocol protocol = load_protocol_masked(proto, bcut);
    SimulatorOptions opts{order};
    TrainingSet set =
        generate_training_set(spec, protocol, static_cast<std::size_t>(count), noise, seed, opts,
                              resolve_workers(common.workers.value_or(0)));
    save_training_set(out_dir + "/dataset", set, proto);

    json resolved = {{"model", model_name}, {"protocol", proto},         {"n", count},
                     {"snr", noise},        {"quadrature_order", order}, {"bmax", bcut},
                     {"seed", seed},        {"out_dir", out_dir}};
    write_manifest(out_dir, "simulate", resolved,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::printf("simulate: wrote %zu rows to %s/dataset.{json,theta.f64,x.f64}\n", set.theta.rows,
                out_dir.c_str());
    return 0;
}

int cmd_train(const CommonArgs& common, const std::optional<std::string>& dataset,
              const std::optional<int>& max_epochs, const std::optional<double>& lr,
              const std::optional<int>& batch, const std::optional<int>& patience,
              const std::optional<int>& n_features, bool summary_stats, bool no_embedding,
              const std::optional<int>& made_hidden, const std::optional<int>& mlp1,
              const std::optional<int>& mlp2) {
    auto t0 = std::chrono::steady_clock::now();
    ConfigSource cfg{load_config_file(common.config_path)};
    std::string prefix = cfg.resolve(dataset, "dataset", std::string());
    if (prefix.empty()) throw ConfigError("--dataset is required (dataset file prefix)");
    uint64_t seed = require_seed(common.seed, cfg);
    std::string out_dir = resolve_out_dir(common.out_dir, cfg);
    fs::create_directories(out_dir);

    std::string protocol_path;
    TrainingSet set = load_training_set(prefix, &protocol_path);

    TrainingConfig tc;
    if (cfg.file.contains("training")) {
        const json& t = cfg.file.at("training");
        tc.learning_rate = t.value("learning_rate", tc.learning_rate);
        tc.batch_size = t.value("batch_size", tc.batch_size);
        tc.patience_epochs = t.value("patience_epochs", tc.patience_epochs);
        tc.validation_fraction = t.value("validation_fraction", tc.validation_fraction);
        tc.max_epochs = t.value("max_epochs", tc.max_epochs);
        tc.n_features = t.value("n_features", tc.n_features);
        tc.use_embedding = t.value("use_embedding", tc.use_embedding);
        tc.made_hidden = t.value("made_hidden", tc.made_hidden);
        tc.mlp_hidden1 = t.value("mlp_hidden1", tc.mlp_hidden1);
        tc.mlp_hidden2 = t.value("mlp_hidden2", tc.mlp_hidden2);
        tc.n_blocks = t.value("n_blocks", tc.n_blocks);
    }
    if (max_epochs) tc.max_epochs = *max_epochs;
    if (lr) tc.learning_rate = *lr;
    if (batch) tc.batch_size = *batch;
    if (patience) tc.patience_epochs = *patience;
    if (n_features) tc.n_features = *n_features;
    if (made_hidden) tc.made_hidden = *made_hidden;
    if (mlp1) tc.mlp_hidden1 = *mlp1;
    if (mlp2) tc.mlp_hidden2 = *mlp2;
    if (no_embedding || summary_stats) tc.use_embedding = false;
    tc.rng_seed = seed;
    tc.workers = resolve_workers(common.workers.value_or(0));

    Matrix x = set.x;
    if (summary_stats) {
        if (protocol_path.empty())
            throw ConfigError("dataset sidecar names no protocol; summary statistics need one");
        AcquisitionProtocol protocol = load_protocol(protocol_path);
        check_dims(set.x.cols, protocol.size(), "dataset signals vs protocol");
        std::size_t ns = protocol.shells().size();
        Matrix sm(set.x.rows, ns);
        std::vector<double> row(set.x.cols);
        for (std::size_t i = 0; i < set.x.rows; ++i) {
            std::copy(set.x.row(i), set.x.row(i) + set.x.cols, row.begin());
            auto means = shell_means(row, protocol);
            std::copy(means.begin(), means.end(), sm.row(i));
        }
        x = std::move(sm);
    }

    TrainingReport report;
    FlowModel model = train_flow(set.space, set.theta, x, tc, &report);
    model.save(out_dir + "/flow.ckpt");
    save_training_report_csv(out_dir + "/training_report.csv", report);

    json resolved = {{"dataset", prefix},
                     {"seed", seed},
                     {"out_dir", out_dir},
                     {"summary_stats", summary_stats},
                     {"training",
                      {{"learning_rate", tc.learning_rate},
                       {"batch_size", tc.batch_size},
                       {"patience_epochs", tc.patience_epochs},
                       {"validation_fraction", tc.validation_fraction},
                       {"max_epochs", tc.max_epochs},
                       {"n_features", tc.n_features},
                       {"use_embedding", tc.use_embedding},
                       {"made_hidden", tc.made_hidden},
                       {"mlp_hidden1", tc.mlp_hidden1},
                       {"mlp_hidden2", tc.mlp_hidden2},
                       {"n_blocks", tc.n_blocks}}}};
    write_manifest(out_dir, "train", resolved,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::printf("train: stopped at epoch %d (best %d), final validation loss %.6f\n",
                report.stopped_epoch, report.best_epoch, report.best_val_loss);
    return 0;
}

int cmd_infer(const CommonArgs& common, const std::optional<std::string>& checkpoint,
              const std::optional<std::string>& signals, const std::optional<std::string>& proto,
              const std::optional<long>& n_samples, const std::optional<double>& bmax,
              bool store_samples) {
    auto t0 = std::chrono::steady_clock::now();
    ConfigSource cfg{load_config_file(common.config_path)};
    std::string ckpt = cfg.resolve(checkpoint, "checkpoint", std::string());
    std::string sig_path = cfg.resolve(signals, "signals", std::string());
    std::string proto_path = cfg.resolve(proto, "protocol", std::string());
    long n_post = cfg.resolve(n_samples, "n_samples", 50000L);
    double bcut = cfg.resolve(bmax, "bmax", 0.0);
    uint64_t seed = require_seed(common.seed, cfg);
    std::string out_dir = resolve_out_dir(common.out_dir, cfg);
    if (ckpt.empty() || sig_path.empty()) throw ConfigError("--checkpoint and --signals required");

    FlowModel flow = FlowModel::load(ckpt);
    PriorSpec spec = PriorSpec::for_space(flow.space());
    std::string hint;
    Matrix raw = load_signals_csv(sig_path, &hint);
    if (proto_path.empty()) proto_path = hint;
    if (proto_path.empty())
        throw ConfigError("no protocol given and none named in the signals file");
    AcquisitionProtocol protocol = load_protocol_masked(proto_path, bcut);
    check_dims(raw.cols, protocol.size(), "signal columns");
    check_dims(protocol.size(), static_cast<std::size_t>(flow.data_dim()), "checkpoint data_dim");

    fs::create_directories(out_dir);
    const int d = flow.dim();
    struct Row {
        PosteriorSummary summary;
        std::string error;
        bool has_summary = false;
    };
    std::vector<Row> rows(raw.rows);
    int workers = resolve_workers(common.workers.value_or(0));
    parallel_for(raw.rows, workers, [&](std::size_t v) {
        std::vector<double> x(raw.row(v), raw.row(v) + raw.cols);
        auto norm = normalize_voxel(x, protocol);
        if (!norm.ok) {
            rows[v].error = norm.error;
            return;
        }
        try {
            PosteriorSamples post = rejection_sample(flow, x, static_cast<std::size_t>(n_post),
                                                     spec, splitmix64(seed ^ (v * 13 + 1)));
            rows[v].summary = summarize(post);
            rows[v].has_summary = true;
            if (store_samples)
                save_matrix_f64(out_dir + "/samples_voxel" + std::to_string(v) + ".f64",
                                post.samples);
        } catch (const LowAcceptanceError&) {
            rows[v].error = "low_acceptance";
        }
    });

    std::ofstream out(out_dir + "/posterior_summary.csv");
    if (!out) throw ConfigError("cannot write summary CSV");
    out << "voxel_id";
    for (const auto& nme : flow.space().names)
        out << "," << nme << "_map," << nme << "_uncertainty," << nme << "_ambiguity," << nme
            << "_degenerate";
    out << ",error\n";
    char buf[96];
    for (std::size_t v = 0; v < rows.size(); ++v) {
        out << v;
        for (int p = 0; p < d; ++p) {
            if (rows[v].has_summary) {
                const auto& ps = rows[v].summary.params[p];
                std::snprintf(buf, sizeof(buf), ",%.12g,%.12g,%.12g,%d", ps.map,
                              ps.uncertainty_pct, ps.ambiguity_pct, ps.degenerate ? 1 : 0);
                out << buf;
            } else {
                out << ",nan,nan,nan,0";
            }
        }
        out << "," << rows[v].error << "\n";
    }

    json resolved = {{"checkpoint", ckpt},  {"signals", sig_path}, {"protocol", proto_path},
                     {"n_samples", n_post}, {"bmax", bcut},        {"seed", seed},
                     {"out_dir", out_dir},  {"store_samples", store_samples}};
    write_manifest(out_dir, "infer", resolved,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::printf("infer: wrote %zu voxel summaries to %s/posterior_summary.csv\n", rows.size(),
                out_dir.c_str());
    return 0;
}

MCMCConfig mcmc_config_from(const ConfigSource& cfg) {
    MCMCConfig mc;
    if (cfg.file.contains("mcmc")) {
        const json& m = cfg.file.at("mcmc");
        mc.n_samples = m.value("n_samples", mc.n_samples);
        mc.burn_in = m.value("burn_in", mc.burn_in);
        mc.thinning = m.value("thinning", mc.thinning);
        mc.adaptation_interval = m.value("adaptation_interval", mc.adaptation_interval);
        mc.mle_starts = m.value("mle_starts", mc.mle_starts);
        mc.mle_max_iterations = m.value("mle_max_iterations", mc.mle_max_iterations);
    }
    return mc;
}

int cmd_mcmc(const CommonArgs& common, const std::optional<std::string>& model,
             const std::optional<std::string>& signals, const std::optional<std::string>& proto,
             const std::optional<double>& snr, const std::optional<long>& n_samples,
             const std::optional<long>& burn_in, const std::optional<double>& bmax) {
    auto t0 = std::chrono::steady_clock::now();
    ConfigSource cfg{load_config_file(common.config_path)};
    std::string model_name = cfg.resolve(model, "model", std::string());
    std::string sig_path = cfg.resolve(signals, "signals", std::string());
    std::string proto_path = cfg.resolve(proto, "protocol", std::string());
    double noise = cfg.resolve(snr, "snr", 50.0);
    double bcut = cfg.resolve(bmax, "bmax", 0.0);
    uint64_t seed = require_seed(common.seed, cfg);
    std::string out_dir = resolve_out_dir(common.out_dir, cfg);
    if (model_name.empty() || sig_path.empty() || proto_path.empty())
        throw ConfigError("--model, --signals and --protocol are required");
    if (noise <= 0.0) throw ConfigError("--snr must be positive (sets the likelihood sigma)");

    PriorSpec spec = PriorSpec::for_model(model_id_from_name(model_name));
    AcquisitionProtocol protocol = load_protocol_masked(proto_path, bcut);
    Matrix raw = load_signals_csv(sig_path);
    check_dims(raw.cols, protocol.size(), "signal columns");

    MCMCConfig mc = mcmc_config_from(cfg);
    if (n_samples) mc.n_samples = static_cast<int>(*n_samples);
    if (burn_in) mc.burn_in = static_cast<int>(*burn_in);
    mc.sigma_noise = 1.0 / noise;

    fs::create_directories(out_dir);
    const int d = spec.space.dim();
    std::vector<PosteriorSummary> summaries(raw.rows);
    std::vector<std::string> errors(raw.rows);
    int workers = resolve_workers(common.workers.value_or(0));
    parallel_for(raw.rows, workers, [&](std::size_t v) {
        std::vector<double> x(raw.row(v), raw.row(v) + raw.cols);
        auto norm = normalize_voxel(x, protocol);
        if (!norm.ok) {
            errors[v] = norm.error;
            return;
        }
        MCMCConfig mcv = mc;
        mcv.rng_seed = splitmix64(seed ^ (v * 17 + 3));
        MCMCChain chain = run_amwg_dmri(x, spec, protocol, mcv);
        save_matrix_f64(out_dir + "/chain_voxel" + std::to_string(v) + ".f64", chain.trace);
        json meta = {{"voxel", v},
                     {"n_samples", mcv.n_samples},
                     {"burn_in", mcv.burn_in},
                     {"thinning", mcv.thinning},
                     {"sigma_noise", mcv.sigma_noise},
                     {"acceptance_rates", chain.acceptance_rates},
                     {"mle_init", chain.mle_init},
                     {"seconds", chain.seconds},
                     {"mle_seconds", chain.mle_seconds},
                     {"columns", spec.space.names}};
        write_text(out_dir + "/chain_voxel" + std::to_string(v) + ".json", meta.dump(2));
        PosteriorSamples post;
        post.samples = chain.trace;
        post.space = spec.space;
        summaries[v] = summarize(post);
    });

    std::ofstream out(out_dir + "/mcmc_summary.csv");
    out << "voxel_id";
    for (const auto& nme : spec.space.names)
        out << "," << nme << "_map," << nme << "_uncertainty," << nme << "_ambiguity," << nme
            << "_degenerate";
    out << ",error\n";
    char buf[96];
    for (std::size_t v = 0; v < raw.rows; ++v) {
        out << v;
        for (int p = 0; p < d; ++p) {
            if (errors[v].empty()) {
                const auto& ps = summaries[v].params[p];
                std::snprintf(buf, sizeof(buf), ",%.12g,%.12g,%.12g,%d", ps.map,
                              ps.uncertainty_pct, ps.ambiguity_pct, ps.degenerate ? 1 : 0);
                out << buf;
            } else {
                out << ",nan,nan,nan,0";
            }
        }
        out << "," << errors[v] << "\n";
    }

    json resolved = {{"model", model_name},      {"signals", sig_path}, {"protocol", proto_path},
                     {"snr", noise},             {"bmax", bcut},        {"seed", seed},
                     {"out_dir", out_dir},       {"n_samples", mc.n_samples},
                     {"burn_in", mc.burn_in}};
    write_manifest(out_dir, "mcmc", resolved,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::printf("mcmc: wrote %zu chains to %s\n", raw.rows, out_dir.c_str());
    return 0;
}

HarnessContext make_context(const std::string& proto_path, double bmax, int quad, int workers) {
    HarnessContext ctx;
    ctx.protocol = load_protocol_masked(proto_path, bmax);
    ctx.sim_opts.quadrature_order = quad;
    ctx.workers = workers;
    return ctx;
}

int cmd_compare(const CommonArgs& common, const std::optional<std::string>& checkpoint,
                const std::optional<std::string>& proto, const std::optional<long>& n,
                const std::optional<double>& snr, const std::optional<long>& n_samples,
                const std::optional<int>& quad) {
    auto t0 = std::chrono::steady_clock::now();
    ConfigSource cfg{load_config_file(common.config_path)};
    std::string ckpt = cfg.resolve(checkpoint, "checkpoint", std::string());
    std::string proto_path = cfg.resolve(proto, "protocol", std::string());
    long n_sims = cfg.resolve(n, "n", 200L);
    double noise = cfg.resolve(snr, "snr", 50.0);
    long n_post = cfg.resolve(n_samples, "n_samples", 15000L);
    int order = cfg.resolve(quad, "quadrature_order", 32);
    uint64_t seed = require_seed(common.seed, cfg);
    std::string out_dir = resolve_out_dir(common.out_dir, cfg);
    if (ckpt.empty() || proto_path.empty())
        throw ConfigError("--checkpoint and --protocol required");

    FlowModel flow = FlowModel::load(ckpt);
    PriorSpec spec = PriorSpec::for_space(flow.space());
    HarnessContext ctx =
        make_context(proto_path, 0.0, order, resolve_workers(common.workers.value_or(0)));
    MCMCConfig mc = mcmc_config_from(cfg);
    mc.sigma_noise = noise > 0.0 ? 1.0 / noise : 0.02;

    ComparisonReport rep = compare_with_mcmc(flow, spec, ctx, static_cast<std::size_t>(n_sims),
                                             noise, static_cast<int>(n_post), mc, seed);
    fs::create_directories(out_dir);
    write_text(out_dir + "/comparison.json", to_json_string(rep));
    {
        std::ofstream out(out_dir + "/comparison.csv");
        out << "voxel";
        for (const auto& p : rep.param_names) out << ",truth_" << p;
        for (const auto& p : rep.param_names) out << ",flow_map_" << p;
        for (const auto& p : rep.param_names) out << ",mcmc_map_" << p;
        out << ",flow_seconds,mcmc_seconds,flow_degenerate,mcmc_degenerate\n";
        for (std::size_t i = 0; i < rep.n_sims; ++i) {
            out << i;
            for (std::size_t p = 0; p < rep.param_names.size(); ++p)
                out << "," << rep.truths(i, p);
            for (std::size_t p = 0; p < rep.param_names.size(); ++p)
                out << "," << rep.flow_map(i, p);
            for (std::size_t p = 0; p < rep.param_names.size(); ++p)
                out << "," << rep.mcmc_map(i, p);
            out << "," << rep.flow_seconds[i] << "," << rep.mcmc_seconds[i] << ","
                << int(rep.flow_degenerate[i]) << "," << int(rep.mcmc_degenerate[i]) << "\n";
        }
    }
    json resolved = {{"checkpoint", ckpt},   {"protocol", proto_path},
                     {"n", n_sims},          {"snr", noise},
                     {"n_samples", n_post},  {"quadrature_order", order},
                     {"seed", seed},         {"out_dir", out_dir}};
    write_manifest(out_dir, "compare", resolved,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::printf("compare: flow %.3fs/voxel, mcmc %.3fs/voxel, speedup %.1fx\n",
                rep.flow_mean_seconds, rep.mcmc_mean_seconds, rep.speedup);
    return 0;
}

int cmd_census(const CommonArgs& common, const std::optional<std::string>& checkpoint,
               const std::optional<std::string>& proto, const std::optional<long>& n,
               const std::optional<double>& snr, const std::optional<long>& n_samples,
               const std::optional<int>& quad) {
    auto t0 = std::chrono::steady_clock::now();
    ConfigSource cfg{load_config_file(common.config_path)};
    std::string ckpt = cfg.resolve(checkpoint, "checkpoint", std::string());
    std::string proto_path = cfg.resolve(proto, "protocol", std::string());
    long n_sims = cfg.resolve(n, "n", 10000L);
    double noise = cfg.resolve(snr, "snr", 0.0);
    long n_post = cfg.resolve(n_samples, "n_samples", 15000L);
    int order = cfg.resolve(quad, "quadrature_order", 32);
    uint64_t seed = require_seed(common.seed, cfg);
    std::string out_dir = resolve_out_dir(common.out_dir, cfg);
    if (ckpt.empty() || proto_path.empty())
        throw ConfigError("--checkpoint and --protocol required");

    FlowModel flow = FlowModel::load(ckpt);
    PriorSpec spec = PriorSpec::for_space(flow.space());
    HarnessContext ctx =
        make_context(proto_path, 0.0, order, resolve_workers(common.workers.value_or(0)));
    CensusReport rep = degeneracy_census(flow, spec, ctx, static_cast<std::size_t>(n_sims), noise,
                                         static_cast<int>(n_post), seed);
    fs::create_directories(out_dir);
    write_text(out_dir + "/census.json", to_json_string(rep));
    {
        std::ofstream out(out_dir + "/census.csv");
        out << "parameter,degenerate_count,fraction\n";
        for (std::size_t p = 0; p < rep.param_names.size(); ++p)
            out << rep.param_names[p] << "," << rep.degenerate_counts[p] << ","
                << static_cast<double>(rep.degenerate_counts[p]) /
                       static_cast<double>(rep.n_sims)
                << "\n";
    }
    json resolved = {{"checkpoint", ckpt},  {"protocol", proto_path},
                     {"n", n_sims},         {"snr", noise},
                     {"n_samples", n_post}, {"quadrature_order", order},
                     {"seed", seed},        {"out_dir", out_dir}};
    write_manifest(out_dir, "census", resolved,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::printf("census: %ld/%zu voxels degenerate\n", rep.degenerate_voxels, rep.n_sims);
    return 0;
}

int cmd_feature_compare(const CommonArgs& common, const std::optional<std::string>& checkpoint,
                        const std::optional<std::string>& summary_ckpt,
                        const std::optional<std::string>& proto, const std::optional<long>& n,
                        const std::optional<double>& snr, const std::optional<long>& n_samples,
                        const std::optional<int>& quad) {
    auto t0 = std::chrono::steady_clock::now();
    ConfigSource cfg{load_config_file(common.config_path)};
    std::string ckpt = cfg.resolve(checkpoint, "checkpoint", std::string());
    std::string sckpt = cfg.resolve(summary_ckpt, "summary_checkpoint", std::string());
    std::string proto_path = cfg.resolve(proto, "protocol", std::string());
    long n_sims = cfg.resolve(n, "n", 100L);
    double noise = cfg.resolve(snr, "snr", 0.0);
    long n_post = cfg.resolve(n_samples, "n_samples", 15000L);
    int order = cfg.resolve(quad, "quadrature_order", 32);
    uint64_t seed = require_seed(common.seed, cfg);
    std::string out_dir = resolve_out_dir(common.out_dir, cfg);
    if (ckpt.empty() || sckpt.empty() || proto_path.empty())
        throw ConfigError("--checkpoint, --summary-checkpoint and --protocol required");

    FlowModel flow = FlowModel::load(ckpt);
    FlowModel summary_flow = FlowModel::load(sckpt);
    PriorSpec spec = PriorSpec::for_space(flow.space());
    HarnessContext ctx =
        make_context(proto_path, 0.0, order, resolve_workers(common.workers.value_or(0)));
    FeatureComparisonReport rep = compare_feature_extraction(
        flow, summary_flow, spec, ctx, static_cast<std::size_t>(n_sims), noise,
        static_cast<int>(n_post), seed);
    fs::create_directories(out_dir);
    write_text(out_dir + "/feature_comparison.json", to_json_string(rep));
    {
        std::ofstream out(out_dir + "/feature_comparison.csv");
        out << "voxel";
        for (const auto& p : rep.param_names) out << ",truth_" << p;
        for (const auto& p : rep.param_names) out << ",feature_map_" << p;
        for (const auto& p : rep.param_names) out << ",summary_map_" << p;
        out << ",feature_degenerate,summary_degenerate\n";
        for (std::size_t i = 0; i < rep.n_sims; ++i) {
            out << i;
            for (std::size_t p = 0; p < rep.param_names.size(); ++p)
                out << "," << rep.truths(i, p);
            for (std::size_t p = 0; p < rep.param_names.size(); ++p)
                out << "," << rep.feature_map(i, p);
            for (std::size_t p = 0; p < rep.param_names.size(); ++p)
                out << "," << rep.summary_map(i, p);
            out << "," << int(rep.feature_degenerate[i]) << ","
                << int(rep.summary_degenerate[i]) << "\n";
        }
    }
    json resolved = {{"checkpoint", ckpt},
                     {"summary_checkpoint", sckpt},
                     {"protocol", proto_path},
                     {"n", n_sims},
                     {"snr", noise},
                     {"n_samples", n_post},
                     {"quadrature_order", order},
                     {"seed", seed},
                     {"out_dir", out_dir}};
    write_manifest(out_dir, "feature-compare", resolved,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::printf("feature-compare: kept %zu/%zu non-degenerate voxels\n", rep.n_kept, rep.n_sims);
    return 0;
}

int cmd_snr_sweep(const CommonArgs& common, const std::vector<std::string>& checkpoints,
                  const std::vector<double>& levels, const std::optional<std::string>& proto,
                  const std::optional<long>& n, const std::optional<long>& n_samples,
                  const std::optional<int>& quad) {
    auto t0 = std::chrono::steady_clock::now();
    ConfigSource cfg{load_config_file(common.config_path)};
    std::string proto_path = cfg.resolve(proto, "protocol", std::string());
    long n_sims = cfg.resolve(n, "n", 1000L);
    long n_post = cfg.resolve(n_samples, "n_samples", 15000L);
    int order = cfg.resolve(quad, "quadrature_order", 32);
    uint64_t seed = require_seed(common.seed, cfg);
    std::string out_dir = resolve_out_dir(common.out_dir, cfg);
    if (checkpoints.empty() || checkpoints.size() != levels.size())
        throw ConfigError("--checkpoints and --levels must list one entry per noise level");
    if (proto_path.empty()) throw ConfigError("--protocol required");

    std::vector<FlowModel> flows;
    flows.reserve(checkpoints.size());
    for (const auto& c : checkpoints) flows.push_back(FlowModel::load(c));
    std::vector<const FlowModel*> flow_ptrs;
    for (const auto& f : flows) flow_ptrs.push_back(&f);
    PriorSpec spec = PriorSpec::for_space(flows.front().space());
    HarnessContext ctx =
        make_context(proto_path, 0.0, order, resolve_workers(common.workers.value_or(0)));
    SnrSweepReport rep = snr_sweep(flow_ptrs, spec, ctx, levels, static_cast<std::size_t>(n_sims),
                                   static_cast<int>(n_post), seed);
    fs::create_directories(out_dir);
    write_text(out_dir + "/snr_sweep.json", to_json_string(rep));
    {
        std::ofstream out(out_dir + "/snr_sweep.csv");
        out << "level,snr,sim";
        for (const auto& p : rep.param_names) out << "," << p << "_uncertainty";
        out << "\n";
        for (std::size_t l = 0; l < rep.snr_levels.size(); ++l)
            for (std::size_t i = 0; i < rep.n_sims; ++i) {
                out << l << "," << rep.snr_levels[l] << "," << i;
                for (std::size_t p = 0; p < rep.param_names.size(); ++p)
                    out << "," << rep.uncertainty_pct[l](i, p);
                out << "\n";
            }
    }
    json resolved = {{"checkpoints", checkpoints}, {"levels", levels},
                     {"protocol", proto_path},     {"n", n_sims},
                     {"n_samples", n_post},        {"quadrature_order", order},
                     {"seed", seed},               {"out_dir", out_dir}};
    write_manifest(out_dir, "snr-sweep", resolved,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    for (std::size_t l = 0; l < levels.size(); ++l)
        std::printf("snr-sweep: level %.0f mean uncertainty %.3f%%\n", levels[l],
                    rep.overall_mean_uncertainty[l]);
    return 0;
}

int cmd_ppc(const CommonArgs& common, const std::optional<std::string>& checkpoint,
            const std::optional<std::string>& proto, const std::optional<long>& n_truths,
            const std::optional<long>& n_pp, const std::optional<double>& snr,
            const std::optional<long>& n_samples, const std::optional<int>& quad) {
    auto t0 = std::chrono::steady_clock::now();
    ConfigSource cfg{load_config_file(common.config_path)};
    std::string ckpt = cfg.resolve(checkpoint, "checkpoint", std::string());
    std::string proto_path = cfg.resolve(proto, "protocol", std::string());
    long nt = cfg.resolve(n_truths, "n_truths", 10L);
    long np = cfg.resolve(n_pp, "n_pp", 100L);
    double noise = cfg.resolve(snr, "snr", 0.0);
    long n_post = cfg.resolve(n_samples, "n_samples", 15000L);
    int order = cfg.resolve(quad, "quadrature_order", 32);
    uint64_t seed = require_seed(common.seed, cfg);
    std::string out_dir = resolve_out_dir(common.out_dir, cfg);
    if (ckpt.empty() || proto_path.empty())
        throw ConfigError("--checkpoint and --protocol required");

    FlowModel flow = FlowModel::load(ckpt);
    PriorSpec spec = PriorSpec::for_space(flow.space());
    HarnessContext ctx =
        make_context(proto_path, 0.0, order, resolve_workers(common.workers.value_or(0)));
    PpcReport rep = posterior_predictive_check(flow, spec, ctx, static_cast<std::size_t>(nt),
                                               static_cast<std::size_t>(np), noise,
                                               static_cast<int>(n_post), seed);
    fs::create_directories(out_dir);
    write_text(out_dir + "/ppc.json", to_json_string(rep));
    {
        std::ofstream out(out_dir + "/ppc.csv");
        out << "truth,shell_b,input_da,envelope_lo,envelope_hi\n";
        for (std::size_t i = 0; i < rep.n_truths; ++i)
            for (std::size_t s = 0; s < rep.shell_bvalues.size(); ++s)
                out << i << "," << rep.shell_bvalues[s] << "," << rep.input_da(i, s) << ","
                    << rep.envelope_lo(i, s) << "," << rep.envelope_hi(i, s) << "\n";
    }
    json resolved = {{"checkpoint", ckpt},
                     {"protocol", proto_path},
                     {"n_truths", nt},
                     {"n_pp", np},
                     {"snr", noise},
                     {"n_samples", n_post},
                     {"quadrature_order", order},
                     {"seed", seed},
                     {"out_dir", out_dir}};
    write_manifest(out_dir, "ppc", resolved,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::printf("ppc: coverage %.1f%%, mean envelope width %.4f\n", 100.0 * rep.coverage,
                rep.mean_width);
    return 0;
}

int cmd_correlation(const CommonArgs& common, const std::optional<std::string>& checkpoint,
                    const std::optional<std::string>& proto, const std::optional<long>& n,
                    const std::optional<double>& snr, const std::optional<int>& quad) {
    auto t0 = std::chrono::steady_clock::now();
    ConfigSource cfg{load_config_file(common.config_path)};
    std::string ckpt = cfg.resolve(checkpoint, "checkpoint", std::string());
    std::string proto_path = cfg.resolve(proto, "protocol", std::string());
    long n_sims = cfg.resolve(n, "n", 1000L);
    double noise = cfg.resolve(snr, "snr", 50.0);
    int order = cfg.resolve(quad, "quadrature_order", 32);
    uint64_t seed = require_seed(common.seed, cfg);
    std::string out_dir = resolve_out_dir(common.out_dir, cfg);
    if (ckpt.empty() || proto_path.empty())
        throw ConfigError("--checkpoint and --protocol required");

    FlowModel flow = FlowModel::load(ckpt);
    PriorSpec spec = PriorSpec::for_space(flow.space());
    HarnessContext ctx =
        make_context(proto_path, 0.0, order, resolve_workers(common.workers.value_or(0)));
    CorrelationReport rep =
        feature_correlation(flow, spec, ctx, static_cast<std::size_t>(n_sims), noise, seed);
    fs::create_directories(out_dir);
    write_text(out_dir + "/correlation.json", to_json_string(rep));
    {
        std::ofstream out(out_dir + "/correlation.csv");
        out << "feature,shell_b,correlation\n";
        for (std::size_t f = 0; f < rep.correlation.rows; ++f)
            for (std::size_t s = 0; s < rep.correlation.cols; ++s)
                out << f << "," << rep.shell_bvalues[s] << "," << rep.correlation(f, s) << "\n";
    }
    json resolved = {{"checkpoint", ckpt},         {"protocol", proto_path}, {"n", n_sims},
                     {"snr", noise},               {"quadrature_order", order},
                     {"seed", seed},               {"out_dir", out_dir}};
    write_manifest(out_dir, "correlation", resolved,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    std::printf("correlation: %zux%zu matrix written\n", rep.correlation.rows,
                rep.correlation.cols);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"amortized posterior estimation for diffusion-MRI compartment models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    CommonArgs sim_common;
    std::optional<std::string> sim_model, sim_proto;
    std::optional<long> sim_n;
    std::optional<double> sim_snr, sim_bmax;
    std::optional<int> sim_quad;
    auto* sim = app.add_subcommand("simulate", "generate a training set from the prior");
    add_common(sim, sim_common);
    sim->add_option("--model", sim_model, "ball_stick | standard_model | extended_sandi");
    sim->add_option("--protocol", sim_proto, "protocol file");
    sim->add_option("--n", sim_n, "number of simulations");
    sim->add_option("--snr", sim_snr, "Rician noise SNR (0 = noise-free)");
    sim->add_option("--quad-order", sim_quad, "orientation quadrature order");
    sim->add_option("--bmax", sim_bmax, "keep only shells with b <= bmax (s/mm^2)");

    CommonArgs tr_common;
    std::optional<std::string> tr_dataset;
    std::optional<int> tr_epochs, tr_batch, tr_patience, tr_features, tr_made, tr_mlp1, tr_mlp2;
    std::optional<double> tr_lr;
    bool tr_summary = false, tr_noembed = false;
    auto* tr = app.add_subcommand("train", "train the posterior estimator on a dataset");
    add_common(tr, tr_common);
    tr->add_option("--dataset", tr_dataset, "dataset prefix (from simulate)");
    tr->add_option("--max-epochs", tr_epochs, "epoch cap");
    tr->add_option("--lr", tr_lr, "Adam learning rate");
    tr->add_option("--batch-size", tr_batch, "minibatch size");
    tr->add_option("--patience", tr_patience, "early-stopping patience (epochs)");
    tr->add_option("--n-features", tr_features, "embedding feature count");
    tr->add_option("--made-hidden", tr_made, "hidden width of the autoregressive blocks");
    tr->add_option("--mlp-hidden1", tr_mlp1, "first embedding layer width");
    tr->add_option("--mlp-hidden2", tr_mlp2, "second embedding layer width");
    tr->add_flag("--summary-stats", tr_summary,
                 "condition on direction-averaged shell means instead of the raw signal");
    tr->add_flag("--no-embedding", tr_noembed, "condition on the raw (standardized) signal");

    CommonArgs in_common;
    std::optional<std::string> in_ckpt, in_sig, in_proto;
    std::optional<long> in_nsamp;
    std::optional<double> in_bmax;
    bool in_store = false;
    auto* inf = app.add_subcommand("infer", "per-voxel posterior summaries from signals");
    add_common(inf, in_common);
    inf->add_option("--checkpoint", in_ckpt, "trained flow checkpoint");
    inf->add_option("--signals", in_sig, "signals CSV (one voxel per row)");
    inf->add_option("--protocol", in_proto, "protocol file (default: named in signals)");
    inf->add_option("--n-samples", in_nsamp, "posterior samples per voxel (default 50000)");
    inf->add_option("--bmax", in_bmax, "keep only shells with b <= bmax (s/mm^2)");
    inf->add_flag("--store-samples", in_store, "persist per-voxel sample matrices");

    CommonArgs mc_common;
    std::optional<std::string> mc_model, mc_sig, mc_proto;
    std::optional<double> mc_snr, mc_bmax;
    std::optional<long> mc_nsamp, mc_burn;
    auto* mc = app.add_subcommand("mcmc", "adaptive Metropolis-within-Gibbs baseline");
    add_common(mc, mc_common);
    mc->add_option("--model", mc_model, "forward model id");
    mc->add_option("--signals", mc_sig, "signals CSV");
    mc->add_option("--protocol", mc_proto, "protocol file");
    mc->add_option("--snr", mc_snr, "nominal SNR; sets likelihood sigma = 1/SNR");
    mc->add_option("--n-samples", mc_nsamp, "chain length (default 15200)");
    mc->add_option("--burn-in", mc_burn, "burn-in samples (default 200)");
    mc->add_option("--bmax", mc_bmax, "shell mask");

    CommonArgs cp_common;
    std::optional<std::string> cp_ckpt, cp_proto;
    std::optional<long> cp_n, cp_nsamp;
    std::optional<double> cp_snr;
    std::optional<int> cp_quad;
    auto* cp = app.add_subcommand("compare", "flow vs MCMC on simulated voxels");
    add_common(cp, cp_common);
    cp->add_option("--checkpoint", cp_ckpt, "trained flow checkpoint");
    cp->add_option("--protocol", cp_proto, "protocol file");
    cp->add_option("--n", cp_n, "number of simulated voxels");
    cp->add_option("--snr", cp_snr, "noise level");
    cp->add_option("--n-samples", cp_nsamp, "posterior samples per method");
    cp->add_option("--quad-order", cp_quad, "orientation quadrature order");

    CommonArgs ce_common;
    std::optional<std::string> ce_ckpt, ce_proto;
    std::optional<long> ce_n, ce_nsamp;
    std::optional<double> ce_snr;
    std::optional<int> ce_quad;
    auto* ce = app.add_subcommand("census", "degenerate-case counts per parameter");
    add_common(ce, ce_common);
    ce->add_option("--checkpoint", ce_ckpt, "trained flow checkpoint");
    ce->add_option("--protocol", ce_proto, "protocol file");
    ce->add_option("--n", ce_n, "number of simulated voxels");
    ce->add_option("--snr", ce_snr, "noise level (0 = noise-free)");
    ce->add_option("--n-samples", ce_nsamp, "posterior samples per voxel");
    ce->add_option("--quad-order", ce_quad, "orientation quadrature order");

    CommonArgs fc_common;
    std::optional<std::string> fc_ckpt, fc_sckpt, fc_proto;
    std::optional<long> fc_n, fc_nsamp;
    std::optional<double> fc_snr;
    std::optional<int> fc_quad;
    auto* fc = app.add_subcommand("feature-compare",
                                  "learned features vs summary statistics on the same voxels");
    add_common(fc, fc_common);
    fc->add_option("--checkpoint", fc_ckpt, "flow trained on raw signals");
    fc->add_option("--summary-checkpoint", fc_sckpt, "flow trained on shell means");
    fc->add_option("--protocol", fc_proto, "protocol file");
    fc->add_option("--n", fc_n, "number of simulated voxels");
    fc->add_option("--snr", fc_snr, "noise level");
    fc->add_option("--n-samples", fc_nsamp, "posterior samples per variant");
    fc->add_option("--quad-order", fc_quad, "orientation quadrature order");

    CommonArgs ss_common;
    std::vector<std::string> ss_ckpts;
    std::vector<double> ss_levels;
    std::optional<std::string> ss_proto;
    std::optional<long> ss_n, ss_nsamp;
    std::optional<int> ss_quad;
    auto* ss = app.add_subcommand("snr-sweep", "uncertainty across noise levels");
    add_common(ss, ss_common);
    ss->add_option("--checkpoints", ss_ckpts, "one checkpoint per level")->delimiter(',');
    ss->add_option("--levels", ss_levels, "noise levels (0 = noise-free)")->delimiter(',');
    ss->add_option("--protocol", ss_proto, "protocol file");
    ss->add_option("--n", ss_n, "simulations per level");
    ss->add_option("--n-samples", ss_nsamp, "posterior samples per voxel");
    ss->add_option("--quad-order", ss_quad, "orientation quadrature order");

    CommonArgs pp_common;
    std::optional<std::string> pp_ckpt, pp_proto;
    std::optional<long> pp_nt, pp_npp, pp_nsamp;
    std::optional<double> pp_snr;
    std::optional<int> pp_quad;
    auto* pp = app.add_subcommand("ppc", "posterior predictive check");
    add_common(pp, pp_common);
    pp->add_option("--checkpoint", pp_ckpt, "trained flow checkpoint");
    pp->add_option("--protocol", pp_proto, "protocol file");
    pp->add_option("--n-truths", pp_nt, "number of ground-truth draws");
    pp->add_option("--n-pp", pp_npp, "posterior draws re-simulated per truth");
    pp->add_option("--snr", pp_snr, "noise level (0 = noise-free)");
    pp->add_option("--n-samples", pp_nsamp, "posterior samples per voxel");
    pp->add_option("--quad-order", pp_quad, "orientation quadrature order");

    CommonArgs co_common;
    std::optional<std::string> co_ckpt, co_proto;
    std::optional<long> co_n;
    std::optional<double> co_snr;
    std::optional<int> co_quad;
    auto* co =
        app.add_subcommand("correlation", "learned features vs shell means correlation matrix");
    add_common(co, co_common);
    co->add_option("--checkpoint", co_ckpt, "trained flow checkpoint");
    co->add_option("--protocol", co_proto, "protocol file");
    co->add_option("--n", co_n, "number of simulated voxels");
    co->add_option("--snr", co_snr, "noise level");
    co->add_option("--quad-order", co_quad, "orientation quadrature order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sim->parsed())
            return cmd_simulate(sim_common, sim_model, sim_proto, sim_n, sim_snr, sim_quad,
                                sim_bmax);
        if (tr->parsed())
            return cmd_train(tr_common, tr_dataset, tr_epochs, tr_lr, tr_batch, tr_patience,
                             tr_features, tr_summary, tr_noembed, tr_made, tr_mlp1, tr_mlp2);
        if (inf->parsed())
            return cmd_infer(in_common, in_ckpt, in_sig, in_proto, in_nsamp, in_bmax, in_store);
        if (mc->parsed())
            return cmd_mcmc(mc_common, mc_model, mc_sig, mc_proto, mc_snr, mc_nsamp, mc_burn,
                            mc_bmax);
        if (cp->parsed())
            return cmd_compare(cp_common, cp_ckpt, cp_proto, cp_n, cp_snr, cp_nsamp, cp_quad);
        if (ce->parsed())
            return cmd_census(ce_common, ce_ckpt, ce_proto, ce_n, ce_snr, ce_nsamp, ce_quad);
        if (fc->parsed())
            return cmd_feature_compare(fc_common, fc_ckpt, fc_sckpt, fc_proto, fc_n, fc_snr,
                                       fc_nsamp, fc_quad);
        if (ss->parsed())
            return cmd_snr_sweep(ss_common, ss_ckpts, ss_levels, ss_proto, ss_n, ss_nsamp,
                                 ss_quad);
        if (pp->parsed())
            return cmd_ppc(pp_common, pp_ckpt, pp_proto, pp_nt, pp_npp, pp_snr, pp_nsamp, pp_quad);
        if (co->parsed())
            return cmd_correlation(co_common, co_ckpt, co_proto, co_n, co_snr, co_quad);
        std::fprintf(stderr, "no subcommand given\n");
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return 3;
    }
}
