#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "mupost/errors.hpp"
#include "mupost/flow.hpp"
#include "mupost/rng.hpp"

namespace mupost {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr char kCheckpointMagic[] = "MUPOSTCKPT1\n";

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<int> local_permutation(int b, int dim) {
    // alternate reversal and rotate-by-one between blocks; together these
    // move every index through at least two autoregressive positions for
    // any dim >= 2 (plain reversal pins the middle index when dim is odd)
    std::vector<int> p(dim);
    if (b == 0) {
        for (int i = 0; i < dim; ++i) p[i] = i;
    } else if (b % 2 == 1) {
        for (int i = 0; i < dim; ++i) p[i] = dim - 1 - i;
    } else {
        for (int i = 0; i < dim; ++i) p[i] = (i + 1) % dim;
    }
    return p;
}

} // namespace

void TrainingConfig::validate() const {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ConfigError("validation_fraction must lie in (0, 1)");
    if (patience_epochs < 1) throw ConfigError("patience_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (n_features < 1) throw ConfigError("n_features must be >= 1");
    if (n_blocks < 1) throw ConfigError("n_blocks must be >= 1");
    if (made_hidden < 2) throw ConfigError("made_hidden must be >= 2");
}

uint64_t TrainingConfig::hash() const {
    std::string repr = std::to_string(learning_rate) + "|" + std::to_string(batch_size) + "|" +
                       std::to_string(patience_epochs) + "|" + std::to_string(validation_fraction) +
                       "|" + std::to_string(max_epochs) + "|" + std::to_string(rng_seed) + "|" +
                       std::to_string(n_features) + "|" + std::to_string(use_embedding) + "|" +
                       std::to_string(made_hidden) + "|" + std::to_string(mlp_hidden1) + "|" +
                       std::to_string(mlp_hidden2) + "|" + std::to_string(n_blocks);
    return fnv1a(repr);
}

FlowModel FlowModel::create(const ParameterSpace& space, int data_dim,
                            const TrainingConfig& config, uint64_t init_seed) {
    config.validate();
    FlowModel m;
    m.space_ = space;
    m.data_dim_ = data_dim;
    m.use_embedding_ = config.use_embedding;
    m.cond_dim_ = config.use_embedding ? config.n_features : data_dim;
    m.config_hash_ = config.hash();
    Rng rng(init_seed, 0xf10f);
    if (m.use_embedding_)
        m.mlp_.init(m.params_, data_dim, config.mlp_hidden1, config.mlp_hidden2,
                    config.n_features, rng);
    int d = space.dim();
    m.blocks_.resize(config.n_blocks);
    m.perms_.resize(config.n_blocks);
    for (int b = 0; b < config.n_blocks; ++b) {
        m.perms_[b] = local_permutation(b, d);
        m.blocks_[b].init(m.params_, d, m.cond_dim_, config.made_hidden, rng);
    }
    m.theta_std_ = Standardizer::identity(d);
    m.x_std_ = Standardizer::identity(data_dim);
    return m;
}

void FlowModel::set_standardizers(Standardizer theta_std, Standardizer x_std) {
    theta_std_ = std::move(theta_std);
    x_std_ = std::move(x_std);
}

void FlowModel::standardize_x(const Matrix& x, Matrix& x_std) const {
    check_dims(x.cols, data_dim_, "flow conditioning input");
    x_std = Matrix(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) x_std_.apply(x.row_span(r), x_std.row_span(r));
}

void FlowModel::compute_cond(const Matrix& x, Mlp::Work& mlp_work, Matrix& cond) const {
    Matrix xs;
    standardize_x(x, xs);
    compute_cond_std(xs, mlp_work, cond);
}

void FlowModel::compute_cond_std(const Matrix& x_std, Mlp::Work& mlp_work, Matrix& cond) const {
    if (use_embedding_) {
        mlp_.forward(params_, x_std, mlp_work);
        cond = mlp_work.y;
    } else {
        cond = x_std;
    }
}

void FlowModel::mlp_backward(const Matrix& x_std, const Mlp::Work& mlp_work, const Matrix& dcond) {
    mlp_.backward(params_, x_std, mlp_work, dcond);
}

double FlowModel::nll_forward(const Matrix& theta_std, const Matrix& cond, FlowWork& work,
                              std::vector<double>* per_row) const {
    const std::size_t B = theta_std.rows;
    const int d = dim();
    const int nb = n_blocks();
    work.block_work.resize(nb);
    work.block_in.resize(nb);
    work.logdet.assign(B, 0.0);

    Matrix v = theta_std;
    for (int b = 0; b < nb; ++b) {
        Matrix& w = work.block_in[b];
        if (w.rows != B || w.cols != static_cast<std::size_t>(d)) w = Matrix(B, d);
        for (std::size_t r = 0; r < B; ++r) {
            const double* src = v.row(r);
            double* dst = w.row(r);
            for (int i = 0; i < d; ++i) dst[i] = src[perms_[b][i]];
        }
        blocks_[b].forward(params_, w, cond, work.block_work[b], work.logdet);
        v = work.block_work[b].z;
    }

    double const_term = 0.5 * d * kLog2Pi + theta_std_.log_jacobian();
    double total = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        const double* z = v.row(r);
        double q = 0.0;
        for (int i = 0; i < d; ++i) q += z[i] * z[i];
        double nll = 0.5 * q + const_term - work.logdet[r];
        if (per_row) (*per_row)[r] = nll;
        total += nll;
    }
    return total / static_cast<double>(B);
}

void FlowModel::log_prob_batch(const Matrix& theta, const Matrix& x,
                               std::vector<double>& out) const {
    check_dims(theta.rows, x.rows, "log_prob_batch rows");
    const std::size_t B = theta.rows;
    out.assign(B, 0.0);
    Mlp::Work mw;
    Matrix cond;
    compute_cond(x, mw, cond);
    Matrix ts(B, theta.cols);
    for (std::size_t r = 0; r < B; ++r) theta_std_.apply(theta.row_span(r), ts.row_span(r));
    FlowWork fw;
    std::vector<double> nll(B);
    nll_forward(ts, cond, fw, &nll);
    for (std::size_t r = 0; r < B; ++r) {
        if (!std::isfinite(nll[r])) throw NumericError("non-finite flow density");
        out[r] = -nll[r];
    }
}

double FlowModel::log_prob(std::span<const double> theta, std::span<const double> x) const {
    for (double v : theta)
        if (!std::isfinite(v)) throw NumericError("log_prob: non-finite theta");
    for (double v : x)
        if (!std::isfinite(v)) throw NumericError("log_prob: non-finite x");
    Matrix th(1, theta.size());
    std::copy(theta.begin(), theta.end(), th.row(0));
    Matrix xx(1, x.size());
    std::copy(x.begin(), x.end(), xx.row(0));
    std::vector<double> out;
    log_prob_batch(th, xx, out);
    return out[0];
}

std::vector<double> FlowModel::block_log_dets(std::span<const double> theta,
                                              std::span<const double> x) const {
    Matrix th(1, theta.size());
    std::copy(theta.begin(), theta.end(), th.row(0));
    Matrix xx(1, x.size());
    std::copy(x.begin(), x.end(), xx.row(0));
    Mlp::Work mw;
    Matrix cond;
    compute_cond(xx, mw, cond);
    Matrix ts(1, th.cols);
    theta_std_.apply(th.row_span(0), ts.row_span(0));

    std::vector<double> per_block;
    const int d = dim();
    Matrix v = ts;
    for (int b = 0; b < n_blocks(); ++b) {
        Matrix w(1, d);
        for (int i = 0; i < d; ++i) w(0, i) = v(0, perms_[b][i]);
        MadeBlock::Work bw;
        std::vector<double> ld(1, 0.0);
        blocks_[b].forward(params_, w, cond, bw, ld);
        per_block.push_back(ld[0]);
        v = bw.z;
    }
    return per_block;
}

Matrix FlowModel::sample(std::span<const double> x, std::size_t n, uint64_t seed) const {
    if (n < 1) throw ValidationError("sample: n must be >= 1");
    Matrix xx(1, x.size());
    std::copy(x.begin(), x.end(), xx.row(0));
    Mlp::Work mw;
    Matrix cond1;
    compute_cond(xx, mw, cond1);
    Matrix cond(n, cond_dim_);
    for (std::size_t r = 0; r < n; ++r)
        std::copy(cond1.row(0), cond1.row(0) + cond_dim_, cond.row(r));

    const int d = dim();
    Rng rng(seed, 0x5a11);
    Matrix v(n, d);
    for (std::size_t r = 0; r < n; ++r)
        for (int i = 0; i < d; ++i) v(r, i) = rng.normal();

    for (int b = n_blocks() - 1; b >= 0; --b) {
        Matrix w;
        blocks_[b].inverse(params_, v, cond, w);
        // undo the gather: w held the block-order coordinates
        Matrix prev(n, d);
        for (std::size_t r = 0; r < n; ++r) {
            const double* src = w.row(r);
            double* dst = prev.row(r);
            for (int i = 0; i < d; ++i) dst[perms_[b][i]] = src[i];
        }
        v = std::move(prev);
    }
    Matrix out(n, d);
    for (std::size_t r = 0; r < n; ++r) theta_std_.invert(v.row_span(r), out.row_span(r));
    return out;
}

std::vector<double> FlowModel::latent(std::span<const double> theta,
                                      std::span<const double> x) const {
    Matrix th(1, theta.size());
    std::copy(theta.begin(), theta.end(), th.row(0));
    Matrix xx(1, x.size());
    std::copy(x.begin(), x.end(), xx.row(0));
    Mlp::Work mw;
    Matrix cond;
    compute_cond(xx, mw, cond);
    Matrix ts(1, th.cols);
    theta_std_.apply(th.row_span(0), ts.row_span(0));
    FlowWork fw;
    std::vector<double> nll(1);
    nll_forward(ts, cond, fw, &nll);
    const Matrix& z = fw.block_work.back().z;
    return std::vector<double>(z.row(0), z.row(0) + z.cols);
}

std::vector<double> FlowModel::embed(std::span<const double> x) const {
    Matrix xx(1, x.size());
    std::copy(x.begin(), x.end(), xx.row(0));
    Mlp::Work mw;
    Matrix cond;
    compute_cond(xx, mw, cond);
    return std::vector<double>(cond.row(0), cond.row(0) + cond.cols);
}

bool autoregressive_check(const MadeBlock& block, const ParamStore& store, uint64_t seed) {
    const int d = block.dim;
    Rng rng(seed);
    Matrix theta(1, d), cond(1, block.cond_dim);
    for (int i = 0; i < d; ++i) theta(0, i) = rng.normal();
    for (int i = 0; i < block.cond_dim; ++i) cond(0, i) = rng.normal();

    const double eps = 1e-6;
    MadeBlock::Work bw;
    std::vector<double> ld(1, 0.0);
    for (int j = 0; j < d; ++j) {
        Matrix tp = theta, tm = theta;
        tp(0, j) += eps;
        tm(0, j) -= eps;
        ld[0] = 0.0;
        block.forward(store, tp, cond, bw, ld);
        Matrix zp = bw.z;
        ld[0] = 0.0;
        block.forward(store, tm, cond, bw, ld);
        Matrix zm = bw.z;
        for (int i = 0; i < d; ++i) {
            double deriv = (zp(0, i) - zm(0, i)) / (2.0 * eps);
            if (j > i && std::fabs(deriv) > 1e-7) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// checkpoint serialization

void FlowModel::save(const std::string& path) const {
    nlohmann::json h;
    h["format"] = 1;
    h["model"] = model_id_name(space_.model);
    h["names"] = space_.names;
    h["lower"] = space_.lower;
    h["upper"] = space_.upper;
    h["data_dim"] = data_dim_;
    h["cond_dim"] = cond_dim_;
    h["use_embedding"] = use_embedding_;
    h["config_hash"] = config_hash_;
    h["theta_mean"] = theta_std_.mean;
    h["theta_scale"] = theta_std_.scale;
    h["x_mean"] = x_std_.mean;
    h["x_scale"] = x_std_.scale;
    h["perms"] = perms_;
    if (use_embedding_) h["mlp"] = {mlp_.in, mlp_.h1, mlp_.h2, mlp_.out};
    nlohmann::json jb = nlohmann::json::array();
    for (const auto& b : blocks_) jb.push_back({b.dim, b.cond_dim, b.hidden});
    h["blocks"] = jb;
    h["n_params"] = params_.value.size();

    std::string header = h.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(params_.value.data()),
              static_cast<std::streamsize>(params_.value.size() * sizeof(double)));
    if (!out) throw ConfigError("short write on checkpoint: " + path);
}

FlowModel FlowModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    char magic[sizeof(kCheckpointMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw ConfigError("not a flow checkpoint: " + path);
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) throw ConfigError("truncated checkpoint header: " + path);
    nlohmann::json h = nlohmann::json::parse(header);

    FlowModel m;
    ModelId id = model_id_from_name(h.at("model").get<std::string>());
    if (id == ModelId::Custom) {
        m.space_ = ParameterSpace::custom(h.at("names").get<std::vector<std::string>>(),
                                          h.at("lower").get<std::vector<double>>(),
                                          h.at("upper").get<std::vector<double>>());
    } else {
        m.space_ = ParameterSpace::for_model(id);
        m.space_.names = h.at("names").get<std::vector<std::string>>();
        m.space_.lower = h.at("lower").get<std::vector<double>>();
        m.space_.upper = h.at("upper").get<std::vector<double>>();
    }
    m.data_dim_ = h.at("data_dim").get<int>();
    m.cond_dim_ = h.at("cond_dim").get<int>();
    m.use_embedding_ = h.at("use_embedding").get<bool>();
    m.config_hash_ = h.at("config_hash").get<uint64_t>();
    m.perms_ = h.at("perms").get<std::vector<std::vector<int>>>();
    Rng rng(0);
    if (m.use_embedding_) {
        auto sizes = h.at("mlp").get<std::vector<int>>();
        m.mlp_.init(m.params_, sizes[0], sizes[1], sizes[2], sizes[3], rng);
    }
    for (const auto& jb : h.at("blocks")) {
        MadeBlock b;
        b.init(m.params_, jb[0].get<int>(), jb[1].get<int>(), jb[2].get<int>(), rng);
        m.blocks_.push_back(std::move(b));
    }
    std::size_t n_params = h.at("n_params").get<std::size_t>();
    if (n_params != m.params_.value.size())
        throw ConfigError("checkpoint parameter count mismatch: " + path);
    in.read(reinterpret_cast<char*>(m.params_.value.data()),
            static_cast<std::streamsize>(n_params * sizeof(double)));
    if (!in) throw ConfigError("truncated checkpoint blob: " + path);
    m.theta_std_.mean = h.at("theta_mean").get<std::vector<double>>();
    m.theta_std_.scale = h.at("theta_scale").get<std::vector<double>>();
    m.x_std_.mean = h.at("x_mean").get<std::vector<double>>();
    m.x_std_.scale = h.at("x_scale").get<std::vector<double>>();
    return m;
}

} // namespace mupost
