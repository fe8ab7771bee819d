#ifndef MUPOST_FLOW_HPP
#define MUPOST_FLOW_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mupost/mat.hpp"
#include "mupost/model_space.hpp"

namespace mupost {

class Rng;

/// Flat parameter/gradient storage shared by every layer of a flow, so
/// the optimizer and the finite-difference checks can treat the model as
/// one parameter vector.
struct ParamStore {
    std::vector<double> value;
    std::vector<double> grad;

    std::size_t add(std::size_t n) {
        std::size_t off = value.size();
        value.resize(off + n, 0.0);
        grad.resize(off + n, 0.0);
        return off;
    }
    double* w(std::size_t off) { return value.data() + off; }
    const double* w(std::size_t off) const { return value.data() + off; }
    double* g(std::size_t off) { return grad.data() + off; }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

/// Per-coordinate affine standardization x -> (x - mean) / scale.
struct Standardizer {
    std::vector<double> mean, scale;

    static Standardizer identity(int dim);
    static Standardizer from_columns(const Matrix& data);
    void apply(std::span<const double> in, std::span<double> out) const;
    void invert(std::span<const double> in, std::span<double> out) const;
    double log_jacobian() const; // sum of log scale
};

/// One masked autoregressive block producing per-dimension shift and
/// log-scale from earlier dimensions plus a conditioning vector.
///
/// Mask construction: input and output positions carry degrees 1..dim;
/// hidden units carry degrees 1..dim-1 assigned in ascending contiguous
/// runs (deterministic stand-in for a random assignment). A hidden unit
/// sees inputs of lower-or-equal degree, outputs see hidden units of
/// strictly lower degree. The conditioning vector is unmasked everywhere
/// (degree 0), including a direct connection to the output layer so the
/// first dimension is still conditioned.
struct MadeBlock {
    int dim = 0, cond_dim = 0, hidden = 0;
    std::vector<int> hidden_deg;                   // ascending
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;    // hidden layers
    std::size_t w3 = 0, b3 = 0, w3c = 0;           // output layer (+ direct cond)
    std::vector<double> mask1, mask2, mask3;       // 0/1, theta-dependent weight gates

    void init(ParamStore& store, int dim, int cond_dim, int hidden, Rng& rng);

    /// Re-apply masks to the gradient buffers (keeps masked weights at zero).
    void mask_gradients(ParamStore& store) const;

    struct Work {
        Matrix u;            // B x (dim+cond): theta part then conditioning
        Matrix h1, h2;       // post-tanh activations
        Matrix o;            // raw outputs, B x 2 dim
        Matrix s, expns, z;  // clamped log-scale, exp(-s), transformed output
        Matrix dh1, dh2, dout, du; // backward scratch
        void resize(std::size_t B, int dim, int cond_dim, int hidden);
    };

    /// theta: B x dim (already in block order), cond: B x cond_dim.
    /// Fills work and returns per-row log|det| contributions in logdet
    /// (accumulated with +=).
    void forward(const ParamStore& store, const Matrix& theta, const Matrix& cond,
                 Work& work, std::vector<double>& logdet_acc) const;

    /// Backprop of the negative log-likelihood. dz is the gradient w.r.t.
    /// this block's output; on return dtheta holds the gradient w.r.t. the
    /// block input and dcond accumulates (+=) the conditioning gradient.
    /// with_direct_logdet adds the d(sum s)/ds = 1 term of the NLL.
    void backward(ParamStore& store, const Work& work, const Matrix& dz, Matrix& dtheta,
                  Matrix& dcond, bool with_direct_logdet) const;

    /// Sequential inverse: given z and cond, reconstruct theta. Hidden
    /// units are evaluated once each in degree order (exact thanks to the
    /// autoregressive masks).
    void inverse(const ParamStore& store, const Matrix& z, const Matrix& cond,
                 Matrix& theta) const;
};

/// Three-layer feed-forward feature extractor (tanh hidden activations,
/// linear output).
struct Mlp {
    int in = 0, h1 = 0, h2 = 0, out = 0;
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0;

    void init(ParamStore& store, int in, int h1, int h2, int out, Rng& rng);

    struct Work {
        Matrix a1, a2, y;
        Matrix da1, da2;
        void resize(std::size_t B, const Mlp& mlp);
    };

    void forward(const ParamStore& store, const Matrix& x, Work& work) const;
    /// dy: gradient w.r.t. the output; x must be the forward input.
    void backward(ParamStore& store, const Matrix& x, const Work& work, const Matrix& dy) const;
};

struct TrainingConfig {
    double learning_rate = 1e-3;
    int batch_size = 128;
    int patience_epochs = 30;
    double validation_fraction = 0.05;
    int max_epochs = 200;
    uint64_t rng_seed = 0;
    int n_features = 6;
    bool use_embedding = true; // false: condition directly on the input vector
    int made_hidden = 64;
    int mlp_hidden1 = 256, mlp_hidden2 = 128;
    int n_blocks = 5;
    int workers = 0;

    void validate() const;
    uint64_t hash() const;
};

struct TrainingReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;    // 1-based
    int stopped_epoch = -1; // 1-based
    double best_val_loss = 0.0;
    double seconds = 0.0;
    std::string notes;
};

/// Conditional density estimator: MLP features (optional) feeding a stack
/// of masked autoregressive blocks over standardized parameters, with a
/// standard normal base. Immutable once trained; sample/log_prob are
/// const and reentrant.
class FlowModel {
public:
    /// Per-batch forward state of the whole stack.
    struct FlowWork {
        std::vector<MadeBlock::Work> block_work;
        std::vector<Matrix> block_in; // permuted inputs per block
        std::vector<double> logdet;
    };

    FlowModel() = default;

    /// Fresh model with zero-initialized output layers (identity flow).
    static FlowModel create(const ParameterSpace& space, int data_dim,
                            const TrainingConfig& config, uint64_t init_seed);

    const ParameterSpace& space() const { return space_; }
    int dim() const { return space_.dim(); }
    int data_dim() const { return data_dim_; }
    int cond_dim() const { return cond_dim_; }
    bool uses_embedding() const { return use_embedding_; }
    int n_blocks() const { return static_cast<int>(blocks_.size()); }
    const MadeBlock& block(int b) const { return blocks_[b]; }
    MadeBlock& block(int b) { return blocks_[b]; }
    const std::vector<int>& permutation(int b) const { return perms_[b]; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Standardizer& theta_standardizer() const { return theta_std_; }
    void set_standardizers(Standardizer theta_std, Standardizer x_std);
    uint64_t config_hash() const { return config_hash_; }

    /// log q(theta | x).
    double log_prob(std::span<const double> theta, std::span<const double> x) const;

    /// Batched log-density; also used for the validation loss.
    void log_prob_batch(const Matrix& theta, const Matrix& x, std::vector<double>& out) const;

    /// Per-block log|det| terms for one (theta, x); the sum plus the base
    /// log-density and the standardizer term equals log_prob.
    std::vector<double> block_log_dets(std::span<const double> theta,
                                       std::span<const double> x) const;

    /// Draw n posterior samples for one observation (de-standardized;
    /// not support-filtered). Deterministic per seed.
    Matrix sample(std::span<const double> x, std::size_t n, uint64_t seed) const;

    /// Conditioning features for one observation (the embedding output,
    /// or the standardized input when no embedding is used).
    std::vector<double> embed(std::span<const double> x) const;

    /// Full forward transform to the base space, z = f(theta; x).
    std::vector<double> latent(std::span<const double> theta, std::span<const double> x) const;

    void save(const std::string& path) const;
    static FlowModel load(const std::string& path);

    // internals shared with the trainer
    void standardize_x(const Matrix& x, Matrix& x_std) const;
    void compute_cond(const Matrix& x, Mlp::Work& mlp_work, Matrix& cond) const;
    /// Same but for inputs already passed through the x standardizer.
    void compute_cond_std(const Matrix& x_std, Mlp::Work& mlp_work, Matrix& cond) const;
    double nll_forward(const Matrix& theta_std, const Matrix& cond, FlowWork& work,
                       std::vector<double>* per_row) const;
    void mlp_backward(const Matrix& x_std, const Mlp::Work& mlp_work, const Matrix& dcond);

private:
    friend FlowModel train_flow(const ParameterSpace&, const Matrix&, const Matrix&,
                                const TrainingConfig&, TrainingReport*);

    ParameterSpace space_;
    int data_dim_ = 0;
    int cond_dim_ = 0;
    bool use_embedding_ = true;
    Mlp mlp_;
    std::vector<MadeBlock> blocks_;
    std::vector<std::vector<int>> perms_; // gather indices per block
    Standardizer theta_std_, x_std_;
    ParamStore params_;
    uint64_t config_hash_ = 0;
};

/// Finite-difference check of the autoregressive property: true iff
/// d z_i / d theta_j vanishes for all j >= i (entries above the diagonal
/// below 1e-7).
bool autoregressive_check(const MadeBlock& block, const ParamStore& store, uint64_t seed = 7);

/// Maximum-likelihood training with Adam, minibatches, a held-out
/// validation split and patience-based early stopping. The returned model
/// carries the parameters of the best validation epoch.
FlowModel train_flow(const ParameterSpace& space, const Matrix& theta, const Matrix& x,
                     const TrainingConfig& config, TrainingReport* report);

/// One training step's objective: summed negative log-likelihood over the
/// batch with parameter gradients accumulated into model.params().grad
/// (caller zeroes them). Inputs are already standardized. Exposed for the
/// finite-difference gradient checks.
double nll_with_gradients(FlowModel& model, const Matrix& theta_std, const Matrix& x_std,
                          FlowModel::FlowWork& work, Mlp::Work& mlp_work);

} // namespace mupost

#endif
