#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "stresslab/market_data.hpp"
#include "stresslab/types.hpp"

namespace stresslab::nn {

enum class Activation : std::uint32_t { Linear = 0, Tanh = 1 };

/// Fully connected layer acting on row-major batches: y = act(x W^T + b).
struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;     // out
    Activation activation = Activation::Linear;

    Eigen::Index in_dim() const { return weights.cols(); }
    Eigen::Index out_dim() const { return weights.rows(); }
};

struct MlpParams {
    std::vector<DenseLayer> layers;

    Eigen::Index in_dim() const { return layers.front().in_dim(); }
    Eigen::Index out_dim() const { return layers.back().out_dim(); }
    std::size_t parameter_count() const;
};

/// Gradients share the parameter layout; activations are ignored.
using MlpGradient = MlpParams;

MlpGradient zeros_like(const MlpParams& params);

/// Glorot-uniform weights, zero biases. Hidden layers use tanh; the last
/// layer uses `output`.
MlpParams init_params(std::span<const Eigen::Index> dims, std::mt19937_64& rng,
                      Activation output = Activation::Linear);
MlpParams init_params(std::span<const Eigen::Index> dims, std::uint64_t seed,
                      Activation output = Activation::Linear);

/// Layer inputs and post-activation outputs from one forward pass.
struct ForwardCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> outputs;
};

Matrix forward(const MlpParams& params, const Matrix& x);
Matrix forward(const MlpParams& params, const Matrix& x, ForwardCache& cache);

/// Backpropagates dL/d(output) through a cached pass, adding parameter
/// gradients into `grad`. Returns dL/d(input).
Matrix backward(const MlpParams& params, const ForwardCache& cache, const Matrix& d_output, MlpGradient& grad);

/// Mean over all elements of (forward(X) - X)^2.
double mse_loss(const MlpParams& params, const Matrix& x);

/// Exact gradient of mse_loss with respect to every weight and bias.
MlpGradient grad_mse(const MlpParams& params, const Matrix& x, double* loss = nullptr);

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    double validation_fraction = 0.2;
    std::size_t patience = 10;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 42;
    Eigen::Index hidden = 16;
    Eigen::Index latent = 5;
};

void validate(const TrainConfig& cfg);

struct TrainReport {
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_validation_loss = 0.0;
    double final_training_loss = 0.0;
    double initial_training_loss = 0.0;
    bool stopped_early = false;
    std::vector<double> training_history;
    std::vector<double> validation_history;
};

/// Adam over a list of parameter blocks; first/second moments are kept per
/// block with the same layout.
class Adam {
public:
    explicit Adam(const TrainConfig& cfg);

    void step(std::span<MlpParams* const> params, std::span<const MlpGradient> grads);

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<MlpGradient> m_;
    std::vector<MlpGradient> v_;
};

struct AeModel {
    MlpParams encoder;  // N -> hidden -> d, tanh throughout
    MlpParams decoder;  // d -> hidden -> N, linear output
    std::optional<Standardizer> standardizer;
    TrainReport report;

    Eigen::Index latent_dim() const { return encoder.out_dim(); }
};

/// Encoder followed by decoder as one network.
MlpParams join(const MlpParams& first, const MlpParams& second);

AeModel init_ae(Eigen::Index inputs, const TrainConfig& cfg, std::mt19937_64& rng);

/// Trains on a standardized window; the last validation_fraction of rows
/// (chronological tail) is held out for early stopping.
AeModel train_ae(const Matrix& standardized, const TrainConfig& cfg);

Matrix encode(const AeModel& model, const Matrix& x);
Matrix decode(const AeModel& model, const Matrix& z);

struct VaeModel {
    MlpParams trunk;        // N -> hidden, tanh
    MlpParams mu_head;      // hidden -> d, linear
    MlpParams logvar_head;  // hidden -> d, linear
    MlpParams decoder;      // d -> hidden -> N, linear output
    std::optional<Standardizer> standardizer;
    TrainReport report;

    Eigen::Index latent_dim() const { return mu_head.out_dim(); }
};

struct Posterior {
    Matrix mu;
    Matrix log_var;
};

VaeModel init_vae(Eigen::Index inputs, const TrainConfig& cfg, std::mt19937_64& rng);

Posterior encode(const VaeModel& model, const Matrix& x);
Matrix decode(const VaeModel& model, const Matrix& z);

/// 0.5 * sum_j (mu_j^2 + exp(log_var_j) - 1 - log_var_j)
double kl_divergence(std::span<const double> mu, std::span<const double> log_var);

/// z = mu + exp(0.5 * log_var) * eps, elementwise.
Matrix sample_latent(const Matrix& mu, const Matrix& log_var, const Matrix& eps);

struct VaeLoss {
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;  // mean over rows
};

/// Loss with the noise held fixed: MSE(decode(mu + sigma * eps), X) + kl_weight * mean KL.
VaeLoss vae_loss(const VaeModel& model, const Matrix& x, const Matrix& eps, double kl_weight);

struct VaeGradient {
    MlpGradient trunk;
    MlpGradient mu_head;
    MlpGradient logvar_head;
    MlpGradient decoder;
};

VaeGradient vae_loss_grad(const VaeModel& model, const Matrix& x, const Matrix& eps, double kl_weight,
                          VaeLoss* loss = nullptr);

/// Reparameterized training with one eps draw per row per step. Validation
/// loss uses a single eps matrix drawn before the first epoch.
VaeModel train_vae(const Matrix& standardized, const TrainConfig& cfg, double kl_weight = 1.0);

/// Flat binary dump: "SLNN", u32 version, u32 network count, then per network
/// u32 layer count and per layer u32 in, u32 out, u32 activation, weights
/// (row-major) and bias as little-endian f64.
void write_networks(const std::filesystem::path& path, std::span<const MlpParams> networks);
std::vector<MlpParams> read_networks(const std::filesystem::path& path);

inline constexpr std::uint32_t kSlnnVersion = 1;

}  // namespace stresslab::nn
