#include "stresslab/neural_nets.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

#include "stresslab/error.hpp"

namespace stresslab::nn {

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

MlpGradient zeros_like(const MlpParams& params) {
    MlpGradient g;
    g.layers.reserve(params.layers.size());
    for (const auto& l : params.layers) {
        g.layers.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()), Vector::Zero(l.bias.size()), l.activation});
    }
    return g;
}

MlpParams init_params(std::span<const Eigen::Index> dims, std::mt19937_64& rng, Activation output) {
    if (dims.size() < 2) throw DimensionError("network shape needs at least an input and an output size");
    for (auto d : dims) {
        if (d < 1) throw DimensionError("layer sizes must be positive");
    }
    MlpParams p;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const auto fan_in = dims[i];
        const auto fan_out = dims[i + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        DenseLayer layer;
        layer.weights.resize(fan_out, fan_in);
        for (Eigen::Index r = 0; r < fan_out; ++r) {
            for (Eigen::Index c = 0; c < fan_in; ++c) layer.weights(r, c) = u(rng);
        }
        layer.bias = Vector::Zero(fan_out);
        layer.activation = i + 2 == dims.size() ? output : Activation::Tanh;
        p.layers.push_back(std::move(layer));
    }
    return p;
}

MlpParams init_params(std::span<const Eigen::Index> dims, std::uint64_t seed, Activation output) {
    std::mt19937_64 rng(seed);
    return init_params(dims, rng, output);
}

namespace {

void apply_activation(Matrix& z, Activation act) {
    if (act == Activation::Tanh) z = z.array().tanh().matrix();
}

Matrix affine(const DenseLayer& layer, const Matrix& x) {
    if (x.cols() != layer.in_dim()) {
        throw DimensionError("layer expects " + std::to_string(layer.in_dim()) + " inputs, got " +
                             std::to_string(x.cols()));
    }
    Matrix z = x * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    return z;
}

}  // namespace

Matrix forward(const MlpParams& params, const Matrix& x) {
    Matrix h = x;
    for (const auto& layer : params.layers) {
        Matrix z = affine(layer, h);
        apply_activation(z, layer.activation);
        h = std::move(z);
    }
    return h;
}

Matrix forward(const MlpParams& params, const Matrix& x, ForwardCache& cache) {
    cache.inputs.clear();
    cache.outputs.clear();
    Matrix h = x;
    for (const auto& layer : params.layers) {
        Matrix z = affine(layer, h);
        apply_activation(z, layer.activation);
        cache.inputs.push_back(std::move(h));
        cache.outputs.push_back(z);
        h = std::move(z);
    }
    return h;
}

Matrix backward(const MlpParams& params, const ForwardCache& cache, const Matrix& d_output, MlpGradient& grad) {
    Matrix delta = d_output;
    for (std::size_t k = params.layers.size(); k-- > 0;) {
        const auto& layer = params.layers[k];
        if (layer.activation == Activation::Tanh) {
            delta = (delta.array() * (1.0 - cache.outputs[k].array().square())).matrix();
        }
        grad.layers[k].weights.noalias() += delta.transpose() * cache.inputs[k];
        grad.layers[k].bias += delta.colwise().sum().transpose();
        delta = delta * layer.weights;
    }
    return delta;
}

double mse_loss(const MlpParams& params, const Matrix& x) {
    const Matrix y = forward(params, x);
    if (y.cols() != x.cols()) throw DimensionError("reconstruction width differs from input width");
    return (y - x).squaredNorm() / static_cast<double>(x.size());
}

MlpGradient grad_mse(const MlpParams& params, const Matrix& x, double* loss) {
    ForwardCache cache;
    const Matrix y = forward(params, x, cache);
    if (y.cols() != x.cols()) throw DimensionError("reconstruction width differs from input width");
    const Matrix diff = y - x;
    if (loss) *loss = diff.squaredNorm() / static_cast<double>(x.size());
    MlpGradient g = zeros_like(params);
    backward(params, cache, diff * (2.0 / static_cast<double>(x.size())), g);
    return g;
}

void validate(const TrainConfig& cfg) {
    if (cfg.batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0)) {
        throw ConfigError("validation fraction must lie in (0, 1)");
    }
    if (cfg.max_epochs < 1) throw ConfigError("max epochs must be at least 1");
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (cfg.hidden < 1 || cfg.latent < 1) throw ConfigError("hidden and latent sizes must be positive");
}

Adam::Adam(const TrainConfig& cfg)
    : lr_(cfg.learning_rate), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.epsilon) {}

void Adam::step(std::span<MlpParams* const> params, std::span<const MlpGradient> grads) {
    if (params.size() != grads.size()) throw DimensionError("Adam: parameter/gradient block count mismatch");
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.push_back(zeros_like(*p));
            v_.push_back(zeros_like(*p));
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto& layers = params[b]->layers;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            update(layers[l].weights, grads[b].layers[l].weights, m_[b].layers[l].weights, v_[b].layers[l].weights);
            update(layers[l].bias, grads[b].layers[l].bias, m_[b].layers[l].bias, v_[b].layers[l].bias);
        }
    }
}

MlpParams join(const MlpParams& first, const MlpParams& second) {
    if (first.out_dim() != second.in_dim()) throw DimensionError("cannot join networks: width mismatch");
    MlpParams out = first;
    out.layers.insert(out.layers.end(), second.layers.begin(), second.layers.end());
    return out;
}

namespace {

struct Split {
    Matrix train;
    Matrix validation;
};

Split chronological_split(const Matrix& x, double fraction) {
    const auto rows = x.rows();
    const auto n_val = static_cast<Eigen::Index>(std::floor(static_cast<double>(rows) * fraction));
    if (n_val < 1 || rows - n_val < 1) {
        throw DataError("window of " + std::to_string(rows) + " rows too short for validation fraction " +
                        std::to_string(fraction));
    }
    return {x.topRows(rows - n_val), x.bottomRows(n_val)};
}

Matrix gather_rows(const Matrix& x, std::span<const Eigen::Index> idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    return out;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = normal(rng);
    }
    return out;
}

void require_finite(double loss, const char* what, std::size_t epoch) {
    if (!std::isfinite(loss)) {
        throw TrainingDivergence(std::string("non-finite ") + what + " loss at epoch " + std::to_string(epoch));
    }
}

struct Hooks {
    std::function<double(const Matrix&)> step;  // one optimizer step on a batch, returns batch loss
    std::function<double()> training_loss;
    std::function<double()> validation_loss;
    std::function<void()> save_best;
    std::function<void()> restore_best;
};

// Epoch loop with per-epoch shuffling and patience-based early stopping on
// the validation loss. Parameters from the best validation epoch are restored.
TrainReport run_epochs(const Matrix& train, const TrainConfig& cfg, std::mt19937_64& rng, const Hooks& hooks) {
    TrainReport report;
    report.initial_training_loss = hooks.training_loss();
    require_finite(report.initial_training_loss, "training", 0);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(train.rows()));
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::min<std::size_t>(cfg.batch_size, order.size());

    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < order.size(); s += batch) {
            const std::size_t len = std::min(batch, order.size() - s);
            const Matrix xb = gather_rows(train, std::span<const Eigen::Index>(order).subspan(s, len));
            require_finite(hooks.step(xb), "batch", epoch);
        }
        const double tl = hooks.training_loss();
        const double vl = hooks.validation_loss();
        require_finite(tl, "training", epoch);
        require_finite(vl, "validation", epoch);
        report.training_history.push_back(tl);
        report.validation_history.push_back(vl);
        report.epochs_run = epoch;
        report.final_training_loss = tl;

        if (vl < best) {
            best = vl;
            report.best_epoch = epoch;
            since_best = 0;
            hooks.save_best();
        } else if (++since_best >= cfg.patience) {
            report.stopped_early = true;
            break;
        }
    }
    report.best_validation_loss = best;
    hooks.restore_best();
    return report;
}

}  // namespace

AeModel init_ae(Eigen::Index inputs, const TrainConfig& cfg, std::mt19937_64& rng) {
    const std::array<Eigen::Index, 3> enc{inputs, cfg.hidden, cfg.latent};
    const std::array<Eigen::Index, 3> dec{cfg.latent, cfg.hidden, inputs};
    AeModel m;
    m.encoder = init_params(enc, rng, Activation::Tanh);
    m.decoder = init_params(dec, rng, Activation::Linear);
    return m;
}

AeModel train_ae(const Matrix& standardized, const TrainConfig& cfg) {
    validate(cfg);
    if (!standardized.allFinite()) throw DataError("training data contains non-finite values");
    const auto split = chronological_split(standardized, cfg.validation_fraction);

    std::mt19937_64 rng(cfg.seed);
    AeModel model = init_ae(standardized.cols(), cfg, rng);
    const auto encoder_layers = model.encoder.layers.size();
    MlpParams net = join(model.encoder, model.decoder);
    MlpParams best = net;
    Adam adam(cfg);

    Hooks hooks;
    hooks.step = [&](const Matrix& xb) {
        double loss = 0.0;
        const std::array<MlpGradient, 1> g{grad_mse(net, xb, &loss)};
        const std::array<MlpParams*, 1> p{&net};
        adam.step(p, g);
        return loss;
    };
    hooks.training_loss = [&] { return mse_loss(net, split.train); };
    hooks.validation_loss = [&] { return mse_loss(net, split.validation); };
    hooks.save_best = [&] { best = net; };
    hooks.restore_best = [&] { net = best; };

    model.report = run_epochs(split.train, cfg, rng, hooks);
    const auto mid = net.layers.begin() + static_cast<std::ptrdiff_t>(encoder_layers);
    model.encoder.layers.assign(net.layers.begin(), mid);
    model.decoder.layers.assign(mid, net.layers.end());
    return model;
}

Matrix encode(const AeModel& model, const Matrix& x) { return forward(model.encoder, x); }

Matrix decode(const AeModel& model, const Matrix& z) { return forward(model.decoder, z); }

VaeModel init_vae(Eigen::Index inputs, const TrainConfig& cfg, std::mt19937_64& rng) {
    const std::array<Eigen::Index, 2> trunk{inputs, cfg.hidden};
    const std::array<Eigen::Index, 2> head{cfg.hidden, cfg.latent};
    const std::array<Eigen::Index, 3> dec{cfg.latent, cfg.hidden, inputs};
    VaeModel m;
    m.trunk = init_params(trunk, rng, Activation::Tanh);
    m.mu_head = init_params(head, rng, Activation::Linear);
    m.logvar_head = init_params(head, rng, Activation::Linear);
    m.decoder = init_params(dec, rng, Activation::Linear);
    return m;
}

Posterior encode(const VaeModel& model, const Matrix& x) {
    const Matrix h = forward(model.trunk, x);
    return {forward(model.mu_head, h), forward(model.logvar_head, h)};
}

Matrix decode(const VaeModel& model, const Matrix& z) { return forward(model.decoder, z); }

double kl_divergence(std::span<const double> mu, std::span<const double> log_var) {
    if (mu.size() != log_var.size()) throw DimensionError("kl_divergence: mu and log_var differ in length");
    double kl = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        kl += mu[j] * mu[j] + std::exp(log_var[j]) - 1.0 - log_var[j];
    }
    return 0.5 * kl;
}

Matrix sample_latent(const Matrix& mu, const Matrix& log_var, const Matrix& eps) {
    if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols() || mu.rows() != eps.rows() ||
        mu.cols() != eps.cols()) {
        throw DimensionError("sample_latent: mu, log_var and eps must share a shape");
    }
    return (mu.array() + (0.5 * log_var.array()).exp() * eps.array()).matrix();
}

namespace {

double mean_kl(const Matrix& mu, const Matrix& log_var) {
    const double total = 0.5 * (mu.array().square() + log_var.array().exp() - 1.0 - log_var.array()).sum();
    return total / static_cast<double>(mu.rows());
}

}  // namespace

VaeLoss vae_loss(const VaeModel& model, const Matrix& x, const Matrix& eps, double kl_weight) {
    const auto post = encode(model, x);
    const Matrix y = decode(model, sample_latent(post.mu, post.log_var, eps));
    VaeLoss l;
    l.reconstruction = (y - x).squaredNorm() / static_cast<double>(x.size());
    l.kl = mean_kl(post.mu, post.log_var);
    l.total = l.reconstruction + kl_weight * l.kl;
    return l;
}

VaeGradient vae_loss_grad(const VaeModel& model, const Matrix& x, const Matrix& eps, double kl_weight,
                          VaeLoss* loss) {
    ForwardCache trunk_cache, mu_cache, lv_cache, dec_cache;
    const Matrix h = forward(model.trunk, x, trunk_cache);
    const Matrix mu = forward(model.mu_head, h, mu_cache);
    const Matrix lv = forward(model.logvar_head, h, lv_cache);
    const Matrix sigma = (0.5 * lv.array()).exp().matrix();
    const Matrix z = (mu.array() + sigma.array() * eps.array()).matrix();
    const Matrix y = forward(model.decoder, z, dec_cache);
    const Matrix diff = y - x;
    const double rows = static_cast<double>(x.rows());

    if (loss) {
        loss->reconstruction = diff.squaredNorm() / static_cast<double>(x.size());
        loss->kl = mean_kl(mu, lv);
        loss->total = loss->reconstruction + kl_weight * loss->kl;
    }

    VaeGradient g{zeros_like(model.trunk), zeros_like(model.mu_head), zeros_like(model.logvar_head),
                  zeros_like(model.decoder)};
    const Matrix dz = backward(model.decoder, dec_cache, diff * (2.0 / static_cast<double>(x.size())), g.decoder);
    const double kw = kl_weight / rows;
    const Matrix dmu = dz + kw * mu;
    const Matrix dlv = (dz.array() * eps.array() * 0.5 * sigma.array() + kw * 0.5 * (lv.array().exp() - 1.0)).matrix();
    Matrix dh = backward(model.mu_head, mu_cache, dmu, g.mu_head);
    dh += backward(model.logvar_head, lv_cache, dlv, g.logvar_head);
    backward(model.trunk, trunk_cache, dh, g.trunk);
    return g;
}

VaeModel train_vae(const Matrix& standardized, const TrainConfig& cfg, double kl_weight) {
    validate(cfg);
    if (!(kl_weight >= 0.0) || !std::isfinite(kl_weight)) throw ConfigError("kl weight must be finite and >= 0");
    if (!standardized.allFinite()) throw DataError("training data contains non-finite values");
    const auto split = chronological_split(standardized, cfg.validation_fraction);

    std::mt19937_64 rng(cfg.seed);
    VaeModel model = init_vae(standardized.cols(), cfg, rng);
    const Eigen::Index d = model.latent_dim();
    const Matrix eps_train = normal_matrix(split.train.rows(), d, rng);
    const Matrix eps_val = normal_matrix(split.validation.rows(), d, rng);
    VaeModel best = model;
    Adam adam(cfg);

    Hooks hooks;
    hooks.step = [&](const Matrix& xb) {
        const Matrix eps = normal_matrix(xb.rows(), d, rng);
        VaeLoss l;
        auto g = vae_loss_grad(model, xb, eps, kl_weight, &l);
        const std::array<MlpGradient, 4> grads{std::move(g.trunk), std::move(g.mu_head), std::move(g.logvar_head),
                                               std::move(g.decoder)};
        const std::array<MlpParams*, 4> params{&model.trunk, &model.mu_head, &model.logvar_head, &model.decoder};
        adam.step(params, grads);
        return l.total;
    };
    hooks.training_loss = [&] { return vae_loss(model, split.train, eps_train, kl_weight).total; };
    hooks.validation_loss = [&] { return vae_loss(model, split.validation, eps_val, kl_weight).total; };
    hooks.save_best = [&] { best = model; };
    hooks.restore_best = [&] {
        const auto report = model.report;
        model = best;
        model.report = report;
    };

    auto report = run_epochs(split.train, cfg, rng, hooks);
    model.report = std::move(report);
    return model;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::ofstream& out, T value) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    std::array<char, sizeof(T)> bytes{};
    if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        throw DataError(path.string() + ": truncated SLNN file");
    }
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

}  // namespace

void write_networks(const std::filesystem::path& path, std::span<const MlpParams> networks) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write("SLNN", 4);
    put<std::uint32_t>(out, kSlnnVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(networks.size()));
    for (const auto& net : networks) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
        for (const auto& l : net.layers) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_dim()));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
            put<std::uint32_t>(out, static_cast<std::uint32_t>(l.activation));
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c) put<double>(out, l.weights(r, c));
            }
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) put<double>(out, l.bias(r));
        }
    }
    if (!out) throw IoError("write failed on " + path.string());
}

std::vector<MlpParams> read_networks(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || std::string_view(magic.data(), 4) != "SLNN") {
        throw DataError(path.string() + ": not an SLNN file");
    }
    const auto version = get<std::uint32_t>(in, path);
    if (version != kSlnnVersion) throw DataError(path.string() + ": unsupported SLNN version " + std::to_string(version));
    const auto count = get<std::uint32_t>(in, path);
    std::vector<MlpParams> nets(count);
    for (auto& net : nets) {
        const auto layers = get<std::uint32_t>(in, path);
        for (std::uint32_t k = 0; k < layers; ++k) {
            const auto in_dim = get<std::uint32_t>(in, path);
            const auto out_dim = get<std::uint32_t>(in, path);
            const auto act = get<std::uint32_t>(in, path);
            if (act > 1) throw DataError(path.string() + ": unknown activation code");
            DenseLayer l;
            l.activation = static_cast<Activation>(act);
            l.weights.resize(out_dim, in_dim);
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = get<double>(in, path);
            }
            l.bias.resize(out_dim);
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = get<double>(in, path);
            net.layers.push_back(std::move(l));
        }
    }
    return nets;
}

}  // namespace stresslab::nn
