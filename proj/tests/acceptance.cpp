// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stresslab/diagnostics.hpp"
#include "stresslab/factor_pca.hpp"
#include "stresslab/neural_nets.hpp"
#include "stresslab/pipelines.hpp"
#include "stresslab/report.hpp"
#include "stresslab/risk_metrics.hpp"
#include "test_support.hpp"

using namespace stresslab;
using testing_support::gaussian_matrix;
namespace fs = std::filesystem;

namespace {

// Collects failed checks for one criterion.
class Checker {
public:
    void expect(bool ok, const std::string& what) {
        ++checks_;
        if (!ok && failures_.size() < 8) failures_.push_back(what);
        if (!ok) ++failed_;
    }
    void near(double got, double want, double tol, const std::string& what) {
        std::ostringstream os;
        os << what << ": got " << got << ", want " << want << " +/- " << tol;
        expect(std::abs(got - want) <= tol, os.str());
    }
    bool ok() const { return failed_ == 0; }
    std::string summary() const {
        std::ostringstream os;
        os << checks_ - failed_ << "/" << checks_ << " checks";
        for (const auto& f : failures_) os << "\n      " << f;
        return os.str();
    }

private:
    std::size_t checks_ = 0;
    std::size_t failed_ = 0;
    std::vector<std::string> failures_;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ReturnMatrix demo_returns(const std::function<void(SynthSpec&)>& tweak = {}) {
    SynthSpec spec = read_synth_spec(STRESSLAB_DEMO_SPEC);
    if (tweak) tweak(spec);
    return compute_returns(generate_synthetic(spec));
}

// 1. Closed-form risk, KL and reparameterization values.
void math_oracles(Checker& c) {
    std::vector<double> r(100, 0.01);
    r[37] = -0.10;
    c.near(value_at_risk(r), -0.01, 1e-12, "VaR of the 100-point series");
    c.near(expected_shortfall(r), 0.012, 1e-12, "ES of the 100-point series");
    c.near(value_at_risk(std::vector<double>(40, 0.01)), -0.01, 1e-12, "VaR of a constant series");

    c.near(max_drawdown(std::vector<double>{0.01, 0.0, 0.02, 0.03}), 0.0, 1e-12, "drawdown of non-negative returns");
    c.near(max_drawdown(std::vector<double>{-0.2}), 0.2, 1e-12, "drawdown of a single -20% day");
    c.near(max_drawdown(std::vector<double>{1.0, -0.5}), 0.5, 1e-12, "drawdown of 1 -> 2 -> 1");

    c.near(nn::kl_divergence(std::vector<double>(5, 0.0), std::vector<double>(5, 0.0)), 0.0, 1e-12, "KL at the prior");
    c.near(nn::kl_divergence(std::vector<double>{1.0}, std::vector<double>{0.0}), 0.5, 1e-12, "KL with unit mean");
    c.near(nn::kl_divergence(std::vector<double>{0.0}, std::vector<double>{1.0}), 0.5 * (std::exp(1.0) - 2.0), 1e-12,
           "KL with unit log-variance");

    c.near(nn::sample_latent(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, std::log(4.0)), Matrix::Ones(1, 1))(0, 0),
           2.5, 1e-12, "z = 0.5 + 2 * 1");
    const Matrix mu = gaussian_matrix(20, 5, 1), lv = gaussian_matrix(20, 5, 2), eps = gaussian_matrix(20, 5, 3);
    const Matrix z = nn::sample_latent(mu, lv, eps);
    double worst = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            worst = std::max(worst, std::abs(z(i, j) - (mu(i, j) + std::exp(0.5 * lv(i, j)) * eps(i, j))));
        }
    }
    c.near(worst, 0.0, 1e-12, "reparameterization with fixed noise");
}

Matrix spectral_window(Eigen::Index w, Eigen::Index n, std::uint64_t seed) {
    Matrix scale = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) scale(j, j) = 0.02 / (1.0 + static_cast<double>(j));
    const Matrix mix = gaussian_matrix(n, n, seed + 1000);
    return gaussian_matrix(w, n, seed) * scale * mix.householderQr().householderQ();
}

// 2. PCA structure against an SVD oracle.
void pca_suite(Checker& c) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix x = spectral_window(252, 25, seed);
        const auto m = fit_pca(x, 5);
        c.expect((m.loadings.transpose() * m.loadings - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-8,
                 "orthonormal loadings, seed " + std::to_string(seed));

        const auto full = fit_pca(x, 25);
        c.expect((inverse_transform(full, transform(full, x)) - x).cwiseAbs().maxCoeff() <= 1e-8,
                 "full-rank round trip, seed " + std::to_string(seed));

        const Matrix centered = x.rowwise() - x.colwise().mean();
        const Vector lambda = Eigen::JacobiSVD<Matrix>(centered).singularValues().array().square() / 251.0;
        for (Eigen::Index d = 1; d < 25; ++d) {
            const auto md = fit_pca(x, d);
            const double err = (x - inverse_transform(md, transform(md, x))).squaredNorm();
            const double expected = lambda.tail(25 - d).sum() * 251.0;
            c.expect(std::abs(err / expected - 1.0) <= 1e-6,
                     "spectral reconstruction identity, seed " + std::to_string(seed) + " d " + std::to_string(d));
        }
    }
    Matrix x(60, 2);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.01);
    for (Eigen::Index t = 0; t < 60; ++t) {
        x(t, 0) = n(rng);
        x(t, 1) = 2.0 * x(t, 0);
    }
    const auto m = fit_pca(x, 1);
    c.near(m.explained_variance_ratio()(0), 1.0, 1e-8, "rank-1 explained variance ratio");
    c.near(m.loadings(0, 0), 1.0 / std::sqrt(5.0), 1e-6, "rank-1 loading 1");
    c.near(m.loadings(1, 0), 2.0 / std::sqrt(5.0), 1e-6, "rank-1 loading 2");
}

// Per-layer relative error between analytic and central-difference gradients.
std::vector<double> layer_errors(const std::vector<nn::MlpParams*>& blocks,
                                 const std::vector<const nn::MlpGradient*>& grads, const std::function<double()>& loss) {
    const double h = 1e-5;
    std::vector<double> errors;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t l = 0; l < blocks[b]->layers.size(); ++l) {
            auto& layer = blocks[b]->layers[l];
            const auto& g = grads[b]->layers[l];
            double diff = 0, na = 0, nm = 0;
            auto probe = [&](double& p, double analytic) {
                const double keep = p;
                p = keep + h;
                const double up = loss();
                p = keep - h;
                const double down = loss();
                p = keep;
                const double numeric = (up - down) / (2 * h);
                diff += (analytic - numeric) * (analytic - numeric);
                na += analytic * analytic;
                nm += numeric * numeric;
            };
            for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) {
                for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) probe(layer.weights(i, j), g.weights(i, j));
            }
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i) probe(layer.bias(i), g.bias(i));
            errors.push_back(std::sqrt(diff) / (std::sqrt(na) + std::sqrt(nm) + 1e-300));
        }
    }
    return errors;
}

void jitter_biases(nn::MlpParams& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto& l : p.layers) {
        for (auto& b : l.bias) b = n(rng);
    }
}

// 3. Analytic gradients of both networks.
void gradient_suite(Checker& c) {
    const std::array<Eigen::Index, 5> shape{25, 16, 5, 16, 25};
    for (std::uint64_t point = 0; point < 3; ++point) {
        auto ae = nn::init_params(shape, 10 + point);
        jitter_biases(ae, 20 + point);
        const Matrix x = gaussian_matrix(32, 25, 30 + point);
        const auto g = nn::grad_mse(ae, x);
        const auto errs = layer_errors({&ae}, {&g}, [&] { return nn::mse_loss(ae, x); });
        for (std::size_t l = 0; l < errs.size(); ++l) {
            std::ostringstream os;
            os << "autoencoder point " << point << " layer " << l << " rel err " << errs[l];
            c.expect(errs[l] <= 1e-4, os.str());
        }

        nn::TrainConfig cfg;
        std::mt19937_64 rng(40 + point);
        auto vae = nn::init_vae(25, cfg, rng);
        for (auto* p : {&vae.trunk, &vae.mu_head, &vae.logvar_head, &vae.decoder}) jitter_biases(*p, 50 + point);
        const Matrix eps = gaussian_matrix(32, 5, 60 + point);
        const auto vg = nn::vae_loss_grad(vae, x, eps, 1.0);
        const auto verrs = layer_errors({&vae.trunk, &vae.mu_head, &vae.logvar_head, &vae.decoder},
                                        {&vg.trunk, &vg.mu_head, &vg.logvar_head, &vg.decoder},
                                        [&] { return nn::vae_loss(vae, x, eps, 1.0).total; });
        for (std::size_t l = 0; l < verrs.size(); ++l) {
            std::ostringstream os;
            os << "variational point " << point << " layer " << l << " rel err " << verrs[l];
            c.expect(verrs[l] <= 1e-4, os.str());
        }
    }
}

// 4. GARCH parameter recovery and unit-root test power.
void garch_adf_suite(Checker& c) {
    const GarchParams truth{0.2291, 0.0824, 0.8340};
    std::vector<double> omegas, alphas, betas;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto f = garch_fit(garch_simulate(truth, 5000, 9000 + seed));
        omegas.push_back(f.params.omega);
        alphas.push_back(f.params.alpha);
        betas.push_back(f.params.beta);
    }
    const double om = median(omegas), al = median(alphas), be = median(betas);
    c.near(al / truth.alpha, 1.0, 0.2, "median alpha / true alpha");
    c.near(om / truth.omega, 1.0, 0.2, "median omega / true omega");
    c.near(be, truth.beta, 0.05, "median beta");

    int rejected = 0, kept = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto noise = testing_support::gaussian_series(1000, 7000 + seed);
        rejected += adf_test(noise, default_adf_max_lag(noise.size())).reject_5;
        auto walk = testing_support::gaussian_series(1000, 8000 + seed);
        for (std::size_t t = 1; t < walk.size(); ++t) walk[t] += walk[t - 1];
        kept += !adf_test(walk, default_adf_max_lag(walk.size())).reject_5;
    }
    c.expect(rejected >= 95, "white noise rejected " + std::to_string(rejected) + "/100");
    c.expect(kept >= 90, "random walk kept " + std::to_string(kept) + "/100");
}

// 5. Null and directional behaviour of the stress pipelines.
void pipeline_suite(Checker& c) {
    const auto r = demo_returns();
    c.expect(r.cols() == 25 && r.rows() == 1999, "demo market is 25 assets x 1999 returns");
    const auto portfolio = PortfolioSpec::equal_weight(25);
    const auto sectors = index_sectors(r.tickers, r.sectors);
    c.expect(sectors.labels.size() == 5, "five sectors");

    for (const auto& w : run_pca_stress(r, StressSpec::none(5), portfolio, {252, 21, 5, 1, {}})) {
        c.expect(w.delta.d_var == 0.0 && w.delta.d_es == 0.0 && w.delta.d_drawdown == 0.0,
                 "PCA null stress, window " + std::to_string(w.window));
    }
    AeOptions ae;
    ae.stride = 252;
    const auto ae_run = run_ae_stress(r, StressSpec::none(5), portfolio, ae);
    c.expect(ae_run.failures.empty() && !ae_run.results.empty(), "autoencoder windows trained");
    for (const auto& w : ae_run.results) {
        c.expect(w.delta.d_var == 0.0 && w.delta.d_es == 0.0 && w.delta.d_drawdown == 0.0,
                 "autoencoder null stress, window " + std::to_string(w.window));
    }

    const auto down = run_pca_stress(r, StressSpec::single(0, 2.0, -1), portfolio, {252, 21, 5, 1, {}});
    for (const auto& w : down) {
        c.expect(w.delta.d_var >= 0.0, "-2 sigma first component raises VaR, window " + std::to_string(w.window));
    }

    for (const auto& view : rolling_windows(r, 252, 21)) {
        const auto rows = attribute_window(view, PipelineKind::Pca, 2.0, portfolio, sectors, 5, {});
        bool first = rows.size() == 5;
        for (std::size_t i = 1; first && i < rows.size(); ++i) {
            first = std::abs(rows[0].delta.d_var) > std::abs(rows[i].delta.d_var);
        }
        c.expect(first, "first component leads attribution, window " + std::to_string(view.index));
    }

    for (std::size_t hot = 0; hot < 5; ++hot) {
        const auto shocked = demo_returns([hot](SynthSpec& s) {
            for (std::size_t i = 0; i < s.assets; ++i) {
                if (i * s.sectors / s.assets == hot) s.loadings.row(static_cast<Eigen::Index>(i)) *= 4.0;
            }
        });
        const auto res = run_pca_stress(shocked, StressSpec::single(0, 2.0), portfolio, {252, 21, 5, 1, {}});
        const std::string target = index_sectors(shocked.tickers, shocked.sectors).labels[hot];
        for (const auto& w : res) {
            std::size_t top = 0;
            for (std::size_t s = 1; s < w.sectors.shifts.size(); ++s) {
                if (std::abs(w.sectors.shifts[s]) > std::abs(w.sectors.shifts[top])) top = s;
            }
            c.expect(w.sectors.labels[top] == target,
                     "shocked sector " + target + " dominates, window " + std::to_string(w.window));
        }
    }
}

// 6. Monte Carlo sampling from the variational model.
void monte_carlo_suite(Checker& c) {
    auto r = demo_returns();
    const std::size_t rows = 3 * 504;
    r.values.conservativeResize(static_cast<Eigen::Index>(rows), Eigen::NoChange);
    r.dates.resize(rows);
    const auto portfolio = PortfolioSpec::equal_weight(25);

    VaeOptions opt;
    opt.stride = 504;
    opt.train.max_epochs = 30;
    const auto a = run_vae_mc(r, portfolio, opt);
    c.expect(a.results.size() == 3 && a.failures.empty(), "three windows sampled");
    for (const auto& res : a.results) {
        std::size_t mass = 0;
        for (auto k : res.hist.counts) mass += k;
        c.expect(res.samples.size() == 1000, "1000 samples, window " + std::to_string(res.window));
        c.expect(mass == 1000, "histogram holds every sample, window " + std::to_string(res.window));
        c.expect(res.summary.std > 0.0, "non-degenerate distribution, window " + std::to_string(res.window));
    }

    const auto again = run_vae_mc(r, portfolio, opt);
    auto other_opt = opt;
    other_opt.mc_seed = opt.mc_seed + 1000;
    const auto other = run_vae_mc(r, portfolio, other_opt);
    for (std::size_t i = 0; i < a.results.size() && i < again.results.size() && i < other.results.size(); ++i) {
        const auto& s1 = a.results[i].samples;
        const auto& s2 = again.results[i].samples;
        c.expect(s1.size() == s2.size() && std::memcmp(s1.data(), s2.data(), s1.size() * sizeof(double)) == 0,
                 "same seed reproduces samples bit for bit, window " + std::to_string(i));
        const auto& m1 = a.results[i].summary;
        const auto& m2 = other.results[i].summary;
        const double se = std::sqrt((m1.std * m1.std + m2.std * m2.std) / 1000.0);
        std::ostringstream os;
        os << "cross-seed means " << m1.mean << " vs " << m2.mean << " within 3 SE (" << se << "), window " << i;
        c.expect(std::abs(m1.mean - m2.mean) <= 3 * se, os.str());
    }
}

int run_command(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = testing_support::read_text(e.path());
    }
    return out;
}

// 7. Two complete CLI runs in separate directories give identical trees.
void reproducibility_suite(Checker& c) {
    testing_support::TempDir root;
    const std::string cli = STRESSLAB_CLI;
    const std::vector<std::string> steps{
        "synth --spec '" + std::string(STRESSLAB_DEMO_SPEC) + "'",
        "eda",
        "pca --dump-models",
        "ae --dump-models",
        "vae",
    };
    for (const char* name : {"first", "second"}) {
        const fs::path dir = root / name;
        fs::create_directories(dir);
        const auto start = std::chrono::steady_clock::now();
        for (const auto& step : steps) {
            const std::string cmd = "cd '" + dir.string() + "' && SOURCE_DATE_EPOCH=1700000000 '" + cli + "' " +
                                    step + " > cli.log 2>&1";
            const int code = run_command(cmd);
            c.expect(code == 0, std::string(name) + " run: '" + step + "' exited with " + std::to_string(code));
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        c.expect(secs < 300.0, std::string(name) + " run took " + std::to_string(secs) + " s");
        fs::remove(dir / "cli.log");
        for (const char* out : {"data", "results/eda", "results/pca", "results/ae", "results/vae"}) {
            c.expect(fs::exists(dir / out / "manifest.json") && verify_manifest(dir / out).ok(),
                     std::string(name) + " run: manifest of " + out + " verifies");
        }
    }
    const auto a = read_tree(root / "first"), b = read_tree(root / "second");
    c.expect(a.size() == b.size() && a.size() > 10, "same file set (" + std::to_string(a.size()) + " files)");
    for (const auto& [path, bytes] : a) {
        const auto it = b.find(path);
        c.expect(it != b.end() && it->second == bytes, "identical bytes: " + path);
    }
}

struct Criterion {
    const char* name;
    double limit_seconds;
    void (*body)(Checker&);
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"math oracles", 1.0, math_oracles},
        {"PCA structure", 5.0, pca_suite},
        {"analytic gradients", 30.0, gradient_suite},
        {"GARCH recovery and ADF power", 120.0, garch_adf_suite},
        {"pipeline null and direction", 120.0, pipeline_suite},
        {"variational Monte Carlo", 180.0, monte_carlo_suite},
        {"end-to-end reproducibility", 600.0, reproducibility_suite},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& crit = criteria[i];
        Checker c;
        const auto start = std::chrono::steady_clock::now();
        try {
            crit.body(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::ostringstream timing;
        timing << "runtime " << secs << " s, limit " << crit.limit_seconds << " s";
        c.expect(secs < crit.limit_seconds, timing.str());
        const bool ok = c.ok();
        failed += !ok;
        std::cout << (ok ? "PASS" : "FAIL") << " [" << i + 1 << "] " << crit.name << " (" << timing.str() << "): "
                  << c.summary() << std::endl;
    }
    std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
