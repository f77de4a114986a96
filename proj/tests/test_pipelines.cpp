#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "stresslab/error.hpp"
#include "stresslab/pipelines.hpp"
#include "test_support.hpp"

using namespace stresslab;
using testing_support::one_factor_market;

namespace {

nn::TrainConfig fast_train(std::uint64_t seed = 42, std::size_t epochs = 30) {
    nn::TrainConfig cfg;
    cfg.seed = seed;
    cfg.max_epochs = epochs;
    return cfg;
}

// The market from one_factor_market with sector `hot`'s columns scaled up.
ReturnMatrix sector_heavy_market(std::size_t days, std::uint64_t seed, std::size_t hot, double scale = 4.0) {
    auto r = one_factor_market(days, 25, seed);
    for (std::size_t j = hot * 5; j < hot * 5 + 5; ++j) r.values.col(static_cast<Eigen::Index>(j)) *= scale;
    return r;
}

PortfolioSpec equal_weights() { return PortfolioSpec::equal_weight(25); }

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

}  // namespace

TEST(StressSpecShifts, SingleAndMulti) {
    const Vector sigma = (Vector(3) << 0.5, 2.0, 4.0).finished();
    EXPECT_EQ(StressSpec::single(1, 2.0, -1).shifts(sigma), (Vector(3) << 0, -4.0, 0).finished());
    EXPECT_EQ(StressSpec::multi({1, -0.5, 0.25}).shifts(sigma), (Vector(3) << 0.5, -1.0, 1.0).finished());
    EXPECT_EQ(StressSpec::none(3).shifts(sigma), Vector::Zero(3));
    EXPECT_EQ(StressSpec::single(0, 2.0, -1).describe(), "single:1:-2");
}

TEST(StressSpecValidate, RejectsOutOfRange) {
    EXPECT_THROW(validate(StressSpec::single(5), 5), ConfigError);
    EXPECT_THROW(validate(StressSpec::multi({1, 2}), 5), ConfigError);
    EXPECT_THROW(validate(StressSpec::multi({1, NAN, 0, 0, 0}), 5), ConfigError);
    EXPECT_THROW(validate(StressSpec::single(0, 2.0, 0), 5), ConfigError);
    EXPECT_NO_THROW(validate(StressSpec::multi(kPcaMultiFactor), 5));
    EXPECT_NO_THROW(validate(StressSpec::multi(kAeMultiFactor), 5));
}

TEST(DefaultVectors, Values) {
    EXPECT_EQ(kPcaMultiFactor, (std::vector<double>{2.0, -1.5, 1.0, 0.5, -0.5}));
    EXPECT_EQ(kAeMultiFactor, (std::vector<double>{2.0, -1.0, 1.5, -0.5, 1.0}));
}

TEST(PcaStress, NullStressGivesExactZeros) {
    const auto r = one_factor_market(600, 25, 1);
    const auto res = run_pca_stress(r, StressSpec::none(5), equal_weights(), {252, 21, 5, 1, {}});
    ASSERT_FALSE(res.empty());
    for (const auto& w : res) {
        EXPECT_EQ(w.delta.d_var, 0.0);
        EXPECT_EQ(w.delta.d_es, 0.0);
        EXPECT_EQ(w.delta.d_drawdown, 0.0);
        for (double s : w.sectors.shifts) EXPECT_EQ(s, 0.0);
    }
}

TEST(PcaStress, RankOneUpdateIdentity) {
    const auto r = one_factor_market(300, 25, 2);
    const auto view = make_window(r, 0, 0, 252);
    const auto sectors = index_sectors(r.tickers, r.sectors);
    const auto model = fit_pca(view, 5);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto s = stress_window_pca(view, 5, StressSpec::single(i, 2.0), equal_weights(), sectors);
        const RowVector step = 2.0 * s.latent_std(Eigen::Index(i)) * model.loadings.col(Eigen::Index(i)).transpose();
        const Matrix diff = s.stressed_returns - s.baseline_returns;
        for (Eigen::Index t = 0; t < diff.rows(); ++t) EXPECT_LE((diff.row(t) - step).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(PcaStress, LatentStdIsScoreStd) {
    const auto r = one_factor_market(300, 25, 3);
    const auto view = make_window(r, 0, 10, 252);
    const auto sectors = index_sectors(r.tickers, r.sectors);
    const auto s = stress_window_pca(view, 5, StressSpec::none(5), equal_weights(), sectors);
    const auto model = fit_pca(view, 5);
    EXPECT_LE((s.latent_std.array().square() - model.explained_variance.array()).abs().maxCoeff(), 1e-12);
}

TEST(PcaStress, NegativeFirstComponentRaisesVar) {
    const auto r = one_factor_market(2000, 25, 4);
    const auto res = run_pca_stress(r, StressSpec::single(0, 2.0, -1), equal_weights(), {252, 21, 5, 2, {}});
    EXPECT_EQ(res.size(), window_starts(2000, 252, 21).size());
    for (const auto& w : res) {
        EXPECT_GE(w.delta.d_var, 0.0) << "window " << w.window;
        EXPECT_EQ(w.delta.d_var, w.stressed.var_95 - w.baseline.var_95);
        EXPECT_EQ(w.delta.d_es, w.stressed.es_95 - w.baseline.es_95);
        EXPECT_EQ(w.delta.d_drawdown, w.stressed.max_drawdown - w.baseline.max_drawdown);
        for (double s : w.sectors.shifts) EXPECT_LT(s, 0.0);
    }
}

TEST(PcaStress, ResultsInWindowOrderWithDates) {
    const auto r = one_factor_market(400, 25, 5);
    const auto res = run_pca_stress(r, StressSpec::multi(kPcaMultiFactor), equal_weights(), {252, 50, 5, 3, {}});
    const auto starts = window_starts(400, 252, 50);
    ASSERT_EQ(res.size(), starts.size());
    for (std::size_t i = 0; i < res.size(); ++i) {
        EXPECT_EQ(res[i].window, i);
        EXPECT_EQ(res[i].start, starts[i]);
        EXPECT_EQ(res[i].first_date, r.dates[starts[i]]);
        EXPECT_EQ(res[i].last_date, r.dates[starts[i] + 251]);
    }
    EXPECT_EQ(res.back().last_date, r.dates.back());
}

TEST(PcaStress, ThreadCountDoesNotChangeResults) {
    const auto r = one_factor_market(500, 25, 6);
    const auto spec = StressSpec::multi(kPcaMultiFactor);
    const auto a = run_pca_stress(r, spec, equal_weights(), {252, 21, 5, 1, {}});
    const auto b = run_pca_stress(r, spec, equal_weights(), {252, 21, 5, 4, {}});
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].stressed.var_95, b[i].stressed.var_95);
        EXPECT_EQ(a[i].sectors.shifts, b[i].sectors.shifts);
    }
}

TEST(PcaStress, WindowIndependence) {
    auto r = one_factor_market(400, 25, 7);
    const auto spec = StressSpec::multi(kPcaMultiFactor);
    const auto a = run_pca_stress(r, spec, equal_weights(), {252, 100, 5, 1, {}});
    // Rows past the first window only.
    r.values.bottomRows(400 - 252) = testing_support::gaussian_matrix(400 - 252, 25, 99, 0.05);
    const auto b = run_pca_stress(r, spec, equal_weights(), {252, 100, 5, 1, {}});
    EXPECT_EQ(a[0].baseline.var_95, b[0].baseline.var_95);
    EXPECT_EQ(a[0].stressed.es_95, b[0].stressed.es_95);
    EXPECT_EQ(a[0].sectors.shifts, b[0].sectors.shifts);
    EXPECT_NE(a.back().baseline.var_95, b.back().baseline.var_95);
}

TEST(PcaStress, RejectsBadInputs) {
    const auto r = one_factor_market(300, 25, 8);
    EXPECT_THROW(run_pca_stress(r, StressSpec::single(0), PortfolioSpec::equal_weight(24), {}), ConfigError);
    EXPECT_THROW(run_pca_stress(r, StressSpec::none(30), equal_weights(), {252, 21, 30, 1, {}}), ConfigError);
    EXPECT_THROW(run_pca_stress(r, StressSpec::multi({1, 2}), equal_weights(), {}), ConfigError);
}

TEST(PcaStress, ModelSinkSeesEveryWindow) {
    const auto r = one_factor_market(400, 25, 9);
    std::vector<int> seen(window_starts(400, 252, 21).size(), 0);
    PcaOptions opt{252, 21, 5, 1, [&](std::size_t i, const PcaModel& m) {
                       EXPECT_EQ(m.components(), 5);
                       ++seen[i];
                   }};
    run_pca_stress(r, StressSpec::none(5), equal_weights(), opt);
    for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(SectorLocality, ShockedSectorDominates) {
    for (std::size_t hot = 0; hot < 5; ++hot) {
        const auto r = sector_heavy_market(600, 20 + hot, hot);
        const auto res = run_pca_stress(r, StressSpec::single(0, 2.0), equal_weights(), {252, 63, 5, 1, {}});
        for (const auto& w : res) {
            std::size_t top = 0;
            for (std::size_t s = 1; s < w.sectors.shifts.size(); ++s) {
                if (std::abs(w.sectors.shifts[s]) > std::abs(w.sectors.shifts[top])) top = s;
            }
            EXPECT_EQ(w.sectors.labels[top], "G" + std::to_string(hot));
        }
    }
}

TEST(AeStress, NullStressGivesExactZeros) {
    const auto r = one_factor_market(300, 25, 10);
    AeOptions opt;
    opt.window = 200;
    opt.stride = 100;
    opt.train = fast_train(1, 5);
    const auto run = run_ae_stress(r, StressSpec::none(5), equal_weights(), opt);
    ASSERT_EQ(run.results.size(), 2u);
    EXPECT_TRUE(run.failures.empty());
    for (const auto& w : run.results) {
        EXPECT_EQ(w.delta.d_var, 0.0);
        EXPECT_EQ(w.delta.d_es, 0.0);
        EXPECT_EQ(w.delta.d_drawdown, 0.0);
        for (double s : w.sectors.shifts) EXPECT_EQ(s, 0.0);
    }
}

TEST(AeStress, DeterministicAndWindowSeeded) {
    const auto r = one_factor_market(300, 25, 11);
    AeOptions opt;
    opt.window = 200;
    opt.stride = 100;
    opt.train = fast_train(3, 10);
    std::vector<int> sunk(2, 0);
    opt.model_sink = [&](std::size_t i, const nn::AeModel&) { ++sunk[i]; };
    const auto spec = StressSpec::multi(kAeMultiFactor);
    const auto a = run_ae_stress(r, spec, equal_weights(), opt);
    opt.threads = 2;
    const auto b = run_ae_stress(r, spec, equal_weights(), opt);
    ASSERT_EQ(a.results.size(), b.results.size());
    for (std::size_t i = 0; i < a.results.size(); ++i) {
        EXPECT_EQ(a.results[i].stressed.var_95, b.results[i].stressed.var_95);
        EXPECT_EQ(a.results[i].sectors.shifts, b.results[i].sectors.shifts);
    }
    EXPECT_EQ(sunk, (std::vector<int>{2, 2}));  // once per run

    // Window 1 trains with master + 1.
    const auto view = make_window(r, 1, 100, 200);
    const auto sectors = index_sectors(r.tickers, r.sectors);
    const auto direct = stress_window_ae(view, fast_train(4, 10), spec, equal_weights(), sectors);
    EXPECT_EQ(direct.stressed.var_95, a.results[1].stressed.var_95);
}

TEST(AeStress, DivergentWindowsAreRecorded) {
    const auto r = one_factor_market(300, 25, 12);
    AeOptions opt;
    opt.window = 200;
    opt.stride = 100;
    opt.train = fast_train(1, 5);
    opt.train.learning_rate = 1e200;
    const auto run = run_ae_stress(r, StressSpec::none(5), equal_weights(), opt);
    EXPECT_TRUE(run.results.empty());
    ASSERT_EQ(run.failures.size(), 2u);
    EXPECT_EQ(run.failures[1].window, 1u);
    EXPECT_EQ(run.failures[1].last_date, r.dates.back());
}

TEST(AeStress, MagnitudeMonotone) {
    int monotone = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = one_factor_market(252, 25, 100 + seed);
        const auto view = make_window(r, 0, 0, 252);
        const auto sectors = index_sectors(r.tickers, r.sectors);
        nn::AeModel model;
        const auto one = stress_window_ae(view, fast_train(seed, 40), StressSpec::single(0, 1.0), equal_weights(),
                                          sectors, &model);
        const Standardizer& scale = *model.standardizer;
        const Matrix latents = nn::encode(model, standardize(view.data, scale));
        const Decoder decode = [&](const Matrix& l) { return destandardize(nn::decode(model, l), scale); };
        const auto two = apply_latent_stress(latents, decode,
            StressSpec::single(0, 2.0), equal_weights(), sectors);
        EXPECT_EQ(two.baseline_returns, one.baseline_returns);
        const double n1 = (one.stressed_returns - one.baseline_returns).norm();
        const double n2 = (two.stressed_returns - two.baseline_returns).norm();
        monotone += n2 >= n1;
    }
    EXPECT_GE(monotone, 9);
}

TEST(Attribution, FirstComponentDominatesEveryWindow) {
    const auto r = one_factor_market(2000, 25, 13);
    const auto sectors = index_sectors(r.tickers, r.sectors);
    for (const auto& view : rolling_windows(r, 252, 126)) {
        const auto rows = attribute_window(view, PipelineKind::Pca, 2.0, equal_weights(), sectors, 5, {});
        ASSERT_EQ(rows.size(), 5u);
        EXPECT_EQ(rows[0].factor, "PC1");
        EXPECT_EQ(rows[4].factor, "PC5");
        for (std::size_t i = 1; i < 5; ++i) EXPECT_GT(std::abs(rows[0].delta.d_var), std::abs(rows[i].delta.d_var));
    }
}

TEST(Attribution, CrisisRangeSelectsRows) {
    const auto r = one_factor_market(400, 25, 14);
    const DateRange crisis{r.dates[50], r.dates[149]};
    const auto rows = component_attribution(r, PipelineKind::Pca, crisis, 2.0, equal_weights(), 5, {});
    const auto direct = attribute_window(make_window(r, 0, 50, 100), PipelineKind::Pca, 2.0, equal_weights(),
                                         index_sectors(r.tickers, r.sectors), 5, {});
    ASSERT_EQ(rows.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(rows[i].delta.d_var, direct[i].delta.d_var);
    EXPECT_THROW(component_attribution(r, PipelineKind::Pca, {parse_date("1990-01-01"), parse_date("1990-06-01")}, 2.0,
                                       equal_weights(), 5, {}),
                 DataError);
}

TEST(Attribution, AutoencoderRowsLabelled) {
    const auto r = one_factor_market(200, 25, 15);
    const auto rows = attribute_window(make_window(r, 0, 0, 200), PipelineKind::Ae, 2.0, equal_weights(),
                                       index_sectors(r.tickers, r.sectors), 5, fast_train(1, 5));
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[2].factor, "Z3");
    for (const auto& row : rows) EXPECT_TRUE(std::isfinite(row.delta.d_var));
}

TEST(CrisisRows, CoverageRules) {
    const auto r = one_factor_market(100, 5, 1);
    const auto rows = crisis_rows(r.dates, {r.dates[10], r.dates[20]});
    ASSERT_TRUE(rows);
    EXPECT_EQ(rows->first, 10u);
    EXPECT_EQ(rows->second, 20u);
    // Partially outside the data is not covered.
    EXPECT_FALSE(crisis_rows(r.dates, {parse_date("2003-12-01"), r.dates[20]}));
    EXPECT_FALSE(crisis_rows(r.dates, {r.dates[90], parse_date("2030-01-01")}));
}

TEST(CrisisPreset, NamedRanges) {
    const auto gfc = crisis_preset("gfc2008");
    ASSERT_TRUE(gfc);
    EXPECT_EQ(format_date(gfc->first), "2008-09-01");
    EXPECT_EQ(format_date(gfc->last), "2009-03-31");
    const auto covid = crisis_preset("covid2020");
    ASSERT_TRUE(covid);
    EXPECT_EQ(format_date(covid->first), "2020-02-01");
    EXPECT_EQ(format_date(covid->last), "2020-05-31");
    EXPECT_FALSE(crisis_preset("dotcom"));
}

TEST(Seeds, WindowAndMix) {
    EXPECT_EQ(window_seed(42, 0), 42u);
    EXPECT_EQ(window_seed(42, 7), 49u);
    EXPECT_EQ(mix_seed(1, 2), mix_seed(1, 2));
    EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
    EXPECT_NE(mix_seed(42, 0), mix_seed(42, 1));
}

TEST(Histogram, ConservesMassAndEdges) {
    const auto x = testing_support::gaussian_series(1000, 3);
    const auto h = histogram(x, 50);
    ASSERT_EQ(h.edges.size(), 51u);
    EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}), 1000u);
    EXPECT_EQ(h.edges.front(), *std::min_element(x.begin(), x.end()));
    EXPECT_EQ(h.edges.back(), *std::max_element(x.begin(), x.end()));
    for (std::size_t b = 1; b < h.edges.size(); ++b) EXPECT_GT(h.edges[b], h.edges[b - 1]);
}

TEST(Histogram, EdgeCases) {
    const std::vector<double> same(30, 0.25);
    const auto h = histogram(same, 10);
    EXPECT_EQ(h.counts[0], 30u);
    const std::vector<double> two{0.0, 1.0};
    const auto g = histogram(two, 4);
    EXPECT_EQ(g.counts, (std::vector<std::size_t>{1, 0, 0, 1}));
    EXPECT_THROW(histogram(two, 0), ConfigError);
    EXPECT_THROW(histogram(std::vector<double>{}, 3), DataError);
}

TEST(Summarize, MatchesDirectFormulas) {
    const auto x = testing_support::gaussian_series(200, 4, 0.01);
    const auto s = summarize(x);
    const double m = mean_of(x);
    double m2 = 0, m3 = 0;
    for (double v : x) {
        m2 += (v - m) * (v - m);
        m3 += (v - m) * (v - m) * (v - m);
    }
    const double n = 200;
    EXPECT_NEAR(s.mean, m, 1e-15);
    EXPECT_NEAR(s.std, std::sqrt(m2 / (n - 1)), 1e-15);
    const double g1 = (m3 / n) / std::pow(m2 / n, 1.5);
    EXPECT_NEAR(s.skewness, std::sqrt(n * (n - 1)) / (n - 2) * g1, 1e-12);
    auto sorted = x;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(s.quantile_05, sorted[9]);  // ceil(0.05 * 200) = 10th smallest
    EXPECT_THROW(summarize(std::vector<double>(5, 0.0)), DataError);
}

class VaeMonteCarlo : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        market_ = new ReturnMatrix(one_factor_market(400, 25, 16));
        options_ = new VaeOptions;
        options_->window = 200;
        options_->stride = 100;
        options_->train = fast_train(42, 15);
        run_ = new PipelineRun<McResult>(run_vae_mc(*market_, equal_weights(), *options_));
    }
    static void TearDownTestSuite() {
        delete run_;
        delete options_;
        delete market_;
    }
    static ReturnMatrix* market_;
    static VaeOptions* options_;
    static PipelineRun<McResult>* run_;
};

ReturnMatrix* VaeMonteCarlo::market_ = nullptr;
VaeOptions* VaeMonteCarlo::options_ = nullptr;
PipelineRun<McResult>* VaeMonteCarlo::run_ = nullptr;

TEST_F(VaeMonteCarlo, CountsAndMass) {
    ASSERT_EQ(run_->results.size(), 3u);
    EXPECT_TRUE(run_->failures.empty());
    for (const auto& res : run_->results) {
        EXPECT_EQ(res.samples.size(), 1000u);
        EXPECT_EQ(res.hist.counts.size(), 50u);
        EXPECT_EQ(std::accumulate(res.hist.counts.begin(), res.hist.counts.end(), std::size_t{0}), 1000u);
        for (double x : res.samples) EXPECT_TRUE(std::isfinite(x));
        EXPECT_GT(res.summary.std, 0.0);
        EXPECT_EQ(res.first_date, market_->dates[res.start]);
    }
}

TEST_F(VaeMonteCarlo, SeedDeterminism) {
    const auto again = run_vae_mc(*market_, equal_weights(), *options_);
    ASSERT_EQ(again.results.size(), run_->results.size());
    for (std::size_t i = 0; i < again.results.size(); ++i) {
        EXPECT_EQ(again.results[i].samples, run_->results[i].samples);
        EXPECT_EQ(again.results[i].hist.counts, run_->results[i].hist.counts);
    }
}

TEST_F(VaeMonteCarlo, CrossSeedMeansAgree) {
    auto other = *options_;
    other.mc_seed = 4242;
    const auto b = run_vae_mc(*market_, equal_weights(), other);
    ASSERT_EQ(b.results.size(), run_->results.size());
    for (std::size_t i = 0; i < b.results.size(); ++i) {
        const auto& s1 = run_->results[i].summary;
        const auto& s2 = b.results[i].summary;
        EXPECT_NE(run_->results[i].samples, b.results[i].samples);
        const double se = std::sqrt((s1.std * s1.std + s2.std * s2.std) / 1000.0);
        EXPECT_LE(std::abs(s1.mean - s2.mean), 3 * se) << "window " << i;
    }
}

TEST_F(VaeMonteCarlo, SampleCountFollowsOptions) {
    auto opt = *options_;
    opt.samples = 250;
    opt.bins = 7;
    const auto view = make_window(*market_, 0, 0, 200);
    const auto res = mc_window(view, equal_weights(), opt);
    EXPECT_EQ(res.samples.size(), 250u);
    EXPECT_EQ(res.hist.edges.size(), 8u);
    opt.samples = 0;
    EXPECT_THROW(mc_window(view, equal_weights(), opt), ConfigError);
}
