#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "halop/policy_dist.hpp"

using namespace halop;

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double sum(const DiscreteDist& d) { return std::accumulate(d.probs.begin(), d.probs.end(), 0.0); }

LocationGrid three() { return LocationGrid({-1.0, 0.0, 1.0}); }

LocationGrid random_grid(Rng& rng, std::size_t m) {
  std::vector<double> pts;
  double x = rng.uniform(-3.0, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    pts.push_back(x);
    x += rng.uniform(0.1, 1.0);
  }
  return LocationGrid(pts);
}

// Central difference of ln d_index with respect to one parameter.
double fd(DiscreteFamily fam, const LocationGrid& g, GaussianParams p, std::size_t idx, bool wrt_mean,
          const CellSamples* s) {
  const double h = 1e-5;
  GaussianParams a = p;
  GaussianParams b = p;
  (wrt_mean ? a.mean : a.scale) += h;
  (wrt_mean ? b.mean : b.scale) -= h;
  return (evaluate(fam, g, a, s).dist.log_probs[idx] - evaluate(fam, g, b, s).dist.log_probs[idx]) / (2 * h);
}

void expect_close_rel(double analytic, double numeric) {
  EXPECT_LE(std::abs(analytic - numeric), 1e-4 * std::max(1.0, std::abs(numeric))) << analytic << " vs " << numeric;
}

}  // namespace

TEST(LocationGridTest, RejectsBadGrids) {
  EXPECT_THROW(LocationGrid({1.0}), std::invalid_argument);
  EXPECT_THROW(LocationGrid({0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(LocationGrid({1.0, 0.0}), std::invalid_argument);
}

TEST(LocationGridTest, MidpointsAndNearest) {
  const LocationGrid g({0.0, 1.0, 3.0});
  EXPECT_TRUE(std::isinf(g.lower_mid(0)));
  EXPECT_DOUBLE_EQ(g.upper_mid(0), 0.5);
  EXPECT_DOUBLE_EQ(g.lower_mid(2), 2.0);
  EXPECT_DOUBLE_EQ(g.clipped_lower(0), -0.5);
  EXPECT_DOUBLE_EQ(g.clipped_upper(2), 4.0);
  EXPECT_EQ(g.nearest(-10.0), 0u);
  EXPECT_EQ(g.nearest(1.9), 1u);
  EXPECT_EQ(g.nearest(2.1), 2u);
}

TEST(NormalCdf, MatchesErfOracle) {
  for (double x = -8.0; x <= 8.0; x += 0.25) EXPECT_NEAR(normal_cdf(x), phi(x), 1e-7);
  EXPECT_NEAR(log_normal_interval(-0.5, 0.5), std::log(phi(0.5) - phi(-0.5)), 1e-12);
  // Far tail, where the naive difference underflows.
  const double log_q40 = -800.0 - 0.5 * std::log(2 * M_PI) - std::log(40.0);
  EXPECT_NEAR(log_normal_interval(40.0, 41.0), log_q40, 1e-3);
  EXPECT_NEAR(log_normal_interval(-41.0, -40.0), log_q40, 1e-3);
  EXPECT_NEAR(log_normal_interval(3.0, 4.0), std::log(phi(4.0) - phi(3.0)), 1e-10);
}

TEST(DiscGaussianExact, ThreePointExample) {
  const DiscreteDist d = disc_gaussian_exact(three(), {0.0, 1.0});
  EXPECT_NEAR(d.probs[0], phi(-0.5), 1e-12);
  EXPECT_NEAR(d.probs[1], phi(0.5) - phi(-0.5), 1e-12);
  EXPECT_NEAR(d.probs[2], 1.0 - phi(0.5), 1e-12);
  EXPECT_NEAR(d.probs[0], 0.30854, 1e-5);
  EXPECT_NEAR(d.probs[1], 0.38292, 1e-5);
}

TEST(DiscGaussianExact, ConcentratesAsScaleShrinks) {
  const DiscreteDist d = disc_gaussian_exact(three(), {1.0, 1e-4});
  EXPECT_NEAR(d.probs[2], 1.0, 1e-12);
  EXPECT_NEAR(d.probs[0], 0.0, 1e-12);
}

TEST(DiscGaussianExact, SymmetricGridIsPalindromic) {
  const LocationGrid g({-2.0, -0.5, 0.0, 0.5, 2.0});
  const DiscreteDist d = disc_gaussian_exact(g, {0.0, 0.7});
  EXPECT_NEAR(d.probs[0], d.probs[4], 1e-15);
  EXPECT_NEAR(d.probs[1], d.probs[3], 1e-15);
}

TEST(DiscGaussianExact, RejectsNonPositiveScale) {
  EXPECT_THROW(disc_gaussian_exact(three(), {0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(gsoftmax(three(), {0.0, -1.0}), std::invalid_argument);
}

TEST(DiscGaussianSampled, ConvergesToExact) {
  Rng rng(1);
  const DiscreteDist exact = disc_gaussian_exact(three(), {0.0, 1.0});
  const DiscreteDist est = disc_gaussian_sampled(three(), {0.0, 1.0}, 10000, rng);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(std::abs(est.probs[k] - exact.probs[k]), 0.02);
}

TEST(DiscGaussianSampled, FlatDensityIsNearUniformInside) {
  Rng rng(2);
  const LocationGrid g({0.0, 1.0, 2.0, 3.0, 4.0});
  const DiscreteDist d = disc_gaussian_sampled(g, {2.0, 1e3}, 64, rng);
  for (std::size_t k = 2; k < 4; ++k) EXPECT_NEAR(d.probs[k] / d.probs[1], 1.0, 1e-6);
}

TEST(DiscGaussianSampled, Deterministic) {
  Rng a(3);
  Rng b(3);
  const DiscreteDist x = disc_gaussian_sampled(three(), {0.2, 0.8}, 16, a);
  const DiscreteDist y = disc_gaussian_sampled(three(), {0.2, 0.8}, 16, b);
  EXPECT_EQ(x.probs, y.probs);
}

TEST(DiscGaussianSampled, ManualAverageOfDensity) {
  CellSamples s{2, {0.25, 0.75, 0.5, 0.5, 0.0, 0.5}};
  const LocationGrid g({0.0, 1.0, 2.0});
  const GaussianParams p{1.0, 0.2};
  // Cells: [-0.5, 0.5], [0.5, 1.5], [1.5, 2.5]; mean +- 6 scales stays inside.
  auto dens = [&](double x) { return normal_pdf((x - p.mean) / p.scale) / p.scale; };
  const double w0 = (dens(-0.25) + dens(0.25)) / 2;
  const double w1 = (dens(1.0) + dens(1.0)) / 2;
  const double w2 = (dens(1.5) + dens(2.0)) / 2;
  const double z = w0 + w1 + w2;
  const DiscreteDist d = disc_gaussian_sampled(g, p, s);
  EXPECT_NEAR(d.probs[0], w0 / z, 1e-14);
  EXPECT_NEAR(d.probs[1], w1 / z, 1e-14);
  EXPECT_NEAR(d.probs[2], w2 / z, 1e-14);
}

TEST(GSoftmax, ThreePointExample) {
  const DiscreteDist d = gsoftmax(three(), {0.0, 1.0});
  const double e = std::exp(-0.5);
  EXPECT_NEAR(d.probs[0], e / (1 + 2 * e), 1e-12);
  EXPECT_NEAR(d.probs[1], 1 / (1 + 2 * e), 1e-12);
  EXPECT_NEAR(d.probs[2], d.probs[0], 1e-15);
}

TEST(GSoftmax, ArgmaxAtMeanForAnyScale) {
  const LocationGrid g({-3.0, -1.0, 0.0, 2.0, 5.0});
  for (double s : {0.01, 0.3, 1.0, 10.0, 1e3}) EXPECT_EQ(argmax(gsoftmax(g, {2.0, s})), 3u);
}

TEST(Softmax, ShiftInvariant) {
  const std::vector<double> l{0.3, -1.2, 2.0};
  std::vector<double> shifted = l;
  for (double& x : shifted) x += 500.0;  // rounds the inputs near 1e-13
  const DiscreteDist a = softmax(l);
  const DiscreteDist b = softmax(shifted);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a.probs[k], b.probs[k], 1e-12);
}

TEST(Sample, OneHotAlwaysSame) {
  Rng rng(4);
  const DiscreteDist d = softmax(std::vector<double>{0.0, -1e300, -1e300});
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample(d, rng), 0u);
}

TEST(Sample, FairCoinFrequency) {
  Rng rng(5);
  const DiscreteDist d = softmax(std::vector<double>{0.0, 0.0});
  int ones = 0;
  for (int i = 0; i < 1000000; ++i) ones += sample(d, rng) == 1;
  EXPECT_NEAR(ones / 1e6, 0.5, 0.002);
}

TEST(Sample, Reproducible) {
  Rng a(6);
  Rng b(6);
  const DiscreteDist d = disc_gaussian_exact(three(), {0.0, 1.0});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample(d, a), sample(d, b));
}

TEST(LogProbEntropy, Values) {
  DiscreteDist d;
  d.probs = {0.25, 0.75};
  d.log_probs = {std::log(0.25), std::log(0.75)};
  EXPECT_NEAR(log_prob(d, 1), -0.28768, 1e-5);
  EXPECT_NEAR(entropy(softmax(std::vector<double>(7, 1.0))), std::log(7.0), 1e-12);
  DiscreteDist one_hot;
  one_hot.probs = {1.0, 0.0};
  one_hot.log_probs = {0.0, -std::numeric_limits<double>::infinity()};
  EXPECT_EQ(entropy(one_hot), 0.0);
  EXPECT_TRUE(std::isinf(log_prob(one_hot, 1)));
  EXPECT_LT(log_prob(one_hot, 1), 0.0);
}

TEST(Distributions, SumToOneNonNegative) {
  Rng rng(7);
  for (int c = 0; c < 200; ++c) {
    const LocationGrid g = random_grid(rng, 2 + rng.below(30));
    const GaussianParams p{rng.uniform(-4.0, 4.0), rng.uniform(0.01, 5.0)};
    const CellSamples s = draw_cell_samples(g.size(), 8, rng);
    for (const DiscreteDist& d : {disc_gaussian_exact(g, p), disc_gaussian_sampled(g, p, s), gsoftmax(g, p)}) {
      EXPECT_NEAR(sum(d), 1.0, 1e-9);
      for (double x : d.probs) EXPECT_GE(x, 0.0);
    }
  }
}

TEST(Gradients, GSoftmaxStationaryAtMean) {
  EXPECT_NEAR(grad_log_prob(DiscreteFamily::GSoftmax, three(), {0.0, 0.7}, 1).d_mean, 0.0, 1e-12);
}

TEST(Gradients, GSoftmaxMeanGradientScalesInversely) {
  const LocationGrid g({-1.0, 0.0, 1.0, 2.5});
  const LocationGrid g3({-3.0, 0.0, 3.0, 7.5});
  const ParamGrad a = grad_log_prob(DiscreteFamily::GSoftmax, g, {0.4, 0.8}, 2);
  const ParamGrad b = grad_log_prob(DiscreteFamily::GSoftmax, g3, {1.2, 2.4}, 2);
  EXPECT_NEAR(b.d_mean, a.d_mean / 3.0, 1e-12);
  EXPECT_NEAR(b.d_scale, a.d_scale / 3.0, 1e-12);
}

TEST(Gradients, MatchFiniteDifferences) {
  Rng rng(8);
  for (int c = 0; c < 30; ++c) {
    const LocationGrid g = random_grid(rng, 2 + rng.below(8));
    const GaussianParams p{rng.uniform(-2.0, 1.0), rng.uniform(0.3, 2.0)};
    const CellSamples s = draw_cell_samples(g.size(), 16, rng);
    for (auto fam : {DiscreteFamily::Exact, DiscreteFamily::Sampled, DiscreteFamily::GSoftmax}) {
      const CellSamples* sp = fam == DiscreteFamily::Sampled ? &s : nullptr;
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (evaluate(fam, g, p, sp).dist.probs[k] < 1e-8) continue;
        const ParamGrad an = grad_log_prob(fam, g, p, k, sp);
        expect_close_rel(an.d_mean, fd(fam, g, p, k, true, sp));
        expect_close_rel(an.d_scale, fd(fam, g, p, k, false, sp));
      }
    }
  }
}

TEST(Gradients, EntropyMatchesFiniteDifferences) {
  Rng rng(9);
  for (int c = 0; c < 20; ++c) {
    const LocationGrid g = random_grid(rng, 3 + rng.below(6));
    const GaussianParams p{rng.uniform(-2.0, 1.0), rng.uniform(0.3, 2.0)};
    for (auto fam : {DiscreteFamily::Exact, DiscreteFamily::GSoftmax}) {
      const double h = 1e-5;
      const ParamGrad an = evaluate(fam, g, p).grad_entropy();
      const double dm = (entropy(evaluate(fam, g, {p.mean + h, p.scale}).dist) -
                         entropy(evaluate(fam, g, {p.mean - h, p.scale}).dist)) /
                        (2 * h);
      const double ds = (entropy(evaluate(fam, g, {p.mean, p.scale + h}).dist) -
                         entropy(evaluate(fam, g, {p.mean, p.scale - h}).dist)) /
                        (2 * h);
      expect_close_rel(an.d_mean, dm);
      expect_close_rel(an.d_scale, ds);
    }
  }
}

TEST(Gradients, LogitGradients) {
  const std::vector<double> l{0.1, -0.7, 1.3, 0.0};
  const DiscreteDist d = softmax(l);
  const auto g = grad_log_prob_logits(d, 2);
  const auto ge = grad_entropy_logits(d);
  const double h = 1e-6;
  for (std::size_t j = 0; j < l.size(); ++j) {
    auto a = l;
    auto b = l;
    a[j] += h;
    b[j] -= h;
    EXPECT_NEAR(g[j], (softmax(a).log_probs[2] - softmax(b).log_probs[2]) / (2 * h), 1e-8);
    EXPECT_NEAR(ge[j], (entropy(softmax(a)) - entropy(softmax(b))) / (2 * h), 1e-8);
  }
}

TEST(Gaussian, LogProbEntropyAndGradients) {
  const GaussianParams p{0.3, 1.7};
  const double x = -0.4;
  const double z = (x - p.mean) / p.scale;
  EXPECT_NEAR(gaussian_log_prob(x, p), -0.5 * z * z - std::log(p.scale) - 0.5 * std::log(2 * M_PI), 1e-14);
  EXPECT_NEAR(gaussian_entropy(p), 0.5 * std::log(2 * M_PI * M_E * p.scale * p.scale), 1e-14);
  const double h = 1e-6;
  const ParamGrad g = gaussian_grad_log_prob(x, p);
  EXPECT_NEAR(g.d_mean, (gaussian_log_prob(x, {p.mean + h, p.scale}) - gaussian_log_prob(x, {p.mean - h, p.scale})) / (2 * h),
              1e-8);
  EXPECT_NEAR(g.d_scale, (gaussian_log_prob(x, {p.mean, p.scale + h}) - gaussian_log_prob(x, {p.mean, p.scale - h})) / (2 * h),
              1e-8);
  EXPECT_NEAR(gaussian_grad_entropy(p).d_scale, 1.0 / p.scale, 1e-14);
  EXPECT_EQ(gaussian_grad_entropy(p).d_mean, 0.0);
}
