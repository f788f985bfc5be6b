#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "deload/weibull.hpp"
#include "oracles.hpp"

using namespace deload;
using deload::testing::weibull_draws;

namespace {

const double kInvE = std::exp(-1.0);

// Composite Simpson rule; independent of the library code paths.
template <class F>
double simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}


}  // namespace

TEST(WeibullPdf, Anchors) {
  EXPECT_EQ(weibull_pdf({1, 1, 0}, 0.0), 0.0);
  EXPECT_NEAR(weibull_pdf({1, 1, 0}, 1.0), kInvE, 1e-15);
  EXPECT_NEAR(weibull_pdf({2, 2, 1}, 3.0), kInvE, 1e-15);
  EXPECT_EQ(weibull_pdf({2, 2, 1}, 0.5), 0.0);
}

TEST(WeibullSurvival, Anchors) {
  EXPECT_EQ(weibull_survival({1.7, 3.0, 2.0}, 2.0), 1.0);
  EXPECT_EQ(weibull_survival({1.7, 3.0, 2.0}, -4.0), 1.0);
  EXPECT_NEAR(weibull_survival({1, 1, 0}, 1.0), kInvE, 1e-15);
  EXPECT_NEAR(weibull_survival({1.5, 8, 1}, 9.0), kInvE, 1e-15);
}

TEST(WeibullQuantile, AnchorsAndDomain) {
  EXPECT_EQ(weibull_quantile({1.3, 4.0, 0.7}, 0.0), 0.7);
  EXPECT_NEAR(weibull_quantile({1, 1, 0}, 1.0 - kInvE), 1.0, 1e-12);
  EXPECT_THROW(weibull_quantile({1, 1, 0}, 1.0), std::domain_error);
  EXPECT_THROW(weibull_quantile({1, 1, 0}, -0.1), std::domain_error);
}

TEST(WeibullProperties, QuantileInvertsSurvival) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shape(0.3, 4.0), scale(0.5, 50.0), loc(0.0, 5.0), q(0.0, 0.999);
  for (int i = 0; i < 100; ++i) {
    const WeibullParams p{shape(rng), scale(rng), loc(rng)};
    const double prob = q(rng);
    EXPECT_NEAR(weibull_survival(p, weibull_quantile(p, prob)), 1.0 - prob, 1e-9);
  }
}

TEST(WeibullProperties, SurvivalMonotoneAndBounded) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> shape(0.3, 4.0), scale(0.5, 50.0), loc(0.0, 5.0);
  for (int i = 0; i < 50; ++i) {
    const WeibullParams p{shape(rng), scale(rng), loc(rng)};
    double prev = 1.0;
    for (double t = -1.0; t < p.location + 40 * p.scale; t += p.scale / 16) {
      const double s = weibull_survival(p, t);
      EXPECT_LE(s, prev);
      EXPECT_GE(s, 0.0);
      if (t <= p.location) {
        EXPECT_EQ(s, 1.0);
      }
      prev = s;
    }
    EXPECT_NEAR(weibull_survival(p, p.location + 1e3 * p.scale), std::exp(-std::pow(1e3, p.shape)), 1e-15);
  }
}

TEST(WeibullProperties, PdfIntegratesToOne) {
  std::mt19937_64 rng(13);
  // Shapes >= 1 keep the density bounded at the location; the t = lo + (hi - lo) x^4
  // substitution smooths its t^(shape - 1) kink so Simpson converges.
  std::uniform_real_distribution<double> shape(1.0, 4.0), scale(0.5, 20.0), loc(0.0, 5.0);
  for (int i = 0; i < 20; ++i) {
    const WeibullParams p{shape(rng), scale(rng), loc(rng)};
    const double hi = p.location + p.scale * std::pow(60.0, 1.0 / p.shape);
    const double span = hi - p.location;
    const double area = simpson(
        [&](double x) { return weibull_pdf(p, p.location + span * x * x * x * x) * 4.0 * x * x * x * span; }, 0.0, 1.0,
        200000);
    EXPECT_NEAR(area, 1.0, 1e-6) << "shape=" << p.shape;
  }
}

TEST(FitWeibull, RecoversKnownParameters) {
  const WeibullParams truth{1.5, 8.0, 1.0};
  const auto xs = weibull_draws(truth, 5000, 42);
  const auto fit = fit_weibull_lse(xs);
  EXPECT_NEAR(fit.params.shape / truth.shape, 1.0, 0.05);
  EXPECT_NEAR(fit.params.scale / truth.scale, 1.0, 0.05);
  EXPECT_NEAR(fit.params.location, truth.location, 0.3);
  EXPECT_GT(fit.r2, 0.99);
  EXPECT_EQ(fit.n_samples, 5000u);
}

TEST(FitWeibull, NoiselessMedianRankGrid) {
  // Samples at the median-rank quantiles of Weibull(1, 1, 0) make the regression exact.
  const std::size_t n = 200;
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = (static_cast<double>(i + 1) - 0.3) / (static_cast<double>(n) + 0.4);
    xs[i] = -std::log(1.0 - f);
  }
  const auto fit = fit_weibull_lse(xs);
  EXPECT_NEAR(fit.params.shape, 1.0, 1e-6);
  EXPECT_NEAR(fit.params.scale, 1.0, 1e-6);
  EXPECT_NEAR(fit.params.location, 0.0, 1e-6);
}

TEST(FitWeibull, InsufficientData) {
  const auto xs = weibull_draws({1, 1, 0}, 10, 1);
  try {
    (void)fit_weibull_lse(xs);
    FAIL() << "expected FitError";
  } catch (const FitError& e) {
    EXPECT_EQ(e.reason(), FitFailure::insufficient_data);
  }
}

TEST(FitWeibull, DegenerateSamples) {
  const std::vector<double> xs(100, 4.0);
  try {
    (void)fit_weibull_lse(xs);
    FAIL() << "expected FitError";
  } catch (const FitError& e) {
    EXPECT_EQ(e.reason(), FitFailure::degenerate);
  }
}

TEST(FitWeibull, CensorCapsSamples) {
  auto xs = weibull_draws({1.2, 10.0, 0.0}, 2000, 5);
  const auto fit = fit_weibull_lse(xs, 15.0, FitConfig{.min_r2 = 0.0});
  EXPECT_TRUE(fit.params.valid());
  // Capping at 15 s piles mass at the cap, which the regression sees as a shorter tail.
  const auto uncapped = fit_weibull_lse(xs);
  EXPECT_LT(fit.params.scale, uncapped.params.scale * 1.05);
}

TEST(FitWeibull, ErrorShrinksWithSampleCount) {
  const WeibullParams truth{1.5, 8.0, 1.0};
  double prev = 1e9;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    double err = 0.0;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const auto fit = fit_weibull_lse(weibull_draws(truth, n, 1000 + seed));
      err += std::abs(fit.params.shape / truth.shape - 1.0) + std::abs(fit.params.scale / truth.scale - 1.0);
    }
    EXPECT_LT(err, prev) << "n=" << n;
    prev = err;
  }
}
