#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "uncplab/thick_set.hpp"

using namespace uncplab;

namespace {

// Brute-force relative measure over every grid-centred ball, no prefix sums.
double brute_force_delta(const ThickSet& set, double radius) {
  const Grid& g = set.grid;
  const int n = g.points();
  const double h = g.spacing();
  double best = 1.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto c = g.unravel(i);
    std::size_t hits = 0, cells = 0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const auto p = g.unravel(j);
      double d2 = 0.0;
      for (int a = 0; a < g.dim(); ++a) {
        int m = std::abs(p[a] - c[a]);
        m = std::min(m, n - m);
        d2 += (m * h) * (m * h);
      }
      if (std::sqrt(d2) < radius) {
        ++cells;
        hits += set.contains(j) ? 1 : 0;
      }
    }
    best = std::min(best, static_cast<double>(hits) / static_cast<double>(cells));
  }
  return best;
}

ThickSet shifted(const ThickSet& s, int shift) {
  ThickSet out(s.grid);
  const std::size_t n = s.indicator.size();
  for (std::size_t i = 0; i < n; ++i) out.indicator[(i + static_cast<std::size_t>(shift)) % n] = s.indicator[i];
  return out;
}

}  // namespace

TEST(VerifyThickness, FullAndEmpty) {
  const Grid g(1, 16.0, 128);
  EXPECT_DOUBLE_EQ(verify_thickness(ThickSet::full(g), 1.0), 1.0);
  EXPECT_DOUBLE_EQ(verify_thickness(ThickSet::empty(g), 1.0), 0.0);
  const Grid g2(2, 8.0, 32);
  EXPECT_DOUBLE_EQ(verify_thickness(ThickSet::full(g2), 1.0), 1.0);
}

TEST(VerifyThickness, PeriodicHalfIntervals) {
  const Grid g(1, 16.0, 512);
  const ThickSet set = generate_set(g, PeriodicSetParams{0.5, 1.0, 1.0});
  const double delta = verify_thickness(set, 1.0);
  EXPECT_NEAR(delta, 0.5, 2.0 * g.spacing());
  EXPECT_DOUBLE_EQ(delta, brute_force_delta(set, 1.0));
}

TEST(VerifyThickness, MatchesBruteForceIn2D) {
  const Grid g(2, 8.0, 32);
  const ThickSet set = generate_set(g, RandomSetParams{0.4, 3, 0.5, std::nullopt});
  EXPECT_DOUBLE_EQ(verify_thickness(set, 1.1), brute_force_delta(set, 1.1));
  const ThickSet periodic = generate_set(g, PeriodicSetParams{0.3, 2.0, std::nullopt});
  EXPECT_DOUBLE_EQ(verify_thickness(periodic, 1.7), brute_force_delta(periodic, 1.7));
}

TEST(VerifyThickness, RejectsRadiusBelowResolution) {
  const Grid g(1, 16.0, 64);
  EXPECT_THROW(verify_thickness(ThickSet::full(g), g.spacing()), InvalidArgument);
  EXPECT_THROW(verify_thickness(ThickSet::full(g), 9.0), InvalidArgument);
}

TEST(VerifyThickness, MonotoneInSet) {
  const Grid g(1, 16.0, 256);
  const ThickSet small = generate_set(g, PeriodicSetParams{0.25, 1.0, std::nullopt});
  const ThickSet large = generate_set(g, PeriodicSetParams{0.5, 1.0, std::nullopt});
  for (double r : {0.5, 1.0, 2.5})
    EXPECT_LE(verify_thickness(small, r), verify_thickness(large, r));
}

TEST(VerifyThickness, PeriodicLatticeMatchesWindowFormula) {
  // Least covered measure of a window of length l over [k, k + gamma) cells:
  // gamma * floor(l) + max(0, frac(l) - (1 - gamma)).
  const Grid g(1, 32.0, 512);
  const double gamma = 0.5;
  const ThickSet set = generate_set(g, PeriodicSetParams{gamma, 1.0, std::nullopt});
  for (double r = 1.0; r <= 4.0; r += 0.125) {
    const double l = 2.0 * r;
    const double covered = gamma * std::floor(l) + std::max(0.0, l - std::floor(l) - (1.0 - gamma));
    EXPECT_NEAR(verify_thickness(set, r), covered / l, 2.0 * g.spacing()) << "R = " << r;
  }
  // Along whole multiples of the period the value is exactly gamma.
  for (double r = 1.0; r <= 4.0; r += 0.5) EXPECT_NEAR(verify_thickness(set, r), gamma, 2.0 * g.spacing());
}

TEST(VerifyThickness, TranslationInvariant) {
  const Grid g(1, 16.0, 256);
  const ThickSet set = generate_set(g, RandomSetParams{0.5, 11, 0.3, std::nullopt});
  const double base = verify_thickness(set, 1.5);
  for (int shift : {1, 17, 100})
    EXPECT_NEAR(verify_thickness(shifted(set, shift), 1.5), base, 1e-12);
}

TEST(GenerateSet, FullPeriodicSet) {
  const Grid g(1, 16.0, 128);
  const ThickSet set = generate_set(g, PeriodicSetParams{1.0, 1.0, std::nullopt});
  EXPECT_EQ(set.count(), g.size());
  ASSERT_TRUE(set.verified);
  EXPECT_DOUBLE_EQ(set.verified->delta, 1.0);
}

TEST(GenerateSet, QuarterFillingWithPeriodTwo) {
  const Grid g(1, 16.0, 512);
  const ThickSet set = generate_set(g, PeriodicSetParams{0.25, 2.0, std::nullopt});
  ASSERT_TRUE(set.verified);
  EXPECT_DOUBLE_EQ(set.verified->radius, 2.0);
  EXPECT_NEAR(set.verified->delta, 0.25, 2.0 * g.spacing());
  EXPECT_DOUBLE_EQ(set.verified->delta, brute_force_delta(set, 2.0));
  EXPECT_NEAR(set.measure(), 4.0, 1e-12);
  EXPECT_NEAR(set.geometric_measure(), 4.0, 1e-12);
}

TEST(GenerateSet, RandomIsDeterministic) {
  const Grid g(2, 8.0, 32);
  const RandomSetParams p{0.3, 7, 0.4, std::nullopt};
  EXPECT_EQ(generate_set(g, p).indicator, generate_set(g, p).indicator);
  RandomSetParams other = p;
  other.seed = 8;
  EXPECT_NE(generate_set(g, p).indicator, generate_set(g, other).indicator);
}

TEST(GenerateSet, RejectsInvalidParameters) {
  const Grid g(1, 16.0, 64);
  EXPECT_THROW(generate_set(g, PeriodicSetParams{1.5, 1.0, std::nullopt}), InvalidArgument);
  EXPECT_THROW(generate_set(g, PeriodicSetParams{0.0, 1.0, std::nullopt}), InvalidArgument);
  EXPECT_THROW(generate_set(g, PeriodicSetParams{0.5, 5.0, std::nullopt}), InvalidArgument);
  EXPECT_THROW(generate_set(g, RandomSetParams{0.0, 1, 0.5, std::nullopt}), InvalidArgument);
  // Balls far below the grid spacing miss every node.
  EXPECT_THROW(generate_set(g, RandomSetParams{1e-6, 5, 1e-3, 2.0}), InvalidArgument);
}

TEST(OmegaMoments, PlaneWaveIntegralsAreExact) {
  const Grid g(1, 2 * std::numbers::pi, 32);
  const ThickSet half = ThickSet::from_boxes(g, {Box{{0.0, 0, 0}, {std::numbers::pi, 0, 0}}});
  const OmegaMoments m(half);
  EXPECT_NEAR(std::abs(m({0, 0, 0}) - cplx(std::numbers::pi)), 0.0, 1e-14);
  // integral_0^pi e^{ix} dx = 2i
  EXPECT_NEAR(std::abs(m({1, 0, 0}) - cplx(0.0, 2.0)), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(m({2, 0, 0})), 0.0, 1e-14);
}

TEST(ObservedInnerProduct, ExactForTrigonometricPolynomials) {
  const Grid g(1, 2 * std::numbers::pi, 64);
  const ThickSet half = ThickSet::from_boxes(g, {Box{{0.0, 0, 0}, {std::numbers::pi, 0, 0}}});
  const Field f = Field::from_function(g, [](const Point& x) { return std::cos(x[0]) + 0.5; });
  // integral_0^pi (cos x + 1/2)^2 dx = pi/2 + pi/4
  EXPECT_NEAR(observed_mass(f, half), 0.75 * std::numbers::pi, 1e-13);
}

TEST(ObservedInnerProduct, NodalFallbackWithoutGeometry) {
  const Grid g(1, 4.0, 16);
  ThickSet set(g);
  for (int i = 0; i < 8; ++i) set.indicator[i] = 1;
  EXPECT_NEAR(observed_mass(Field::constant(g, 1.0), set), 2.0, 1e-14);
}

TEST(ObservedInnerProduct, FullSetMatchesInnerProduct) {
  const Grid g(2, 3.0, 8);
  const Field f = Field::from_function(g, [](const Point& x) { return cplx(std::sin(x[0]), x[1]); });
  const Field h = Field::from_function(g, [](const Point& x) { return cplx(x[0] * x[1], 1.0); });
  const cplx a = observed_inner_product(f, h, ThickSet::full(g));
  const cplx b = weighted_inner_product(f, h);
  EXPECT_NEAR(std::abs(a - b), 0.0, 1e-12 * std::abs(b));
}

TEST(ThickSetIo, RunLengthRoundTrip) {
  const Grid g(1, 16.0, 128);
  const ThickSet set = generate_set(g, PeriodicSetParams{0.5, 2.0, std::nullopt});
  std::stringstream ss;
  write_thick_set_rle(ss, set);
  EXPECT_EQ(ss.str().rfind("# dim=1,L=16,N=128,R=2,delta=", 0), 0u);
  const ThickSet back = read_thick_set_rle(ss);
  EXPECT_EQ(back.indicator, set.indicator);
  ASSERT_TRUE(back.verified);
  EXPECT_DOUBLE_EQ(back.verified->delta, set.verified->delta);
}

TEST(ThickSetIo, BitmaskRoundTrip) {
  const Grid g(2, 8.0, 16);
  const ThickSet set = generate_set(g, RandomSetParams{0.5, 2, 0.5, std::nullopt});
  std::stringstream ss;
  write_thick_set_bitmask(ss, set);
  const ThickSet back = read_thick_set_bitmask(ss);
  EXPECT_EQ(back.indicator, set.indicator);
  EXPECT_TRUE(back.grid == g);
  EXPECT_DOUBLE_EQ(back.verified->radius, set.verified->radius);
}
