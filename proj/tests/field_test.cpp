#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "uncplab/field.hpp"
#include "uncplab/field_io.hpp"
#include "uncplab/hash.hpp"
#include "uncplab/quadrature.hpp"

using namespace uncplab;

namespace {

constexpr double kPi = std::numbers::pi;

Field random_field(const Grid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Field f(g);
  for (auto& v : f.values) v = {n(rng), n(rng)};
  return f;
}

Field flat_band(const Field& f, double mu) {
  Field c = frequency_transform(f, Direction::forward);
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!within_band(c.grid.frequency_norm(i), mu)) c[i] = 0.0;
  return frequency_transform(c, Direction::inverse);
}

Field plane_wave(const Grid& g, int k) {
  return Field::from_function(g, [k](const Point& x) { return std::exp(cplx{0.0, k * x[0]}); });
}

}  // namespace

TEST(Grid, OneDimensionalLattice) {
  const Grid g = make_grid(1, 2 * kPi, 64);
  EXPECT_DOUBLE_EQ(g.spacing(), 2 * kPi / 64);
  EXPECT_DOUBLE_EQ(g.spacing() * g.points(), g.length());
  EXPECT_EQ(g.wavenumber(0), 0);
  EXPECT_EQ(g.wavenumber(31), 31);
  EXPECT_EQ(g.wavenumber(32), -32);
  EXPECT_EQ(g.wavenumber(63), -1);
  EXPECT_NEAR(g.frequency(5), 5.0, 1e-15);
}

TEST(Grid, NodeCount) { EXPECT_EQ(make_grid(2, 2 * kPi, 8).size(), 64u); }

TEST(Grid, RejectsBadParameters) {
  EXPECT_THROW(make_grid(1, 2 * kPi, 63), InvalidArgument);
  EXPECT_THROW(make_grid(4, 1.0, 8), InvalidArgument);
  EXPECT_THROW(make_grid(1, -1.0, 8), InvalidArgument);
  EXPECT_THROW(make_grid(1, 1.0, 2), InvalidArgument);
}

TEST(Grid, RavelRoundTrip) {
  const Grid g(3, 1.0, 8);
  for (std::size_t i = 0; i < g.size(); i += 7) EXPECT_EQ(g.ravel(g.unravel(i)), i);
}

TEST(FrequencyTransform, PlaneWave) {
  const Grid g(1, 2 * kPi, 64);
  const Field c = frequency_transform(plane_wave(g, 3), Direction::forward);
  for (int i = 0; i < 64; ++i) EXPECT_NEAR(std::abs(c[i] - cplx(i == 3 ? 1.0 : 0.0)), 0.0, 1e-14);
}

TEST(FrequencyTransform, Constant) {
  const Grid g(1, 2 * kPi, 64);
  const Field c = frequency_transform(Field::constant(g, 1.0), Direction::forward);
  EXPECT_NEAR(std::abs(c[0] - 1.0), 0.0, 1e-15);
  for (int i = 1; i < 64; ++i) EXPECT_NEAR(std::abs(c[i]), 0.0, 1e-15);
}

TEST(FrequencyTransform, RoundTripAndParseval) {
  for (int d = 1; d <= 3; ++d) {
    const Grid g(d, 3.0, d == 3 ? 8 : 32);
    const Field f = random_field(g, 11 + d);
    const Field c = frequency_transform(f, Direction::forward);
    const Field back = frequency_transform(c, Direction::inverse);
    double err = 0.0, scale = 0.0, coeff = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      err = std::max(err, std::abs(back[i] - f[i]));
      scale = std::max(scale, std::abs(f[i]));
      coeff += std::norm(c[i]);
    }
    EXPECT_LE(err / scale, 1e-12);
    const double norm2 = std::pow(l2_norm(f), 2);
    EXPECT_NEAR(norm2, coeff * g.volume(), 1e-12 * norm2);
  }
}

TEST(FrequencyTransform, DomainTagIsChecked) {
  const Grid g(1, 1.0, 8);
  EXPECT_THROW(frequency_transform(Field(g), Direction::inverse), InvalidArgument);
}

TEST(InnerProduct, Volume) {
  const Grid g(1, 2 * kPi, 64);
  EXPECT_NEAR(weighted_inner_product(Field::constant(g, 1.0), Field::constant(g, 1.0)).real(),
              2 * kPi, 1e-13);
}

TEST(InnerProduct, Orthogonality) {
  const Grid g(1, 2 * kPi, 64);
  EXPECT_NEAR(std::abs(weighted_inner_product(plane_wave(g, 1), plane_wave(g, 2))), 0.0, 1e-12);
}

TEST(InnerProduct, CosineWeightIntegratesToVolume) {
  // The trapezoid rule is exact on trigonometric polynomials of degree < N.
  const Grid g(1, 2 * kPi, 64);
  const Field w = Field::from_function(g, [](const Point& x) { return 1.0 + 0.5 * std::cos(x[0]); });
  const Field one = Field::constant(g, 1.0);
  EXPECT_NEAR(weighted_inner_product(one, one, w).real(), 2 * kPi, 1e-12);
}

TEST(InnerProduct, HermitianAndPositive) {
  const Grid g(2, 1.5, 16);
  const Field f = random_field(g, 1), h = random_field(g, 2);
  Field w(g);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (auto& v : w.values) v = u(rng);
  const cplx fh = weighted_inner_product(f, h, w), hf = weighted_inner_product(h, f, w);
  EXPECT_NEAR(std::abs(fh - std::conj(hf)), 0.0, 1e-12 * std::abs(fh));
  EXPECT_GT(weighted_inner_product(f, f, w).real(), 0.0);
  EXPECT_NEAR(weighted_inner_product(f, f, w).imag(), 0.0, 1e-14);
}

TEST(InnerProduct, RejectsGridMismatchAndBadWeight) {
  const Grid a(1, 1.0, 8), b(1, 1.0, 16);
  EXPECT_THROW(weighted_inner_product(Field(a), Field(b)), InvalidArgument);
  const Field w = Field::constant(a, -1.0);
  EXPECT_THROW(weighted_inner_product(Field(a), Field(a), w), InvalidArgument);
}

TEST(TubeSlice, SingleMode) {
  const Grid g(1, 2 * kPi, 64);
  const double y = 0.1;
  EXPECT_NEAR(tube_slice_norm(plane_wave(g, 3), std::span<const double>(&y, 1), 3.0),
              std::exp(-0.3) * std::sqrt(2 * kPi), 1e-12);
}

TEST(TubeSlice, ZeroOffsetIsNorm) {
  const Grid g(1, 2 * kPi, 64);
  const Field f = flat_band(random_field(g, 5), 6.0);
  const double y = 0.0;
  EXPECT_NEAR(tube_slice_norm(f, std::span<const double>(&y, 1), 6.0), l2_norm(f), 1e-12 * l2_norm(f));
}

TEST(TubeSlice, TwoModesMatchDirectSum) {
  const Grid g(1, 2 * kPi, 64);
  const Field f = Field::from_function(g, [](const Point& x) { return 2.0 * std::cos(3.0 * x[0]); });
  const double y = 0.2;
  const double direct = std::sqrt(2 * kPi * (std::exp(-2 * 3 * y) + std::exp(2 * 3 * y)));
  EXPECT_NEAR(tube_slice_norm(f, std::span<const double>(&y, 1), 3.0), direct, 1e-12 * direct);
}

TEST(TubeSlice, BoundHoldsOnRandomBandLimitedFields) {
  const Grid g(2, 2 * kPi, 16);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  for (int trial = 0; trial < 10; ++trial) {
    const Field f = flat_band(random_field(g, 100 + trial), 4.0);
    const double y[2] = {u(rng), u(rng)};
    const double bound = std::exp(4.0 * std::hypot(y[0], y[1])) * l2_norm(f);
    EXPECT_LE(tube_slice_norm(f, y, 4.0), bound + 1e-9);
  }
}

TEST(TubeSlice, RejectsFieldsOutsideBand) {
  const Grid g(1, 2 * kPi, 64);
  const double y = 0.1;
  try {
    tube_slice_norm(plane_wave(g, 5), std::span<const double>(&y, 1), 3.0);
    FAIL() << "expected a band-limit error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("tail mass"), std::string::npos);
  }
}

TEST(TubeSlice, ValuesAgreeWithNorm) {
  const Grid g(1, 2 * kPi, 64);
  const Field f = flat_band(random_field(g, 6), 5.0);
  const Point y{0.3, 0.0, 0.0};
  const double n = l2_norm(tube_slice_values(f, y, 5.0));
  EXPECT_NEAR(n, tube_slice_norm(f, std::span<const double>(y.data(), 1), 5.0), 1e-12 * n);
}

TEST(TubeGeometry, RejectsOffsetsOutsideTube) {
  EXPECT_THROW(TubeGeometry(1, 0.5, {{0.5, 0.0, 0.0}}), InvalidArgument);
  EXPECT_THROW(TubeGeometry(1, 0.0, {}), InvalidArgument);
}

TEST(TubeGeometry, QuadratureMeasuresBall) {
  const auto interval = TubeGeometry::quadrature(1, 0.7);
  EXPECT_NEAR(std::accumulate(interval.weights.begin(), interval.weights.end(), 0.0), 1.4, 1e-13);
  const auto disk = TubeGeometry::quadrature(2, 0.7);
  EXPECT_NEAR(std::accumulate(disk.weights.begin(), disk.weights.end(), 0.0), kPi * 0.49, 1e-12);
  const auto ball = TubeGeometry::quadrature(3, 0.7, 8);
  EXPECT_NEAR(std::accumulate(ball.weights.begin(), ball.weights.end(), 0.0),
              4.0 / 3.0 * kPi * std::pow(0.7, 3), 1e-12);
}

TEST(TubeIntegral, SingleModeClosedForm) {
  // |e^{i3(x+iy)}|^2 = e^{-6y}; integral over |y| < a is sinh(6a)/3 per unit length.
  const Grid g(1, 2 * kPi, 64);
  const double a = 0.4;
  const double got = tube_integral(plane_wave(g, 3), TubeGeometry::quadrature(1, a), 3.0);
  EXPECT_NEAR(got, 2 * kPi * std::sinh(6 * a) / 3.0, 1e-11);
}

TEST(SpectralDerivative, DifferentiatesPlaneWave) {
  const Grid g(1, 2 * kPi, 32);
  const Field d = spectral_derivative(plane_wave(g, 4), 0);
  const Field expect = plane_wave(g, 4);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(std::abs(d[i] - cplx(0, 4) * expect[i]), 0.0, 1e-12);
}

TEST(Quadrature, GaussLegendreExactness) {
  const auto rule = gauss_legendre(10, 0.0, 2.0);
  double s = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * std::pow(rule.nodes[i], 19);
  EXPECT_NEAR(s, std::pow(2.0, 20) / 20.0, 1e-9);
  const auto one = gauss_legendre(1);
  EXPECT_NEAR(one.nodes[0], 0.0, 1e-15);
  EXPECT_NEAR(one.weights[0], 2.0, 1e-15);
}

TEST(FieldIo, BinaryRoundTrip) {
  const Grid g(2, 1.25, 8);
  const Field f = random_field(g, 4);
  std::stringstream ss;
  write_field_binary(ss, f);
  const Field back = read_field_binary(ss);
  EXPECT_TRUE(back.grid == g);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(back[i], f[i]);
}

TEST(FieldIo, CsvHeaderAndRows) {
  const Grid g(1, 1.0, 4);
  std::ostringstream os;
  write_field_csv(os, Field::constant(g, cplx(1.0, -2.0)));
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, 8), "x,re,im\n");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 5);
  EXPECT_THROW(write_field_csv(os, Field(Grid(2, 1.0, 4))), InvalidArgument);
}

TEST(ContentHash, StableAndSensitive) {
  ContentHash a, b, c;
  a.add("grid").add(1.5);
  b.add("grid").add(1.5);
  c.add("grid").add(1.5000001);
  EXPECT_EQ(a.hex(), b.hex());
  EXPECT_NE(a.hex(), c.hex());
  EXPECT_EQ(a.hex().size(), 16u);
}
