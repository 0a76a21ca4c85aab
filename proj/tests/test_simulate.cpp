#include "tenreg/errors.hpp"
#include "tenreg/io.hpp"
#include "tenreg/simulate.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace tenreg;

namespace {

// 1 - S on the unit-time separable solution: product of two sine series.
double series(double alpha, double x, double t, double side) {
  double s = 0.0;
  for (int k = 1; k < 4000; k += 2) {
    const double w = k * std::numbers::pi / side;
    s += 4.0 / (k * std::numbers::pi) * std::sin(w * x) * std::exp(-alpha * w * w * t);
  }
  return s;
}

double analytic(double alpha, const HeatSimConfig& c, Index j, Index k, double t) {
  const double x = c.side * static_cast<double>(j + 1) / static_cast<double>(c.grid + 1);
  const double y = c.side * static_cast<double>(k + 1) / static_cast<double>(c.grid + 1);
  return 1.0 - series(alpha, x, t, c.side) * series(alpha, y, t, c.side);
}

HeatSimConfig small_config() {
  HeatSimConfig c;
  c.grid = 7;
  c.frames = 5;
  c.refine = 24;  // spacing close to the production grid
  c.systems = 12;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(HeatField, MatchesSeriesSolution) {
  HeatSimConfig c;
  for (double alpha : {c.diffusivity_min, c.diffusivity_max}) {
    const DenseTensor f = heat_field(alpha, c);
    double err = 0.0;
    for (Index t = 1; t < c.frames; ++t)
      for (Index k = 0; k < c.grid; ++k)
        for (Index j = 0; j < c.grid; ++j)
          err = std::max(err, std::abs(f({j, k, t}) - analytic(alpha, c, j, k, static_cast<double>(t))));
    EXPECT_LT(err, 1e-3) << "alpha " << alpha;
  }
}

TEST(HeatField, MatchesFivePointReference) {
  HeatSimConfig c = small_config();
  c.frames = 3;
  for (double alpha : {c.diffusivity_min, c.diffusivity_max}) {
    const DenseTensor f = heat_field(alpha, c);
    const DenseTensor r = heat_field_reference(alpha, c, 2 * c.refine);
    EXPECT_LT((f.data() - r.data()).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(HeatField, ReferenceHandlesOddGrid) {
  // (grid + 1) * refine odd puts the plate centre between nodes.
  HeatSimConfig c = small_config();
  c.grid = 6;
  c.refine = 5;
  const double alpha = c.diffusivity_max;
  const DenseTensor r = heat_field_reference(alpha, c, 15);
  double err = 0.0;
  for (Index t = 1; t < c.frames; ++t)
    for (Index k = 0; k < c.grid; ++k)
      for (Index j = 0; j < c.grid; ++j)
        err = std::max(err, std::abs(r({j, k, t}) - analytic(alpha, c, j, k, static_cast<double>(t))));
  EXPECT_LT(err, 2e-3);
  // Symmetric about both centre lines.
  for (Index t = 0; t < c.frames; ++t)
    for (Index k = 0; k < c.grid; ++k)
      for (Index j = 0; j < c.grid; ++j) {
        EXPECT_DOUBLE_EQ(r({j, k, t}), r({c.grid - 1 - j, k, t}));
        EXPECT_DOUBLE_EQ(r({j, k, t}), r({k, j, t}));
      }
}

TEST(HeatField, MaximumPrincipleAndMonotoneHeating) {
  HeatSimConfig c;
  for (double alpha : {c.diffusivity_min, 1e-5, c.diffusivity_max}) {
    const DenseTensor f = heat_field(alpha, c);
    EXPECT_GE(f.data().minCoeff(), 0.0);
    EXPECT_LE(f.data().maxCoeff(), 1.0);
    const Matrix frames = matricize(f, 2);
    for (Index t = 0; t < c.frames; ++t) {
      if (t == 0) EXPECT_EQ(frames.row(0).cwiseAbs().maxCoeff(), 0.0);
      if (t > 0) {
        EXPECT_TRUE((frames.row(t).array() >= frames.row(t - 1).array()).all());
        EXPECT_GT(frames.row(t).mean(), frames.row(t - 1).mean());
      }
    }
  }
}

TEST(HeatField, FasterDiffusionHeatsFaster) {
  HeatSimConfig c = small_config();
  const DenseTensor slow = heat_field(c.diffusivity_min, c);
  const DenseTensor fast = heat_field(c.diffusivity_max, c);
  EXPECT_TRUE((fast.data().array() >= slow.data().array()).all());
  EXPECT_GT(fast.data().sum(), slow.data().sum());
}

TEST(HeatField, NoDiffusionStaysCold) {
  HeatSimConfig c = small_config();
  const DenseTensor f = heat_field(1e-14, c);
  EXPECT_LT(f.data().maxCoeff(), 1e-6);
}

TEST(SimulateStreams, ReproducibleAndParallelInvariant) {
  const HeatSimConfig c = small_config();
  const SimulatedStreams a = simulate_streams(c, 1);
  const SimulatedStreams b = simulate_streams(c, 3);
  ASSERT_EQ(a.noisy.size(), 12u);
  for (std::size_t i = 0; i < a.noisy.size(); ++i) {
    EXPECT_EQ(a.diffusivity[i], b.diffusivity[i]);
    EXPECT_TRUE(a.noisy[i].data() == b.noisy[i].data());
    EXPECT_GE(a.diffusivity[i], c.diffusivity_min);
    EXPECT_LT(a.diffusivity[i], c.diffusivity_max);
    EXPECT_TRUE(a.clean[i].data() == heat_field(a.diffusivity[i], c).data());
  }
  HeatSimConfig other = c;
  other.seed = 4;
  EXPECT_NE(simulate_streams(other).diffusivity[0], a.diffusivity[0]);
}

TEST(SimulateStreams, NoiseHasRequestedVariance) {
  HeatSimConfig c = small_config();
  c.systems = 40;
  const SimulatedStreams s = simulate_streams(c);
  double sum = 0.0, sq = 0.0;
  Index n = 0;
  for (std::size_t i = 0; i < s.noisy.size(); ++i) {
    const Vector e = s.noisy[i].data() - s.clean[i].data();
    sum += e.sum();
    sq += e.squaredNorm();
    n += e.size();
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  EXPECT_NEAR(mean, 0.0, 5.0 * 0.1 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(var, c.noise_variance, 0.05 * c.noise_variance);
}

TEST(SimulateStreams, RejectsBadConfig) {
  HeatSimConfig c = small_config();
  c.diffusivity_max = c.diffusivity_min / 2;
  EXPECT_THROW(simulate_streams(c), std::invalid_argument);
  c = small_config();
  c.grid = 1;
  EXPECT_THROW(simulate_streams(c), std::invalid_argument);
}

TEST(GroundTruth, SparsityAndShapes) {
  const Dims dims{21, 21, 10};
  for (TruthKind kind : {TruthKind::Cp, TruthKind::Tucker}) {
    const GroundTruth g = make_ground_truth(kind, dims, 9);
    const Dims ranks = kind == TruthKind::Cp ? Dims{2, 2, 2} : Dims{2, 1, 2};
    ASSERT_EQ(g.factors.size(), 3u);
    for (std::size_t d = 0; d < 3; ++d) {
      const Matrix& f = g.factors[d];
      EXPECT_EQ(f.rows(), dims[d]);
      EXPECT_EQ(f.cols(), ranks[d]);
      const Index zeros = (f.array() == 0.0).count();
      EXPECT_EQ(zeros, (f.size() + 1) / 2);
      EXPECT_LT(f.cwiseAbs().maxCoeff(), 1.0);
    }
    if (kind == TruthKind::Tucker) {
      EXPECT_EQ(g.core.dims(), ranks);
      EXPECT_TRUE((g.core.data().array() == 1.0).all());
    }
    EXPECT_EQ(g.coefficient().dims(), dims);
    const GroundTruth again = make_ground_truth(kind, dims, 9);
    for (std::size_t d = 0; d < 3; ++d) EXPECT_TRUE(again.factors[d] == g.factors[d]);
  }
  EXPECT_EQ(parse_truth_kind("tucker"), TruthKind::Tucker);
  EXPECT_THROW(parse_truth_kind("pca"), std::invalid_argument);
}

TEST(Responses, AffineMapAndNoiseScale) {
  HeatSimConfig c = small_config();
  c.systems = 2000;
  c.frames = 3;
  c.grid = 4;
  const SimulatedStreams s = simulate_streams(c);
  const GroundTruth g = make_ground_truth(TruthKind::Cp, {4, 4, 3}, 2);
  const SimulatedResponses r = simulate_responses(s.noisy, g, 5);
  const DenseTensor b = g.coefficient();
  ASSERT_EQ(r.ttf.size(), 2000u);
  double min_ttf = r.ttf[0];
  Vector eps(2000);
  for (std::size_t i = 0; i < r.ttf.size(); ++i) {
    const double loc = r.scale * (r.intercept + inner(b, s.noisy[i]));
    EXPECT_NEAR(r.location[i], loc, 1e-9 * std::abs(loc));
    eps[static_cast<Index>(i)] = (r.ttf[i] - r.location[i]) / r.sigma;
    min_ttf = std::min(min_ttf, r.ttf[i]);
  }
  EXPECT_NEAR(min_ttf, 11.0, 1e-12);
  EXPECT_NEAR(r.sigma, r.scale * r.sigma_raw, 1e-15);
  // Standard SEV: mean -gamma, sd pi / sqrt(6).
  const double mean = eps.mean();
  const double sd = std::sqrt((eps.array() - mean).square().sum() / 1999.0);
  EXPECT_NEAR(mean, -std::numbers::egamma, 0.1);
  EXPECT_NEAR(sd, std::numbers::pi / std::sqrt(6.0), 0.05 * std::numbers::pi / std::sqrt(6.0));
}

TEST(Responses, ZeroNoiseGivesLocation) {
  HeatSimConfig c = small_config();
  c.frames = 3;
  c.grid = 4;
  const SimulatedStreams s = simulate_streams(c);
  const GroundTruth g = make_ground_truth(TruthKind::Tucker, {4, 4, 3}, 2);
  ResponseOptions o;
  o.noise_fraction = 0.0;
  const SimulatedResponses r = simulate_responses(s.noisy, g, 5, o);
  EXPECT_EQ(r.sigma, 0.0);
  for (std::size_t i = 0; i < r.ttf.size(); ++i) EXPECT_DOUBLE_EQ(r.ttf[i], r.location[i]);
}

TEST(Responses, RejectsDegenerateInputs) {
  HeatSimConfig c = small_config();
  const SimulatedStreams s = simulate_streams(c);
  GroundTruth g = make_ground_truth(TruthKind::Cp, {7, 7, 5}, 1);
  for (auto& f : g.factors) f.setZero();
  EXPECT_THROW(simulate_responses(s.noisy, g, 1), DataError);
  const GroundTruth wrong = make_ground_truth(TruthKind::Cp, {7, 7, 4}, 1);
  EXPECT_THROW(simulate_responses(s.noisy, wrong, 1), DimensionError);
}

TEST(WriteSimulation, ArtifactsRoundTrip) {
  HeatSimConfig c = small_config();
  c.systems = 4;
  const SimulatedStreams s = simulate_streams(c);
  const GroundTruth g = make_ground_truth(TruthKind::Cp, {7, 7, 5}, 1);
  const SimulatedResponses r = simulate_responses(s.noisy, g, 1);
  const auto dir = std::filesystem::temp_directory_path() / "tenreg_sim_test";
  std::filesystem::remove_all(dir);
  write_simulation(dir, c, s, g, r, "abc");
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_TRUE(load_tensor(dir / ("system_" + std::to_string(i) + ".dten")).data() == s.noisy[i].data());
  std::ifstream csv(dir / "responses.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "id,ttf,location,sigma\r");
  std::getline(csv, line);
  std::stringstream ss(line);
  std::string id, ttf;
  std::getline(ss, id, ',');
  std::getline(ss, ttf, ',');
  EXPECT_EQ(id, "0");
  EXPECT_EQ(std::stod(ttf), r.ttf[0]);
  EXPECT_TRUE(std::filesystem::exists(dir / "truth.json"));
  std::filesystem::remove_all(dir);
}
