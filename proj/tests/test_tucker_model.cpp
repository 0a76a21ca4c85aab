#include "tenreg/errors.hpp"
#include "tenreg/model_io.hpp"
#include "tenreg/tucker_model.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

using namespace tenreg;

namespace {

Matrix gaussian(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  return m;
}

DenseTensor gaussian_tensor(const Dims& dims, std::mt19937_64& rng) {
  return DenseTensor(dims, gaussian(dims_product(dims), 1, rng));
}

struct Synthetic {
  RegressionData data;
  DenseTensor coefficient;
  std::vector<double> location;
};

// ttf = offset + <B, S> + noise * SEV draw, B a Tucker tensor of the given ranks.
Synthetic tucker_data(const Dims& dims, const Dims& ranks, Index n, double noise, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(1e-12, 1 - 1e-12);
  std::vector<Matrix> f;
  for (std::size_t d = 0; d < dims.size(); ++d) f.push_back(gaussian(dims[d], ranks[d], rng));
  Synthetic s;
  s.coefficient = tucker_reconstruct(gaussian_tensor(ranks, rng), f);
  // Unit-variance covariates: the location sd equals ||B||; keep it well below the offset.
  s.coefficient.data() *= 3.0 / s.coefficient.data().norm();
  for (Index i = 0; i < n; ++i) {
    DenseTensor x = gaussian_tensor(dims, rng);
    const double loc = 30.0 + inner(s.coefficient, x);
    s.data.covariates.push_back(x);
    s.location.push_back(loc);
    s.data.ttf.push_back(loc + noise * std::log(-std::log(1 - u(rng))));
  }
  return s;
}

const char* kFamilies[] = {"normal", "sev", "logistic", "lognormal", "weibull", "loglogistic"};

}  // namespace

TEST(TuckerModel, CorePredictorInnerProduct) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const Dims dims{4, 3, 5}, ranks{2, 1, 2};
    const DenseTensor s = gaussian_tensor(dims, rng);
    const DenseTensor g = gaussian_tensor(ranks, rng);
    const std::vector<Matrix> f{gaussian(4, 2, rng), gaussian(3, 1, rng), gaussian(5, 2, rng)};
    const double full = inner(tucker_reconstruct(g, f), s);
    EXPECT_NEAR(g.data().dot(tucker_core_predictor(s, f)), full, 1e-11 * (1 + std::abs(full)));
    // Brute force: x_r = sum over all entries of s times the product of factor entries.
    const Vector x = tucker_core_predictor(s, f);
    double brute = 0.0;
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 3; ++j)
        for (Index k = 0; k < 5; ++k) brute += s({i, j, k}) * f[0](i, 1) * f[1](j, 0) * f[2](k, 1);
    EXPECT_NEAR(x[3], brute, 1e-12 * (1 + std::abs(brute)));
  }
  std::mt19937_64 r2(2);
  const DenseTensor s = gaussian_tensor({3, 2, 2}, r2);
  const std::vector<Matrix> eye{Matrix::Identity(3, 3), Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  EXPECT_TRUE(tucker_core_predictor(s, eye) == s.data());
  EXPECT_EQ(tucker_core_predictor(DenseTensor({3, 2, 2}), {gaussian(3, 2, r2), gaussian(2, 1, r2), gaussian(2, 2, r2)})
                .cwiseAbs()
                .maxCoeff(),
            0.0);
}

TEST(TuckerModel, FactorPredictorInnerProduct) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const Dims dims{4, 3, 5}, ranks{2, 3, 2};
    const DenseTensor s = gaussian_tensor(dims, rng);
    const DenseTensor g = gaussian_tensor(ranks, rng);
    const std::vector<Matrix> f{gaussian(4, 2, rng), gaussian(3, 3, rng), gaussian(5, 2, rng)};
    const double full = inner(tucker_reconstruct(g, f), s);
    for (Index d = 0; d < 3; ++d) {
      const Matrix x = tucker_factor_predictor(s, g, f, d);
      EXPECT_EQ(x.rows(), dims[static_cast<std::size_t>(d)]);
      EXPECT_EQ(x.cols(), ranks[static_cast<std::size_t>(d)]);
      EXPECT_NEAR((f[static_cast<std::size_t>(d)].array() * x.array()).sum(), full, 1e-11 * (1 + std::abs(full)));
      // Explicit Kronecker form.
      const Matrix k = kronecker_chain(f, d);
      EXPECT_TRUE(x.isApprox(matricize(s, d) * k * matricize(g, d).transpose(), 1e-12));
    }
  }
  const DenseTensor s({2, 2}, Vector::LinSpaced(4, 1, 4));
  const std::vector<Matrix> eye{Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  const DenseTensor g({2, 2}, Vector::LinSpaced(4, -1, 2));
  EXPECT_TRUE(tucker_factor_predictor(s, g, eye, 0).isApprox(matricize(s, 0) * matricize(g, 0).transpose()));
  EXPECT_EQ(tucker_factor_predictor(s, DenseTensor({2, 2}), eye, 1).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(tucker_factor_predictor(s, DenseTensor({3, 2}), eye, 0), DimensionError);
}

TEST(TuckerModel, CpConsistency) {
  std::mt19937_64 rng(4);
  const std::vector<Matrix> f{gaussian(4, 3, rng), gaussian(5, 3, rng), gaussian(2, 3, rng)};
  DenseTensor diag({3, 3, 3});
  for (Index r = 0; r < 3; ++r) diag({r, r, r}) = 1.0;
  EXPECT_LT((tucker_reconstruct(diag, f).data() - cp_reconstruct(f).data()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TuckerModel, EffectiveParameters) {
  EXPECT_EQ(tucker_effective_parameters({10, 10, 10}, {2, 1, 2}), 45);
  EXPECT_EQ(tucker_effective_parameters({7, 5, 3}, {1, 1, 1}), 7 + 5 + 3 + 1 - 3);
  EXPECT_EQ(tucker_effective_parameters({6, 6, 6}, {2, 2, 2}), tucker_effective_parameters({6, 6, 6}, {2, 2, 2}));
  EXPECT_EQ(tucker_effective_parameters({8, 6, 4}, {3, 2, 2}), tucker_effective_parameters({6, 8, 4}, {2, 3, 2}));
}

TEST(TuckerModel, RecoversNearNoiselessCoefficient) {
  const auto s = tucker_data({5, 4, 3}, {2, 1, 2}, 80, 1e-6, 5);
  FitOptions o;
  o.restarts = 3;
  o.tol = 1e-10;
  o.max_sweeps = 2000;
  const auto m = fit_tucker(s.data, {2, 1, 2}, DistributionFamily::parse("normal"), o);
  double err = 0, scale = 0;
  for (std::size_t i = 0; i < s.location.size(); ++i) {
    err = std::max(err, std::abs(tucker_location(m, s.data.covariates[i]) - s.location[i]));
    scale = std::max(scale, std::abs(s.location[i]));
  }
  EXPECT_LT(err / scale, 1e-4);
  EXPECT_NEAR(m.diagnostics.loglik, tucker_penalized_loglik(m, s.data), 1e-8 * std::abs(m.diagnostics.loglik));
  EXPECT_NEAR(m.diagnostics.bic, tucker_bic(m, s.data), 1e-7 * std::abs(m.diagnostics.bic));
}

TEST(TuckerModel, MonotoneBlockAscentAllFamilies) {
  const auto s = tucker_data({4, 3, 3}, {2, 1, 2}, 50, 0.3, 6);
  for (const char* name : kFamilies) {
    for (double lambda : {0.0, 0.5}) {
      FitOptions o;
      o.restarts = 2;
      o.lambda = lambda;
      o.keep_trace = true;
      const auto m = fit_tucker(s.data, {2, 2, 2}, DistributionFamily::parse(name), o);
      const auto& tr = m.diagnostics.trace;
      ASSERT_FALSE(tr.empty());
      EXPECT_EQ(tr.size() % 4, 0u);
      for (std::size_t k = 1; k < tr.size(); ++k) EXPECT_GE(tr[k], tr[k - 1] - 1e-9 * std::abs(tr[k - 1])) << name;
      EXPECT_NEAR(tr.back(), tucker_penalized_loglik(m, s.data), 1e-8 * std::abs(tr.back())) << name;
    }
  }
}

TEST(TuckerModel, ResponseRescalingInvariance) {
  const auto s = tucker_data({4, 3, 3}, {2, 1, 2}, 50, 0.3, 7);
  const double b = 3.0;
  for (const char* name : kFamilies) {
    const auto family = DistributionFamily::parse(name);
    RegressionData scaled = s.data;
    for (double& t : scaled.ttf) t *= b;
    FitOptions o;
    o.restarts = 2;
    o.tol = 1e-10;
    const auto m1 = fit_tucker(s.data, {2, 1, 2}, family, o);
    const auto m2 = fit_tucker(scaled, {2, 1, 2}, family, o);
    const Vector b1 = m1.coefficient().data(), b2 = m2.coefficient().data();
    if (family.transform() == ResponseTransform::Identity) {
      EXPECT_NEAR(m2.alpha, b * m1.alpha, 1e-6 * std::abs(b * m1.alpha)) << name;
      EXPECT_NEAR(m2.sigma, b * m1.sigma, 1e-6 * b * m1.sigma) << name;
      EXPECT_LT((b2 - b * b1).norm(), 1e-6 * (b * b1).norm()) << name;
    } else {
      EXPECT_NEAR(m2.alpha, m1.alpha + std::log(b), 1e-6 * std::abs(m1.alpha)) << name;
      EXPECT_NEAR(m2.sigma, m1.sigma, 1e-6 * m1.sigma) << name;
      EXPECT_LT((b2 - b1).norm(), 1e-6 * b1.norm()) << name;
    }
  }
}

TEST(TuckerModel, ExplicitStartIsUsed) {
  const auto s = tucker_data({4, 3, 3}, {2, 1, 2}, 50, 0.3, 8);
  const auto family = DistributionFamily::parse("sev");
  FitOptions o;
  o.restarts = 1;
  o.max_sweeps = 1;
  std::mt19937_64 rng(9);
  const TuckerStart st{gaussian_tensor({2, 1, 2}, rng), {gaussian(4, 2, rng), gaussian(3, 1, rng), gaussian(3, 2, rng)}};
  const auto a = fit_tucker(s.data, {2, 1, 2}, family, o, st);
  const auto b = fit_tucker(s.data, {2, 1, 2}, family, o);
  EXPECT_NE(a.diagnostics.loglik, b.diagnostics.loglik);
  EXPECT_EQ(a.diagnostics.loglik, fit_tucker(s.data, {2, 1, 2}, family, o, st).diagnostics.loglik);
  TuckerStart bad = st;
  bad.factors[1] = gaussian(3, 2, rng);
  EXPECT_THROW(fit_tucker(s.data, {2, 1, 2}, family, o, bad), DimensionError);
}

TEST(Hosvd, RecoversConstructedRanks) {
  std::mt19937_64 rng(10);
  const Dims dims{6, 5, 4};
  std::vector<Matrix> f{gaussian(6, 2, rng), gaussian(5, 1, rng), gaussian(4, 2, rng)};
  const DenseTensor t = tucker_reconstruct(gaussian_tensor({2, 1, 2}, rng), f);
  const HosvdResult h = hosvd(t, 0.999);
  EXPECT_EQ(h.ranks, (Dims{2, 1, 2}));
  EXPECT_LT((tucker_reconstruct(h.core, h.factors).data() - t.data()).cwiseAbs().maxCoeff(), 1e-8);
  for (const auto& u : h.factors)
    EXPECT_LT((u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff(), 1e-10);
  // Full FVE keeps the rank of every matricization.
  const DenseTensor r = gaussian_tensor({4, 3, 2}, rng);
  EXPECT_EQ(hosvd(r, 1.0).ranks, (Dims{4, 3, 2}));
  // A cap keeps the leading singular vectors of the uncapped decomposition.
  const HosvdResult capped = hosvd(r, 1.0, 2);
  EXPECT_EQ(capped.ranks, (Dims{2, 2, 2}));
  const HosvdResult full = hosvd(r, 1.0);
  for (std::size_t d = 0; d < 3; ++d)
    EXPECT_LT((capped.factors[d].cwiseAbs() - full.factors[d].leftCols(2).cwiseAbs()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(hosvd(t, 0.999, 5).ranks, (Dims{2, 1, 2}));
}

TEST(Hosvd, EntrywiseSlopesMatchSimpleRegression) {
  // Normal working family: each slope is the least-squares slope cov(x, y) / var(x).
  const auto s = tucker_data({3, 2, 2}, {1, 1, 1}, 40, 0.5, 11);
  const HosvdInit init = hosvd_init(s.data, DistributionFamily::parse("normal"), 0.95);
  const Vector y = Eigen::Map<const Vector>(s.data.ttf.data(), 40);
  for (Index j = 0; j < 12; ++j) {
    Vector x(40);
    for (Index i = 0; i < 40; ++i) x[i] = s.data.covariates[static_cast<std::size_t>(i)].data()[j];
    const double slope = (x.array() - x.mean()).matrix().dot((y.array() - y.mean()).matrix()) /
                         (x.array() - x.mean()).square().sum();
    EXPECT_NEAR(init.initial.data()[j], slope, 1e-7 * (1 + std::abs(slope)));
  }
  for (const auto& u : init.decomposition.factors)
    EXPECT_LT((u.transpose() * u - Matrix::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TuckerSelection, GridAndAuto) {
  const auto s = tucker_data({4, 3, 3}, {2, 1, 2}, 150, 0.3, 12);
  std::vector<DistributionFamily> fams{DistributionFamily::parse("sev"), DistributionFamily::parse("normal")};
  FitOptions o;
  o.restarts = 2;
  const auto grid = rank_grid(3, 2);
  ASSERT_EQ(grid.size(), 8u);
  EXPECT_EQ(grid[1], (Dims{2, 1, 1}));
  const auto sel = select_tucker_grid(s.data, fams, grid, o);
  EXPECT_EQ(sel.table.size(), 16u);
  EXPECT_EQ(sel.family.name(), "sev");
  EXPECT_EQ(sel.ranks, (Dims{2, 1, 2}));
  for (const auto& row : sel.table) EXPECT_GE(row.bic, sel.best->diagnostics.bic);

  const auto one = select_tucker_grid(s.data, {fams[1]}, {{1, 1, 2}}, o);
  EXPECT_EQ(one.ranks, (Dims{1, 1, 2}));
  EXPECT_EQ(one.table.size(), 1u);

  const auto au = select_tucker_auto(s.data, fams, 0.95, o);
  EXPECT_EQ(au.table.size(), 2u);
  EXPECT_TRUE(au.best.has_value());
}

TEST(TuckerModel, DeterministicAcrossJobs) {
  const auto s = tucker_data({4, 3, 3}, {2, 1, 2}, 50, 0.3, 13);
  FitOptions o;
  o.restarts = 4;
  const auto family = DistributionFamily::parse("weibull");
  const auto a = fit_tucker(s.data, {2, 2, 1}, family, o, std::nullopt, 1);
  const auto b = fit_tucker(s.data, {2, 2, 1}, family, o, std::nullopt, 3);
  std::ostringstream sa, sb;
  write_tucker_model(sa, a);
  write_tucker_model(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.diagnostics.restart, b.diagnostics.restart);
}

TEST(TuckerModel, SerializationRoundTrip) {
  const auto s = tucker_data({4, 3, 3}, {2, 1, 2}, 40, 0.3, 14);
  FitOptions o;
  o.restarts = 1;
  o.lambda = 0.2;
  const auto m = fit_tucker(s.data, {2, 1, 2}, DistributionFamily::parse("lognormal"), o);
  const auto path = std::filesystem::temp_directory_path() / "tenreg_test_model.tkm";
  save_tucker_model(path, m);
  const auto back = load_tucker_model(path);
  EXPECT_EQ(back.family.name(), "lognormal");
  EXPECT_EQ(back.alpha, m.alpha);
  EXPECT_EQ(back.sigma, m.sigma);
  EXPECT_TRUE(back.core.data() == m.core.data());
  for (std::size_t d = 0; d < 3; ++d) EXPECT_TRUE(back.factors[d] == m.factors[d]);
  EXPECT_EQ(back.core_penalty, 0.2);
  EXPECT_EQ(back.diagnostics.loglik, m.diagnostics.loglik);
  EXPECT_NEAR(tucker_penalized_loglik(back, s.data), m.diagnostics.loglik, 1e-8 * std::abs(m.diagnostics.loglik));
  std::filesystem::remove(path);
  std::filesystem::remove(sidecar_path(path));

  std::istringstream junk("CPM1....");
  EXPECT_THROW(read_tucker_model(junk), FormatError);
}

TEST(TuckerModel, RejectsBadInput) {
  const auto s = tucker_data({4, 3, 3}, {2, 1, 2}, 10, 0.3, 15);
  const auto family = DistributionFamily::parse("normal");
  EXPECT_THROW(fit_tucker(s.data, {2, 1}, family), std::invalid_argument);
  EXPECT_THROW(fit_tucker(s.data, {2, 0, 1}, family), std::invalid_argument);
  RegressionData flat = s.data;
  for (double& t : flat.ttf) t = 5.0;
  EXPECT_THROW(fit_tucker(flat, {1, 1, 1}, family), DataError);
}
