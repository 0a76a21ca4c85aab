#pragma once

// Tucker-decomposed location-scale tensor regression:
// location = alpha + <[[G~; B~_1, ..., B~_D]], S~>, scale sigma, fitted by
// block relaxation over the factor matrices and then the core.

#include "tenreg/regression.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace tenreg {

struct TuckerModel {
  DistributionFamily family;
  double alpha = 0.0;
  double sigma = 1.0;
  /// R_1 x ... x R_D.
  DenseTensor core;
  /// P_d x R_d each.
  std::vector<Matrix> factors;
  double core_penalty = 0.0;
  std::vector<double> penalties;
  FitDiagnostics diagnostics;

  Dims ranks() const { return core.dims(); }
  Dims dims() const;
  DenseTensor coefficient() const { return tucker_reconstruct(core, factors); }
};

/// Starting point for fit_tucker (e.g. from hosvd_init).
struct TuckerStart {
  DenseTensor core;
  std::vector<Matrix> factors;
};

/// x = (B~_D (x) ... (x) B~_1)^T vec(s), so <vec(G~), x> = <[[G~; B~]], s>.
Vector tucker_core_predictor(const DenseTensor& s, const std::vector<Matrix>& factors);

/// X_d = S_(d) (B~_D (x) .. B~_{d+1} (x) B~_{d-1} .. (x) B~_1) G~_(d)^T: P_d x R_d.
Matrix tucker_factor_predictor(const DenseTensor& s, const DenseTensor& core,
                               const std::vector<Matrix>& factors, Index mode);

double tucker_location(const TuckerModel& model, const DenseTensor& s);

/// -N ln sigma + sum ln f(eps_i) - (lambda ||G~||_1 + sum_d lambda_d ||B~_d||_1) / sigma.
double tucker_penalized_loglik(const TuckerModel& model, const RegressionData& data);

/// sum_d P_d R_d + prod_d R_d - sum_d R_d^2.
double tucker_effective_parameters(const Dims& dims, const Dims& ranks);
double tucker_bic(const TuckerModel& model, const RegressionData& data);

/// Multi-start block relaxation. Random restarts draw the core and B~_2..B~_D
/// from N(0,1) with B~_1 = 0; when `start` is given it replaces restart 0.
TuckerModel fit_tucker(const RegressionData& data, const Dims& ranks, DistributionFamily family,
                       const FitOptions& options = {}, const std::optional<TuckerStart>& start = {},
                       int jobs = 1);

struct HosvdResult {
  Dims ranks;
  DenseTensor core;
  /// Orthonormal columns.
  std::vector<Matrix> factors;
};

/// Per-mode leading left singular vectors of t_(d), R_d chosen by the FVE
/// rule on squared singular values and capped at max_rank when positive;
/// core = t x_1 U_1^T ... x_D U_D^T.
HosvdResult hosvd(const DenseTensor& t, double fve, Index max_rank = 0);

struct HosvdInit {
  /// Entrywise regression slopes of the location on each covariate entry.
  DenseTensor initial;
  HosvdResult decomposition;
};

/// Regresses the working response on each covariate entry separately (with
/// intercept, no penalty) and decomposes the tensor of slopes.
HosvdInit hosvd_init(const RegressionData& data, DistributionFamily family, double fve,
                     Index max_rank = 0);

struct TuckerSelection {
  DistributionFamily family;
  Dims ranks;
  std::vector<BicRow> table;
  std::optional<TuckerModel> best;
};

/// Fits every (family, rank tuple) cell and keeps the smallest BIC.
TuckerSelection select_tucker_grid(const RegressionData& data,
                                   const std::vector<DistributionFamily>& families,
                                   const std::vector<Dims>& rank_grid, const FitOptions& options = {},
                                   int jobs = 1);

/// Per family: ranks and start from hosvd_init, one fit (HOSVD start plus
/// restarts - 1 random starts), then the smallest BIC across families.
/// On noisy data the slope tensor is close to full rank; max_rank > 0 caps it.
TuckerSelection select_tucker_auto(const RegressionData& data,
                                   const std::vector<DistributionFamily>& families, double fve,
                                   const FitOptions& options = {}, int jobs = 1, Index max_rank = 0);

/// Every tuple in {1..max_rank}^order, first mode fastest.
std::vector<Dims> rank_grid(Index order, Index max_rank);

void write_tucker_model(std::ostream& os, const TuckerModel& model);
TuckerModel read_tucker_model(std::istream& is);
void save_tucker_model(const std::filesystem::path& path, const TuckerModel& model);
TuckerModel load_tucker_model(const std::filesystem::path& path);

}  // namespace tenreg
