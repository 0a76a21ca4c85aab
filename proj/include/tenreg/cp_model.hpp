#pragma once

// CP-decomposed location-scale tensor regression fitted by block relaxation:
// location = alpha + <[[B~_1, ..., B~_D]], S~>, scale sigma.

#include "tenreg/regression.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace tenreg {

struct CpModel {
  DistributionFamily family;
  double alpha = 0.0;
  double sigma = 1.0;
  /// P_d x R each.
  std::vector<Matrix> factors;
  std::vector<double> penalties;
  FitDiagnostics diagnostics;

  Index rank() const { return factors.empty() ? 0 : factors.front().cols(); }
  Dims dims() const;
  DenseTensor coefficient() const { return cp_reconstruct(factors); }
};

/// X_d = S~_(d) (B~_D (.) ... (.) B~_{d+1} (.) B~_{d-1} (.) ... (.) B~_1): P_d x R,
/// so that <B~_d, X_d> = <cp_reconstruct(factors), s>.
Matrix cp_predictor_matrix(const DenseTensor& s, const std::vector<Matrix>& factors, Index mode);

/// Location alpha + <B, s> on the working scale.
double cp_location(const CpModel& model, const DenseTensor& s);

/// Penalized log-likelihood -N ln sigma + sum ln f(eps_i) - sum_d lambda_d ||B~_d||_1 / sigma.
double cp_penalized_loglik(const CpModel& model, const RegressionData& data);

/// R(P_1 + P_2) - R^2 for D = 2, R(sum P_d - D + 1) otherwise.
double cp_effective_parameters(const Dims& dims, Index rank);
double cp_bic(const CpModel& model, const RegressionData& data);

/// Multi-start block relaxation; B~_2..B~_D start from iid N(0,1) entries.
/// `jobs` bounds the threads used across restarts.
CpModel fit_cp(const RegressionData& data, Index rank, DistributionFamily family,
               const FitOptions& options = {}, int jobs = 1);

struct CpSelection {
  DistributionFamily family;
  Index rank = 0;
  std::vector<BicRow> table;
  std::optional<CpModel> best;
};

/// Fits every (family, rank) cell and returns the smallest BIC.
CpSelection select_cp_rank(const RegressionData& data, const std::vector<DistributionFamily>& families,
                           const std::vector<Index>& ranks, const FitOptions& options = {},
                           int jobs = 1);

void write_cp_model(std::ostream& os, const CpModel& model);
CpModel read_cp_model(std::istream& is);
/// Writes `path` and the JSON diagnostics sidecar `path` + ".json".
void save_cp_model(const std::filesystem::path& path, const CpModel& model);
CpModel load_cp_model(const std::filesystem::path& path);

}  // namespace tenreg
