#pragma once

// Shared pieces of the CP and Tucker location-scale tensor regressions.

#include "tenreg/block_solver.hpp"
#include "tenreg/distributions.hpp"
#include "tenreg/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tenreg {

/// N (projected covariate tensor, time-to-failure) pairs.
struct RegressionData {
  std::vector<DenseTensor> covariates;
  std::vector<double> ttf;

  Index size() const { return static_cast<Index>(ttf.size()); }
  const Dims& dims() const { return covariates.front().dims(); }
  /// Throws DataError/DimensionError unless the pairs are usable for a fit.
  void validate() const;
};

/// Per-sample mode-d matricizations stacked vertically (sample i occupies rows
/// i*P_d .. (i+1)*P_d - 1), built once and reused by every design rebuild.
struct ModeUnfoldings {
  std::vector<Matrix> stacked;
  Index samples = 0;
  explicit ModeUnfoldings(const RegressionData& data);
  /// N x (P_d * w.cols()) matrix whose row i is vec(S_i(d) * w).
  Matrix design(Index mode, const Matrix& w) const;
};

/// Responses on the working scale of `family`.
Vector working_responses(DistributionFamily family, const std::vector<double>& ttf);

struct FitOptions {
  /// l1 weight on every factor matrix (and on the Tucker core).
  double lambda = 0.0;
  int restarts = 10;
  /// Absolute tolerance on the change of the penalized log-likelihood per sweep.
  double tol = 1e-6;
  int max_sweeps = 500;
  std::uint64_t seed = 0;
  /// Optional multi-start screening: every restart runs `screen_sweeps`
  /// sweeps, then only the `screen_keep` best continue. 0 disables it.
  int screen_sweeps = 0;
  int screen_keep = 0;
  BlockSolveOptions block;
  /// Record the objective after every block update.
  bool keep_trace = false;
};

struct FitDiagnostics {
  /// Penalized log-likelihood on the working scale (the block-relaxation objective).
  double loglik = 0.0;
  double bic = 0.0;
  int sweeps = 0;
  int restart = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  std::vector<double> trace;
};

/// Location-scale log-likelihood of working-scale residuals, -N ln sigma + sum ln f.
double location_scale_loglik(DistributionKind working, const Vector& y, const Vector& location,
                             double sigma);

/// -2 (loglik + Jacobian of the response transform) + p ln N.
double bic_value(DistributionFamily family, const std::vector<double>& ttf, double loglik,
                 double effective_parameters);

/// One cell of a rank/family selection study.
struct BicRow {
  std::string family;
  std::string rank;
  double bic = 0.0;
  double loglik = 0.0;
  int sweeps = 0;
  std::uint64_t seed = 0;
  /// Empty on success; otherwise the failure reason (cell skipped).
  std::string error;
};

/// CSV with columns family,rank_tuple,bic,ll,iters,seed; failed cells are omitted.
void write_bic_table(std::ostream& os, const std::vector<BicRow>& rows);

std::string rank_string(const Dims& ranks);

}  // namespace tenreg
