#pragma once

// Functional-PCA benchmark: every image is collapsed to its mean intensity,
// the resulting time series are reduced to principal-component scores, and
// the scores are regressed against time-to-failure with the same
// location-scale machinery as the tensor models.

#include "tenreg/distributions.hpp"
#include "tenreg/regression.hpp"
#include "tenreg/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace tenreg {

/// Per-frame spatial mean of an order-3 (height x width x time) stream.
Vector to_intensity(const DenseTensor& stream);

struct FpcaBasis {
  Vector mean;
  /// n x q, orthonormal columns.
  Matrix eigenvectors;
  /// Descending, sample-covariance (N - 1) normalisation.
  Vector eigenvalues;
  double fve = 0.95;

  Index length() const { return mean.size(); }
  Index components() const { return eigenvectors.cols(); }
};

/// PCA of the discretised signals; an equally spaced grid makes this
/// equivalent to basis-expansion FPCA up to a constant quadrature weight.
FpcaBasis fit_fpca(const std::vector<Vector>& signals, double fve = 0.95);
/// N x q matrix of (signal - mean) . eigenvectors.
Matrix fpca_scores(const std::vector<Vector>& signals, const FpcaBasis& basis);
Vector fpca_reconstruct(const FpcaBasis& basis, const Vector& scores);

/// y_working = alpha + <coef, x> + sigma * eps.
struct LinearLlsModel {
  DistributionFamily family;
  double alpha = 0.0;
  double sigma = 1.0;
  Vector coef;
  double lambda = 0.0;
  FitDiagnostics diagnostics;

  double location(const Vector& x) const;
};

LinearLlsModel fit_linear_lls(const Matrix& x, const std::vector<double>& ttf, DistributionFamily family,
                              double lambda = 0.0);

/// Basis plus the score regression: what the prognosis library stores per epoch.
struct FpcaModel {
  FpcaBasis basis;
  LinearLlsModel regression;

  double location(const DenseTensor& stream) const;
};

FpcaModel fit_fpca_model(const std::vector<DenseTensor>& streams, const std::vector<double>& ttf,
                         DistributionFamily family, double fve = 0.95, double lambda = 0.0);

void write_fpca_model(std::ostream& os, const FpcaModel& m);
FpcaModel read_fpca_model(std::istream& is);
void save_fpca_model(const std::filesystem::path& path, const FpcaModel& m);
FpcaModel load_fpca_model(const std::filesystem::path& path);

}  // namespace tenreg
