#pragma once

// Multilinear PCA: per-mode orthonormal projections U_d (P_d x I_d, orthonormal
// rows) maximizing the variation Psi captured by the projected, centred samples.

#include "tenreg/tensor.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace tenreg {

struct MpcaOptions {
  /// Per-mode fraction of eigenvalue mass retained, in (0, 1].
  double fve = 0.95;
  int max_iterations = 30;
  /// Stop when Psi improves by less than tol * Psi.
  double tol = 1e-6;
};

struct TensorSubspace {
  Dims input_dims;
  Dims output_dims;
  DenseTensor mean;
  std::vector<Matrix> factors;
  double captured_variance = 0.0;
  double fve_threshold = 1.0;
  /// Psi after initialisation and after every local-optimisation sweep.
  std::vector<double> psi_history;
};

TensorSubspace fit_mpca(const std::vector<DenseTensor>& samples, const MpcaOptions& options = {});

/// (t - mean) x_1 U_1 ... x_D U_D.
DenseTensor project(const TensorSubspace& sub, const DenseTensor& t);
/// mean + s x_1 U_1^T ... x_D U_D^T.
DenseTensor reconstruct(const TensorSubspace& sub, const DenseTensor& s);

/// Leading eigenpairs of a symmetric matrix: eigenvalues descending (ties in
/// index order), each eigenvector's first non-zero entry positive.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;  // columns
};
SymmetricEigen sorted_symmetric_eigen(const Matrix& m);

/// Smallest count k >= 1 whose leading eigenvalue mass reaches fve of the total.
Index components_for_fve(const Vector& descending_values, double fve);

/// <B, S> against <B~, S~> with B~ = B x_d U_d and S~ = S x_d U_d. They agree
/// when S lies in the subspace spanned by the U_d rows (no centring applied).
struct InnerProductPair {
  double full;
  double projected;
};
InnerProductPair subspace_inner_products(const TensorSubspace& sub, const DenseTensor& b,
                                         const DenseTensor& s);

void write_subspace(std::ostream& os, const TensorSubspace& sub);
TensorSubspace read_subspace(std::istream& is);
void save_subspace(const std::filesystem::path& path, const TensorSubspace& sub);
TensorSubspace load_subspace(const std::filesystem::path& path);

}  // namespace tenreg
