#include "tenreg/mpca.hpp"

#include "tenreg/errors.hpp"
#include "tenreg/io.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <fstream>
#include <numeric>

namespace tenreg {

namespace {

constexpr std::string_view kMagic = "MPCA1";

// Phi = sum_i Y_i(d) Y_i(d)^T where Y_i is X_i projected on every mode but d.
Matrix mode_scatter(const std::vector<DenseTensor>& centred, const std::vector<Matrix>& u,
                    Index mode, bool project_others) {
  const Index n = centred.front().dim(mode);
  Matrix phi = Matrix::Zero(n, n);
  for (const auto& x : centred) {
    const DenseTensor y = project_others ? multi_mode_product(x, u, false, mode) : x;
    const Matrix yd = matricize(y, mode);
    phi.selfadjointView<Eigen::Lower>().rankUpdate(yd);
  }
  return phi.selfadjointView<Eigen::Lower>();
}

double captured(const std::vector<DenseTensor>& centred, const std::vector<Matrix>& u) {
  double psi = 0.0;
  for (const auto& x : centred) psi += vec(multi_mode_product(x, u)).squaredNorm();
  return psi;
}

}  // namespace

SymmetricEigen sorted_symmetric_eigen(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
  const Index n = m.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return es.eigenvalues()[a] > es.eigenvalues()[b];
  });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (Index k = 0; k < n; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.values[k] = es.eigenvalues()[src];
    Vector v = es.eigenvectors().col(src);
    for (Index j = 0; j < n; ++j) {
      if (v[j] != 0.0) {
        if (v[j] < 0) v = -v;
        break;
      }
    }
    out.vectors.col(k) = v;
  }
  return out;
}

Index components_for_fve(const Vector& values, double fve) {
  if (!(fve > 0 && fve <= 1)) throw std::invalid_argument("fve must lie in (0, 1]");
  const double total = values.cwiseMax(0.0).sum();
  if (!(total > 0)) return 1;
  double cum = 0.0;
  for (Index k = 0; k < values.size(); ++k) {
    cum += std::max(values[k], 0.0);
    if (cum >= fve * total * (1 - 1e-12)) return k + 1;
  }
  return values.size();
}

TensorSubspace fit_mpca(const std::vector<DenseTensor>& samples, const MpcaOptions& options) {
  if (samples.size() < 2) throw DataError("MPCA needs at least two samples");
  if (options.max_iterations < 1) throw std::invalid_argument("MPCA needs max_iterations >= 1");
  if (!(options.fve > 0 && options.fve <= 1)) throw std::invalid_argument("fve must lie in (0, 1]");
  const Dims& dims = samples.front().dims();
  const Index order = static_cast<Index>(dims.size());

  TensorSubspace sub;
  sub.input_dims = dims;
  sub.fve_threshold = options.fve;
  sub.mean = DenseTensor(dims);
  for (const auto& s : samples) {
    if (s.dims() != dims)
      throw DimensionError("MPCA samples disagree on dims: " + dims_to_string(dims) + " vs " +
                           dims_to_string(s.dims()));
    sub.mean += s;
  }
  sub.mean *= 1.0 / static_cast<double>(samples.size());
  std::vector<DenseTensor> centred;
  centred.reserve(samples.size());
  for (const auto& s : samples) centred.push_back(s - sub.mean);

  // Full-projection initialisation: eigenvectors of the unprojected mode scatter.
  sub.factors.resize(static_cast<std::size_t>(order));
  for (Index d = 0; d < order; ++d) {
    const auto eig = sorted_symmetric_eigen(mode_scatter(centred, sub.factors, d, false));
    const Index p = components_for_fve(eig.values, options.fve);
    sub.factors[static_cast<std::size_t>(d)] = eig.vectors.leftCols(p).transpose();
    sub.output_dims.push_back(p);
  }
  double psi = captured(centred, sub.factors);
  sub.psi_history.push_back(psi);

  for (int k = 0; k < options.max_iterations; ++k) {
    for (Index d = 0; d < order; ++d) {
      const auto p = sub.output_dims[static_cast<std::size_t>(d)];
      const auto eig = sorted_symmetric_eigen(mode_scatter(centred, sub.factors, d, true));
      sub.factors[static_cast<std::size_t>(d)] = eig.vectors.leftCols(p).transpose();
    }
    const double next = captured(centred, sub.factors);
    if (next < psi - 1e-9 * std::max(1.0, psi))
      throw NumericalError("MPCA captured variance decreased during local optimisation");
    sub.psi_history.push_back(next);
    const bool done = next - psi < options.tol * std::max(next, 1e-300);
    psi = next;
    if (done) break;
  }
  sub.captured_variance = psi;
  return sub;
}

DenseTensor project(const TensorSubspace& sub, const DenseTensor& t) {
  if (t.dims() != sub.input_dims)
    throw DimensionError("project: tensor dims " + dims_to_string(t.dims()) +
                         " do not match subspace input dims " + dims_to_string(sub.input_dims));
  return multi_mode_product(t - sub.mean, sub.factors);
}

DenseTensor reconstruct(const TensorSubspace& sub, const DenseTensor& s) {
  if (s.dims() != sub.output_dims)
    throw DimensionError("reconstruct: tensor dims " + dims_to_string(s.dims()) +
                         " do not match subspace output dims " + dims_to_string(sub.output_dims));
  return multi_mode_product(s, sub.factors, true) + sub.mean;
}

InnerProductPair subspace_inner_products(const TensorSubspace& sub, const DenseTensor& b,
                                         const DenseTensor& s) {
  return {inner(b, s), inner(multi_mode_product(b, sub.factors), multi_mode_product(s, sub.factors))};
}

void write_subspace(std::ostream& os, const TensorSubspace& sub) {
  BinaryWriter w(os);
  w.magic(kMagic);
  w.u32(sub.input_dims.size());
  w.dims(sub.input_dims);
  w.dims(sub.output_dims);
  w.matrix(sub.mean.data());
  for (const auto& u : sub.factors) w.matrix(u);
  w.f64(sub.fve_threshold);
  w.f64(sub.captured_variance);
}

TensorSubspace read_subspace(std::istream& is) {
  BinaryReader r(is);
  r.expect_magic(kMagic);
  TensorSubspace sub;
  const Index order = r.u32();
  if (order < 1 || order > 64) throw FormatError("implausible MPCA order " + std::to_string(order));
  sub.input_dims = r.dims(order);
  sub.output_dims = r.dims(order);
  for (Index d = 0; d < order; ++d) {
    const auto p = sub.output_dims[static_cast<std::size_t>(d)];
    if (p < 1 || p > sub.input_dims[static_cast<std::size_t>(d)])
      throw FormatError("MPCA output dim exceeds input dim");
  }
  sub.mean = DenseTensor(sub.input_dims, r.matrix(dims_product(sub.input_dims), 1));
  for (Index d = 0; d < order; ++d)
    sub.factors.push_back(r.matrix(sub.output_dims[static_cast<std::size_t>(d)],
                                   sub.input_dims[static_cast<std::size_t>(d)]));
  sub.fve_threshold = r.f64();
  sub.captured_variance = r.f64();
  return sub;
}

void save_subspace(const std::filesystem::path& path, const TensorSubspace& sub) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  write_subspace(os, sub);
  if (!os) throw FormatError("write failed: " + path.string());
}

TensorSubspace load_subspace(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  TensorSubspace sub = read_subspace(is);
  BinaryReader(is).expect_end();
  return sub;
}

}  // namespace tenreg
