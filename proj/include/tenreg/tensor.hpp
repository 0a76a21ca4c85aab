#pragma once

// Dense multilinear algebra on column-major tensors.
//
// Storage order is the mode-1 fiber order (first index fastest), so vec(T)
// is the storage itself. Matricizations place the mode-d fibers as columns,
// ordered lexicographically over the remaining indices with the lowest mode
// varying fastest. Kronecker and Khatri-Rao chains are always formed in
// descending mode order (B_D x ... x B_1), which is the order that matches
// this vectorization.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tenreg {

using Index = Eigen::Index;
using Dims = std::vector<Index>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Thrown when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Index dims_product(std::span<const Index> dims) {
  return std::accumulate(dims.begin(), dims.end(), Index{1}, std::multiplies<>());
}

inline std::string dims_to_string(std::span<const Index> dims) {
  std::string s = "(";
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(dims[k]);
  }
  return s + ")";
}

/// D-order dense tensor with column-major storage.
template <typename Scalar_>
class Tensor {
 public:
  using Scalar = Scalar_;

  /// A single zero entry, order 1.
  Tensor() : dims_{1}, data_(VectorX<Scalar>::Zero(1)) {}

  explicit Tensor(Dims dims) : dims_(std::move(dims)) {
    validate_dims(dims_);
    data_ = VectorX<Scalar>::Zero(dims_product(dims_));
  }

  Tensor(Dims dims, VectorX<Scalar> data) : dims_(std::move(dims)), data_(std::move(data)) {
    validate_dims(dims_);
    if (data_.size() != dims_product(dims_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match dims " + dims_to_string(dims_));
    }
  }

  static Tensor Constant(Dims dims, Scalar value) {
    Tensor t(std::move(dims));
    t.data_.setConstant(value);
    return t;
  }

  Index order() const { return static_cast<Index>(dims_.size()); }
  const Dims& dims() const { return dims_; }
  Index dim(Index mode) const { return dims_.at(static_cast<std::size_t>(mode)); }
  Index size() const { return data_.size(); }

  const VectorX<Scalar>& data() const { return data_; }
  VectorX<Scalar>& data() { return data_; }

  Index linear_index(std::span<const Index> idx) const {
    if (static_cast<Index>(idx.size()) != order()) throw DimensionError("index arity mismatch");
    Index lin = 0;
    for (Index k = order() - 1; k >= 0; --k) {
      const auto kk = static_cast<std::size_t>(k);
      if (idx[kk] < 0 || idx[kk] >= dims_[kk]) throw DimensionError("index out of range");
      lin = lin * dims_[kk] + idx[kk];
    }
    return lin;
  }

  Scalar operator()(std::initializer_list<Index> idx) const {
    return data_(linear_index(std::span<const Index>(idx.begin(), idx.size())));
  }
  Scalar& operator()(std::initializer_list<Index> idx) {
    return data_(linear_index(std::span<const Index>(idx.begin(), idx.size())));
  }
  Scalar operator()(std::span<const Index> idx) const { return data_(linear_index(idx)); }
  Scalar& operator()(std::span<const Index> idx) { return data_(linear_index(idx)); }

  Tensor& operator+=(const Tensor& o) {
    require_same_dims(o);
    data_ += o.data_;
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_dims(o);
    data_ -= o.data_;
    return *this;
  }
  Tensor& operator*=(Scalar s) {
    data_ *= s;
    return *this;
  }
  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, Scalar s) { return a *= s; }
  friend Tensor operator*(Scalar s, Tensor a) { return a *= s; }

  bool operator==(const Tensor& o) const { return dims_ == o.dims_ && data_ == o.data_; }

  void require_same_dims(const Tensor& o) const {
    if (dims_ != o.dims_) {
      throw DimensionError("tensor dims " + dims_to_string(dims_) + " vs " +
                           dims_to_string(o.dims_));
    }
  }

 private:
  static void validate_dims(const Dims& dims) {
    if (dims.empty()) throw DimensionError("tensor order must be >= 1");
    for (Index d : dims) {
      if (d < 1) throw DimensionError("tensor dims must be positive, got " + dims_to_string(dims));
    }
  }

  Dims dims_;
  VectorX<Scalar> data_;
};

using DenseTensor = Tensor<double>;
using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

namespace detail {

inline void check_mode(Index order, Index mode) {
  if (mode < 0 || mode >= order) {
    throw DimensionError("mode " + std::to_string(mode) + " out of range for order " +
                         std::to_string(order));
  }
}

// Product of the dims strictly before / after `mode`.
inline Index left_size(const Dims& dims, Index mode) {
  return dims_product(std::span<const Index>(dims.data(), static_cast<std::size_t>(mode)));
}
inline Index right_size(const Dims& dims, Index mode) {
  const auto m = static_cast<std::size_t>(mode) + 1;
  return dims_product(std::span<const Index>(dims.data() + m, dims.size() - m));
}

}  // namespace detail

template <typename Scalar>
const VectorX<Scalar>& vec(const Tensor<Scalar>& t) {
  return t.data();
}

/// Mode-`mode` unfolding: I_mode x prod(other dims).
template <typename Scalar>
MatrixX<Scalar> matricize(const Tensor<Scalar>& t, Index mode) {
  detail::check_mode(t.order(), mode);
  const Index left = detail::left_size(t.dims(), mode);
  const Index right = detail::right_size(t.dims(), mode);
  const Index n = t.dim(mode);
  MatrixX<Scalar> m(n, left * right);
  for (Index r = 0; r < right; ++r) {
    Eigen::Map<const MatrixX<Scalar>> slice(t.data().data() + r * left * n, left, n);
    m.middleCols(r * left, left) = slice.transpose();
  }
  return m;
}

/// Inverse of matricize for the given target dims.
template <typename Derived>
Tensor<typename Derived::Scalar> dematricize(const Eigen::MatrixBase<Derived>& m, Index mode,
                                             const Dims& dims) {
  using Scalar = typename Derived::Scalar;
  detail::check_mode(static_cast<Index>(dims.size()), mode);
  Tensor<Scalar> t(dims);
  const Index left = detail::left_size(dims, mode);
  const Index right = detail::right_size(dims, mode);
  const Index n = dims[static_cast<std::size_t>(mode)];
  if (m.rows() != n || m.cols() != left * right) {
    throw DimensionError("dematricize: matrix " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + " inconsistent with dims " +
                         dims_to_string(dims) + " at mode " + std::to_string(mode));
  }
  for (Index r = 0; r < right; ++r) {
    Eigen::Map<MatrixX<Scalar>> slice(t.data().data() + r * left * n, left, n);
    slice = m.middleCols(r * left, left).transpose();
  }
  return t;
}

/// (t x_mode a): replaces dim I_mode by a.rows().
template <typename Scalar, typename Derived>
Tensor<Scalar> mode_product(const Tensor<Scalar>& t, const Eigen::MatrixBase<Derived>& a,
                            Index mode) {
  detail::check_mode(t.order(), mode);
  const Index n = t.dim(mode);
  if (a.cols() != n) {
    throw DimensionError("mode_product: matrix has " + std::to_string(a.cols()) +
                         " columns, mode " + std::to_string(mode) + " has dim " +
                         std::to_string(n));
  }
  const Index left = detail::left_size(t.dims(), mode);
  const Index right = detail::right_size(t.dims(), mode);
  const Index j = a.rows();
  Dims out_dims = t.dims();
  out_dims[static_cast<std::size_t>(mode)] = j;
  Tensor<Scalar> out(out_dims);
  const MatrixX<Scalar> at = a.transpose();
  for (Index r = 0; r < right; ++r) {
    Eigen::Map<const MatrixX<Scalar>> src(t.data().data() + r * left * n, left, n);
    Eigen::Map<MatrixX<Scalar>> dst(out.data().data() + r * left * j, left, j);
    dst.noalias() = src * at;
  }
  return out;
}

/// t x_1 A_1 x_2 ... x_D A_D, skipping `skip` (pass -1 to use every mode).
/// With `transpose` the product uses A_d^T instead.
template <typename Scalar>
Tensor<Scalar> multi_mode_product(const Tensor<Scalar>& t, const std::vector<MatrixX<Scalar>>& a,
                                  bool transpose = false, Index skip = -1) {
  if (static_cast<Index>(a.size()) != t.order()) {
    throw DimensionError("multi_mode_product: need one matrix per mode");
  }
  Tensor<Scalar> out = t;
  for (Index d = 0; d < t.order(); ++d) {
    if (d == skip) continue;
    const auto& m = a[static_cast<std::size_t>(d)];
    out = transpose ? mode_product(out, m.transpose(), d) : mode_product(out, m, d);
  }
  return out;
}

template <typename Scalar>
Scalar inner(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  a.require_same_dims(b);
  return a.data().dot(b.data());
}

template <typename Scalar>
Scalar frobenius_norm(const Tensor<Scalar>& t) {
  return t.data().norm();
}

template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> kronecker(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Index p = b.rows();
  const Index q = b.cols();
  MatrixX<Scalar> out(a.rows() * p, a.cols() * q);
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) out.block(i * p, j * q, p, q) = a(i, j) * b;
  }
  return out;
}

template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> khatri_rao(const Eigen::MatrixBase<DerivedA>& a,
                                              const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.cols()) {
    throw DimensionError("khatri_rao: column counts " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.cols()) + " differ");
  }
  const Index p = b.rows();
  MatrixX<Scalar> out(a.rows() * p, a.cols());
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) out.col(j).segment(i * p, p) = a(i, j) * b.col(j);
  }
  return out;
}

/// B_D (x) ... (x) B_1, omitting mode `skip` (-1 keeps all). An empty chain
/// is the 1x1 identity.
template <typename Scalar>
MatrixX<Scalar> kronecker_chain(const std::vector<MatrixX<Scalar>>& factors, Index skip = -1) {
  MatrixX<Scalar> out = MatrixX<Scalar>::Ones(1, 1);
  for (Index d = 0; d < static_cast<Index>(factors.size()); ++d) {
    if (d == skip) continue;
    out = kronecker(factors[static_cast<std::size_t>(d)], out);
  }
  return out;
}

/// B_D (.) ... (.) B_1, omitting mode `skip`. All factors share a column count.
template <typename Scalar>
MatrixX<Scalar> khatri_rao_chain(const std::vector<MatrixX<Scalar>>& factors, Index skip = -1) {
  if (factors.empty()) throw DimensionError("khatri_rao_chain: no factors");
  const Index r = factors.front().cols();
  MatrixX<Scalar> out = MatrixX<Scalar>::Ones(1, r);
  for (Index d = 0; d < static_cast<Index>(factors.size()); ++d) {
    if (d == skip) continue;
    out = khatri_rao(factors[static_cast<std::size_t>(d)], out);
  }
  return out;
}

/// Sum over r of the outer products of the r-th factor columns.
template <typename Scalar>
Tensor<Scalar> cp_reconstruct(const std::vector<MatrixX<Scalar>>& factors) {
  if (factors.empty()) throw DimensionError("cp_reconstruct: no factors");
  const Index r = factors.front().cols();
  Dims dims;
  for (const auto& f : factors) {
    if (f.cols() != r) throw DimensionError("cp_reconstruct: inconsistent rank across factors");
    dims.push_back(f.rows());
  }
  VectorX<Scalar> v = khatri_rao_chain(factors) * VectorX<Scalar>::Ones(r);
  return Tensor<Scalar>(std::move(dims), std::move(v));
}

/// core x_1 B_1 ... x_D B_D.
template <typename Scalar>
Tensor<Scalar> tucker_reconstruct(const Tensor<Scalar>& core,
                                  const std::vector<MatrixX<Scalar>>& factors) {
  if (static_cast<Index>(factors.size()) != core.order()) {
    throw DimensionError("tucker_reconstruct: need one factor per core mode");
  }
  for (Index d = 0; d < core.order(); ++d) {
    if (factors[static_cast<std::size_t>(d)].cols() != core.dim(d)) {
      throw DimensionError("tucker_reconstruct: factor " + std::to_string(d) +
                           " columns do not match core dim");
    }
  }
  return multi_mode_product(core, factors);
}

}  // namespace tenreg
