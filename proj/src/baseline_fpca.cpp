#include "tenreg/baseline_fpca.hpp"

#include "tenreg/block_solver.hpp"
#include "tenreg/errors.hpp"
#include "tenreg/io.hpp"
#include "tenreg/mpca.hpp"

#include <cmath>
#include <fstream>

namespace tenreg {

namespace {

constexpr std::string_view kMagic = "FPCA1";

void check_signals(const std::vector<Vector>& signals, Index length) {
  for (const auto& s : signals)
    if (s.size() != length)
      throw DimensionError("signal length " + std::to_string(s.size()) + ", expected " + std::to_string(length));
}

}  // namespace

Vector to_intensity(const DenseTensor& stream) {
  if (stream.order() != 3) throw DimensionError("intensity needs an order-3 stream, got " + dims_to_string(stream.dims()));
  const Index pixels = stream.dim(0) * stream.dim(1);
  const Eigen::Map<const Matrix> frames(stream.data().data(), pixels, stream.dim(2));
  return frames.colwise().mean().transpose();
}

FpcaBasis fit_fpca(const std::vector<Vector>& signals, double fve) {
  if (signals.size() < 2) throw DataError("FPCA needs at least two signals");
  if (!(fve > 0 && fve <= 1)) throw std::invalid_argument("fve must lie in (0, 1]");
  const Index n = signals.front().size();
  check_signals(signals, n);
  Matrix x(static_cast<Index>(signals.size()), n);
  for (std::size_t i = 0; i < signals.size(); ++i) x.row(static_cast<Index>(i)) = signals[i].transpose();
  FpcaBasis b;
  b.fve = fve;
  b.mean = x.colwise().mean().transpose();
  x.rowwise() -= b.mean.transpose();
  const Matrix cov = x.transpose() * x / static_cast<double>(x.rows() - 1);
  const auto eig = sorted_symmetric_eigen(cov);
  if (!(eig.values[0] > 0)) throw DataError("signals have no variance");
  const Index q = components_for_fve(eig.values.cwiseMax(0.0), fve);
  b.eigenvalues = eig.values.head(q).cwiseMax(0.0);
  b.eigenvectors = eig.vectors.leftCols(q);
  return b;
}

Matrix fpca_scores(const std::vector<Vector>& signals, const FpcaBasis& basis) {
  check_signals(signals, basis.length());
  Matrix out(static_cast<Index>(signals.size()), basis.components());
  for (std::size_t i = 0; i < signals.size(); ++i)
    out.row(static_cast<Index>(i)) = (signals[i] - basis.mean).transpose() * basis.eigenvectors;
  return out;
}

Vector fpca_reconstruct(const FpcaBasis& basis, const Vector& scores) {
  if (scores.size() != basis.components()) throw DimensionError("score count does not match the basis");
  return basis.mean + basis.eigenvectors * scores;
}

double LinearLlsModel::location(const Vector& x) const {
  if (x.size() != coef.size()) throw DimensionError("covariate length does not match the model");
  return alpha + coef.dot(x);
}

LinearLlsModel fit_linear_lls(const Matrix& x, const std::vector<double>& ttf, DistributionFamily family,
                              double lambda) {
  if (x.rows() != static_cast<Index>(ttf.size())) throw DimensionError("one covariate row per response");
  const Vector y = working_responses(family, ttf);
  const BlockProblem prob{x, y, family.working(), lambda, 0.0};
  const auto sol = solve_block(prob, initial_block_state(y, x.cols()));
  LinearLlsModel m;
  m.family = family;
  m.lambda = lambda;
  m.sigma = 1.0 / sol.state.rho;
  m.alpha = sol.state.alpha0 / sol.state.rho;
  m.coef = sol.state.coef / sol.state.rho;
  m.diagnostics.loglik = sol.objective;
  m.diagnostics.sweeps = sol.iterations;
  m.diagnostics.converged = true;
  // Intercept, scale and one slope per covariate.
  m.diagnostics.bic = bic_value(family, ttf, sol.objective, static_cast<double>(x.cols()));
  return m;
}

double FpcaModel::location(const DenseTensor& stream) const {
  const Vector s = to_intensity(stream);
  if (s.size() != basis.length()) throw DimensionError("stream length does not match the FPCA basis");
  return regression.location(basis.eigenvectors.transpose() * (s - basis.mean));
}

FpcaModel fit_fpca_model(const std::vector<DenseTensor>& streams, const std::vector<double>& ttf,
                         DistributionFamily family, double fve, double lambda) {
  std::vector<Vector> signals;
  signals.reserve(streams.size());
  for (const auto& s : streams) signals.push_back(to_intensity(s));
  FpcaModel m;
  m.basis = fit_fpca(signals, fve);
  m.regression = fit_linear_lls(fpca_scores(signals, m.basis), ttf, family, lambda);
  return m;
}

void write_fpca_model(std::ostream& os, const FpcaModel& m) {
  BinaryWriter w(os);
  w.magic(kMagic);
  w.u32(static_cast<std::uint64_t>(m.basis.length()));
  w.u32(static_cast<std::uint64_t>(m.basis.components()));
  w.f64(m.basis.fve);
  w.matrix(m.basis.mean);
  w.matrix(m.basis.eigenvalues);
  w.matrix(m.basis.eigenvectors);
  w.string(m.regression.family.name());
  w.f64(m.regression.alpha);
  w.f64(m.regression.sigma);
  w.f64(m.regression.lambda);
  w.matrix(m.regression.coef);
}

FpcaModel read_fpca_model(std::istream& is) {
  BinaryReader r(is);
  r.expect_magic(kMagic);
  FpcaModel m;
  const Index n = r.u32(), q = r.u32();
  if (n < 1 || q < 1 || q > n) throw FormatError("implausible FPCA header");
  m.basis.fve = r.f64();
  m.basis.mean = r.matrix(n, 1);
  m.basis.eigenvalues = r.matrix(q, 1);
  m.basis.eigenvectors = r.matrix(n, q);
  try {
    m.regression.family = DistributionFamily::parse(r.string());
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  m.regression.alpha = r.f64();
  m.regression.sigma = r.f64();
  m.regression.lambda = r.f64();
  m.regression.coef = r.matrix(q, 1);
  return m;
}

void save_fpca_model(const std::filesystem::path& path, const FpcaModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  write_fpca_model(os, m);
}

FpcaModel load_fpca_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  FpcaModel m = read_fpca_model(is);
  BinaryReader(is).expect_end();
  return m;
}

}  // namespace tenreg
