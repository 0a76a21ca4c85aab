#include "tenreg/regression.hpp"

#include "tenreg/errors.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace tenreg {

ModeUnfoldings::ModeUnfoldings(const RegressionData& data) : samples(data.size()) {
  const Dims& dims = data.dims();
  const Index total = dims_product(dims);
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const Index p = dims[d];
    Matrix m(samples * p, total / p);
    for (Index i = 0; i < samples; ++i)
      m.middleRows(i * p, p) = matricize(data.covariates[static_cast<std::size_t>(i)], static_cast<Index>(d));
    stacked.push_back(std::move(m));
  }
}

Matrix ModeUnfoldings::design(Index mode, const Matrix& w) const {
  const Matrix& s = stacked[static_cast<std::size_t>(mode)];
  const Index p = s.rows() / samples;
  const Matrix y = s * w;
  Matrix out(samples, p * w.cols());
  for (Index r = 0; r < w.cols(); ++r)
    for (Index i = 0; i < samples; ++i) out.row(i).segment(r * p, p) = y.col(r).segment(i * p, p).transpose();
  return out;
}

void RegressionData::validate() const {
  if (covariates.size() != ttf.size())
    throw DataError("covariate and response counts differ");
  if (ttf.size() < 3) throw DataError("need at least three systems to fit");
  const Dims& d = covariates.front().dims();
  for (const auto& c : covariates)
    if (c.dims() != d) throw DimensionError("covariate tensors disagree on dims");
  for (double t : ttf)
    if (!std::isfinite(t)) throw DataError("non-finite response");
}

Vector working_responses(DistributionFamily family, const std::vector<double>& ttf) {
  const auto y = apply_response_transform(family, ttf);
  Vector v = Eigen::Map<const Vector>(y.data(), static_cast<Index>(y.size()));
  const double mean = v.mean();
  if (!((v.array() - mean).abs().maxCoeff() > 0)) throw DataError("responses are constant");
  return v;
}

double location_scale_loglik(DistributionKind working, const Vector& y, const Vector& location,
                             double sigma) {
  double ll = -static_cast<double>(y.size()) * std::log(sigma);
  for (Index i = 0; i < y.size(); ++i) ll += log_density(working, (y[i] - location[i]) / sigma);
  return ll;
}

double bic_value(DistributionFamily family, const std::vector<double>& ttf, double loglik,
                 double effective_parameters) {
  const double n = static_cast<double>(ttf.size());
  return -2.0 * (loglik + response_log_jacobian(family, ttf)) + effective_parameters * std::log(n);
}

std::string rank_string(const Dims& ranks) {
  std::string s;
  for (std::size_t k = 0; k < ranks.size(); ++k) {
    if (k) s += 'x';
    s += std::to_string(ranks[k]);
  }
  return s;
}

void write_bic_table(std::ostream& os, const std::vector<BicRow>& rows) {
  os << "family,rank_tuple,bic,ll,iters,seed\r\n";
  std::ostringstream line;
  line << std::setprecision(17);
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    line.str("");
    line << r.family << ',' << r.rank << ',' << r.bic << ',' << r.loglik << ',' << r.sweeps << ','
         << r.seed << "\r\n";
    os << line.str();
  }
}

}  // namespace tenreg
