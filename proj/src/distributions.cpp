#include "tenreg/distributions.hpp"

#include "tenreg/errors.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tenreg {

namespace {

constexpr struct {
  DistributionKind kind;
  std::string_view name;
} kNames[] = {
    {DistributionKind::Normal, "normal"},       {DistributionKind::Sev, "sev"},
    {DistributionKind::Logistic, "logistic"},   {DistributionKind::Lognormal, "lognormal"},
    {DistributionKind::LogLogistic, "loglogistic"}, {DistributionKind::Weibull, "weibull"},
};

}  // namespace

DistributionFamily DistributionFamily::parse(std::string_view name) {
  for (const auto& e : kNames) {
    if (e.name == name) return DistributionFamily(e.kind);
  }
  throw std::invalid_argument("unknown distribution '" + std::string(name) + "'");
}

std::vector<DistributionFamily> DistributionFamily::parse_list(std::string_view s) {
  std::vector<DistributionFamily> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(',', start), s.size());
    const auto item = s.substr(start, end - start);
    if (!item.empty()) out.push_back(parse(item));
    start = end + 1;
  }
  if (out.empty()) throw std::invalid_argument("empty distribution list");
  return out;
}

std::string DistributionFamily::name() const {
  for (const auto& e : kNames) {
    if (e.kind == kind_) return std::string(e.name);
  }
  return "unknown";
}

LogDensityDerivatives log_density_derivatives(DistributionKind working, double eps) {
  switch (working) {
    case DistributionKind::Normal:
      return {-0.5 * eps * eps - 0.5 * std::log(2.0 * std::numbers::pi), -eps, -1.0};
    case DistributionKind::Sev: {
      const double e = std::exp(eps);
      return {eps - e, 1.0 - e, -e};
    }
    case DistributionKind::Logistic: {
      // ln f = -|eps| - 2 ln(1 + exp(-|eps|)), symmetric and overflow-free.
      const double a = std::abs(eps);
      const double q = std::exp(-a);
      const double p = 1.0 / (1.0 + std::exp(-eps));  // logistic CDF
      return {-a - 2.0 * std::log1p(q), 1.0 - 2.0 * p, -2.0 * p * (1.0 - p)};
    }
    default:
      throw std::invalid_argument("log density requested for a non-working family");
  }
}

double log_density(DistributionKind working, double eps) {
  return log_density_derivatives(working, eps).value;
}
double dlog_density(DistributionKind working, double eps) {
  return log_density_derivatives(working, eps).d1;
}
double d2log_density(DistributionKind working, double eps) {
  return log_density_derivatives(working, eps).d2;
}

double apply_response_transform(DistributionFamily family, double ttf) {
  if (family.transform() == ResponseTransform::Identity) return ttf;
  if (!(ttf > 0.0)) {
    throw DataError("non-positive time-to-failure " + std::to_string(ttf) + " under " +
                    family.name() + " (log transform)");
  }
  return std::log(ttf);
}

std::vector<double> apply_response_transform(DistributionFamily family,
                                             const std::vector<double>& ttf) {
  std::vector<double> y;
  y.reserve(ttf.size());
  for (double v : ttf) y.push_back(apply_response_transform(family, v));
  return y;
}

double invert_response_transform(DistributionFamily family, double y) {
  return family.transform() == ResponseTransform::Log ? std::exp(y) : y;
}

double response_log_jacobian(DistributionFamily family, const std::vector<double>& ttf) {
  if (family.transform() == ResponseTransform::Identity) return 0.0;
  double s = 0.0;
  for (double v : ttf) s -= std::log(v);
  return s;
}

}  // namespace tenreg
