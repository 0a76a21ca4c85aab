#pragma once

// Standard (log-)location-scale error densities.
//
// Every family is fitted through a log-concave working density: Weibull,
// lognormal and log-logistic lifetimes are modelled as SEV, normal and
// logistic errors on ln(TTF).

#include <string>
#include <string_view>
#include <vector>

namespace tenreg {

enum class DistributionKind { Normal, Sev, Logistic, Lognormal, LogLogistic, Weibull };
enum class ResponseTransform { Identity, Log };

/// ln f and its first two derivatives at one point.
struct LogDensityDerivatives {
  double value;
  double d1;
  double d2;
};

class DistributionFamily {
 public:
  constexpr DistributionFamily() = default;
  constexpr explicit DistributionFamily(DistributionKind kind) : kind_(kind) {}

  /// Accepts "normal", "sev", "logistic", "lognormal", "loglogistic", "weibull".
  static DistributionFamily parse(std::string_view name);
  static std::vector<DistributionFamily> parse_list(std::string_view comma_separated);

  constexpr DistributionKind kind() const { return kind_; }
  /// The log-concave family applied to the transformed response.
  constexpr DistributionKind working() const {
    switch (kind_) {
      case DistributionKind::Lognormal: return DistributionKind::Normal;
      case DistributionKind::LogLogistic: return DistributionKind::Logistic;
      case DistributionKind::Weibull: return DistributionKind::Sev;
      default: return kind_;
    }
  }
  constexpr ResponseTransform transform() const {
    return working() == kind_ ? ResponseTransform::Identity : ResponseTransform::Log;
  }
  std::string name() const;

  constexpr bool operator==(const DistributionFamily&) const = default;

 private:
  DistributionKind kind_ = DistributionKind::Normal;
};

/// ln f(eps) for a working (untransformed) kind.
double log_density(DistributionKind working, double eps);
double dlog_density(DistributionKind working, double eps);
double d2log_density(DistributionKind working, double eps);
LogDensityDerivatives log_density_derivatives(DistributionKind working, double eps);

/// y = ln(ttf) for log families, ttf otherwise. Throws DataError on ttf <= 0
/// under a log transform.
double apply_response_transform(DistributionFamily family, double ttf);
std::vector<double> apply_response_transform(DistributionFamily family,
                                             const std::vector<double>& ttf);
/// Maps a location on the working scale back to the TTF scale.
double invert_response_transform(DistributionFamily family, double y);

/// Sum of ln(d y / d ttf) over the responses: 0 for identity families,
/// -sum ln(ttf) for log families. Adding this to a working-scale
/// log-likelihood gives the log-likelihood of the observed TTFs.
double response_log_jacobian(DistributionFamily family, const std::vector<double>& ttf);

}  // namespace tenreg
