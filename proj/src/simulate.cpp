#include "tenreg/simulate.hpp"

#include "tenreg/errors.hpp"
#include "tenreg/io.hpp"
#include "tenreg/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace tenreg {

namespace {

// Explicit sub-steps per unit time keeping alpha dt / h^2 <= 1/4.
Index substeps(double alpha, double h) { return std::max<Index>(1, static_cast<Index>(std::ceil(alpha / (0.25 * h * h)))); }

double sev_draw(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v = 0.0;
  while (v <= 0.0) v = u(rng);
  return std::log(-std::log1p(-v));
}

}  // namespace

void HeatSimConfig::validate() const {
  if (grid < 2) throw std::invalid_argument("grid must be at least 2");
  if (frames < 1) throw std::invalid_argument("frames must be at least 1");
  if (!(side > 0)) throw std::invalid_argument("side must be positive");
  if (!(diffusivity_min > 0) || !(diffusivity_max >= diffusivity_min))
    throw std::invalid_argument("diffusivity bounds must be positive and ordered");
  if (!(noise_variance >= 0)) throw std::invalid_argument("noise variance must be non-negative");
  if (systems < 1) throw std::invalid_argument("need at least one system");
  if (refine < 1) throw std::invalid_argument("refine must be at least 1");
}

DenseTensor heat_field(double alpha, const HeatSimConfig& cfg) {
  const Index m = (cfg.grid + 1) * cfg.refine;  // intervals per side
  const double h = cfg.side / static_cast<double>(m);
  const Index sub = substeps(alpha, h);
  const double r = alpha / static_cast<double>(sub) / (h * h);

  // 1 - S = w(x) w(y); w solves the 1-D problem with w = 0 at the walls, w = 1 inside.
  Vector w = Vector::Ones(m + 1);
  w[0] = w[m] = 0.0;
  Vector next = w;
  DenseTensor out({cfg.grid, cfg.grid, cfg.frames});
  Vector samples(cfg.grid);
  for (Index t = 0; t < cfg.frames; ++t) {
    if (t > 0) {
      for (Index s = 0; s < sub; ++s) {
        next.segment(1, m - 1) = w.segment(1, m - 1) +
                                 r * (w.segment(0, m - 1) - 2.0 * w.segment(1, m - 1) + w.segment(2, m - 1));
        w.swap(next);
      }
    }
    for (Index j = 0; j < cfg.grid; ++j) samples[j] = w[(j + 1) * cfg.refine];
    for (Index k = 0; k < cfg.grid; ++k)
      for (Index j = 0; j < cfg.grid; ++j) out({j, k, t}) = 1.0 - samples[j] * samples[k];
  }
  return out;
}

DenseTensor heat_field_reference(double alpha, const HeatSimConfig& cfg, Index refine) {
  const Index m = (cfg.grid + 1) * refine;
  const double h = cfg.side / static_cast<double>(m);
  const Index sub = substeps(alpha, h);
  const double r = alpha / static_cast<double>(sub) / (h * h);
  // Nodes 0..c of the lower-left quarter plus one ghost line mirroring across the centre.
  const Index c = m / 2;
  const bool node_on_centre = m % 2 == 0;
  Eigen::ArrayXXd s = Eigen::ArrayXXd::Zero(c + 2, c + 2);
  s.row(0).setOnes();
  s.col(0).setOnes();
  Eigen::ArrayXXd lap(c, c);
  auto mirror = [&] {
    const Index src = node_on_centre ? c - 1 : c;
    s.row(c + 1) = s.row(src);
    s.col(c + 1) = s.col(src);
  };
  auto sample = [&](Index j) {
    const Index p = (j + 1) * refine;
    return p <= c ? p : m - p;
  };
  DenseTensor out({cfg.grid, cfg.grid, cfg.frames});
  for (Index t = 0; t < cfg.frames; ++t) {
    if (t > 0) {
      for (Index k = 0; k < sub; ++k) {
        mirror();
        lap = s.block(0, 1, c, c) + s.block(2, 1, c, c) + s.block(1, 0, c, c) + s.block(1, 2, c, c) -
              4.0 * s.block(1, 1, c, c);
        s.block(1, 1, c, c) += r * lap;
      }
    }
    for (Index k = 0; k < cfg.grid; ++k)
      for (Index j = 0; j < cfg.grid; ++j) out({j, k, t}) = s(sample(j), sample(k));
  }
  return out;
}

SimulatedStreams simulate_streams(const HeatSimConfig& cfg, int jobs) {
  cfg.validate();
  struct One {
    double alpha;
    DenseTensor clean, noisy;
  };
  auto all = parallel_map(static_cast<std::size_t>(cfg.systems), jobs, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5157u, i));
    std::uniform_real_distribution<double> a(cfg.diffusivity_min, cfg.diffusivity_max);
    std::normal_distribution<double> noise(0.0, std::sqrt(cfg.noise_variance));
    One o;
    o.alpha = a(rng);
    o.clean = heat_field(o.alpha, cfg);
    o.noisy = o.clean;
    for (Index k = 0; k < o.noisy.size(); ++k) o.noisy.data()[k] += noise(rng);
    return o;
  });
  SimulatedStreams out;
  for (auto& o : all) {
    out.diffusivity.push_back(o.alpha);
    out.clean.push_back(std::move(o.clean));
    out.noisy.push_back(std::move(o.noisy));
  }
  return out;
}

TruthKind parse_truth_kind(const std::string& name) {
  if (name == "cp") return TruthKind::Cp;
  if (name == "tucker") return TruthKind::Tucker;
  throw std::invalid_argument("unknown ground-truth kind '" + name + "' (expected cp or tucker)");
}

std::string truth_kind_name(TruthKind kind) { return kind == TruthKind::Cp ? "cp" : "tucker"; }

DenseTensor GroundTruth::coefficient() const {
  return kind == TruthKind::Cp ? cp_reconstruct(factors) : tucker_reconstruct(core, factors);
}

GroundTruth make_ground_truth(TruthKind kind, const Dims& dims, std::uint64_t seed) {
  if (dims.size() != 3) throw DimensionError("ground truth needs 3-order stream dims");
  GroundTruth g;
  g.kind = kind;
  g.seed = seed;
  const Dims ranks = kind == TruthKind::Cp ? Dims{2, 2, 2} : Dims{2, 1, 2};
  std::mt19937_64 rng(derive_seed(seed, 0x7275u, kind == TruthKind::Cp ? 1 : 2));
  std::uniform_real_distribution<double> u(std::nextafter(-1.0, 0.0), 1.0);
  for (std::size_t d = 0; d < 3; ++d) {
    Matrix f(dims[d], ranks[d]);
    for (Index k = 0; k < f.size(); ++k) f.data()[k] = u(rng);
    std::vector<Index> pos(static_cast<std::size_t>(f.size()));
    std::iota(pos.begin(), pos.end(), Index{0});
    std::shuffle(pos.begin(), pos.end(), rng);
    const Index zeros = (f.size() + 1) / 2;
    for (Index k = 0; k < zeros; ++k) f.data()[pos[static_cast<std::size_t>(k)]] = 0.0;
    g.factors.push_back(std::move(f));
  }
  if (kind == TruthKind::Tucker) g.core = DenseTensor::Constant(ranks, 1.0);
  return g;
}

SimulatedResponses simulate_responses(const std::vector<DenseTensor>& streams, const GroundTruth& truth,
                                      std::uint64_t seed, const ResponseOptions& options) {
  if (streams.size() < 2) throw DataError("need at least two streams");
  const DenseTensor b = truth.coefficient();
  const Index n = static_cast<Index>(streams.size());
  Vector loc(n);
  for (Index i = 0; i < n; ++i) {
    if (streams[static_cast<std::size_t>(i)].dims() != b.dims())
      throw DimensionError("stream dims " + dims_to_string(streams[static_cast<std::size_t>(i)].dims()) +
                           " do not match coefficient dims " + dims_to_string(b.dims()));
    loc[i] = inner(b, streams[static_cast<std::size_t>(i)]);
  }
  const double mean = loc.mean();
  const double sd = std::sqrt((loc.array() - mean).square().sum() / static_cast<double>(n));
  if (!(sd > 0)) throw DataError("simulated locations have no spread");

  SimulatedResponses out;
  out.sigma_raw = options.noise_fraction * sd;
  out.intercept = options.mean_in_sd * sd - mean;
  std::mt19937_64 rng(derive_seed(seed, 0x7474u));
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = out.intercept + loc[i] + out.sigma_raw * sev_draw(rng);
  if (!(y.minCoeff() > 0)) throw DataError("simulated lifetime is not positive");
  out.scale = options.min_ttf / y.minCoeff();
  out.sigma = out.scale * out.sigma_raw;
  for (Index i = 0; i < n; ++i) {
    out.ttf.push_back(out.scale * y[i]);
    out.location.push_back(out.scale * (out.intercept + loc[i]));
  }
  return out;
}

void write_simulation(const std::filesystem::path& dir, const HeatSimConfig& cfg,
                      const SimulatedStreams& streams, const GroundTruth& truth,
                      const SimulatedResponses& responses, const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < streams.noisy.size(); ++i)
    save_tensor(dir / ("system_" + std::to_string(i) + ".dten"), streams.noisy[i]);

  std::ofstream csv(dir / "responses.csv", std::ios::binary);
  if (!csv) throw FormatError("cannot write responses.csv in " + dir.string());
  csv << "id,ttf,location,sigma\r\n" << std::setprecision(17);
  for (std::size_t i = 0; i < responses.ttf.size(); ++i)
    csv << i << ',' << responses.ttf[i] << ',' << responses.location[i] << ',' << responses.sigma << "\r\n";

  auto matrix_json = [](const Matrix& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(m.cols()));
      for (Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::ordered_json j;
  j["kind"] = truth_kind_name(truth.kind);
  j["seed"] = truth.seed;
  j["config_hash"] = config_hash;
  j["grid"] = cfg.grid;
  j["frames"] = cfg.frames;
  j["side"] = cfg.side;
  j["diffusivity_range"] = {cfg.diffusivity_min, cfg.diffusivity_max};
  j["noise_variance"] = cfg.noise_variance;
  j["refine"] = cfg.refine;
  j["family"] = "sev";
  j["factors"] = nlohmann::ordered_json::array();
  for (const auto& f : truth.factors) j["factors"].push_back(matrix_json(f));
  if (truth.kind == TruthKind::Tucker) {
    j["core_dims"] = truth.core.dims();
    j["core"] = std::vector<double>(truth.core.data().data(), truth.core.data().data() + truth.core.size());
  }
  j["intercept"] = responses.intercept;
  j["scale"] = responses.scale;
  j["sigma_raw"] = responses.sigma_raw;
  j["sigma"] = responses.sigma;
  j["diffusivity"] = streams.diffusivity;
  std::ofstream tj(dir / "truth.json", std::ios::binary);
  if (!tj) throw FormatError("cannot write truth.json in " + dir.string());
  tj << j.dump(2) << '\n';
}

}  // namespace tenreg
