#pragma once

// Synthetic degradation streams: a square plate heated from its boundary,
// imaged on an n x n interior grid at unit-spaced frames, with white pixel
// noise; TTFs follow an SEV location-scale model with a sparse CP or Tucker
// coefficient tensor.

#include "tenreg/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tenreg {

struct HeatSimConfig {
  Index grid = 21;
  Index frames = 10;
  double side = 0.05;
  double diffusivity_min = 0.5e-5;
  double diffusivity_max = 1.5e-5;
  double noise_variance = 0.01;
  Index systems = 1000;
  std::uint64_t seed = 0;
  /// Computational grid spacing is side / ((grid + 1) * refine).
  Index refine = 8;

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;
};

/// Noise-free frames (grid x grid x frames) for diffusivity `alpha`: S = 0 in
/// the interior at frame 1, S = 1 on the boundary. Uses the exact
/// factorisation 1 - S = v(x) v(y) of the dimension-split explicit scheme.
DenseTensor heat_field(double alpha, const HeatSimConfig& cfg);

/// Independent oracle: the plain five-point explicit scheme on the full 2-D
/// grid refined by `refine` (one quarter of the plate, by symmetry).
DenseTensor heat_field_reference(double alpha, const HeatSimConfig& cfg, Index refine);

struct SimulatedStreams {
  std::vector<double> diffusivity;
  std::vector<DenseTensor> clean;
  std::vector<DenseTensor> noisy;
};

/// Per-system diffusivities and noise use seeds derived from (cfg.seed, id).
SimulatedStreams simulate_streams(const HeatSimConfig& cfg, int jobs = 1);

enum class TruthKind { Cp, Tucker };
TruthKind parse_truth_kind(const std::string& name);
std::string truth_kind_name(TruthKind kind);

struct GroundTruth {
  TruthKind kind = TruthKind::Cp;
  std::vector<Matrix> factors;
  /// Tucker core (all ones); unused for CP.
  DenseTensor core;
  std::uint64_t seed = 0;

  DenseTensor coefficient() const;
};

/// CP: factors 21x2, 21x2, 10x2. Tucker: core ones(2,1,2), factors 21x2, 21x1,
/// 10x2. In every factor exactly ceil(entries / 2) entries are zero, at
/// uniformly random positions; the rest are uniform on (-1, 1).
GroundTruth make_ground_truth(TruthKind kind, const Dims& dims, std::uint64_t seed);

struct SimulatedResponses {
  std::vector<double> ttf;
  /// TTF-scale location of each system.
  std::vector<double> location;
  /// TTF-scale noise scale.
  double sigma = 0.0;
  /// ttf = scale * (intercept + <B, S> + sigma_raw * eps).
  double intercept = 0.0;
  double scale = 1.0;
  double sigma_raw = 0.0;
};

/// eps ~ SEV(0, 1); sigma_raw = noise_fraction * sd(<B, S>). The intercept puts
/// the mean location at `mean_in_sd` standard deviations, and the scale makes
/// the shortest life equal `min_ttf`, so every system outlives its stream.
struct ResponseOptions {
  double noise_fraction = 0.05;
  double mean_in_sd = 5.0;
  double min_ttf = 11.0;
};
SimulatedResponses simulate_responses(const std::vector<DenseTensor>& streams, const GroundTruth& truth,
                                      std::uint64_t seed, const ResponseOptions& options = {});

/// Writes system_<i>.dten, responses.csv (id,ttf,location,sigma) and truth.json.
void write_simulation(const std::filesystem::path& dir, const HeatSimConfig& cfg,
                      const SimulatedStreams& streams, const GroundTruth& truth,
                      const SimulatedResponses& responses, const std::string& config_hash);

}  // namespace tenreg
