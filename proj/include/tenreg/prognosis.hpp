#pragma once

// Time-varying prognosis: for every observation epoch n a model is trained on
// the systems still alive at t_n with their streams cut to n frames; a fielded
// system observed up to t_n is scored by the epoch-n model.

#include "tenreg/baseline_fpca.hpp"
#include "tenreg/cp_model.hpp"
#include "tenreg/mpca.hpp"
#include "tenreg/regression.hpp"
#include "tenreg/tucker_model.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tenreg {

struct System {
  std::string id;
  /// (I_1, ..., I_{D-1}, T), last mode is time.
  DenseTensor stream;
  double ttf = 0.0;
};

struct Dataset {
  std::vector<System> systems;
  /// Shared sampling grid t_1 < t_2 < ...; empty means t_n = n.
  std::vector<double> times;

  Index size() const { return static_cast<Index>(systems.size()); }
  double time(Index n) const;
  /// Frames of the longest stream.
  Index frames() const;
  Dims spatial_dims() const;
  /// Shared spatial dims, ttf >= last observed epoch, unique ids.
  void validate() const;
};

/// Reads responses.csv (id,ttf,...) and system_<id>.dten from a directory.
Dataset load_dataset(const std::filesystem::path& dir);

/// First n frames (last mode).
DenseTensor truncate_stream(const DenseTensor& stream, Index n);

/// Systems with ttf > t_n and at least n frames, streams cut to n frames.
/// Throws DataError when fewer than two systems survive.
Dataset build_truncated_dataset(const Dataset& data, Index n);

enum class Method { Cp, Tucker, Fpca };
Method parse_method(const std::string& name);
std::string method_name(Method m);

enum class RankMode { Fixed, Grid, Auto };
RankMode parse_rank_mode(const std::string& name);
std::string rank_mode_name(RankMode m);

struct LibraryOptions {
  Method method = Method::Tucker;
  /// One family for Fixed/Auto with a single entry; Grid and Auto compare all.
  std::vector<DistributionFamily> families{DistributionFamily(DistributionKind::Sev)};
  RankMode rank_mode = RankMode::Auto;
  /// Fixed ranks: CP uses the first entry, Tucker one per mode.
  Dims ranks{2};
  /// Grid: CP ranks 1..max_rank, Tucker every tuple in {1..max_rank}^D.
  Index max_rank = 3;
  /// MPCA per-mode fraction of variance kept.
  double mpca_fve = 0.95;
  /// HOSVD fraction for auto Tucker ranks.
  double hosvd_fve = 0.95;
  /// FPCA component fraction.
  double fpca_fve = 0.95;
  FitOptions fit;
  /// First epoch modelled (two frames at least).
  Index first_epoch = 2;
};

struct EpochModel {
  Index epoch = 0;
  double time = 0.0;
  Method method = Method::Tucker;
  std::vector<std::string> ids;
  /// Dims of the truncated training streams.
  Dims training_dims;
  std::optional<TensorSubspace> subspace;
  std::optional<CpModel> cp;
  std::optional<TuckerModel> tucker;
  std::optional<FpcaModel> fpca;
  std::uint64_t seed = 0;
  std::vector<BicRow> selection;

  DistributionFamily family() const;
  /// Working-scale location of a stream prefix of exactly `epoch` frames.
  double location(const DenseTensor& prefix) const;
};

struct SkippedEpoch {
  Index epoch = 0;
  std::string reason;
};

struct ModelLibrary {
  Method method = Method::Tucker;
  std::vector<EpochModel> models;
  std::vector<SkippedEpoch> skipped;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
  std::string config_hash;

  const EpochModel* find(Index epoch) const;
};

/// One model per feasible epoch (first_epoch .. frames); epochs are built in
/// parallel with seeds derived from (options.fit.seed, epoch).
ModelLibrary build_model_library(const Dataset& data, const LibraryOptions& options, int jobs = 1);

/// library/epoch_<n>.{mpca,cpm,tkm,fpca} plus manifest.json.
void save_library(const std::filesystem::path& dir, const ModelLibrary& lib);
ModelLibrary load_library(const std::filesystem::path& dir);

struct PredictionRecord {
  std::string id;
  Index epoch = 0;
  double time = 0.0;
  double pred_ttf = 0.0;
  /// pred_ttf - t_n; negative values are kept and flagged.
  double rul = 0.0;
  bool negative_rul = false;
  std::optional<double> true_ttf;
  /// |pred - true| / true, when the truth is known.
  std::optional<double> rel_error;
  /// t_n / true ttf.
  std::optional<double> percentile;
};

/// Scores a prefix whose frame count selects the epoch model. Throws
/// DataError when that epoch is not in the library and DimensionError when the
/// prefix does not match the model's training dims.
PredictionRecord predict_rul(const ModelLibrary& lib, const DenseTensor& prefix,
                             std::optional<double> true_ttf = std::nullopt, const std::string& id = {});

/// Predicted TTF from a working-scale location.
double ttf_from_location(DistributionFamily family, double location);
double relative_error(double predicted, double truth);

/// Index k of the life-percentile bin (100k - 5, 100k + 5]%, as a percentage
/// 10k; e.g. 0.15 -> 10, 0.151 -> 20.
int percentile_bin(double percentile);

struct BinSummary {
  int bin = 0;
  Index count = 0;
  double mean = 0.0;
  /// Sample variance (n - 1); 0 for a single record.
  double variance = 0.0;
};

struct Evaluation {
  std::vector<PredictionRecord> records;
  std::vector<BinSummary> bins;
  double mean_error = 0.0;
  double error_variance = 0.0;
};

std::vector<BinSummary> summarize_bins(const std::vector<PredictionRecord>& records);

/// Every test system at every library epoch it has reached and survived.
Evaluation evaluate(const ModelLibrary& lib, const Dataset& test, int jobs = 1);

/// Leave-one-out: one library per held-out system, built without it.
struct LooResult {
  Evaluation evaluation;
  /// Epoch models inspected, and those whose training ids contained the
  /// held-out system (must be zero).
  Index models_audited = 0;
  Index leaks = 0;
};
LooResult leave_one_out(const Dataset& data, const LibraryOptions& options, int jobs = 1);

/// system,epoch,percentile_bin,pred_ttf,rul,rel_error
void write_evaluation_csv(std::ostream& os, const std::vector<PredictionRecord>& records);
/// bin,count,mean,variance
void write_bin_summary_csv(std::ostream& os, const std::vector<BinSummary>& bins);

}  // namespace tenreg
