#include "tenreg/prognosis.hpp"

#include "tenreg/errors.hpp"
#include "tenreg/io.hpp"
#include "tenreg/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace tenreg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw FormatError("cannot parse " + what + " '" + s + "'");
  return v;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double sample_variance(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

void summarize(Evaluation& ev) {
  ev.bins = summarize_bins(ev.records);
  std::vector<double> errs;
  for (const auto& r : ev.records)
    if (r.rel_error) errs.push_back(*r.rel_error);
  if (errs.empty()) return;
  for (double e : errs) ev.mean_error += e;
  ev.mean_error /= static_cast<double>(errs.size());
  ev.error_variance = sample_variance(errs, ev.mean_error);
}

std::string epoch_stem(Index n) { return "epoch_" + std::to_string(n); }

EpochModel fit_epoch(const Dataset& cut, Index n, const LibraryOptions& opt, std::uint64_t seed,
                     std::vector<std::string>& warnings) {
  EpochModel em;
  em.epoch = n;
  em.time = cut.time(n);
  em.method = opt.method;
  em.seed = seed;
  em.training_dims = cut.systems.front().stream.dims();
  std::vector<DenseTensor> streams;
  std::vector<double> ttf;
  for (const auto& s : cut.systems) {
    em.ids.push_back(s.id);
    streams.push_back(s.stream);
    ttf.push_back(s.ttf);
  }
  if (cut.size() < 10)
    warnings.push_back("epoch " + std::to_string(n) + ": only " + std::to_string(cut.size()) + " training systems");

  if (opt.method == Method::Fpca) {
    if (opt.families.empty()) throw std::invalid_argument("no family given");
    em.fpca = fit_fpca_model(streams, ttf, opt.families.front(), opt.fpca_fve, opt.fit.lambda);
    return em;
  }

  em.subspace = fit_mpca(streams, {.fve = opt.mpca_fve});
  RegressionData data;
  for (const auto& s : streams) data.covariates.push_back(project(*em.subspace, s));
  data.ttf = ttf;
  const Dims& p = em.subspace->output_dims;
  FitOptions fo = opt.fit;
  fo.seed = seed;

  if (opt.method == Method::Cp) {
    if (opt.rank_mode == RankMode::Fixed) {
      em.cp = fit_cp(data, opt.ranks.front(), opt.families.front(), fo);
    } else {
      std::vector<Index> ranks;
      for (Index r = 1; r <= opt.max_rank; ++r) ranks.push_back(r);
      auto sel = select_cp_rank(data, opt.families, ranks, fo);
      em.selection = std::move(sel.table);
      em.cp = std::move(sel.best);
    }
    return em;
  }

  if (opt.rank_mode == RankMode::Fixed) {
    if (opt.ranks.size() != p.size())
      throw std::invalid_argument("Tucker needs one rank per mode, got " + rank_string(opt.ranks));
    Dims r = opt.ranks;
    for (std::size_t d = 0; d < r.size(); ++d)
      if (r[d] > p[d]) {
        warnings.push_back("epoch " + std::to_string(n) + ": rank " + std::to_string(r[d]) + " of mode " +
                           std::to_string(d) + " capped at the reduced dimension " + std::to_string(p[d]));
        r[d] = p[d];
      }
    em.tucker = fit_tucker(data, r, opt.families.front(), fo);
  } else if (opt.rank_mode == RankMode::Grid) {
    std::vector<Dims> grid;
    for (const auto& r : rank_grid(static_cast<Index>(p.size()), opt.max_rank)) {
      bool ok = true;
      for (std::size_t d = 0; d < r.size(); ++d) ok = ok && r[d] <= p[d];
      if (ok) grid.push_back(r);
    }
    auto sel = select_tucker_grid(data, opt.families, grid, fo);
    em.selection = std::move(sel.table);
    em.tucker = std::move(sel.best);
  } else {
    auto sel = select_tucker_auto(data, opt.families, opt.hosvd_fve, fo, 1, opt.max_rank);
    em.selection = std::move(sel.table);
    em.tucker = std::move(sel.best);
  }
  return em;
}

}  // namespace

double Dataset::time(Index n) const {
  if (n < 1) throw std::invalid_argument("epochs are numbered from 1");
  if (times.empty()) return static_cast<double>(n);
  if (n > static_cast<Index>(times.size())) throw DataError("epoch " + std::to_string(n) + " is beyond the sampling grid");
  return times[static_cast<std::size_t>(n - 1)];
}

Index Dataset::frames() const {
  Index t = 0;
  for (const auto& s : systems) t = std::max(t, s.stream.dim(s.stream.order() - 1));
  return t;
}

Dims Dataset::spatial_dims() const {
  if (systems.empty()) throw DataError("empty dataset");
  Dims d = systems.front().stream.dims();
  d.pop_back();
  return d;
}

void Dataset::validate() const {
  if (systems.empty()) throw DataError("empty dataset");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (!(times[k] > times[k - 1])) throw DataError("sampling times must increase");
  const Dims spatial = spatial_dims();
  std::set<std::string> seen;
  for (const auto& s : systems) {
    if (!seen.insert(s.id).second) throw DataError("duplicate system id '" + s.id + "'");
    if (s.stream.order() < 2) throw DimensionError("system " + s.id + ": a stream needs a time mode");
    Dims d = s.stream.dims();
    const Index frames = d.back();
    d.pop_back();
    if (d != spatial)
      throw DimensionError("system " + s.id + ": spatial dims " + dims_to_string(d) + " differ from " +
                           dims_to_string(spatial));
    if (!(s.ttf > 0) || !std::isfinite(s.ttf)) throw DataError("system " + s.id + ": ttf must be positive");
    if (s.ttf < time(frames))
      throw DataError("system " + s.id + ": ttf " + fmt(s.ttf) + " precedes its last observation");
  }
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream csv(dir / "responses.csv", std::ios::binary);
  if (!csv) throw FormatError("cannot open " + (dir / "responses.csv").string());
  std::string line;
  if (!std::getline(csv, line)) throw FormatError("responses.csv is empty");
  const auto header = split_csv_line(line);
  const auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError("responses.csv has no '" + name + "' column");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t id_col = col("id"), ttf_col = col("ttf");
  Dataset data;
  while (std::getline(csv, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw FormatError("responses.csv: ragged row '" + line + "'");
    System s;
    s.id = f[id_col];
    s.ttf = parse_double(f[ttf_col], "ttf");
    s.stream = load_tensor(dir / ("system_" + s.id + ".dten"));
    data.systems.push_back(std::move(s));
  }
  data.validate();
  return data;
}

DenseTensor truncate_stream(const DenseTensor& stream, Index n) {
  Dims d = stream.dims();
  if (n < 1 || n > d.back())
    throw DimensionError("cannot cut a stream of " + std::to_string(d.back()) + " frames to " + std::to_string(n));
  const Index frame = stream.size() / d.back();
  d.back() = n;
  return DenseTensor(d, stream.data().head(frame * n));
}

Dataset build_truncated_dataset(const Dataset& data, Index n) {
  if (n < 2) throw std::invalid_argument("an epoch needs at least two frames");
  Dataset out;
  out.times = data.times;
  const double t = data.time(n);
  for (const auto& s : data.systems) {
    const Index frames = s.stream.dim(s.stream.order() - 1);
    if (s.ttf > t && frames >= n) out.systems.push_back({s.id, truncate_stream(s.stream, n), s.ttf});
  }
  if (out.size() < 2)
    throw DataError("epoch " + std::to_string(n) + ": only " + std::to_string(out.size()) +
                    " systems outlive t_n = " + fmt(t));
  return out;
}

Method parse_method(const std::string& name) {
  if (name == "cp") return Method::Cp;
  if (name == "tucker") return Method::Tucker;
  if (name == "fpca") return Method::Fpca;
  throw std::invalid_argument("unknown method '" + name + "' (cp, tucker, fpca)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Cp: return "cp";
    case Method::Tucker: return "tucker";
    case Method::Fpca: return "fpca";
  }
  return "?";
}

RankMode parse_rank_mode(const std::string& name) {
  if (name == "fixed") return RankMode::Fixed;
  if (name == "grid") return RankMode::Grid;
  if (name == "auto") return RankMode::Auto;
  throw std::invalid_argument("unknown rank mode '" + name + "' (fixed, grid, auto)");
}

std::string rank_mode_name(RankMode m) {
  switch (m) {
    case RankMode::Fixed: return "fixed";
    case RankMode::Grid: return "grid";
    case RankMode::Auto: return "auto";
  }
  return "?";
}

DistributionFamily EpochModel::family() const {
  if (cp) return cp->family;
  if (tucker) return tucker->family;
  if (fpca) return fpca->regression.family;
  throw std::logic_error("empty epoch model");
}

double EpochModel::location(const DenseTensor& prefix) const {
  if (prefix.dims() != training_dims)
    throw DimensionError("epoch " + std::to_string(epoch) + " model expects " + dims_to_string(training_dims) +
                         ", got " + dims_to_string(prefix.dims()));
  if (fpca) return fpca->location(prefix);
  const DenseTensor s = project(*subspace, prefix);
  if (cp) return cp_location(*cp, s);
  return tucker_location(*tucker, s);
}

const EpochModel* ModelLibrary::find(Index epoch) const {
  for (const auto& m : models)
    if (m.epoch == epoch) return &m;
  return nullptr;
}

ModelLibrary build_model_library(const Dataset& data, const LibraryOptions& options, int jobs) {
  data.validate();
  if (options.families.empty()) throw std::invalid_argument("no distribution family given");
  const Index first = std::max<Index>(options.first_epoch, 2);
  const Index last = data.frames();
  if (last < first) throw DataError("streams are shorter than the first epoch");
  struct Slot {
    std::optional<EpochModel> model;
    std::string error;
    std::vector<std::string> warnings;
  };
  auto slots = parallel_map(static_cast<std::size_t>(last - first + 1), jobs, [&](std::size_t k) {
    const Index n = first + static_cast<Index>(k);
    Slot slot;
    try {
      const Dataset cut = build_truncated_dataset(data, n);
      slot.model = fit_epoch(cut, n, options, derive_seed(options.fit.seed, n), slot.warnings);
    } catch (const DimensionError&) {
      throw;
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      slot.error = e.what();
    }
    return slot;
  });
  ModelLibrary lib;
  lib.method = options.method;
  lib.seed = options.fit.seed;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const Index n = first + static_cast<Index>(k);
    auto& s = slots[k];
    lib.warnings.insert(lib.warnings.end(), s.warnings.begin(), s.warnings.end());
    if (s.model)
      lib.models.push_back(std::move(*s.model));
    else
      lib.skipped.push_back({n, s.error});
  }
  return lib;
}

void save_library(const fs::path& dir, const ModelLibrary& lib) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "tenreg-library-1";
  manifest["method"] = method_name(lib.method);
  manifest["config_hash"] = lib.config_hash;
  manifest["seed"] = lib.seed;
  manifest["epochs"] = json::array();
  for (const auto& m : lib.models) {
    const std::string stem = epoch_stem(m.epoch);
    json e;
    e["epoch"] = m.epoch;
    e["time"] = m.time;
    e["seed"] = m.seed;
    e["family"] = m.family().name();
    e["training_dims"] = m.training_dims;
    e["ids"] = m.ids;
    if (m.subspace) {
      save_subspace(dir / (stem + ".mpca"), *m.subspace);
      e["subspace"] = stem + ".mpca";
    }
    if (m.cp) {
      save_cp_model(dir / (stem + ".cpm"), *m.cp);
      e["model"] = stem + ".cpm";
      e["ranks"] = Dims{m.cp->rank()};
    } else if (m.tucker) {
      save_tucker_model(dir / (stem + ".tkm"), *m.tucker);
      e["model"] = stem + ".tkm";
      e["ranks"] = m.tucker->ranks();
    } else {
      save_fpca_model(dir / (stem + ".fpca"), *m.fpca);
      e["model"] = stem + ".fpca";
      e["components"] = m.fpca->basis.components();
    }
    manifest["epochs"].push_back(e);
  }
  manifest["skipped"] = json::array();
  for (const auto& s : lib.skipped) manifest["skipped"].push_back({{"epoch", s.epoch}, {"reason", s.reason}});
  manifest["warnings"] = lib.warnings;
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) throw FormatError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

ModelLibrary load_library(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json", std::ios::binary);
  if (!is) throw FormatError("cannot open " + (dir / "manifest.json").string());
  ModelLibrary lib;
  try {
    const json manifest = json::parse(is);
    if (manifest.at("format") != "tenreg-library-1") throw FormatError("unknown library format");
    lib.method = parse_method(manifest.at("method").get<std::string>());
    lib.config_hash = manifest.at("config_hash").get<std::string>();
    lib.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& e : manifest.at("epochs")) {
      EpochModel m;
      m.epoch = e.at("epoch").get<Index>();
      m.time = e.at("time").get<double>();
      m.seed = e.at("seed").get<std::uint64_t>();
      m.method = lib.method;
      m.training_dims = e.at("training_dims").get<Dims>();
      m.ids = e.at("ids").get<std::vector<std::string>>();
      if (e.contains("subspace")) m.subspace = load_subspace(dir / e.at("subspace").get<std::string>());
      const fs::path model = dir / e.at("model").get<std::string>();
      switch (lib.method) {
        case Method::Cp: m.cp = load_cp_model(model); break;
        case Method::Tucker: m.tucker = load_tucker_model(model); break;
        case Method::Fpca: m.fpca = load_fpca_model(model); break;
      }
      if (lib.method != Method::Fpca && !m.subspace) throw FormatError("epoch model without a subspace");
      lib.models.push_back(std::move(m));
    }
    for (const auto& s : manifest.at("skipped"))
      lib.skipped.push_back({s.at("epoch").get<Index>(), s.at("reason").get<std::string>()});
    lib.warnings = manifest.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  return lib;
}

double ttf_from_location(DistributionFamily family, double location) {
  return family.transform() == ResponseTransform::Log ? std::exp(location) : location;
}

double relative_error(double predicted, double truth) { return std::abs(predicted - truth) / truth; }

PredictionRecord predict_rul(const ModelLibrary& lib, const DenseTensor& prefix, std::optional<double> true_ttf,
                             const std::string& id) {
  const Index n = prefix.dim(prefix.order() - 1);
  const EpochModel* m = lib.find(n);
  if (!m) throw DataError("library has no model for epoch " + std::to_string(n));
  PredictionRecord r;
  r.id = id;
  r.epoch = n;
  r.time = m->time;
  r.pred_ttf = ttf_from_location(m->family(), m->location(prefix));
  r.rul = r.pred_ttf - r.time;
  r.negative_rul = r.rul < 0;
  if (true_ttf) {
    r.true_ttf = true_ttf;
    r.rel_error = relative_error(r.pred_ttf, *true_ttf);
    r.percentile = r.time / *true_ttf;
  }
  return r;
}

int percentile_bin(double percentile) {
  // (5%, 15%] -> 10: the upper edge belongs to the bin, so round half down.
  const double k = std::ceil((100.0 * percentile - 5.0) / 10.0 - 1e-9);
  return 10 * static_cast<int>(k);
}

std::vector<BinSummary> summarize_bins(const std::vector<PredictionRecord>& records) {
  std::map<int, std::vector<double>> groups;
  for (const auto& r : records)
    if (r.rel_error && r.percentile) groups[percentile_bin(*r.percentile)].push_back(*r.rel_error);
  std::vector<BinSummary> out;
  for (const auto& [bin, errs] : groups) {
    BinSummary b;
    b.bin = bin;
    b.count = static_cast<Index>(errs.size());
    for (double e : errs) b.mean += e;
    b.mean /= static_cast<double>(errs.size());
    b.variance = sample_variance(errs, b.mean);
    out.push_back(b);
  }
  return out;
}

Evaluation evaluate(const ModelLibrary& lib, const Dataset& test, int jobs) {
  if (test.systems.empty()) throw DataError("empty test set");
  auto per_system = parallel_map(test.systems.size(), jobs, [&](std::size_t i) {
    const System& s = test.systems[i];
    const Index frames = s.stream.dim(s.stream.order() - 1);
    std::vector<PredictionRecord> out;
    for (const auto& m : lib.models) {
      if (m.epoch > frames || !(s.ttf > m.time)) continue;
      out.push_back(predict_rul(lib, truncate_stream(s.stream, m.epoch), s.ttf, s.id));
    }
    return out;
  });
  Evaluation ev;
  for (auto& v : per_system) ev.records.insert(ev.records.end(), v.begin(), v.end());
  summarize(ev);
  return ev;
}

LooResult leave_one_out(const Dataset& data, const LibraryOptions& options, int jobs) {
  data.validate();
  struct Fold {
    std::vector<PredictionRecord> records;
    Index audited = 0;
    Index leaks = 0;
  };
  auto folds = parallel_map(data.systems.size(), jobs, [&](std::size_t i) {
    const System& held = data.systems[i];
    Dataset train;
    train.times = data.times;
    for (std::size_t k = 0; k < data.systems.size(); ++k)
      if (k != i) train.systems.push_back(data.systems[k]);
    const ModelLibrary lib = build_model_library(train, options);
    Fold f;
    for (const auto& m : lib.models) {
      ++f.audited;
      if (std::find(m.ids.begin(), m.ids.end(), held.id) != m.ids.end()) ++f.leaks;
    }
    Dataset one;
    one.times = data.times;
    one.systems.push_back(held);
    f.records = evaluate(lib, one).records;
    return f;
  });
  LooResult out;
  for (auto& f : folds) {
    out.models_audited += f.audited;
    out.leaks += f.leaks;
    out.evaluation.records.insert(out.evaluation.records.end(), f.records.begin(), f.records.end());
  }
  auto& ev = out.evaluation;
  summarize(ev);
  return out;
}

void write_evaluation_csv(std::ostream& os, const std::vector<PredictionRecord>& records) {
  os << "system,epoch,percentile_bin,pred_ttf,rul,rel_error\r\n";
  for (const auto& r : records) {
    os << r.id << ',' << r.epoch << ',';
    if (r.percentile) os << percentile_bin(*r.percentile) << '%';
    os << ',' << fmt(r.pred_ttf) << ',' << fmt(r.rul) << ',';
    if (r.rel_error) os << fmt(*r.rel_error);
    os << "\r\n";
  }
}

void write_bin_summary_csv(std::ostream& os, const std::vector<BinSummary>& bins) {
  os << "bin,count,mean,variance\r\n";
  for (const auto& b : bins) os << b.bin << "%," << b.count << ',' << fmt(b.mean) << ',' << fmt(b.variance) << "\r\n";
}

}  // namespace tenreg
