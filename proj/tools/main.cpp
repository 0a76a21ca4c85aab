// tenreg command-line driver: simulate, fit, select, build-library, predict, evaluate.
//
// Every command takes an optional JSON config (--config FILE, a flat object);
// each config key can be overridden with --<key> (underscores become dashes).
// Exit codes: 0 ok, 2 configuration, 3 data, 4 numerical failure.

#include "tenreg/baseline_fpca.hpp"
#include "tenreg/cp_model.hpp"
#include "tenreg/errors.hpp"
#include "tenreg/io.hpp"
#include "tenreg/mpca.hpp"
#include "tenreg/parallel.hpp"
#include "tenreg/prognosis.hpp"
#include "tenreg/simulate.hpp"
#include "tenreg/tucker_model.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

using namespace tenreg;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Type { Int, Real, Text, OptionalReal };

struct Key {
  std::string name;
  Type type;
  json fallback;
  std::string help;
  std::set<std::string> commands;
};

const std::set<std::string> kAll{"simulate", "fit", "select", "build-library", "predict", "evaluate"};
const std::set<std::string> kFitting{"fit", "select", "build-library"};

const std::vector<Key>& keys() {
  static const std::vector<Key> k{
      {"seed", Type::Int, 0, "master seed", kAll},
      {"output", Type::Text, "", "output file or directory", kAll},
      // simulate
      {"systems", Type::Int, 1000, "number of simulated systems", {"simulate"}},
      {"grid", Type::Int, 21, "interior grid points per side", {"simulate"}},
      {"frames", Type::Int, 10, "frames per stream", {"simulate"}},
      {"side", Type::Real, 0.05, "plate side length", {"simulate"}},
      {"diffusivity_min", Type::Real, 0.5e-5, "lower diffusivity bound", {"simulate"}},
      {"diffusivity_max", Type::Real, 1.5e-5, "upper diffusivity bound", {"simulate"}},
      {"noise_variance", Type::Real, 0.01, "pixel noise variance", {"simulate"}},
      {"refine", Type::Int, 8, "solver grid refinement factor", {"simulate"}},
      {"truth", Type::Text, "cp", "coefficient structure: cp or tucker", {"simulate"}},
      {"train_fraction", Type::Real, 0.5, "share of systems in the training split", {"simulate"}},
      // data selection
      {"data", Type::Text, "", "dataset directory", {"fit", "select", "build-library", "evaluate"}},
      {"subset", Type::Text, "", "all, train or test (needs split.json)", {"fit", "select", "build-library", "evaluate"}},
      // models
      {"method", Type::Text, "tucker", "cp, tucker or fpca", {"fit", "select", "build-library"}},
      {"family", Type::Text, "sev", "distribution family, or comma-separated list", kFitting},
      {"rank", Type::Text, "auto", "rank (2 or 2x1x2), grid, or auto", kFitting},
      {"max_rank", Type::Int, 3, "largest rank in grid mode and cap on auto ranks", kFitting},
      {"lambda", Type::Real, 0.0, "l1 penalty weight", kFitting},
      {"fve", Type::Real, 1.0, "MPCA fraction of variance kept (1 = no reduction for fit/select)", kFitting},
      {"hosvd_fve", Type::Real, 0.95, "HOSVD fraction for auto Tucker ranks", kFitting},
      {"fpca_fve", Type::Real, 0.95, "FPCA fraction of variance kept", kFitting},
      {"restarts", Type::Int, 10, "random restarts per fit", kFitting},
      {"tol", Type::Real, 1e-6, "convergence tolerance on the log-likelihood", kFitting},
      {"max_sweeps", Type::Int, 500, "block-relaxation sweep limit", kFitting},
      {"screen_sweeps", Type::Int, 0, "multi-start screening sweeps (0 = off)", kFitting},
      {"screen_keep", Type::Int, 0, "restarts kept after screening", kFitting},
      {"first_epoch", Type::Int, 2, "first modelled epoch", {"build-library"}},
      // prediction
      {"library", Type::Text, "", "model library directory", {"predict", "evaluate"}},
      {"stream", Type::Text, "", "observed stream prefix (.dten)", {"predict"}},
      {"ttf", Type::OptionalReal, nullptr, "true time-to-failure, if known", {"predict"}},
  };
  return k;
}

// Keys that never influence results and are left out of the config hash.
const std::set<std::string> kUnhashed{"output"};

std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

json parse_value(const Key& k, const std::string& text) {
  try {
    std::size_t used = 0;
    switch (k.type) {
      case Type::Int: {
        const long long v = std::stoll(text, &used);
        if (used == text.size()) return v;
        break;
      }
      case Type::OptionalReal:
        if (text == "none" || text.empty()) return nullptr;
        [[fallthrough]];
      case Type::Real: {
        const double v = std::stod(text, &used);
        if (used == text.size()) return v;
        break;
      }
      case Type::Text: return text;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("--" + flag_name(k.name) + ": cannot parse '" + text + "'");
}

void check_type(const Key& k, const json& v) {
  const bool ok = (k.type == Type::Int && v.is_number_integer()) || (k.type == Type::Real && v.is_number()) ||
                  (k.type == Type::Text && v.is_string()) ||
                  (k.type == Type::OptionalReal && (v.is_null() || v.is_number()));
  if (!ok) throw ConfigError("config key '" + k.name + "' has the wrong type");
}

struct Invocation {
  std::string command;
  std::string config_file;
  std::map<std::string, std::string> overrides;
  int jobs = 1;
  bool print_config = false;
};

json resolve(const Invocation& inv) {
  json cfg = json::object();
  for (const auto& k : keys())
    if (k.commands.count(inv.command)) cfg[k.name] = k.fallback;
  if (!inv.config_file.empty()) {
    std::ifstream is(inv.config_file);
    if (!is) throw ConfigError("cannot open config " + inv.config_file);
    json file;
    try {
      file = json::parse(is);
    } catch (const json::exception& e) {
      throw ConfigError("config " + inv.config_file + ": " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [name, value] : file.items()) {
      if (name == "command") {
        if (value != inv.command) throw ConfigError("config is for command " + value.dump());
        continue;
      }
      const auto it = std::find_if(keys().begin(), keys().end(), [&](const Key& k) { return k.name == name; });
      if (it == keys().end() || !it->commands.count(inv.command))
        throw ConfigError("unknown config key '" + name + "' for " + inv.command);
      check_type(*it, value);
      cfg[name] = value;
    }
  }
  for (const auto& [name, text] : inv.overrides) {
    const auto& k = *std::find_if(keys().begin(), keys().end(), [&](const Key& x) { return x.name == name; });
    cfg[name] = parse_value(k, text);
  }
  cfg["command"] = inv.command;
  return cfg;
}

std::string config_hash(const json& cfg) {
  json h = cfg;
  for (const auto& k : kUnhashed) h.erase(k);
  return hex64(fnv1a64(h.dump()));
}

// --- typed accessors with validation --------------------------------------

std::int64_t get_int(const json& c, const std::string& k, std::int64_t lo) {
  const auto v = c.at(k).get<std::int64_t>();
  if (v < lo) throw ConfigError(k + " must be at least " + std::to_string(lo));
  return v;
}

double get_fraction(const json& c, const std::string& k) {
  const double v = c.at(k).get<double>();
  if (!(v > 0 && v <= 1)) throw ConfigError(k + " must lie in (0, 1]");
  return v;
}

std::string get_text(const json& c, const std::string& k, bool required = false) {
  auto v = c.at(k).get<std::string>();
  if (required && v.empty()) throw ConfigError("missing required key '" + k + "'");
  return v;
}

template <typename F>
auto as_config(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<DistributionFamily> families(const json& c) {
  return as_config([&] { return DistributionFamily::parse_list(get_text(c, "family", true)); });
}

Dims parse_ranks(const std::string& s) {
  Dims r;
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', 'x');
  std::stringstream ss(t);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != part.size() || v < 1) throw ConfigError("bad rank '" + s + "'");
    r.push_back(static_cast<Index>(v));
  }
  if (r.empty()) throw ConfigError("bad rank '" + s + "'");
  return r;
}

FitOptions fit_options(const json& c) {
  FitOptions o;
  o.seed = static_cast<std::uint64_t>(get_int(c, "seed", 0));
  o.lambda = c.at("lambda").get<double>();
  if (!(o.lambda >= 0)) throw ConfigError("lambda must be non-negative");
  o.restarts = static_cast<int>(get_int(c, "restarts", 1));
  o.tol = c.at("tol").get<double>();
  if (!(o.tol > 0)) throw ConfigError("tol must be positive");
  o.max_sweeps = static_cast<int>(get_int(c, "max_sweeps", 1));
  o.screen_sweeps = static_cast<int>(get_int(c, "screen_sweeps", 0));
  o.screen_keep = static_cast<int>(get_int(c, "screen_keep", 0));
  return o;
}

Method method(const json& c) { return as_config([&] { return parse_method(get_text(c, "method", true)); }); }

// --- datasets ----------------------------------------------------------------

Dataset load_subset(const json& c, const std::string& fallback_subset) {
  const fs::path dir = get_text(c, "data", true);
  std::string subset = get_text(c, "subset");
  if (subset.empty()) subset = fallback_subset;
  if (subset != "all" && subset != "train" && subset != "test")
    throw ConfigError("subset must be all, train or test");
  Dataset d = load_dataset(dir);
  if (subset == "all") return d;
  std::ifstream is(dir / "split.json");
  if (!is) throw FormatError("subset '" + subset + "' needs " + (dir / "split.json").string());
  std::set<std::string> ids;
  try {
    const json split = json::parse(is);
    for (const auto& id : split.at(subset)) ids.insert(id.get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("split.json: ") + e.what());
  }
  Dataset out;
  out.times = d.times;
  for (auto& s : d.systems)
    if (ids.count(s.id)) out.systems.push_back(std::move(s));
  if (out.systems.empty()) throw DataError("subset '" + subset + "' is empty");
  return out;
}

RegressionData full_streams(const Dataset& d) {
  RegressionData r;
  for (const auto& s : d.systems) {
    r.covariates.push_back(s.stream);
    r.ttf.push_back(s.ttf);
  }
  return r;
}

// Optional MPCA reduction shared by fit and select (fve = 1 keeps the raw streams).
std::optional<TensorSubspace> reduce(RegressionData& data, double fve) {
  if (fve >= 1.0) return std::nullopt;
  auto sub = fit_mpca(data.covariates, {.fve = fve});
  for (auto& s : data.covariates) s = project(sub, s);
  return sub;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

json rows_json(const std::vector<BicRow>& rows) {
  json a = json::array();
  for (const auto& r : rows) {
    json j{{"family", r.family}, {"rank", r.rank}};
    if (r.error.empty()) {
      j["bic"] = r.bic;
      j["ll"] = r.loglik;
    } else {
      j["error"] = r.error;
    }
    a.push_back(j);
  }
  return a;
}

// --- commands ----------------------------------------------------------------

int cmd_simulate(const json& c, int jobs) {
  HeatSimConfig cfg;
  cfg.systems = get_int(c, "systems", 2);
  cfg.grid = get_int(c, "grid", 2);
  cfg.frames = get_int(c, "frames", 2);
  cfg.side = c.at("side").get<double>();
  cfg.diffusivity_min = c.at("diffusivity_min").get<double>();
  cfg.diffusivity_max = c.at("diffusivity_max").get<double>();
  cfg.noise_variance = c.at("noise_variance").get<double>();
  cfg.refine = get_int(c, "refine", 1);
  cfg.seed = static_cast<std::uint64_t>(get_int(c, "seed", 0));
  as_config([&] {
    cfg.validate();
    return 0;
  });
  const TruthKind kind = as_config([&] { return parse_truth_kind(get_text(c, "truth", true)); });
  const double train = get_fraction(c, "train_fraction");
  fs::path out = get_text(c, "output");
  if (out.empty()) out = fs::path("data") / ("sim_" + truth_kind_name(kind));

  const auto streams = simulate_streams(cfg, jobs);
  const auto truth = make_ground_truth(kind, {cfg.grid, cfg.grid, cfg.frames}, cfg.seed);
  const auto responses = simulate_responses(streams.noisy, truth, cfg.seed);
  const std::string hash = config_hash(c);
  write_simulation(out, cfg, streams, truth, responses, hash);

  std::vector<std::size_t> order(static_cast<std::size_t>(cfg.systems));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x5370));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train * static_cast<double>(order.size())));
  std::vector<std::size_t> tr(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> te(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(tr.begin(), tr.end());
  std::sort(te.begin(), te.end());
  auto ids = [](const std::vector<std::size_t>& v) {
    json a = json::array();
    for (auto i : v) a.push_back(std::to_string(i));
    return a;
  };
  write_json(out / "split.json", {{"config_hash", hash}, {"seed", cfg.seed}, {"train", ids(tr)}, {"test", ids(te)}});
  std::cout << json{{"output", out.string()}, {"systems", cfg.systems}, {"config_hash", hash}}.dump() << '\n';
  return 0;
}

int cmd_fit(const json& c, int jobs) {
  const Method m = method(c);
  const auto fams = families(c);
  if (fams.size() != 1) throw ConfigError("fit takes a single family");
  const std::string rank = get_text(c, "rank", true);
  const fs::path out = get_text(c, "output", true);
  const FitOptions opt = fit_options(c);
  const Dataset d = load_subset(c, "train");
  const std::string hash = config_hash(c);
  json summary{{"config_hash", hash}, {"method", method_name(m)}, {"family", fams[0].name()}};

  if (m == Method::Fpca) {
    std::vector<DenseTensor> streams;
    std::vector<double> ttf;
    for (const auto& s : d.systems) {
      streams.push_back(s.stream);
      ttf.push_back(s.ttf);
    }
    const auto model = fit_fpca_model(streams, ttf, fams[0], get_fraction(c, "fpca_fve"), opt.lambda);
    save_fpca_model(out, model);
    summary["components"] = model.basis.components();
    summary["loglik"] = model.regression.diagnostics.loglik;
    summary["bic"] = model.regression.diagnostics.bic;
  } else {
    RegressionData data = full_streams(d);
    const auto sub = reduce(data, get_fraction(c, "fve"));
    if (sub) save_subspace(fs::path(out).replace_extension(".mpca"), *sub);
    if (m == Method::Cp) {
      const Dims r = parse_ranks(rank);
      if (r.size() != 1) throw ConfigError("CP takes a single rank");
      const auto model = fit_cp(data, r[0], fams[0], opt, jobs);
      save_cp_model(out, model);
      summary["rank"] = rank_string(r);
      summary["loglik"] = model.diagnostics.loglik;
      summary["bic"] = model.diagnostics.bic;
    } else {
      TuckerModel model;
      if (rank == "auto") {
        const auto init = hosvd_init(data, fams[0], get_fraction(c, "hosvd_fve"), get_int(c, "max_rank", 1));
        const auto& h = init.decomposition;
        model = fit_tucker(data, h.ranks, fams[0], opt, TuckerStart{h.core, h.factors}, jobs);
      } else {
        const Dims r = parse_ranks(rank);
        if (static_cast<Index>(r.size()) != data.covariates.front().order())
          throw ConfigError("Tucker needs one rank per mode");
        model = fit_tucker(data, r, fams[0], opt, std::nullopt, jobs);
      }
      save_tucker_model(out, model);
      summary["rank"] = rank_string(model.ranks());
      summary["loglik"] = model.diagnostics.loglik;
      summary["bic"] = model.diagnostics.bic;
    }
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_select(const json& c, int jobs) {
  const Method m = method(c);
  if (m == Method::Fpca) throw ConfigError("select supports cp and tucker");
  const auto fams = families(c);
  const std::string rank = get_text(c, "rank", true);
  const Index max_rank = get_int(c, "max_rank", 1);
  fs::path out = get_text(c, "output");
  if (out.empty()) out = "bic.csv";
  const FitOptions opt = fit_options(c);
  const Dataset d = load_subset(c, "train");
  RegressionData data = full_streams(d);
  reduce(data, get_fraction(c, "fve"));

  std::vector<BicRow> table;
  std::string family, chosen;
  double bic = 0;
  if (m == Method::Cp) {
    std::vector<Index> ranks;
    if (rank == "grid" || rank == "auto") {
      for (Index r = 1; r <= max_rank; ++r) ranks.push_back(r);
    } else {
      for (Index r : parse_ranks(rank)) ranks.push_back(r);
    }
    const auto sel = select_cp_rank(data, fams, ranks, opt, jobs);
    table = sel.table;
    family = sel.family.name();
    chosen = std::to_string(sel.rank);
    bic = sel.best->diagnostics.bic;
  } else {
    TuckerSelection sel;
    if (rank == "auto") {
      sel = select_tucker_auto(data, fams, get_fraction(c, "hosvd_fve"), opt, jobs, max_rank);
    } else if (rank == "grid") {
      sel = select_tucker_grid(data, fams, rank_grid(data.covariates.front().order(), max_rank), opt, jobs);
    } else {
      sel = select_tucker_grid(data, fams, {parse_ranks(rank)}, opt, jobs);
    }
    table = sel.table;
    family = sel.family.name();
    chosen = rank_string(sel.ranks);
    bic = sel.best->diagnostics.bic;
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out, std::ios::binary);
  if (!os) throw FormatError("cannot write " + out.string());
  write_bic_table(os, table);
  const std::string hash = config_hash(c);
  write_json(fs::path(out).replace_extension(".json"),
             {{"config_hash", hash}, {"family", family}, {"rank", chosen}, {"bic", bic}, {"cells", rows_json(table)}});
  std::cout << json{{"family", family}, {"rank", chosen}, {"bic", bic}, {"config_hash", hash}}.dump() << '\n';
  return 0;
}

LibraryOptions library_options(const json& c) {
  LibraryOptions o;
  o.method = method(c);
  o.families = families(c);
  const std::string rank = get_text(c, "rank", true);
  if (rank == "auto" || rank == "grid") {
    o.rank_mode = as_config([&] { return parse_rank_mode(rank); });
    if (o.method == Method::Cp && o.rank_mode == RankMode::Auto)
      throw ConfigError("CP has no automatic rank; use a rank or grid");
  } else {
    o.rank_mode = RankMode::Fixed;
    o.ranks = parse_ranks(rank);
  }
  if (o.rank_mode != RankMode::Grid && o.rank_mode != RankMode::Auto && o.families.size() != 1)
    throw ConfigError("a fixed rank takes a single family");
  o.max_rank = get_int(c, "max_rank", 1);
  o.mpca_fve = get_fraction(c, "fve");
  o.hosvd_fve = get_fraction(c, "hosvd_fve");
  o.fpca_fve = get_fraction(c, "fpca_fve");
  o.fit = fit_options(c);
  o.first_epoch = get_int(c, "first_epoch", 2);
  return o;
}

int cmd_build_library(const json& c, int jobs) {
  const LibraryOptions o = library_options(c);
  fs::path out = get_text(c, "output");
  if (out.empty()) out = "library";
  const Dataset d = load_subset(c, "train");
  ModelLibrary lib = build_model_library(d, o, jobs);
  lib.config_hash = config_hash(c);
  if (lib.models.empty()) throw NumericalError("no epoch model could be built");
  save_library(out, lib);
  for (const auto& w : lib.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& s : lib.skipped) std::cerr << "skipped epoch " << s.epoch << ": " << s.reason << '\n';
  std::cout << json{{"output", out.string()}, {"epochs", lib.models.size()}, {"skipped", lib.skipped.size()},
                    {"config_hash", lib.config_hash}}
                   .dump()
            << '\n';
  return 0;
}

json record_json(const PredictionRecord& r) {
  json j{{"system", r.id}, {"epoch", r.epoch}, {"time", r.time}, {"pred_ttf", r.pred_ttf}, {"rul", r.rul},
         {"negative_rul", r.negative_rul}};
  if (r.true_ttf) {
    j["true_ttf"] = *r.true_ttf;
    j["rel_error"] = *r.rel_error;
    j["percentile"] = *r.percentile;
    j["percentile_bin"] = std::to_string(percentile_bin(*r.percentile)) + "%";
  }
  return j;
}

int cmd_predict(const json& c, int) {
  const ModelLibrary lib = load_library(get_text(c, "library", true));
  const fs::path stream = get_text(c, "stream", true);
  std::optional<double> ttf;
  if (!c.at("ttf").is_null()) {
    ttf = c.at("ttf").get<double>();
    if (!(*ttf > 0)) throw ConfigError("ttf must be positive");
  }
  const auto r = predict_rul(lib, load_tensor(stream), ttf, stream.stem().string());
  json j = record_json(r);
  j["config_hash"] = config_hash(c);
  j["library_config_hash"] = lib.config_hash;
  const std::string out = get_text(c, "output");
  if (!out.empty()) write_json(out, j);
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_evaluate(const json& c, int jobs) {
  const ModelLibrary lib = load_library(get_text(c, "library", true));
  const Dataset test = load_subset(c, "test");
  fs::path out = get_text(c, "output");
  if (out.empty()) out = "evaluation";
  const auto ev = evaluate(lib, test, jobs);
  if (ev.records.empty()) throw DataError("no test system reached a library epoch");
  fs::create_directories(out);
  {
    std::ofstream os(out / "eval.csv", std::ios::binary);
    if (!os) throw FormatError("cannot write " + (out / "eval.csv").string());
    write_evaluation_csv(os, ev.records);
  }
  {
    // Per-bin mean and variance: the data behind an error-by-percentile plot.
    std::ofstream os(out / "bins.csv", std::ios::binary);
    if (!os) throw FormatError("cannot write " + (out / "bins.csv").string());
    write_bin_summary_csv(os, ev.bins);
  }
  const json summary{{"config_hash", config_hash(c)}, {"library_config_hash", lib.config_hash},
                     {"method", method_name(lib.method)}, {"records", ev.records.size()},
                     {"mean_error", ev.mean_error}, {"error_variance", ev.error_variance}};
  write_json(out / "summary.json", summary);
  std::cout << summary.dump() << '\n';
  return 0;
}

int run(const Invocation& inv) {
  const json cfg = resolve(inv);
  if (inv.print_config) {
    std::cout << json{{"config", cfg}, {"config_hash", config_hash(cfg)}}.dump(2) << '\n';
    return 0;
  }
  if (inv.command == "simulate") return cmd_simulate(cfg, inv.jobs);
  if (inv.command == "fit") return cmd_fit(cfg, inv.jobs);
  if (inv.command == "select") return cmd_select(cfg, inv.jobs);
  if (inv.command == "build-library") return cmd_build_library(cfg, inv.jobs);
  if (inv.command == "predict") return cmd_predict(cfg, inv.jobs);
  return cmd_evaluate(cfg, inv.jobs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Location-scale tensor regression for degradation image streams"};
  app.require_subcommand(1);
  Invocation inv;
  std::map<std::string, std::string> raw;
  for (const std::string& name : kAll) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", inv.config_file, "JSON config file");
    sub->add_option("-j,--jobs", inv.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--print-effective-config", inv.print_config, "print the resolved config and exit");
    for (const auto& k : keys())
      if (k.commands.count(name)) sub->add_option("--" + flag_name(k.name), raw[name + "/" + k.name], k.help);
    sub->callback([&inv, name] { inv.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  for (const auto& k : keys()) {
    const auto it = raw.find(inv.command + "/" + k.name);
    if (it == raw.end()) continue;
    auto* opt = app.get_subcommand(inv.command)->get_option("--" + flag_name(k.name));
    if (opt->count() > 0) inv.overrides[k.name] = it->second;
  }
  try {
    return run(inv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
