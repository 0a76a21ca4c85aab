#include "tenreg/cp_model.hpp"

#include "tenreg/errors.hpp"
#include "tenreg/io.hpp"
#include "tenreg/parallel.hpp"
#include "tenreg/model_io.hpp"
#include "multistart.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace tenreg {

namespace {

constexpr std::string_view kMagic = "CPM1";

double l1(const Matrix& m) { return m.cwiseAbs().sum(); }

struct CpRun {
  CpModel model;
  BlockState state;
  double last = -std::numeric_limits<double>::infinity();
  bool finished = false;
  double objective() const { return last; }
  bool done() const { return finished; }
};

CpRun start_cp(const Dims& dims, const Vector& y, Index rank, DistributionFamily family, const FitOptions& opt,
               int restart) {
  const Index order = static_cast<Index>(dims.size());
  const std::uint64_t seed = derive_seed(opt.seed, rank, restart);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;

  CpRun run;
  CpModel& m = run.model;
  m.family = family;
  m.penalties.assign(static_cast<std::size_t>(order), opt.lambda);
  m.factors.resize(static_cast<std::size_t>(order));
  m.factors[0] = Matrix::Zero(dims[0], rank);
  for (Index d = 1; d < order; ++d) {
    Matrix& b = m.factors[static_cast<std::size_t>(d)];
    b.resize(dims[static_cast<std::size_t>(d)], rank);
    for (Index k = 0; k < b.size(); ++k) b.data()[k] = normal(rng);
  }
  m.diagnostics.restart = restart;
  m.diagnostics.seed = seed;
  run.state = initial_block_state(y, 0);
  return run;
}

// Up to `max_total` sweeps in all; the model's alpha and sigma track the state.
void advance_cp(CpRun& run, const ModeUnfoldings& unf, const Vector& y, const FitOptions& opt, int max_total) {
  CpModel& m = run.model;
  FitDiagnostics& diag = m.diagnostics;
  const Index order = static_cast<Index>(m.factors.size());
  const Index rank = m.rank();
  while (!run.finished && diag.sweeps < max_total) {
    double objective = run.last;
    for (Index d = 0; d < order; ++d) {
      const auto du = static_cast<std::size_t>(d);
      const Matrix design = unf.design(d, khatri_rao_chain(m.factors, d));
      double others = 0.0;
      for (Index k = 0; k < order; ++k)
        if (k != d) others += m.penalties[static_cast<std::size_t>(k)] * l1(m.factors[static_cast<std::size_t>(k)]);
      const BlockProblem prob{design, y, m.family.working(), m.penalties[du], others};
      BlockState warm{run.state.rho * Eigen::Map<const Vector>(m.factors[du].data(), m.factors[du].size()),
                      run.state.rho, run.state.alpha0};
      const auto sol = solve_block(prob, warm, opt.block);
      run.state = sol.state;
      m.factors[du] = Eigen::Map<const Matrix>(sol.state.coef.data(), m.factors[du].rows(), rank) / run.state.rho;
      if (sol.objective < objective - 1e-9 * std::max(1.0, std::abs(objective)))
        throw NumericalError("block relaxation objective decreased");
      objective = sol.objective;
      if (opt.keep_trace) diag.trace.push_back(objective);
    }
    ++diag.sweeps;
    if (!std::isfinite(objective)) throw NumericalError("non-finite log-likelihood");
    run.finished = objective - run.last < opt.tol;
    run.last = objective;
  }
  diag.converged = run.finished;
  diag.loglik = run.last;
  m.sigma = 1.0 / run.state.rho;
  m.alpha = run.state.alpha0 / run.state.rho;
}

}  // namespace

Dims CpModel::dims() const {
  Dims d;
  for (const auto& f : factors) d.push_back(f.rows());
  return d;
}

Matrix cp_predictor_matrix(const DenseTensor& s, const std::vector<Matrix>& factors, Index mode) {
  if (static_cast<Index>(factors.size()) != s.order())
    throw DimensionError("cp_predictor_matrix: need one factor per mode");
  for (Index d = 0; d < s.order(); ++d)
    if (factors[static_cast<std::size_t>(d)].rows() != s.dim(d))
      throw DimensionError("cp_predictor_matrix: factor rows do not match tensor dims");
  return matricize(s, mode) * khatri_rao_chain(factors, mode);
}

double cp_location(const CpModel& model, const DenseTensor& s) {
  if (s.dims() != model.dims())
    throw DimensionError("CP model expects dims " + dims_to_string(model.dims()) + ", got " +
                         dims_to_string(s.dims()));
  return model.alpha + inner(model.coefficient(), s);
}

double cp_penalized_loglik(const CpModel& model, const RegressionData& data) {
  const Vector y = working_responses(model.family, data.ttf);
  const DenseTensor b = model.coefficient();
  Vector loc(data.size());
  for (Index i = 0; i < data.size(); ++i) loc[i] = model.alpha + inner(b, data.covariates[static_cast<std::size_t>(i)]);
  double pen = 0.0;
  for (std::size_t d = 0; d < model.factors.size(); ++d) pen += model.penalties[d] * l1(model.factors[d]);
  return location_scale_loglik(model.family.working(), y, loc, model.sigma) - pen / model.sigma;
}

double cp_effective_parameters(const Dims& dims, Index rank) {
  const double r = static_cast<double>(rank);
  double sum = 0.0;
  for (Index p : dims) sum += static_cast<double>(p);
  if (dims.size() == 2) return r * sum - r * r;
  return r * (sum - static_cast<double>(dims.size()) + 1.0);
}

double cp_bic(const CpModel& model, const RegressionData& data) {
  return bic_value(model.family, data.ttf, cp_penalized_loglik(model, data),
                   cp_effective_parameters(model.dims(), model.rank()));
}

CpModel fit_cp(const RegressionData& data, Index rank, DistributionFamily family,
               const FitOptions& options, int jobs) {
  data.validate();
  if (rank < 1) throw std::invalid_argument("CP rank must be at least 1");
  if (options.restarts < 1) throw std::invalid_argument("need at least one restart");
  const Vector y = working_responses(family, data.ttf);
  const ModeUnfoldings unf(data);

  CpModel out = detail::best_of_restarts<CpRun>(
                    options, jobs,
                    [&](int r) { return start_cp(data.dims(), y, rank, family, options, r); },
                    [&](CpRun& run, int sweeps) { advance_cp(run, unf, y, options, sweeps); })
                    .model;
  out.diagnostics.bic = bic_value(family, data.ttf, out.diagnostics.loglik,
                                  cp_effective_parameters(out.dims(), rank));
  return out;
}

CpSelection select_cp_rank(const RegressionData& data, const std::vector<DistributionFamily>& families,
                           const std::vector<Index>& ranks, const FitOptions& options, int jobs) {
  if (families.empty() || ranks.empty()) throw std::invalid_argument("empty selection grid");
  struct Cell {
    BicRow row;
    std::optional<CpModel> model;
  };
  const std::size_t cells = families.size() * ranks.size();
  auto results = parallel_map(cells, jobs, [&](std::size_t c) {
    const auto family = families[c / ranks.size()];
    const Index rank = ranks[c % ranks.size()];
    Cell cell;
    cell.row.family = family.name();
    cell.row.rank = std::to_string(rank);
    try {
      FitOptions o = options;
      o.seed = derive_seed(options.seed, c);
      cell.model = fit_cp(data, rank, family, o);
      const auto& dg = cell.model->diagnostics;
      cell.row.bic = dg.bic;
      cell.row.loglik = dg.loglik;
      cell.row.sweeps = dg.sweeps;
      cell.row.seed = dg.seed;
    } catch (const std::exception& e) {
      cell.row.error = e.what();
    }
    return cell;
  });
  CpSelection sel;
  for (std::size_t c = 0; c < cells; ++c) {
    auto& cell = results[c];
    sel.table.push_back(cell.row);
    if (cell.model && (!sel.best || cell.row.bic < sel.best->diagnostics.bic)) {
      sel.best = std::move(cell.model);
      sel.family = families[c / ranks.size()];
      sel.rank = ranks[c % ranks.size()];
    }
  }
  if (!sel.best) throw NumericalError("no CP cell could be fitted");
  return sel;
}

void write_cp_model(std::ostream& os, const CpModel& m) {
  BinaryWriter w(os);
  w.magic(kMagic);
  w.string(m.family.name());
  w.f64(m.alpha);
  w.f64(m.sigma);
  w.u32(static_cast<std::uint64_t>(m.rank()));
  w.u32(m.factors.size());
  w.dims(m.dims());
  for (const auto& f : m.factors) w.matrix(f);
}

CpModel read_cp_model(std::istream& is) {
  BinaryReader r(is);
  r.expect_magic(kMagic);
  CpModel m;
  try {
    m.family = DistributionFamily::parse(r.string());
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  m.alpha = r.f64();
  m.sigma = r.f64();
  const Index rank = r.u32();
  const Index order = r.u32();
  if (order < 1 || order > 64 || rank < 1) throw FormatError("implausible CP model header");
  const Dims dims = r.dims(order);
  for (Index p : dims) m.factors.push_back(r.matrix(p, rank));
  m.penalties.assign(static_cast<std::size_t>(order), 0.0);
  return m;
}

void save_cp_model(const std::filesystem::path& path, const CpModel& m) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    write_cp_model(os, m);
  }
  write_sidecar(sidecar_path(path), m.diagnostics, m.penalties, std::nullopt, rank_string({m.rank()}));
}

CpModel load_cp_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  CpModel m = read_cp_model(is);
  BinaryReader(is).expect_end();
  read_sidecar(sidecar_path(path), m.diagnostics, m.penalties, nullptr);
  return m;
}

}  // namespace tenreg
