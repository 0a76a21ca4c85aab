#include "tenreg/tucker_model.hpp"

#include "tenreg/errors.hpp"
#include "tenreg/io.hpp"
#include "tenreg/model_io.hpp"
#include "tenreg/mpca.hpp"
#include "tenreg/parallel.hpp"
#include "multistart.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace tenreg {

namespace {

constexpr std::string_view kMagic = "TKM1";

double l1(const Matrix& m) { return m.cwiseAbs().sum(); }
double l1(const DenseTensor& t) { return t.data().cwiseAbs().sum(); }

void check_shapes(const Dims& dims, const DenseTensor& core, const std::vector<Matrix>& factors) {
  if (factors.size() != dims.size() || core.order() != static_cast<Index>(dims.size()))
    throw DimensionError("Tucker: need one factor per mode and a core of matching order");
  for (std::size_t d = 0; d < dims.size(); ++d)
    if (factors[d].rows() != dims[d] || factors[d].cols() != core.dim(static_cast<Index>(d)))
      throw DimensionError("Tucker: factor " + std::to_string(d) + " is " + std::to_string(factors[d].rows()) +
                           "x" + std::to_string(factors[d].cols()) + ", expected " + std::to_string(dims[d]) +
                           "x" + std::to_string(core.dim(static_cast<Index>(d))));
}

// N x prod(P_d), row i = vec(s_i).
Matrix stacked(const RegressionData& data) {
  Matrix v(data.size(), data.covariates.front().size());
  for (Index i = 0; i < data.size(); ++i) v.row(i) = data.covariates[static_cast<std::size_t>(i)].data().transpose();
  return v;
}

std::uint64_t rank_code(const Dims& ranks) {
  std::uint64_t code = ranks.size();
  for (Index r : ranks) code = code * 1000003u + static_cast<std::uint64_t>(r);
  return code;
}

struct TuckerRun {
  TuckerModel model;
  BlockState state;
  double last = -std::numeric_limits<double>::infinity();
  bool finished = false;
  double objective() const { return last; }
  bool done() const { return finished; }
};

TuckerRun start_tucker(const Dims& dims, const Vector& y, const Dims& ranks, DistributionFamily family,
                       const FitOptions& opt, int restart, const TuckerStart* start) {
  const Index order = static_cast<Index>(dims.size());
  const std::uint64_t seed = derive_seed(opt.seed, rank_code(ranks), restart);
  TuckerRun run;
  TuckerModel& m = run.model;
  m.family = family;
  m.core_penalty = opt.lambda;
  m.penalties.assign(static_cast<std::size_t>(order), opt.lambda);
  if (start) {
    m.core = start->core;
    m.factors = start->factors;
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    m.core = DenseTensor(ranks);
    for (Index k = 0; k < m.core.size(); ++k) m.core.data()[k] = normal(rng);
    m.factors.resize(static_cast<std::size_t>(order));
    m.factors[0] = Matrix::Zero(dims[0], ranks[0]);
    for (Index d = 1; d < order; ++d) {
      Matrix& b = m.factors[static_cast<std::size_t>(d)];
      b.resize(dims[static_cast<std::size_t>(d)], ranks[static_cast<std::size_t>(d)]);
      for (Index k = 0; k < b.size(); ++k) b.data()[k] = normal(rng);
    }
  }
  check_shapes(dims, m.core, m.factors);
  m.diagnostics.restart = restart;
  m.diagnostics.seed = seed;
  run.state = initial_block_state(y, 0);
  return run;
}

// Factor blocks d = 0..D-1, then the core; up to `max_total` sweeps in all.
void advance_tucker(TuckerRun& run, const ModeUnfoldings& unf, const Matrix& v, const Vector& y,
                    const FitOptions& opt, int max_total) {
  TuckerModel& m = run.model;
  FitDiagnostics& diag = m.diagnostics;
  const Index order = static_cast<Index>(m.factors.size());
  auto factor_l1 = [&](Index skip) {
    double s = 0.0;
    for (Index k = 0; k < order; ++k)
      if (k != skip) s += m.penalties[static_cast<std::size_t>(k)] * l1(m.factors[static_cast<std::size_t>(k)]);
    return s;
  };
  auto accept = [&](double& objective, double value) {
    if (value < objective - 1e-9 * std::max(1.0, std::abs(objective)))
      throw NumericalError("block relaxation objective decreased");
    objective = value;
    if (opt.keep_trace) diag.trace.push_back(objective);
  };
  while (!run.finished && diag.sweeps < max_total) {
    double objective = run.last;
    for (Index d = 0; d < order; ++d) {
      const auto du = static_cast<std::size_t>(d);
      const Matrix design = unf.design(d, kronecker_chain(m.factors, d) * matricize(m.core, d).transpose());
      const BlockProblem prob{design, y, m.family.working(), m.penalties[du],
                              m.core_penalty * l1(m.core) + factor_l1(d)};
      BlockState warm{run.state.rho * Eigen::Map<const Vector>(m.factors[du].data(), m.factors[du].size()),
                      run.state.rho, run.state.alpha0};
      const auto sol = solve_block(prob, warm, opt.block);
      run.state = sol.state;
      m.factors[du] = Eigen::Map<const Matrix>(run.state.coef.data(), m.factors[du].rows(), m.factors[du].cols()) /
                      run.state.rho;
      accept(objective, sol.objective);
    }
    {
      const Matrix design = v * kronecker_chain(m.factors);
      const BlockProblem prob{design, y, m.family.working(), m.core_penalty, factor_l1(-1)};
      BlockState warm{run.state.rho * m.core.data(), run.state.rho, run.state.alpha0};
      const auto sol = solve_block(prob, warm, opt.block);
      run.state = sol.state;
      m.core.data() = run.state.coef / run.state.rho;
      accept(objective, sol.objective);
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

Dims TuckerModel::dims() const {
  Dims d;
  for (const auto& f : factors) d.push_back(f.rows());
  return d;
}

Vector tucker_core_predictor(const DenseTensor& s, const std::vector<Matrix>& factors) {
  if (static_cast<Index>(factors.size()) != s.order())
    throw DimensionError("tucker_core_predictor: need one factor per mode");
  for (Index d = 0; d < s.order(); ++d)
    if (factors[static_cast<std::size_t>(d)].rows() != s.dim(d))
      throw DimensionError("tucker_core_predictor: factor rows do not match tensor dims");
  return multi_mode_product(s, factors, true).data();
}

Matrix tucker_factor_predictor(const DenseTensor& s, const DenseTensor& core,
                               const std::vector<Matrix>& factors, Index mode) {
  check_shapes(s.dims(), core, factors);
  const DenseTensor y = multi_mode_product(s, factors, true, mode);
  return matricize(y, mode) * matricize(core, mode).transpose();
}

double tucker_location(const TuckerModel& model, const DenseTensor& s) {
  if (s.dims() != model.dims())
    throw DimensionError("Tucker model expects dims " + dims_to_string(model.dims()) + ", got " +
                         dims_to_string(s.dims()));
  return model.alpha + model.core.data().dot(tucker_core_predictor(s, model.factors));
}

double tucker_penalized_loglik(const TuckerModel& model, const RegressionData& data) {
  const Vector y = working_responses(model.family, data.ttf);
  const DenseTensor b = model.coefficient();
  Vector loc(data.size());
  for (Index i = 0; i < data.size(); ++i) loc[i] = model.alpha + inner(b, data.covariates[static_cast<std::size_t>(i)]);
  double pen = model.core_penalty * l1(model.core);
  for (std::size_t d = 0; d < model.factors.size(); ++d) pen += model.penalties[d] * l1(model.factors[d]);
  return location_scale_loglik(model.family.working(), y, loc, model.sigma) - pen / model.sigma;
}

double tucker_effective_parameters(const Dims& dims, const Dims& ranks) {
  if (dims.size() != ranks.size()) throw DimensionError("tucker_effective_parameters: order mismatch");
  double p = 0.0, core = 1.0;
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const double r = static_cast<double>(ranks[d]);
    p += static_cast<double>(dims[d]) * r - r * r;
    core *= r;
  }
  return p + core;
}

double tucker_bic(const TuckerModel& model, const RegressionData& data) {
  return bic_value(model.family, data.ttf, tucker_penalized_loglik(model, data),
                   tucker_effective_parameters(model.dims(), model.ranks()));
}

TuckerModel fit_tucker(const RegressionData& data, const Dims& ranks, DistributionFamily family,
                       const FitOptions& options, const std::optional<TuckerStart>& start, int jobs) {
  data.validate();
  if (ranks.size() != data.dims().size()) throw std::invalid_argument("need one Tucker rank per mode");
  for (Index r : ranks)
    if (r < 1) throw std::invalid_argument("Tucker ranks must be at least 1");
  if (options.restarts < 1) throw std::invalid_argument("need at least one restart");
  if (start) {
    if (start->core.dims() != ranks) throw DimensionError("Tucker start core does not match the ranks");
    check_shapes(data.dims(), start->core, start->factors);
  }
  const Vector y = working_responses(family, data.ttf);
  const ModeUnfoldings unf(data);
  const Matrix v = stacked(data);

  TuckerModel out =
      detail::best_of_restarts<TuckerRun>(
          options, jobs,
          [&](int r) {
            return start_tucker(data.dims(), y, ranks, family, options, r, (r == 0 && start) ? &*start : nullptr);
          },
          [&](TuckerRun& run, int sweeps) { advance_tucker(run, unf, v, y, options, sweeps); })
          .model;
  out.diagnostics.bic = bic_value(family, data.ttf, out.diagnostics.loglik,
                                  tucker_effective_parameters(out.dims(), ranks));
  return out;
}

HosvdResult hosvd(const DenseTensor& t, double fve, Index max_rank) {
  HosvdResult h;
  for (Index d = 0; d < t.order(); ++d) {
    const Matrix m = matricize(t, d);
    const SymmetricEigen eig = sorted_symmetric_eigen(m * m.transpose());
    Index r = std::max<Index>(1, components_for_fve(eig.values, fve));
    if (max_rank > 0) r = std::min(r, max_rank);
    h.ranks.push_back(r);
    h.factors.push_back(eig.vectors.leftCols(r));
  }
  h.core = multi_mode_product(t, h.factors, true);
  return h;
}

HosvdInit hosvd_init(const RegressionData& data, DistributionFamily family, double fve,
                     Index max_rank) {
  data.validate();
  const Vector y = working_responses(family, data.ttf);
  const Matrix v = stacked(data);
  const BlockState base = initial_block_state(y, 1);
  HosvdInit out;
  out.initial = DenseTensor(data.dims());
  for (Index j = 0; j < v.cols(); ++j) {
    double slope = 0.0;
    const Matrix column = v.col(j);
    if (column.maxCoeff() > column.minCoeff()) {
      try {
        const BlockProblem prob{column, y, family.working(), 0.0, 0.0};
        const auto sol = solve_block(prob, base);
        slope = sol.state.coef[0] / sol.state.rho;
      } catch (const NumericalError&) {
        slope = 0.0;
      }
    }
    out.initial.data()[j] = slope;
  }
  if (!(out.initial.data().cwiseAbs().maxCoeff() > 0))
    throw DataError("every entrywise regression slope is zero");
  out.decomposition = hosvd(out.initial, fve, max_rank);
  return out;
}

std::vector<Dims> rank_grid(Index order, Index max_rank) {
  if (order < 1 || max_rank < 1) throw std::invalid_argument("rank grid needs order and max rank >= 1");
  std::vector<Dims> out;
  Dims r(static_cast<std::size_t>(order), 1);
  while (true) {
    out.push_back(r);
    std::size_t d = 0;
    while (d < r.size() && r[d] == max_rank) r[d++] = 1;
    if (d == r.size()) break;
    ++r[d];
  }
  return out;
}

namespace {

struct TuckerCell {
  BicRow row;
  std::optional<TuckerModel> model;
};

TuckerSelection reduce_cells(std::vector<TuckerCell>& cells) {
  TuckerSelection sel;
  for (auto& cell : cells) {
    sel.table.push_back(cell.row);
    if (cell.model && (!sel.best || cell.row.bic < sel.best->diagnostics.bic)) {
      sel.family = cell.model->family;
      sel.ranks = cell.model->ranks();
      sel.best = std::move(cell.model);
    }
  }
  if (!sel.best) {
    std::string why = "no Tucker cell could be fitted";
    if (!sel.table.empty()) why += " (" + sel.table.front().rank + " " + sel.table.front().family + ": " + sel.table.front().error + ")";
    throw NumericalError(why);
  }
  return sel;
}

void fill_row(TuckerCell& cell) {
  const auto& dg = cell.model->diagnostics;
  cell.row.bic = dg.bic;
  cell.row.loglik = dg.loglik;
  cell.row.sweeps = dg.sweeps;
  cell.row.seed = dg.seed;
}

}  // namespace

TuckerSelection select_tucker_grid(const RegressionData& data,
                                   const std::vector<DistributionFamily>& families,
                                   const std::vector<Dims>& grid, const FitOptions& options, int jobs) {
  if (families.empty() || grid.empty()) throw std::invalid_argument("empty selection grid");
  const std::size_t n = families.size() * grid.size();
  auto cells = parallel_map(n, jobs, [&](std::size_t c) {
    const auto family = families[c / grid.size()];
    const Dims& ranks = grid[c % grid.size()];
    TuckerCell cell;
    cell.row.family = family.name();
    cell.row.rank = rank_string(ranks);
    try {
      FitOptions o = options;
      o.seed = derive_seed(options.seed, c);
      cell.model = fit_tucker(data, ranks, family, o);
      fill_row(cell);
    } catch (const std::exception& e) {
      cell.row.error = e.what();
    }
    return cell;
  });
  return reduce_cells(cells);
}

TuckerSelection select_tucker_auto(const RegressionData& data,
                                   const std::vector<DistributionFamily>& families, double fve,
                                   const FitOptions& options, int jobs, Index max_rank) {
  if (families.empty()) throw std::invalid_argument("empty family list");
  auto cells = parallel_map(families.size(), jobs, [&](std::size_t c) {
    TuckerCell cell;
    cell.row.family = families[c].name();
    try {
      const HosvdInit init = hosvd_init(data, families[c], fve, max_rank);
      cell.row.rank = rank_string(init.decomposition.ranks);
      FitOptions o = options;
      o.seed = derive_seed(options.seed, c);
      cell.model = fit_tucker(data, init.decomposition.ranks, families[c], o,
                              TuckerStart{init.decomposition.core, init.decomposition.factors});
      fill_row(cell);
    } catch (const std::exception& e) {
      cell.row.error = e.what();
    }
    return cell;
  });
  return reduce_cells(cells);
}

void write_tucker_model(std::ostream& os, const TuckerModel& m) {
  BinaryWriter w(os);
  w.magic(kMagic);
  w.string(m.family.name());
  w.f64(m.alpha);
  w.f64(m.sigma);
  w.u32(m.factors.size());
  w.dims(m.dims());
  w.dims(m.ranks());
  w.f64s(m.core.data().data(), m.core.size());
  for (const auto& f : m.factors) w.matrix(f);
}

TuckerModel read_tucker_model(std::istream& is) {
  BinaryReader r(is);
  r.expect_magic(kMagic);
  TuckerModel m;
  try {
    m.family = DistributionFamily::parse(r.string());
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  m.alpha = r.f64();
  m.sigma = r.f64();
  const Index order = r.u32();
  if (order < 1 || order > 64) throw FormatError("implausible Tucker model header");
  const Dims dims = r.dims(order);
  const Dims ranks = r.dims(order);
  m.core = DenseTensor(ranks);
  r.f64s(m.core.data().data(), m.core.size());
  for (std::size_t d = 0; d < dims.size(); ++d) m.factors.push_back(r.matrix(dims[d], ranks[d]));
  m.penalties.assign(static_cast<std::size_t>(order), 0.0);
  return m;
}

void save_tucker_model(const std::filesystem::path& path, const TuckerModel& m) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    write_tucker_model(os, m);
  }
  write_sidecar(sidecar_path(path), m.diagnostics, m.penalties, m.core_penalty, rank_string(m.ranks()));
}

TuckerModel load_tucker_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  TuckerModel m = read_tucker_model(is);
  BinaryReader(is).expect_end();
  read_sidecar(sidecar_path(path), m.diagnostics, m.penalties, &m.core_penalty);
  return m;
}

}  // namespace tenreg
