#pragma once

// Multi-start driver shared by the CP and Tucker fits. With screening enabled
// every restart first runs `screen_sweeps` sweeps and only the `screen_keep`
// best (by objective, then restart index) continue; otherwise each restart
// runs to convergence. Deterministic for any number of workers.

#include "tenreg/errors.hpp"
#include "tenreg/parallel.hpp"
#include "tenreg/regression.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>

namespace tenreg::detail {

template <typename Run>
struct Attempt {
  std::optional<Run> run;
  std::string error;
};

// `start(r)` builds restart r; `advance(run, sweeps)` performs up to `sweeps`
// further sweeps. Runs expose `objective()` and `done()`.
template <typename Run, typename Start, typename Advance>
Run best_of_restarts(const FitOptions& opt, int jobs, Start&& start, Advance&& advance) {
  const auto n = static_cast<std::size_t>(opt.restarts);
  const bool screen = opt.screen_sweeps > 0 && opt.screen_keep > 0 && opt.screen_keep < opt.restarts;
  auto attempts = parallel_map(n, jobs, [&](std::size_t r) {
    Attempt<Run> a;
    try {
      a.run.emplace(start(static_cast<int>(r)));
      advance(*a.run, screen ? opt.screen_sweeps : opt.max_sweeps);
    } catch (const NumericalError& e) {
      a.run.reset();
      a.error = e.what();
    }
    return a;
  });
  if (screen) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& ra = attempts[a].run;
      const auto& rb = attempts[b].run;
      if (!ra || !rb) return static_cast<bool>(ra);
      return ra->objective() > rb->objective();
    });
    order.resize(static_cast<std::size_t>(opt.screen_keep));
    auto resumed = parallel_map(order.size(), jobs, [&](std::size_t k) {
      Attempt<Run> a = attempts[order[k]];
      if (a.run && !a.run->done()) {
        try {
          advance(*a.run, opt.max_sweeps);
        } catch (const NumericalError& e) {
          a.run.reset();
          a.error = e.what();
        }
      }
      return a;
    });
    for (std::size_t k = 0; k < order.size(); ++k) attempts[order[k]] = std::move(resumed[k]);
  }
  const Run* best = nullptr;
  for (const auto& a : attempts)
    if (a.run && (!best || a.run->objective() > best->objective())) best = &*a.run;
  if (!best) throw NumericalError("every restart failed: " + attempts.front().error);
  return *best;
}

}  // namespace tenreg::detail
