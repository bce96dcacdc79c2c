#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdmt/tensor/rng.hpp"
#include "cdmt/tensor/tensor.hpp"

namespace cdmt {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t below_floor = 0;  // coordinates where both gradients were noise-sized
};

namespace detail {

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
}

// Central differences carry rounding noise of roughly eps * |f| / h, so a
// gradient that is exactly zero (e.g. an attention key bias) shows up as
// ~1e-8 numerically. Pairs where both sides are below `floor` count as equal.
inline bool below_floor(double analytic, double numeric, double floor) {
  return std::abs(analytic) < floor && std::abs(numeric) < floor;
}

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::domain_error(std::string("finite_diff_check: non-finite ") + what);
}

}  // namespace detail

/// Compare the analytic gradient of scalar f at `point` against central
/// differences with step h, over every coordinate.
template <typename T>
GradCheckResult finite_diff_check(const std::function<Var<T>(Graph<T>&, Var<T>)>& f, const Shape& shape,
                                  const std::vector<T>& point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step h must be positive");
  std::vector<T> analytic;
  {
    Graph<T> g;
    auto x = g.input(shape, point);
    auto y = f(g, x);
    detail::require_finite(static_cast<double>(y.item()), "function value");
    g.backward(y);
    analytic.assign(x.grad().begin(), x.grad().end());
  }
  auto eval = [&](const std::vector<T>& p) {
    Graph<T> g(false);
    auto x = g.input(shape, p);
    const double v = static_cast<double>(f(g, x).item());
    detail::require_finite(v, "function value");
    return v;
  };
  GradCheckResult res;
  std::vector<T> p = point;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T orig = p[i];
    p[i] = orig + T(h);
    const double fp = eval(p);
    p[i] = orig - T(h);
    const double fm = eval(p);
    p[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    detail::require_finite(static_cast<double>(analytic[i]), "analytic gradient");
    const double err = detail::rel_error(static_cast<double>(analytic[i]), numeric);
    if (err > res.max_rel_error || res.checked == 0) {
      res.max_rel_error = err;
      res.worst_index = i;
    }
    ++res.checked;
  }
  return res;
}

/// Same check against model parameters. f builds the loss from scratch in the
/// graph it is handed. At most `coords_per_param` coordinates are sampled from
/// each parameter (all of them when the parameter is smaller).
template <typename T>
GradCheckResult finite_diff_check(const std::function<Var<T>(Graph<T>&)>& f, std::span<Parameter<T>* const> params,
                                  double h, std::size_t coords_per_param, CounterRng& rng, double floor = 1e-7) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step h must be positive");
  for (auto* p : params) p->zero_grad();
  {
    Graph<T> g;
    auto y = f(g);
    detail::require_finite(static_cast<double>(y.item()), "function value");
    g.backward(y);
  }
  auto eval = [&] {
    Graph<T> g(false);
    const double v = static_cast<double>(f(g).item());
    detail::require_finite(v, "function value");
    return v;
  };
  GradCheckResult res;
  std::size_t base = 0;
  for (auto* p : params) {
    std::vector<std::size_t> coords(p->size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > coords_per_param) {
      shuffle(coords.begin(), coords.end(), rng);
      coords.resize(coords_per_param);
    }
    for (auto i : coords) {
      const T orig = p->value[i];
      p->value[i] = orig + T(h);
      const double fp = eval();
      p->value[i] = orig - T(h);
      const double fm = eval();
      p->value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = static_cast<double>(p->grad[i]);
      detail::require_finite(analytic, "analytic gradient");
      const bool tiny = detail::below_floor(analytic, numeric, floor);
      const double err = tiny ? 0.0 : detail::rel_error(analytic, numeric);
      res.below_floor += tiny ? 1 : 0;
      if (err > res.max_rel_error || res.checked == 0) {
        res.max_rel_error = err;
        res.worst_index = base + i;
      }
      ++res.checked;
    }
    base += p->size();
  }
  return res;
}

}  // namespace cdmt
