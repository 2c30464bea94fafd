#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "andhra/ops.hpp"
#include "andhra/rng.hpp"
#include "andhra/tensor.hpp"

namespace andhra::gradcheck {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;       // "input[i]"
  std::size_t checked = 0;
  std::size_t kinks = 0;   // elements judged to sit on a non-differentiable point
};

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

// Compares analytic gradients of L = sum(w * f()) against central finite
// differences for every element of every input. f must rebuild its graph
// from the current values of `inputs` on each call. Where the central
// estimate disagrees, one-sided second-order estimates on both sides are
// taken: if they differ from each other (a kink within h) and the analytic
// value matches one of them, the element counts as a kink, not a failure.
inline GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                  std::uint64_t weight_seed, double h = 1e-5, double tol = 1e-4) {
  Tensor probe = f();
  Rng rng(weight_seed);
  std::vector<double> w(probe.numel());
  for (auto& v : w) v = 2.0 * rng.uniform() - 1.0;
  const Tensor weights = Tensor::from(probe.shape(), w);

  for (auto& t : inputs) t.zero_grad();
  Tensor loss = sum(mul(f(), weights));
  loss.backward();

  auto outputs = [&]() {
    NoGradGuard guard;
    const Tensor out = f();
    const auto d = out.data();
    return std::vector<double>(d.begin(), d.end());
  };
  // Weighted combination of output differences; differencing per element
  // before the reduction keeps cancellation in the loss out of the estimate.
  auto slope = [&](const std::vector<std::pair<double, const std::vector<double>*>>& terms, double denom) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      double d = 0.0;
      for (const auto& [c, v] : terms) d += c * (*v)[j];
      s += w[j] * d;
    }
    return s / denom;
  };

  GradCheckResult res;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const std::vector<double> analytic = inputs[t].grad();
    auto data = inputs[t].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double x0 = data[i];
      auto at = [&](double offset) {
        data[i] = x0 + offset;
        auto v = outputs();
        data[i] = x0;
        return v;
      };
      const auto fp = at(h), fm = at(-h);
      const double central = slope({{1.0, &fp}, {-1.0, &fm}}, 2.0 * h);
      double err = rel_error(analytic[i], central);
      if (err >= tol) {
        const auto f0 = at(0.0);
        const auto fp2 = at(2.0 * h), fm2 = at(-2.0 * h);
        const double right = slope({{-3.0, &f0}, {4.0, &fp}, {-1.0, &fp2}}, 2.0 * h);
        const double left = slope({{3.0, &f0}, {-4.0, &fm}, {1.0, &fm2}}, 2.0 * h);
        const bool kink = rel_error(left, right) >= tol;
        const double best = std::min(rel_error(analytic[i], left), rel_error(analytic[i], right));
        if (kink && best < tol) {
          ++res.kinks;
          err = best;
        }
      }
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst = "input" + std::to_string(t) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::from(shape, std::move(v), requires_grad);
}

}  // namespace andhra::gradcheck
