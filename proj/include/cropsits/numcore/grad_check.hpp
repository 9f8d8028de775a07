#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cropsits/numcore/ops.hpp"
#include "cropsits/rng.hpp"

// Finite-difference verification of tape gradients. Always run at 64-bit:
// central differences lose ~half the working precision, which leaves no
// usable tolerance window in float.

namespace cropsits::num {

struct GradCheckReport {
  double max_rel_error = 0.0;
  Index checked = 0;  // elements actually probed
  bool pass = true;
};

// f must map (tape, leaf) -> scalar loss, deterministically. Probes every
// element by default; cap with max_probes (sampled without replacement) for
// large parameter tensors. Relative error uses max(|analytic|, |numeric|,
// 1e-8) as denominator so near-zero gradients compare absolutely.
template <typename F>
GradCheckReport grad_check(F&& f, Tensor<double> x, double eps = 1e-5, double tol = 1e-6,
                           Index max_probes = -1, std::uint64_t probe_seed = 0) {
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape<double> tape;
    Var<double> xv = tape.leaf(x);
    Var<double> loss = f(tape, xv);
    tape.backward(loss);
  }
  std::vector<double> analytic(x.grad().begin(), x.grad().end());

  const Index n = x.size();
  std::vector<Index> probes;
  if (max_probes < 0 || max_probes >= n) {
    probes.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) probes[static_cast<std::size_t>(i)] = i;
  } else {
    std::vector<Index> all(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    Rng rng(mix_seed(probe_seed, 0x70726f6265ull));  // "probe"
    rng.shuffle(all);
    probes.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(max_probes));
  }

  auto eval = [&](Index i, double v) {
    double keep = x.data()[static_cast<std::size_t>(i)];
    x.data()[static_cast<std::size_t>(i)] = v;
    Tape<double> tape;
    Var<double> xv = tape.leaf(x);
    double out = f(tape, xv).value().value();
    x.data()[static_cast<std::size_t>(i)] = keep;
    return out;
  };

  GradCheckReport report;
  for (Index i : probes) {
    const double v = x.data()[static_cast<std::size_t>(i)];
    const double fp = eval(i, v + eps);
    const double fm = eval(i, v - eps);
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.checked;
  }
  report.pass = report.max_rel_error <= tol;
  return report;
}

}  // namespace cropsits::num
