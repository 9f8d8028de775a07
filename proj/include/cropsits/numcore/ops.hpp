#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cropsits/numcore/tape.hpp"

// Differentiable primitives on tape variables. Free functions; every op
// records a pull closure that adds into its parents' accumulators, so a
// value used twice receives the sum of both contributions.

namespace cropsits::num {

inline constexpr double kLogFloor = 1e-12;   // safe_log clamps inputs here
inline constexpr double kSqrtFloor = 1e-30;  // sqrt gradient treated as 0 below

namespace detail {

template <typename S>
void require_same_tape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": inputs from different tapes");
}

template <typename S>
void require_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// outer * extent * inner decomposition around `axis`.
struct AxisSplit {
  Index outer, extent, inner;
};

inline AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw ContractError(std::string(op) + ": axis " + std::to_string(axis) +
                        " invalid for shape " + shape_str(shape));
  AxisSplit s{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i)
    s.inner *= shape[i];
  return s;
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::require_same_tape(a, b, "add");
  detail::require_same_shape(a, b, "add");
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() + b.value().arr();
  int aid = a.id, bid = b.id;
  bool tracked = a.tape->tracked(aid) || a.tape->tracked(bid);
  return a.tape->record(std::move(out), tracked, [aid, bid](Tape<S>& t, const Tensor<S>& g) {
    if (auto* ga = t.grad_if_tracked(aid)) ga->arr() += g.arr();
    if (auto* gb = t.grad_if_tracked(bid)) gb->arr() += g.arr();
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::require_same_tape(a, b, "sub");
  detail::require_same_shape(a, b, "sub");
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() - b.value().arr();
  int aid = a.id, bid = b.id;
  bool tracked = a.tape->tracked(aid) || a.tape->tracked(bid);
  return a.tape->record(std::move(out), tracked, [aid, bid](Tape<S>& t, const Tensor<S>& g) {
    if (auto* ga = t.grad_if_tracked(aid)) ga->arr() += g.arr();
    if (auto* gb = t.grad_if_tracked(bid)) gb->arr() -= g.arr();
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  detail::require_same_tape(a, b, "mul");
  detail::require_same_shape(a, b, "mul");
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() * b.value().arr();
  int aid = a.id, bid = b.id;
  Tensor<S> av = a.value(), bv = b.value();
  bool tracked = a.tape->tracked(aid) || a.tape->tracked(bid);
  return a.tape->record(std::move(out), tracked, [aid, bid, av, bv](Tape<S>& t, const Tensor<S>& g) {
    if (auto* ga = t.grad_if_tracked(aid)) ga->arr() += g.arr() * bv.arr();
    if (auto* gb = t.grad_if_tracked(bid)) gb->arr() += g.arr() * av.arr();
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() * c;
  int aid = a.id;
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid, c](Tape<S>& t, const Tensor<S>& g) {
                          if (auto* ga = t.grad_if_tracked(aid)) ga->arr() += g.arr() * c;
                        });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr() + c;
  int aid = a.id;
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid](Tape<S>& t, const Tensor<S>& g) {
                          if (auto* ga = t.grad_if_tracked(aid)) ga->arr() += g.arr();
                        });
}

template <typename S>
Var<S> neg(const Var<S>& a) {
  return scale(a, S(-1));
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr().max(S(0));
  int aid = a.id;
  Tensor<S> av = a.value();
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid, av](Tape<S>& t, const Tensor<S>& g) {
                          if (auto* ga = t.grad_if_tracked(aid))
                            ga->arr() += g.arr() * (av.arr() > S(0)).template cast<S>();
                        });
}

// log(max(x, 1e-12)); gradient is zero in the clamped region.
template <typename S>
Var<S> safe_log(const Var<S>& a) {
  const S floor = static_cast<S>(kLogFloor);
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr().max(floor).log();
  int aid = a.id;
  Tensor<S> av = a.value();
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid, av, floor](Tape<S>& t, const Tensor<S>& g) {
                          if (auto* ga = t.grad_if_tracked(aid))
                            ga->arr() += (av.arr() > floor).template cast<S>() * g.arr() /
                                         av.arr().max(floor);
                        });
}

// sqrt with subgradient 0 at 0, so std-pooling of identical pixels stays finite.
template <typename S>
Var<S> sqrt_safe(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr().max(S(0)).sqrt();
  int aid = a.id;
  Tensor<S> ov = out;
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid, ov](Tape<S>& t, const Tensor<S>& g) {
                          if (auto* ga = t.grad_if_tracked(aid)) {
                            auto live = (ov.arr() > static_cast<S>(kSqrtFloor)).template cast<S>();
                            ga->arr() += live * g.arr() / (S(2) * ov.arr().max(static_cast<S>(kSqrtFloor)));
                          }
                        });
}

// x^p for x >= 0 with a constant exponent (focal modulation uses p = gamma).
template <typename S>
Var<S> pow_const(const Var<S>& a, S p) {
  Tensor<S> out(a.shape());
  out.arr() = a.value().arr().max(S(0)).pow(p);
  int aid = a.id;
  Tensor<S> av = a.value();
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid, av, p](Tape<S>& t, const Tensor<S>& g) {
                          auto* ga = t.grad_if_tracked(aid);
                          if (!ga) return;
                          if (p == S(0)) return;
                          auto base = av.arr().max(S(0));
                          if (p >= S(1)) {
                            ga->arr() += g.arr() * p * base.pow(p - S(1));
                          } else {
                            // keep the derivative finite at 0
                            auto live = (base > static_cast<S>(kSqrtFloor)).template cast<S>();
                            ga->arr() += live * g.arr() * p * base.max(static_cast<S>(kSqrtFloor)).pow(p - S(1));
                          }
                        });
}

// ---- linear algebra ---------------------------------------------------------

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  detail::require_same_tape(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  const Index m = sa[0], k = sa[1], n = sb[1];
  Tensor<S> out({m, n});
  out.mat().noalias() = a.value().mat() * b.value().mat();
  int aid = a.id, bid = b.id;
  Tensor<S> av = a.value(), bv = b.value();
  bool tracked = a.tape->tracked(aid) || a.tape->tracked(bid);
  return a.tape->record(std::move(out), tracked,
                        [aid, bid, av, bv, m, k, n](Tape<S>& t, const Tensor<S>& g) {
                          auto gm = g.mat(m, n);
                          if (auto* ga = t.grad_if_tracked(aid))
                            ga->mat(m, k).noalias() += gm * bv.mat(k, n).transpose();
                          if (auto* gb = t.grad_if_tracked(bid))
                            gb->mat(k, n).noalias() += av.mat(m, k).transpose() * gm;
                        });
}

// Batched matmul: [P,m,k] x [P,k,n] -> [P,m,n].
template <typename S>
Var<S> bmm(const Var<S>& a, const Var<S>& b) {
  detail::require_same_tape(a, b, "bmm");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1])
    throw DimensionError("bmm: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  const Index p = sa[0], m = sa[1], k = sa[2], n = sb[2];
  Tensor<S> out({p, m, n});
  for (Index i = 0; i < p; ++i) {
    ConstMatMap<S> am(a.value().data().data() + i * m * k, m, k);
    ConstMatMap<S> bm(b.value().data().data() + i * k * n, k, n);
    MatMap<S> om(out.data().data() + i * m * n, m, n);
    om.noalias() = am * bm;
  }
  int aid = a.id, bid = b.id;
  Tensor<S> av = a.value(), bv = b.value();
  bool tracked = a.tape->tracked(aid) || a.tape->tracked(bid);
  return a.tape->record(std::move(out), tracked,
                        [aid, bid, av, bv, p, m, k, n](Tape<S>& t, const Tensor<S>& g) {
                          auto* ga = t.grad_if_tracked(aid);
                          auto* gb = t.grad_if_tracked(bid);
                          for (Index i = 0; i < p; ++i) {
                            ConstMatMap<S> gm(g.data().data() + i * m * n, m, n);
                            ConstMatMap<S> am(av.data().data() + i * m * k, m, k);
                            ConstMatMap<S> bm(bv.data().data() + i * k * n, k, n);
                            if (ga) {
                              MatMap<S> gam(ga->data().data() + i * m * k, m, k);
                              gam.noalias() += gm * bm.transpose();
                            }
                            if (gb) {
                              MatMap<S> gbm(gb->data().data() + i * k * n, k, n);
                              gbm.noalias() += am.transpose() * gm;
                            }
                          }
                        });
}

// Row-vector bias broadcast over the rows of a matrix.
template <typename S>
Var<S> add_bias(const Var<S>& a, const Var<S>& b) {
  detail::require_same_tape(a, b, "add_bias");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 1 || sb[0] != sa[1])
    throw DimensionError("add_bias: " + shape_str(sa) + " with bias " + shape_str(sb));
  const Index m = sa[0], n = sa[1];
  Tensor<S> out({m, n});
  out.mat().noalias() = a.value().mat();
  out.mat().rowwise() += ConstMatMap<S>(b.value().data().data(), 1, n).row(0);
  int aid = a.id, bid = b.id;
  bool tracked = a.tape->tracked(aid) || a.tape->tracked(bid);
  return a.tape->record(std::move(out), tracked,
                        [aid, bid, m, n](Tape<S>& t, const Tensor<S>& g) {
                          if (auto* ga = t.grad_if_tracked(aid)) ga->arr() += g.arr();
                          if (auto* gb = t.grad_if_tracked(bid))
                            MatMap<S>(gb->data().data(), 1, n).row(0) +=
                                g.mat(m, n).colwise().sum();
                        });
}

// ---- shape ------------------------------------------------------------------

template <typename S>
Var<S> reshape(const Var<S>& a, Shape shape) {
  Tensor<S> out = a.value().reshaped(std::move(shape));  // shares storage
  int aid = a.id;
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid](Tape<S>& t, const Tensor<S>& g) {
                          if (auto* ga = t.grad_if_tracked(aid)) ga->arr() += g.arr();
                        });
}

namespace detail {

inline Shape permuted_shape(const Shape& shape, const std::vector<int>& perm) {
  if (perm.size() != shape.size()) throw ContractError("permute: rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  Shape out(shape.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    int p = perm[i];
    if (p < 0 || p >= static_cast<int>(shape.size()) || seen[static_cast<std::size_t>(p)])
      throw ContractError("permute: invalid permutation");
    seen[static_cast<std::size_t>(p)] = true;
    out[i] = shape[static_cast<std::size_t>(p)];
  }
  return out;
}

template <typename S>
void permute_into(const Tensor<S>& in, const std::vector<int>& perm, Tensor<S>& out, bool add) {
  const Shape& is = in.shape();
  const Shape& os = out.shape();
  const int r = static_cast<int>(is.size());
  std::vector<Index> in_strides(static_cast<std::size_t>(r), 1);
  for (int d = r - 2; d >= 0; --d)
    in_strides[static_cast<std::size_t>(d)] =
        in_strides[static_cast<std::size_t>(d + 1)] * is[static_cast<std::size_t>(d + 1)];
  // stride of each output axis in the input layout
  std::vector<Index> strides(static_cast<std::size_t>(r));
  for (int d = 0; d < r; ++d)
    strides[static_cast<std::size_t>(d)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])];
  std::vector<Index> idx(static_cast<std::size_t>(r), 0);
  auto src = in.data();
  auto dst = out.data();
  Index off = 0;
  for (Index o = 0;; ++o) {
    if (add)
      dst[static_cast<std::size_t>(o)] += src[static_cast<std::size_t>(off)];
    else
      dst[static_cast<std::size_t>(o)] = src[static_cast<std::size_t>(off)];
    int d = r - 1;
    for (; d >= 0; --d) {
      std::size_t du = static_cast<std::size_t>(d);
      if (++idx[du] < os[du]) {
        off += strides[du];
        break;
      }
      off -= strides[du] * (os[du] - 1);
      idx[du] = 0;
    }
    if (d < 0) break;
  }
}

}  // namespace detail

template <typename S>
Var<S> permute(const Var<S>& a, std::vector<int> perm) {
  Shape out_shape = detail::permuted_shape(a.shape(), perm);
  Tensor<S> out(out_shape);
  detail::permute_into(a.value(), perm, out, false);
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  int aid = a.id;
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid, inv](Tape<S>& t, const Tensor<S>& g) {
                          if (auto* ga = t.grad_if_tracked(aid))
                            detail::permute_into(g, inv, *ga, true);
                        });
}

// Concatenate along the last axis; leading dims must match.
template <typename S>
Var<S> concat_last(const Var<S>& a, const Var<S>& b) {
  detail::require_same_tape(a, b, "concat_last");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || sa.empty())
    throw DimensionError("concat_last: rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  for (std::size_t i = 0; i + 1 < sa.size(); ++i)
    if (sa[i] != sb[i])
      throw DimensionError("concat_last: leading dims differ " + shape_str(sa) + " vs " +
                           shape_str(sb));
  const Index la = sa.back(), lb = sb.back();
  const Index rows = numel(sa) / la;
  Shape os = sa;
  os.back() = la + lb;
  Tensor<S> out(os);
  auto av = a.value().data();
  auto bv = b.value().data();
  auto ov = out.data();
  for (Index r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * la, la, ov.data() + r * (la + lb));
    std::copy_n(bv.data() + r * lb, lb, ov.data() + r * (la + lb) + la);
  }
  int aid = a.id, bid = b.id;
  bool tracked = a.tape->tracked(aid) || a.tape->tracked(bid);
  return a.tape->record(std::move(out), tracked,
                        [aid, bid, rows, la, lb](Tape<S>& t, const Tensor<S>& g) {
                          auto* ga = t.grad_if_tracked(aid);
                          auto* gb = t.grad_if_tracked(bid);
                          auto gv = g.data();
                          for (Index r = 0; r < rows; ++r) {
                            const S* row = gv.data() + r * (la + lb);
                            if (ga)
                              for (Index i = 0; i < la; ++i)
                                ga->data()[static_cast<std::size_t>(r * la + i)] += row[i];
                            if (gb)
                              for (Index i = 0; i < lb; ++i)
                                gb->data()[static_cast<std::size_t>(r * lb + i)] += row[la + i];
                          }
                        });
}

// ---- reductions -------------------------------------------------------------

template <typename S>
Var<S> sum_all(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::scalar(a.value().arr().sum());
  int aid = a.id;
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid](Tape<S>& t, const Tensor<S>& g) {
                          if (auto* ga = t.grad_if_tracked(aid)) ga->arr() += g.data()[0];
                        });
}

template <typename S>
Var<S> mean_all(const Var<S>& a) {
  return scale(sum_all(a), S(1) / static_cast<S>(a.value().size()));
}

template <typename S>
Var<S> sum_axis(const Var<S>& a, int axis) {
  const Shape& sa = a.shape();
  auto sp = detail::split_axis(sa, axis, "sum_axis");
  Shape os;
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (static_cast<int>(i) != axis) os.push_back(sa[i]);
  if (os.empty()) os.push_back(1);
  Tensor<S> out(os);
  auto av = a.value().data();
  auto ov = out.data();
  std::fill(ov.begin(), ov.end(), S(0));
  for (Index o = 0; o < sp.outer; ++o)
    for (Index e = 0; e < sp.extent; ++e) {
      const S* src = av.data() + (o * sp.extent + e) * sp.inner;
      S* dst = ov.data() + o * sp.inner;
      for (Index i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  int aid = a.id;
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid, sp](Tape<S>& t, const Tensor<S>& g) {
                          auto* ga = t.grad_if_tracked(aid);
                          if (!ga) return;
                          auto gv = g.data();
                          for (Index o = 0; o < sp.outer; ++o)
                            for (Index e = 0; e < sp.extent; ++e) {
                              S* dst = ga->data().data() + (o * sp.extent + e) * sp.inner;
                              const S* src = gv.data() + o * sp.inner;
                              for (Index i = 0; i < sp.inner; ++i) dst[i] += src[i];
                            }
                        });
}

template <typename S>
Var<S> mean_axis(const Var<S>& a, int axis) {
  const Index extent = a.shape()[static_cast<std::size_t>(axis)];
  return scale(sum_axis(a, axis), S(1) / static_cast<S>(extent));
}

// Pools [P, n, d] over the middle axis into [P, 2d]: per-feature means first,
// population standard deviations second. Moments accumulate in double so a set
// of identical members pools to a spread of exactly zero; a variance below
// kSqrtFloor is treated as flat and contributes no gradient, like sqrt_safe.
template <typename S>
Var<S> mean_std_pool(const Var<S>& a) {
  const Shape& sa = a.shape();
  if (sa.size() != 3)
    throw DimensionError("mean_std_pool: rank-3 expected, got " + shape_str(sa));
  const Index p = sa[0], n = sa[1], d = sa[2];
  if (n < 1) throw ContractError("mean_std_pool: empty pooling axis");
  Tensor<S> out({p, 2 * d});
  auto av = a.value().data();
  auto ov = out.data();
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < d; ++j) {
      double sum = 0.0;
      for (Index k = 0; k < n; ++k)
        sum += static_cast<double>(av[static_cast<std::size_t>((i * n + k) * d + j)]);
      const double mu = sum / static_cast<double>(n);
      double varsum = 0.0;
      for (Index k = 0; k < n; ++k) {
        const double dev =
            static_cast<double>(av[static_cast<std::size_t>((i * n + k) * d + j)]) - mu;
        varsum += dev * dev;
      }
      ov[static_cast<std::size_t>(i * 2 * d + j)] = static_cast<S>(mu);
      ov[static_cast<std::size_t>(i * 2 * d + d + j)] =
          static_cast<S>(std::sqrt(varsum / static_cast<double>(n)));
    }
  int aid = a.id;
  Tensor<S> xval = a.value();
  Tensor<S> pooled = out;
  return a.tape->record(
      std::move(out), a.tape->tracked(aid),
      [aid, xval, pooled, p, n, d](Tape<S>& t, const Tensor<S>& g) {
        auto* ga = t.grad_if_tracked(aid);
        if (!ga) return;
        auto gv = g.data();
        auto xv = xval.data();
        auto pv = pooled.data();
        for (Index i = 0; i < p; ++i)
          for (Index j = 0; j < d; ++j) {
            const S gmean = gv[static_cast<std::size_t>(i * 2 * d + j)];
            const S gstd = gv[static_cast<std::size_t>(i * 2 * d + d + j)];
            const S mu = pv[static_cast<std::size_t>(i * 2 * d + j)];
            const S sigma = pv[static_cast<std::size_t>(i * 2 * d + d + j)];
            const bool flat = static_cast<double>(sigma) * static_cast<double>(sigma) <= kSqrtFloor;
            for (Index k = 0; k < n; ++k) {
              const std::size_t idx = static_cast<std::size_t>((i * n + k) * d + j);
              S dx = gmean / static_cast<S>(n);
              if (!flat) dx += gstd * (xv[idx] - mu) / (static_cast<S>(n) * sigma);
              ga->data()[idx] += dx;
            }
          }
      });
}

// ---- softmax ----------------------------------------------------------------

// Numerically stable softmax along `axis` (per-slice max subtraction).
template <typename S>
Var<S> softmax(const Var<S>& a, int axis) {
  auto sp = detail::split_axis(a.shape(), axis, "softmax");
  Tensor<S> out(a.shape());
  auto av = a.value().data();
  auto ov = out.data();
  for (Index o = 0; o < sp.outer; ++o)
    for (Index i = 0; i < sp.inner; ++i) {
      const Index base = o * sp.extent * sp.inner + i;
      S mx = av[static_cast<std::size_t>(base)];
      for (Index e = 1; e < sp.extent; ++e)
        mx = std::max(mx, av[static_cast<std::size_t>(base + e * sp.inner)]);
      S total = S(0);
      for (Index e = 0; e < sp.extent; ++e) {
        S v = std::exp(av[static_cast<std::size_t>(base + e * sp.inner)] - mx);
        ov[static_cast<std::size_t>(base + e * sp.inner)] = v;
        total += v;
      }
      for (Index e = 0; e < sp.extent; ++e) ov[static_cast<std::size_t>(base + e * sp.inner)] /= total;
    }
  int aid = a.id;
  Tensor<S> pv = out;
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid, sp, pv](Tape<S>& t, const Tensor<S>& g) {
                          auto* ga = t.grad_if_tracked(aid);
                          if (!ga) return;
                          auto gv = g.data();
                          auto p = pv.data();
                          for (Index o = 0; o < sp.outer; ++o)
                            for (Index i = 0; i < sp.inner; ++i) {
                              const Index base = o * sp.extent * sp.inner + i;
                              S dot = S(0);
                              for (Index e = 0; e < sp.extent; ++e) {
                                std::size_t k = static_cast<std::size_t>(base + e * sp.inner);
                                dot += gv[k] * p[k];
                              }
                              for (Index e = 0; e < sp.extent; ++e) {
                                std::size_t k = static_cast<std::size_t>(base + e * sp.inner);
                                ga->data()[k] += p[k] * (gv[k] - dot);
                              }
                            }
                        });
}

// Softmax over the last axis restricted to mask==1 entries; masked entries
// are exactly zero in the output and receive zero gradient. Every row must
// have at least one valid entry.
template <typename S>
Var<S> masked_softmax(const Var<S>& a, const Tensor<S>& mask) {
  const Shape& sa = a.shape();
  if (mask.shape() != sa)
    throw DimensionError("masked_softmax: mask " + shape_str(mask.shape()) + " vs " +
                         shape_str(sa));
  const Index cols = sa.back();
  const Index rows = numel(sa) / cols;
  Tensor<S> out(sa);
  auto av = a.value().data();
  auto mv = mask.data();
  auto ov = out.data();
  for (Index r = 0; r < rows; ++r) {
    const Index base = r * cols;
    S mx = S(0);
    bool any = false;
    for (Index c = 0; c < cols; ++c) {
      if (mv[static_cast<std::size_t>(base + c)] == S(0)) continue;
      S v = av[static_cast<std::size_t>(base + c)];
      mx = any ? std::max(mx, v) : v;
      any = true;
    }
    if (!any)
      throw ContractError("masked_softmax: row " + std::to_string(r) + " has no valid entries");
    S total = S(0);
    for (Index c = 0; c < cols; ++c) {
      std::size_t k = static_cast<std::size_t>(base + c);
      if (mv[k] == S(0)) {
        ov[k] = S(0);
      } else {
        ov[k] = std::exp(av[k] - mx);
        total += ov[k];
      }
    }
    for (Index c = 0; c < cols; ++c) {
      std::size_t k = static_cast<std::size_t>(base + c);
      if (mv[k] != S(0)) ov[k] /= total;
    }
  }
  int aid = a.id;
  Tensor<S> pv = out;
  Tensor<S> mk = mask;
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid, rows, cols, pv, mk](Tape<S>& t, const Tensor<S>& g) {
                          auto* ga = t.grad_if_tracked(aid);
                          if (!ga) return;
                          auto gv = g.data();
                          auto p = pv.data();
                          auto m = mk.data();
                          for (Index r = 0; r < rows; ++r) {
                            const Index base = r * cols;
                            S dot = S(0);
                            for (Index c = 0; c < cols; ++c) {
                              std::size_t k = static_cast<std::size_t>(base + c);
                              if (m[k] != S(0)) dot += gv[k] * p[k];
                            }
                            for (Index c = 0; c < cols; ++c) {
                              std::size_t k = static_cast<std::size_t>(base + c);
                              if (m[k] != S(0)) ga->data()[k] += p[k] * (gv[k] - dot);
                            }
                          }
                        });
}

// ---- indexing ---------------------------------------------------------------

// out[r] = a[r, labels[r]].
template <typename S>
Var<S> take_per_row(const Var<S>& a, const std::vector<Index>& labels) {
  const Shape& sa = a.shape();
  if (sa.size() != 2) throw DimensionError("take_per_row: rank-2 expected, got " + shape_str(sa));
  const Index m = sa[0], k = sa[1];
  if (static_cast<Index>(labels.size()) != m)
    throw ContractError("take_per_row: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(m) + " rows");
  Tensor<S> out({m});
  auto av = a.value().data();
  for (Index r = 0; r < m; ++r) {
    Index c = labels[static_cast<std::size_t>(r)];
    if (c < 0 || c >= k)
      throw ContractError("take_per_row: label " + std::to_string(c) + " out of range [0," +
                          std::to_string(k) + ")");
    out.data()[static_cast<std::size_t>(r)] = av[static_cast<std::size_t>(r * k + c)];
  }
  int aid = a.id;
  std::vector<Index> ls = labels;
  return a.tape->record(std::move(out), a.tape->tracked(aid),
                        [aid, ls, k](Tape<S>& t, const Tensor<S>& g) {
                          auto* ga = t.grad_if_tracked(aid);
                          if (!ga) return;
                          for (Index r = 0; r < static_cast<Index>(ls.size()); ++r)
                            ga->data()[static_cast<std::size_t>(r * k + ls[static_cast<std::size_t>(r)])] +=
                                g.data()[static_cast<std::size_t>(r)];
                        });
}

// ---- convolution ------------------------------------------------------------

namespace detail {

struct ConvDims {
  Index n, cin, h, w, cout, kh, kw, oh, ow, stride, pad;
};

inline ConvDims conv_dims(const Shape& xs, const Shape& ks, Index stride, Index pad) {
  if (ks.size() != 4) throw DimensionError("conv2d: kernels must be rank-4, got " + shape_str(ks));
  ConvDims d{};
  if (xs.size() == 4) {
    d.n = xs[0];
    d.cin = xs[1];
    d.h = xs[2];
    d.w = xs[3];
  } else if (xs.size() == 3) {
    d.n = 1;
    d.cin = xs[0];
    d.h = xs[1];
    d.w = xs[2];
  } else {
    throw DimensionError("conv2d: input must be rank-3 or rank-4, got " + shape_str(xs));
  }
  d.cout = ks[0];
  d.kh = ks[2];
  d.kw = ks[3];
  d.stride = stride;
  d.pad = pad;
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  if (pad < 0) throw ContractError("conv2d: padding must be >= 0");
  if (ks[1] != d.cin)
    throw DimensionError("conv2d: input channels " + shape_str(xs) + " vs kernels " +
                         shape_str(ks));
  if (d.kh > d.h + 2 * pad || d.kw > d.w + 2 * pad)
    throw DimensionError("conv2d: kernel " + shape_str(ks) + " larger than padded input " +
                         shape_str(xs) + " (pad " + std::to_string(pad) + ")");
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  return d;
}

// Column layout: rows = cin*kh*kw, cols = oh*ow, for one image.
template <typename S>
void im2col(const S* x, const ConvDims& d, S* cols) {
  const Index patch = d.kh * d.kw;
  for (Index c = 0; c < d.cin; ++c)
    for (Index ki = 0; ki < d.kh; ++ki)
      for (Index kj = 0; kj < d.kw; ++kj) {
        S* row = cols + (c * patch + ki * d.kw + kj) * (d.oh * d.ow);
        for (Index oy = 0; oy < d.oh; ++oy) {
          const Index iy = oy * d.stride + ki - d.pad;
          for (Index ox = 0; ox < d.ow; ++ox) {
            const Index ix = ox * d.stride + kj - d.pad;
            row[oy * d.ow + ox] = (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                                      ? x[(c * d.h + iy) * d.w + ix]
                                      : S(0);
          }
        }
      }
}

template <typename S>
void col2im_add(const S* cols, const ConvDims& d, S* gx) {
  const Index patch = d.kh * d.kw;
  for (Index c = 0; c < d.cin; ++c)
    for (Index ki = 0; ki < d.kh; ++ki)
      for (Index kj = 0; kj < d.kw; ++kj) {
        const S* row = cols + (c * patch + ki * d.kw + kj) * (d.oh * d.ow);
        for (Index oy = 0; oy < d.oh; ++oy) {
          const Index iy = oy * d.stride + ki - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          for (Index ox = 0; ox < d.ow; ++ox) {
            const Index ix = ox * d.stride + kj - d.pad;
            if (ix < 0 || ix >= d.w) continue;
            gx[(c * d.h + iy) * d.w + ix] += row[oy * d.ow + ox];
          }
        }
      }
}

}  // namespace detail

// Cross-correlation of [N,Cin,H,W] (or [Cin,H,W]) with [Cout,Cin,kH,kW].
template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& kernels, Index stride = 1, Index pad = 0) {
  detail::require_same_tape(x, kernels, "conv2d");
  const auto d = detail::conv_dims(x.shape(), kernels.shape(), stride, pad);
  const bool batched = x.shape().size() == 4;
  Shape os = batched ? Shape{d.n, d.cout, d.oh, d.ow} : Shape{d.cout, d.oh, d.ow};
  Tensor<S> out(os);
  const Index crows = d.cin * d.kh * d.kw;
  const Index ccols = d.oh * d.ow;
  std::vector<S> cols(static_cast<std::size_t>(crows * ccols));
  ConstMatMap<S> km(kernels.value().data().data(), d.cout, crows);
  for (Index i = 0; i < d.n; ++i) {
    detail::im2col(x.value().data().data() + i * d.cin * d.h * d.w, d, cols.data());
    ConstMatMap<S> cm(cols.data(), crows, ccols);
    MatMap<S> om(out.data().data() + i * d.cout * ccols, d.cout, ccols);
    om.noalias() = km * cm;
  }
  int xid = x.id, kid = kernels.id;
  Tensor<S> xv = x.value(), kv = kernels.value();
  bool tracked = x.tape->tracked(xid) || x.tape->tracked(kid);
  return x.tape->record(
      std::move(out), tracked, [xid, kid, xv, kv, d](Tape<S>& t, const Tensor<S>& g) {
        auto* gx = t.grad_if_tracked(xid);
        auto* gk = t.grad_if_tracked(kid);
        if (!gx && !gk) return;
        const Index crows = d.cin * d.kh * d.kw;
        const Index ccols = d.oh * d.ow;
        std::vector<S> cols(static_cast<std::size_t>(crows * ccols));
        std::vector<S> gcols(static_cast<std::size_t>(crows * ccols));
        ConstMatMap<S> km(kv.data().data(), d.cout, crows);
        for (Index i = 0; i < d.n; ++i) {
          ConstMatMap<S> gm(g.data().data() + i * d.cout * ccols, d.cout, ccols);
          if (gk) {
            detail::im2col(xv.data().data() + i * d.cin * d.h * d.w, d, cols.data());
            ConstMatMap<S> cm(cols.data(), crows, ccols);
            MatMap<S> gkm(gk->data().data(), d.cout, crows);
            gkm.noalias() += gm * cm.transpose();
          }
          if (gx) {
            MatMap<S> gcm(gcols.data(), crows, ccols);
            gcm.noalias() = km.transpose() * gm;
            detail::col2im_add(gcols.data(), d, gx->data().data() + i * d.cin * d.h * d.w);
          }
        }
      });
}

// Per-channel affine y = x * gamma[c] + beta[c] on [N,C,H,W].
template <typename S>
Var<S> scale_channels(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta) {
  detail::require_same_tape(x, gamma, "scale_channels");
  detail::require_same_tape(x, beta, "scale_channels");
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw DimensionError("scale_channels: rank-4 expected, got " + shape_str(xs));
  const Index n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw DimensionError("scale_channels: per-channel params must have shape [" +
                         std::to_string(c) + "]");
  Tensor<S> out(xs);
  auto xv = x.value().data();
  auto gv = gamma.value().data();
  auto bv = beta.value().data();
  auto ov = out.data();
  for (Index i = 0; i < n; ++i)
    for (Index ch = 0; ch < c; ++ch) {
      const S gg = gv[static_cast<std::size_t>(ch)];
      const S bb = bv[static_cast<std::size_t>(ch)];
      const S* src = xv.data() + (i * c + ch) * hw;
      S* dst = ov.data() + (i * c + ch) * hw;
      for (Index j = 0; j < hw; ++j) dst[j] = src[j] * gg + bb;
    }
  int xid = x.id, gid = gamma.id, bid = beta.id;
  Tensor<S> xval = x.value(), gval = gamma.value();
  bool tracked = x.tape->tracked(xid) || x.tape->tracked(gid) || x.tape->tracked(bid);
  return x.tape->record(
      std::move(out), tracked,
      [xid, gid, bid, xval, gval, n, c, hw](Tape<S>& t, const Tensor<S>& g) {
        auto* gx = t.grad_if_tracked(xid);
        auto* gg = t.grad_if_tracked(gid);
        auto* gb = t.grad_if_tracked(bid);
        auto gvv = g.data();
        for (Index i = 0; i < n; ++i)
          for (Index ch = 0; ch < c; ++ch) {
            const Index base = (i * c + ch) * hw;
            const S gammac = gval.data()[static_cast<std::size_t>(ch)];
            for (Index j = 0; j < hw; ++j) {
              const S go = gvv[static_cast<std::size_t>(base + j)];
              if (gx) gx->data()[static_cast<std::size_t>(base + j)] += go * gammac;
              if (gg)
                gg->data()[static_cast<std::size_t>(ch)] +=
                    go * xval.data()[static_cast<std::size_t>(base + j)];
              if (gb) gb->data()[static_cast<std::size_t>(ch)] += go;
            }
          }
      });
}

// ---- composites -------------------------------------------------------------

template <typename S>
Var<S> affine(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  return add_bias(matmul(x, w), b);
}

}  // namespace cropsits::num
