#include <catch2/catch.hpp>
#include <cmath>
#include <functional>
#include <vector>

#include "cropsits/numcore/grad_check.hpp"
#include "cropsits/numcore/ops.hpp"

using namespace cropsits;
using namespace cropsits::num;

namespace {

template <typename S>
Tensor<S> make(Shape shape, std::vector<S> values) {
  return Tensor<S>(std::move(shape), std::move(values));
}

}  // namespace

TEST_CASE("matmul matches hand-worked products") {
  Tape<double> t;
  auto I = t.constant(make<double>({2, 2}, {1, 0, 0, 1}));
  auto X = t.constant(make<double>({2, 2}, {3.5, -2, 0.25, 7}));
  auto IX = matmul(I, X);
  for (Index i = 0; i < 4; ++i) CHECK(IX.value()[i] == X.value()[i]);

  auto A = t.constant(make<double>({2, 2}, {1, 2, 3, 4}));
  auto B = t.constant(make<double>({2, 2}, {5, 6, 7, 8}));
  auto C = matmul(A, B);
  CHECK(C.value()[0] == 19.0);
  CHECK(C.value()[1] == 22.0);
  CHECK(C.value()[2] == 43.0);
  CHECK(C.value()[3] == 50.0);

  auto Z = t.constant(Tensor<double>::zeros({2, 2}));
  auto ZX = matmul(Z, X);
  for (Index i = 0; i < 4; ++i) CHECK(ZX.value()[i] == 0.0);

  auto bad = t.constant(Tensor<double>::ones({3, 2}));
  CHECK_THROWS_AS(matmul(A, bad), DimensionError);
  CHECK_THROWS_MATCHES(matmul(A, bad), DimensionError,
                       Catch::Matchers::Message("matmul: incompatible shapes [2x2] and [3x2]"));
}

TEST_CASE("matmul associativity holds at float within 1e-4") {
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    Tape<float> t;
    auto A = t.constant(Tensor<float>::uniform({8, 8}, rng, -1, 1));
    auto B = t.constant(Tensor<float>::uniform({8, 8}, rng, -1, 1));
    auto C = t.constant(Tensor<float>::uniform({8, 8}, rng, -1, 1));
    auto left = matmul(matmul(A, B), C);
    auto right = matmul(A, matmul(B, C));
    for (Index i = 0; i < 64; ++i)
      REQUIRE(std::abs(left.value()[i] - right.value()[i]) < 1e-4f);
  }
}

TEST_CASE("conv2d matches hand-worked cases") {
  Tape<double> t;

  SECTION("1x1 unit kernel is the identity") {
    Rng rng(7);
    auto x = t.constant(Tensor<double>::uniform({1, 3, 3}, rng, -1, 1));
    auto k = t.constant(Tensor<double>::ones({1, 1, 1, 1}));
    auto y = conv2d(x, k);
    REQUIRE(y.shape() == Shape{1, 3, 3});
    for (Index i = 0; i < 9; ++i) CHECK(y.value()[i] == x.value()[i]);
  }

  SECTION("3x3 ones against 3x3 ones sums to 9") {
    auto x = t.constant(Tensor<double>::ones({1, 3, 3}));
    auto k = t.constant(Tensor<double>::ones({1, 1, 3, 3}));
    auto y = conv2d(x, k);
    REQUIRE(y.shape() == Shape{1, 1, 1});
    CHECK(y.value()[0] == 9.0);
  }

  SECTION("zero kernel maps everything to zero") {
    Rng rng(8);
    auto x = t.constant(Tensor<double>::uniform({2, 4, 4}, rng, -1, 1));
    auto k = t.constant(Tensor<double>::zeros({3, 2, 3, 3}));
    auto y = conv2d(x, k, 1, 1);
    REQUIRE(y.shape() == Shape{3, 4, 4});
    for (Index i = 0; i < y.value().size(); ++i) CHECK(y.value()[i] == 0.0);
  }

  SECTION("padding 1 keeps spatial size and clips corners") {
    auto x = t.constant(Tensor<double>::ones({1, 3, 3}));
    auto k = t.constant(Tensor<double>::ones({1, 1, 3, 3}));
    auto y = conv2d(x, k, 1, 1);
    REQUIRE(y.shape() == Shape{1, 3, 3});
    const double want[] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
    for (Index i = 0; i < 9; ++i) CHECK(y.value()[i] == want[i]);
  }

  SECTION("kernel larger than the padded input is a dimension error") {
    auto x = t.constant(Tensor<double>::ones({1, 3, 3}));
    auto k = t.constant(Tensor<double>::ones({1, 1, 6, 6}));
    CHECK_THROWS_AS(conv2d(x, k, 1, 1), DimensionError);
  }

  SECTION("batched input gives one output image per sample") {
    Rng rng(9);
    auto x = t.constant(Tensor<double>::uniform({3, 2, 5, 5}, rng, -1, 1));
    auto k = t.constant(Tensor<double>::uniform({4, 2, 3, 3}, rng, -1, 1));
    auto y = conv2d(x, k, 2, 1);
    REQUIRE(y.shape() == Shape{3, 4, 3, 3});
  }
}

TEST_CASE("softmax matches hand evaluations and stays normalized") {
  SECTION("uniform logits give 1/k") {
    Tape<double> t;
    auto x = t.constant(Tensor<double>::full({5}, 0.37));
    auto p = softmax(x, 0);
    for (Index i = 0; i < 5; ++i) CHECK(p.value()[i] == Approx(0.2).margin(1e-15));
  }

  SECTION("[0, ln 3] gives [0.25, 0.75]") {
    Tape<double> t;
    auto x = t.constant(make<double>({2}, {0.0, std::log(3.0)}));
    auto p = softmax(x, 0);
    CHECK(p.value()[0] == Approx(0.25).margin(1e-12));
    CHECK(p.value()[1] == Approx(0.75).margin(1e-12));
  }

  SECTION("shift invariance") {
    Rng rng(11);
    Tape<double> t;
    auto x = t.constant(Tensor<double>::uniform({3, 4}, rng, -3, 3));
    auto shifted = add_scalar(x, 17.5);
    auto p = softmax(x, 1);
    auto q = softmax(shifted, 1);
    for (Index i = 0; i < 12; ++i) CHECK(p.value()[i] == Approx(q.value()[i]).margin(1e-12));
  }

  SECTION("slices sum to 1 and outputs lie in (0,1), both precisions") {
    Rng rng(12);
    Tape<float> t;
    auto x = t.constant(Tensor<float>::uniform({4, 7}, rng, -6, 6));
    for (int axis : {0, 1}) {
      auto p = softmax(x, axis);
      for (Index i = 0; i < p.value().size(); ++i) {
        CHECK(p.value()[i] > 0.0f);
        CHECK(p.value()[i] < 1.0f);
      }
      const Index outer = axis == 0 ? 7 : 4;
      const Index extent = axis == 0 ? 4 : 7;
      for (Index o = 0; o < outer; ++o) {
        float total = 0;
        for (Index e = 0; e < extent; ++e)
          total += axis == 0 ? p.value()(e, o) : p.value()(o, e);
        CHECK(total == Approx(1.0f).margin(1e-6));
      }
    }
  }
}

TEST_CASE("masked softmax zeroes invalid entries exactly") {
  Tape<double> t;
  Rng rng(13);
  auto x = t.constant(Tensor<double>::uniform({3, 5}, rng, -2, 2));
  Tensor<double> mask = make<double>({3, 5}, {1, 1, 0, 0, 0,  //
                                              1, 0, 1, 0, 1,  //
                                              1, 1, 1, 1, 1});
  auto p = masked_softmax(x, mask);
  for (Index r = 0; r < 3; ++r) {
    double total = 0;
    for (Index c = 0; c < 5; ++c) {
      if (mask(r, c) == 0.0) {
        CHECK(p.value()(r, c) == 0.0);  // exact zero, not merely small
      } else {
        CHECK(p.value()(r, c) > 0.0);
      }
      total += p.value()(r, c);
    }
    CHECK(total == Approx(1.0).margin(1e-12));
  }

  Tensor<double> dead = Tensor<double>::zeros({3, 5});
  CHECK_THROWS_AS(masked_softmax(x, dead), ContractError);
}

TEST_CASE("backward populates gradients from hand differentiation") {
  SECTION("sum of squares") {
    Tensor<double> x = make<double>({3}, {1, 2, 3});
    x.set_requires_grad(true);
    Tape<double> t;
    auto xv = t.leaf(x);
    auto loss = sum_all(mul(xv, xv));
    CHECK(loss.value().value() == 14.0);
    t.backward(loss);
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 4.0);
    CHECK(x.grad()[2] == 6.0);
  }

  SECTION("function constant in x leaves a zero gradient") {
    Tensor<double> x = make<double>({3}, {1, 2, 3});
    x.set_requires_grad(true);
    Tape<double> t;
    t.leaf(x);
    auto c = t.constant(Tensor<double>::full({4}, 2.5));
    auto loss = sum_all(c);
    t.backward(loss);
    for (Index i = 0; i < 3; ++i) CHECK(x.grad()[i] == 0.0);
  }

  SECTION("all-ones matrix times x pulls back column sums") {
    const Index m = 4, n = 3;
    Tensor<double> x = make<double>({n, 1}, {0.5, -1, 2});
    x.set_requires_grad(true);
    Tape<double> t;
    auto xv = t.leaf(x);
    auto A = t.constant(Tensor<double>::ones({m, n}));
    t.backward(sum_all(matmul(A, xv)));
    for (Index i = 0; i < n; ++i) CHECK(x.grad()[i] == static_cast<double>(m));
  }

  SECTION("non-scalar loss is a contract error") {
    Tensor<double> x = make<double>({2}, {1, 2});
    x.set_requires_grad(true);
    Tape<double> t;
    auto xv = t.leaf(x);
    auto y = mul(xv, xv);
    CHECK_THROWS_AS(t.backward(y), ContractError);
  }

  SECTION("mixing tapes is a contract error") {
    Tape<double> t1, t2;
    auto a = t1.constant(Tensor<double>::ones({2}));
    auto b = t2.constant(Tensor<double>::ones({2}));
    CHECK_THROWS_AS(add(a, b), ContractError);
  }
}

TEST_CASE("gradients of repeated uses accumulate to the exact sum") {
  Rng rng(17);
  Tensor<double> c1 = Tensor<double>::uniform({2, 3}, rng, -2, 2);
  Tensor<double> c2 = Tensor<double>::uniform({2, 3}, rng, -2, 2);
  Tensor<double> xdata = Tensor<double>::uniform({2, 3}, rng, -2, 2);

  auto single_use = [&](const Tensor<double>& c) {
    Tensor<double> x = xdata.clone();
    x.set_requires_grad(true);
    Tape<double> t;
    auto xv = t.leaf(x);
    t.backward(sum_all(mul(xv, t.constant(c))));
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  auto g1 = single_use(c1);
  auto g2 = single_use(c2);

  Tensor<double> x = xdata.clone();
  x.set_requires_grad(true);
  Tape<double> t;
  auto xv = t.leaf(x);
  auto both = add(sum_all(mul(xv, t.constant(c1))), sum_all(mul(xv, t.constant(c2))));
  t.backward(both);
  for (Index i = 0; i < 6; ++i)
    CHECK(x.grad()[static_cast<std::size_t>(i)] ==
          g1[static_cast<std::size_t>(i)] + g2[static_cast<std::size_t>(i)]);

  SECTION("y = x + x doubles the upstream gradient exactly") {
    Tensor<double> z = xdata.clone();
    z.set_requires_grad(true);
    z.zero_grad();
    Tape<double> t2;
    auto zv = t2.leaf(z);
    t2.backward(sum_all(add(zv, zv)));
    for (Index i = 0; i < 6; ++i) CHECK(z.grad()[static_cast<std::size_t>(i)] == 2.0);
  }
}

TEST_CASE("grad_check validates and rejects backward rules") {
  SECTION("x squared at x=1 passes with eps 1e-6") {
    auto f = [](Tape<double>& t, Var<double> x) { return sum_all(mul(x, x)); };
    auto report = grad_check(f, Tensor<double>::scalar(1.0), 1e-6, 1e-6);
    CHECK(report.pass);
    CHECK(report.checked == 1);
    CHECK(report.max_rel_error < 1e-6);
  }

  SECTION("a backward rule scaled by 2 is caught") {
    auto f = [](Tape<double>& t, Var<double> x) {
      Tensor<double> out(x.shape());
      out.arr() = x.value().arr().square();
      int id = x.id;
      Tensor<double> xv = x.value();
      auto y = t.record(std::move(out), t.tracked(x.id),
                        [id, xv](Tape<double>& tt, const Tensor<double>& g) {
                          if (auto* gx = tt.grad_if_tracked(id))
                            gx->arr() += g.arr() * 4.0 * xv.arr();  // should be 2x
                        });
      return sum_all(y);
    };
    Rng rng(23);
    auto report = grad_check(f, Tensor<double>::uniform({3}, rng, 0.5, 1.5), 1e-5, 1e-6);
    CHECK_FALSE(report.pass);
    CHECK(report.max_rel_error > 0.1);
  }

  SECTION("composite matmul, softmax, log chain passes at 64-bit") {
    Rng rng(29);
    Tensor<double> w = Tensor<double>::uniform({3, 3}, rng, -1, 1);
    auto f = [&w](Tape<double>& t, Var<double> x) {
      return mean_all(safe_log(softmax(matmul(x, t.constant(w)), 1)));
    };
    auto report = grad_check(f, Tensor<double>::uniform({3, 3}, rng, -1, 1), 1e-5, 1e-6);
    CHECK(report.pass);
    CHECK(report.max_rel_error < 1e-6);
  }

  SECTION("probe sampling checks the requested number of elements") {
    auto f = [](Tape<double>& t, Var<double> x) { return sum_all(mul(x, x)); };
    Rng rng(31);
    auto report = grad_check(f, Tensor<double>::uniform({4, 5}, rng, 0.5, 1.5), 1e-5, 1e-6, 6, 99);
    CHECK(report.pass);
    CHECK(report.checked == 6);
  }
}

namespace {

struct OpCase {
  Tensor<double> x;
  std::function<Var<double>(Tape<double>&, Var<double>)> f;
};

// Runs grad_check on `reps` freshly drawn inputs. Constants are drawn once
// per rep so every evaluation inside one check sees the same function.
void run_cases(const char* name, const std::function<OpCase(Rng&)>& make, int reps = 100,
               double tol = 1e-6) {
  Rng rng(hash64(name));
  for (int rep = 0; rep < reps; ++rep) {
    OpCase c = make(rng);
    auto report = grad_check(c.f, c.x, 1e-5, tol);
    INFO(name << " rep " << rep << " max_rel_error " << report.max_rel_error);
    REQUIRE(report.pass);
  }
}

// Magnitudes in [lo, hi] with random signs. Keeps analytic gradients away
// from zero, where the relative-error denominator floor meets raw
// finite-difference noise.
Tensor<double> signed_uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor<double> t = Tensor<double>::uniform(std::move(shape), rng, lo, hi);
  for (Index i = 0; i < t.size(); ++i)
    if (rng.next_unit() < 0.5) t[i] = -t[i];
  return t;
}

}  // namespace

TEST_CASE("every primitive passes grad_check on random inputs") {
  run_cases("add", [](Rng& rng) {
    Tensor<double> c = Tensor<double>::uniform({2, 3}, rng, -2, 2);
    return OpCase{Tensor<double>::uniform({2, 3}, rng, -2, 2),
                  [c](Tape<double>& t, Var<double> x) {
                    return sum_all(add(add(x, t.constant(c)), x));
                  }};
  });

  run_cases("sub", [](Rng& rng) {
    Tensor<double> c = signed_uniform({2, 3}, rng, 0.3, 1.5);
    Tensor<double> w = signed_uniform({2, 3}, rng, 0.3, 1.5);
    return OpCase{signed_uniform({2, 3}, rng, 0.3, 2.0),
                  [c, w](Tape<double>& t, Var<double> x) {
                    auto lhs = sub(x, t.constant(c));
                    auto rhs = sub(t.constant(c), mul(x, t.constant(w)));
                    return sum_all(mul(lhs, rhs));
                  }};
  });

  run_cases("mul", [](Rng& rng) {
    Tensor<double> c = signed_uniform({2, 3}, rng, 0.3, 1.5);
    return OpCase{signed_uniform({2, 3}, rng, 0.3, 2.0),
                  [c](Tape<double>& t, Var<double> x) {
                    return sum_all(mul(mul(x, t.constant(c)), x));
                  }};
  });

  run_cases("scale_and_add_scalar", [](Rng& rng) {
    return OpCase{signed_uniform({2, 3}, rng, 0.3, 2.0),
                  [](Tape<double>& t, Var<double> x) {
                    return sum_all(mul(scale(x, -1.7), add_scalar(x, 0.3)));
                  }};
  });

  run_cases("relu", [](Rng& rng) {
    // inputs stay away from the kink at 0, where central differences lie
    Tensor<double> x = signed_uniform({3, 4}, rng, 0.1, 2.0);
    Tensor<double> w = signed_uniform({3, 4}, rng, 0.3, 1.5);
    return OpCase{x, [w](Tape<double>& t, Var<double> xv) {
                    return sum_all(mul(relu(xv), t.constant(w)));
                  }};
  });

  run_cases("safe_log", [](Rng& rng) {
    return OpCase{Tensor<double>::uniform({2, 3}, rng, 0.2, 3.0),
                  [](Tape<double>& t, Var<double> x) { return sum_all(safe_log(x)); }};
  });

  run_cases("sqrt_safe", [](Rng& rng) {
    return OpCase{Tensor<double>::uniform({2, 3}, rng, 0.2, 3.0),
                  [](Tape<double>& t, Var<double> x) { return sum_all(sqrt_safe(x)); }};
  });

  run_cases("pow_const", [](Rng& rng) {
    return OpCase{Tensor<double>::uniform({2, 3}, rng, 0.2, 3.0),
                  [](Tape<double>& t, Var<double> x) {
                    return sum_all(add(pow_const(x, 2.0), pow_const(x, 0.5)));
                  }};
  });

  run_cases("matmul_lhs", [](Rng& rng) {
    Tensor<double> b = Tensor<double>::uniform({3, 2}, rng, 0.3, 1.5);
    Tensor<double> w = Tensor<double>::uniform({2, 2}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({2, 3}, rng, -1, 1),
                  [b, w](Tape<double>& t, Var<double> x) {
                    return sum_all(mul(matmul(x, t.constant(b)), t.constant(w)));
                  }};
  });

  run_cases("matmul_rhs", [](Rng& rng) {
    Tensor<double> a = Tensor<double>::uniform({2, 3}, rng, 0.3, 1.5);
    Tensor<double> w = Tensor<double>::uniform({2, 2}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({3, 2}, rng, -1, 1),
                  [a, w](Tape<double>& t, Var<double> x) {
                    return sum_all(mul(matmul(t.constant(a), x), t.constant(w)));
                  }};
  });

  run_cases("bmm", [](Rng& rng) {
    Tensor<double> b = Tensor<double>::uniform({2, 3, 2}, rng, 0.3, 1.5);
    Tensor<double> w1 = Tensor<double>::uniform({2, 2, 2}, rng, 0.3, 1.5);
    Tensor<double> w2 = Tensor<double>::uniform({2, 3, 3}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({2, 2, 3}, rng, -1, 1),
                  [b, w1, w2](Tape<double>& t, Var<double> x) {
                    auto lhs = sum_all(mul(bmm(x, t.constant(b)), t.constant(w1)));
                    auto rhs = sum_all(mul(bmm(t.constant(b), x), t.constant(w2)));
                    return add(lhs, rhs);
                  }};
  }, 50);

  run_cases("add_bias", [](Rng& rng) {
    Tensor<double> a = Tensor<double>::uniform({3, 4}, rng, 0.3, 1.5);
    Tensor<double> w = Tensor<double>::uniform({3, 4}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({4}, rng, -1, 1),
                  [a, w](Tape<double>& t, Var<double> b) {
                    auto y = add_bias(mul(t.constant(a), t.constant(a)), b);
                    return sum_all(mul(y, t.constant(w)));
                  }};
  });

  run_cases("reshape", [](Rng& rng) {
    // weighting by a fixed random tensor makes layout bugs change the value
    Tensor<double> w = signed_uniform({3, 2, 2}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({2, 6}, rng, -1, 1),
                  [w](Tape<double>& t, Var<double> x) {
                    return sum_all(mul(reshape(x, {3, 2, 2}), t.constant(w)));
                  }};
  });

  run_cases("permute", [](Rng& rng) {
    Tensor<double> w = signed_uniform({4, 2, 3}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({2, 3, 4}, rng, -1, 1),
                  [w](Tape<double>& t, Var<double> x) {
                    return sum_all(mul(permute(x, {2, 0, 1}), t.constant(w)));
                  }};
  });

  run_cases("concat_last", [](Rng& rng) {
    Tensor<double> c = Tensor<double>::uniform({2, 3}, rng, -1, 1);
    Tensor<double> w = signed_uniform({2, 11}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({2, 4}, rng, -1, 1),
                  [c, w](Tape<double>& t, Var<double> x) {
                    auto y = concat_last(x, concat_last(t.constant(c), x));  // both sides
                    return sum_all(mul(y, t.constant(w)));
                  }};
  }, 50);

  run_cases("reductions", [](Rng& rng) {
    Tensor<double> w0 = Tensor<double>::uniform({3, 2}, rng, 0.3, 1.5);
    Tensor<double> w1 = Tensor<double>::uniform({2, 2}, rng, 0.3, 1.5);
    Tensor<double> w2 = Tensor<double>::uniform({2, 3}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({2, 3, 2}, rng, -1, 1),
                  [w0, w1, w2](Tape<double>& t, Var<double> x) {
                    auto s0 = sum_all(mul(sum_axis(x, 0), t.constant(w0)));
                    auto s1 = sum_all(mul(mean_axis(x, 1), t.constant(w1)));
                    auto s2 = sum_all(mul(sum_axis(x, 2), t.constant(w2)));
                    return add(add(s0, s1), add(s2, mean_all(x)));
                  }};
  });

  run_cases("softmax", [](Rng& rng) {
    Tensor<double> w = signed_uniform({3, 4}, rng, 0.3, 1.5);
    int axis = rng.next_unit() < 0.5 ? 0 : 1;
    return OpCase{Tensor<double>::uniform({3, 4}, rng, -2, 2),
                  [w, axis](Tape<double>& t, Var<double> x) {
                    return sum_all(mul(softmax(x, axis), t.constant(w)));
                  }};
  });

  run_cases("masked_softmax", [](Rng& rng) {
    Tensor<double> mask = Tensor<double>::zeros({2, 5});
    for (Index r = 0; r < 2; ++r) {
      mask(r, static_cast<Index>(rng.next_below(5))) = 1;  // a valid entry per row
      for (Index c = 0; c < 5; ++c)
        if (rng.next_unit() < 0.5) mask(r, c) = 1;
    }
    Tensor<double> w = signed_uniform({2, 5}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({2, 5}, rng, -2, 2),
                  [mask, w](Tape<double>& t, Var<double> x) {
                    return sum_all(mul(masked_softmax(x, mask), t.constant(w)));
                  }};
  });

  run_cases("take_per_row", [](Rng& rng) {
    std::vector<Index> labels{static_cast<Index>(rng.next_below(4)),
                              static_cast<Index>(rng.next_below(4)),
                              static_cast<Index>(rng.next_below(4))};
    Tensor<double> w = signed_uniform({3}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({3, 4}, rng, -1, 1),
                  [labels, w](Tape<double>& t, Var<double> x) {
                    return sum_all(mul(take_per_row(x, labels), t.constant(w)));
                  }};
  });

  run_cases("conv2d_input", [](Rng& rng) {
    Tensor<double> k = Tensor<double>::uniform({3, 2, 2, 2}, rng, 0.3, 1.5);
    Tensor<double> w = Tensor<double>::uniform({3, 4, 5}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({2, 3, 4}, rng, -1, 1),
                  [k, w](Tape<double>& t, Var<double> x) {
                    return sum_all(mul(conv2d(x, t.constant(k), 1, 1), t.constant(w)));
                  }};
  }, 40);

  run_cases("conv2d_kernels", [](Rng& rng) {
    Tensor<double> x = Tensor<double>::uniform({2, 2, 3, 3}, rng, 0.3, 1.5);
    Tensor<double> w = Tensor<double>::uniform({2, 3, 1, 1}, rng, 0.3, 1.5);
    return OpCase{Tensor<double>::uniform({3, 2, 2, 2}, rng, -1, 1),
                  [x, w](Tape<double>& t, Var<double> k) {
                    return sum_all(mul(conv2d(t.constant(x), k, 2, 0), t.constant(w)));
                  }};
  }, 40);

  run_cases("scale_channels", [](Rng& rng) {
    Tensor<double> gamma = Tensor<double>::uniform({3}, rng, 0.5, 1.5);
    Tensor<double> beta = signed_uniform({3}, rng, 0.3, 0.8);
    Tensor<double> x = Tensor<double>::uniform({2, 3, 2, 2}, rng, 0.3, 1.5);
    Tensor<double> w = Tensor<double>::uniform({2, 3, 2, 2}, rng, 0.3, 1.5);
    int leaf = static_cast<int>(rng.next_below(3));
    return OpCase{leaf == 0 ? x : leaf == 1 ? gamma : beta,
                  [x, gamma, beta, w, leaf](Tape<double>& t, Var<double> v) {
                    auto xv = leaf == 0 ? v : t.constant(x);
                    auto gv = leaf == 1 ? v : t.constant(gamma);
                    auto bv = leaf == 2 ? v : t.constant(beta);
                    return sum_all(mul(scale_channels(xv, gv, bv), t.constant(w)));
                  }};
  }, 60);

  run_cases("mean_std_pool", [](Rng& rng) {
    // Stagger the pooled members so every per-feature spread stays well away
    // from the flat-gradient guard, and weight the mean half most: the mean
    // gradient is a positive constant that bounds the total away from zero.
    Tensor<double> x = Tensor<double>::uniform({2, 4, 3}, rng, 0.3, 1.5);
    for (Index i = 0; i < 2; ++i)
      for (Index k = 0; k < 4; ++k)
        for (Index j = 0; j < 3; ++j) x(i, k, j) += 0.5 * static_cast<double>(k);
    Tensor<double> w = Tensor<double>::zeros({2, 6});
    for (Index i = 0; i < 2; ++i)
      for (Index j = 0; j < 6; ++j)
        w(i, j) = j < 3 ? rng.next_uniform(1.5, 2.5) : rng.next_uniform(0.1, 0.3);
    return OpCase{x, [w](Tape<double>& t, Var<double> v) {
                    return sum_all(mul(mean_std_pool(v), t.constant(w)));
                  }};
  }, 60);
}

TEST_CASE("mean_std_pool matches hand-computed moments") {
  Tape<double> t;
  Tensor<double> x = make<double>({1, 2, 2}, {1, 10, 3, 30});
  auto pooled = mean_std_pool(t.constant(x));
  REQUIRE(pooled.shape() == Shape{1, 4});
  CHECK(pooled.value()(0, 0) == 2.0);   // mean of {1, 3}
  CHECK(pooled.value()(0, 1) == 20.0);  // mean of {10, 30}
  CHECK(pooled.value()(0, 2) == 1.0);   // population std of {1, 3}
  CHECK(pooled.value()(0, 3) == 10.0);
  Tensor<double> odd = make<double>({1, 3, 1}, {1, 2, 3});
  auto p2 = mean_std_pool(t.constant(odd));
  CHECK(p2.value()(0, 0) == Approx(2.0));
  CHECK(p2.value()(0, 1) == Approx(std::sqrt(2.0 / 3.0)));

  CHECK_THROWS_AS(mean_std_pool(t.constant(make<double>({2, 2}, {1, 2, 3, 4}))), DimensionError);
}

TEST_CASE("pooling identical members gives exactly zero spread") {
  // The property models rely on: a set of n duplicated pixels must pool to a
  // bit-exact zero standard deviation, not a rounding residue.
  Tape<float> t;
  Rng rng(41);
  Tensor<float> x = Tensor<float>::zeros({3, 9, 4});
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j) {
      const float v = static_cast<float>(rng.next_uniform(-2.0, 2.0));
      for (Index k = 0; k < 9; ++k) x(i, k, j) = v;
    }
  auto pooled = mean_std_pool(t.constant(x));
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j) {
      REQUIRE(pooled.value()(i, j) == x(i, 0, j));      // mean reproduces the member
      REQUIRE(pooled.value()(i, 4 + j) == 0.0f);        // spread is exactly zero
    }
}

TEST_CASE("reshape shares storage and validates element counts") {
  Tensor<double> x = make<double>({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> y = x.reshaped({3, 2});
  CHECK(y.same_data(x));
  CHECK(y(2, 1) == 6.0);
  CHECK_THROWS_AS(x.reshaped({4, 2}), DimensionError);

  Tape<double> t;
  auto xv = t.constant(x);
  auto yv = reshape(xv, {6});
  CHECK(yv.value().same_data(x));
}

TEST_CASE("permute moves data as the inverse index map") {
  Tape<double> t;
  Tensor<double> x = make<double>({2, 3}, {1, 2, 3, 4, 5, 6});
  auto y = permute(t.constant(x), {1, 0});
  REQUIRE(y.shape() == Shape{3, 2});
  CHECK(y.value()(0, 0) == 1.0);
  CHECK(y.value()(0, 1) == 4.0);
  CHECK(y.value()(1, 0) == 2.0);
  CHECK(y.value()(2, 1) == 6.0);

  Rng rng(37);
  Tensor<double> z = Tensor<double>::uniform({2, 3, 4, 5}, rng, -1, 1);
  auto w = permute(t.constant(z), {3, 1, 0, 2});
  REQUIRE(w.shape() == Shape{5, 3, 2, 4});
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j)
      for (Index k = 0; k < 4; ++k)
        for (Index l = 0; l < 5; ++l) REQUIRE(w.value()(l, j, i, k) == z(i, j, k, l));

  CHECK_THROWS_AS(permute(t.constant(x), {0, 0}), ContractError);
}
