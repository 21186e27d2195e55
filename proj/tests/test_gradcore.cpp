#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numeric>
#include <set>

#include "alignkit/gradcheck.h"
#include "alignkit/ops.h"
#include "alignkit/rng.h"
#include "alignkit/tape.h"
#include "alignkit/tensor.h"
#include "doctest.h"

using namespace alignkit;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true) {
    Tensor t = Tensor::zeros(std::move(shape), DType::F64, requires_grad);
    auto v = t.mutable_data<double>();
    for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
    return t;
}

// Reference matrix product, written independently of the library kernels.
std::vector<double> ref_matmul(const std::vector<double>& a, const std::vector<double>& b,
                               int64_t m, int64_t k, int64_t n) {
    std::vector<double> c(static_cast<size_t>(m * n), 0.0);
    for (int64_t j = 0; j < n; ++j) {
        for (int64_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) {
                acc += a[static_cast<size_t>(i * k + p)] * b[static_cast<size_t>(p * n + j)];
            }
            c[static_cast<size_t>(i * n + j)] = acc;
        }
    }
    return c;
}

}  // namespace

TEST_CASE("fnv1a64 matches published test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("derive_seed separates streams by label") {
    CHECK(derive_seed(42, "init") == (42ull ^ fnv1a64("init")));
    CHECK(derive_seed(42, "init") != derive_seed(42, "shuffle-epoch-0"));
    CHECK(derive_seed(42, "init") != derive_seed(43, "init"));
}

TEST_CASE("rng streams are deterministic per seed") {
    Rng a(123), b(123), c(124);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 256; ++i) {
        uint64_t va = a.next_u64();
        all_equal = all_equal && (va == b.next_u64());
        any_diff = any_diff || (va != c.next_u64());
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("rng uniform and below stay in range") {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(rng.below(10) < 10);
    }
    CHECK(rng.below(1) == 0);
}

TEST_CASE("rng normal has the right first two moments") {
    Rng rng(99);
    const int n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sum_sq += x * x;
    }
    double mean = sum / n;
    double var = sum_sq / n - mean * mean;
    // Standard errors are ~1/sqrt(n) and ~sqrt(2/n); bounds are ~4 sigma.
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.015);
    CHECK(std::abs(rng.normal(3.0, 0.0) - 3.0) < 1e-15);
}

TEST_CASE("rng shuffle is a deterministic permutation") {
    std::vector<int> items(50);
    std::iota(items.begin(), items.end(), 0);
    std::vector<int> copy = items;
    Rng a(5);
    a.shuffle(items);
    std::set<int> seen(items.begin(), items.end());
    CHECK(seen.size() == 50);
    CHECK(items != copy);  // 50! makes identity astronomically unlikely

    std::vector<int> again(50);
    std::iota(again.begin(), again.end(), 0);
    Rng b(5);
    b.shuffle(again);
    CHECK(again == items);
}

TEST_CASE("tensor construction validates shapes and counts") {
    Tensor t = Tensor::zeros({2, 3}, DType::F32);
    CHECK(t.numel() == 6);
    CHECK(t.dtype() == DType::F32);
    CHECK(t.get(5) == 0.0);
    CHECK_FALSE(t.requires_grad());
    CHECK(t.node_id() == -1);

    CHECK_THROWS_AS(Tensor::zeros({2, 0}, DType::F32), DimensionError);
    CHECK_THROWS_AS(Tensor::zeros({-1}, DType::F64), DimensionError);
    CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1.0, 2.0, 3.0}, DType::F64), DimensionError);
    CHECK_THROWS_AS(Tensor::from_values({2}, {1.0, 2.0}, DType::F64).item(), ContractError);

    Tensor v = Tensor::from_values({2, 2}, {1, 2, 3, 4}, DType::F64);
    CHECK(v.get(2) == 3.0);
    v.set(2, 9.0);
    CHECK(v.get(2) == 9.0);
    CHECK(Tensor::scalar(2.5, DType::F64).item() == 2.5);
    CHECK(dtype_from_name("f64") == DType::F64);
    CHECK_THROWS_AS(dtype_from_name("f16"), FormatError);
}

TEST_CASE("tensor handles share storage; clone does not") {
    Tensor a = Tensor::from_values({3}, {1, 2, 3}, DType::F64);
    Tensor b = a;
    b.set(0, 7.0);
    CHECK(a.get(0) == 7.0);
    CHECK(a.same_storage(b));

    Tensor c = a.clone();
    CHECK_FALSE(c.same_storage(a));
    c.set(0, 5.0);
    CHECK(a.get(0) == 7.0);

    Tensor d = Tensor::zeros({3}, DType::F64);
    d.copy_values_from(a);
    CHECK(d.get(0) == 7.0);
    CHECK_THROWS_AS(d.copy_values_from(Tensor::zeros({4}, DType::F64)), DimensionError);
    CHECK_THROWS_AS(d.copy_values_from(Tensor::zeros({3}, DType::F32)), DimensionError);
}

TEST_CASE("matmul and matmul_nt match a reference triple loop") {
    Rng rng(11);
    const int64_t m = 7, k = 5, n = 9;
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor c = matmul(a, b);
    auto expect = ref_matmul(a.to_vector(), b.to_vector(), m, k, n);
    auto got = c.to_vector();
    for (size_t i = 0; i < expect.size(); ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-13));

    // b_t holds b transposed; matmul_nt(a, b_t) must equal a . b.
    Tensor b_t = Tensor::zeros({n, k}, DType::F64);
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < n; ++j) b_t.set(j * k + i, b.get(i * n + j));
    auto got_nt = matmul_nt(a, b_t).to_vector();
    for (size_t i = 0; i < expect.size(); ++i)
        CHECK(got_nt[i] == doctest::Approx(expect[i]).epsilon(1e-13));

    CHECK_THROWS_WITH_AS(matmul(Tensor::zeros({2, 3}, DType::F64), Tensor::zeros({4, 5}, DType::F64)),
                         doctest::Contains("[2x3]"), DimensionError);
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({k, n}, DType::F32)), DimensionError);
}

TEST_CASE("gemm_tn kernel multiplies the transpose of its first operand") {
    Rng rng(12);
    const int64_t m = 4, k = 6, n = 3;
    Tensor a = random_tensor({k, m}, rng);  // stored [k x m], used as [m x k]^T
    Tensor b = random_tensor({k, n}, rng);
    std::vector<double> a_t(static_cast<size_t>(m * k));
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) a_t[static_cast<size_t>(i * k + p)] = a.get(p * m + i);
    auto expect = ref_matmul(a_t, b.to_vector(), m, k, n);

    std::vector<double> got(static_cast<size_t>(m * n), 1.0);
    kernels::gemm_tn<double>(a.data<double>().data(), b.data<double>().data(), got.data(), m, k, n,
                             false);
    for (size_t i = 0; i < expect.size(); ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-13));

    // accumulate=true adds on top of the existing values.
    std::vector<double> acc(static_cast<size_t>(m * n), 0.5);
    kernels::gemm_tn<double>(a.data<double>().data(), b.data<double>().data(), acc.data(), m, k, n,
                             true);
    for (size_t i = 0; i < expect.size(); ++i)
        CHECK(acc[i] == doctest::Approx(expect[i] + 0.5).epsilon(1e-13));
}

TEST_CASE("softmax matches hand-computed values and sums to one") {
    Tensor x = Tensor::from_values({1, 3}, {1.0, 2.0, 3.0}, DType::F64);
    auto y = softmax(x).to_vector();
    CHECK(y[0] == doctest::Approx(0.09003057317038046).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.24472847105479767).epsilon(1e-12));
    CHECK(y[2] == doctest::Approx(0.66524095577482186).epsilon(1e-12));
    CHECK(y[0] + y[1] + y[2] == doctest::Approx(1.0).epsilon(1e-14));

    // Max subtraction keeps large logits finite.
    Tensor big = Tensor::from_values({1, 2}, {1000.0, 1000.0}, DType::F64);
    auto yb = softmax(big).to_vector();
    CHECK(yb[0] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("causal_softmax masks the future with exact zeros") {
    Rng rng(13);
    const int64_t t = 5;
    Tensor scores = random_tensor({t, t}, rng, -2.0, 2.0, false);
    Tensor probs = causal_softmax(scores);
    for (int64_t r = 0; r < t; ++r) {
        double row_sum = 0.0;
        for (int64_t j = 0; j < t; ++j) {
            double p = probs.get(r * t + j);
            if (j > r) {
                CHECK(p == 0.0);
            } else {
                CHECK(p > 0.0);
                row_sum += p;
            }
        }
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    // The last row sees everything, so it must agree with a plain softmax.
    Tensor last = slice_rows(scores, t - 1, 1);
    auto full = softmax(last).to_vector();
    for (int64_t j = 0; j < t; ++j) CHECK(probs.get((t - 1) * t + j) == full[static_cast<size_t>(j)]);

    // Changing masked-out entries must not change any visible probability.
    Tensor scores2 = scores.clone();
    scores2.set(0 * t + 3, 99.0);
    scores2.set(1 * t + 4, -99.0);
    Tensor probs2 = causal_softmax(scores2);
    for (int64_t i = 0; i < t * t; ++i) CHECK(probs.get(i) == probs2.get(i));

    CHECK_THROWS_AS(causal_softmax(Tensor::zeros({3, 4}, DType::F64)), DimensionError);
}

TEST_CASE("gelu and softplus frozen values") {
    Tensor x = Tensor::from_values({4}, {0.0, 1.0, -1.0, 2.0}, DType::F64);
    auto g = gelu(x).to_vector();
    CHECK(g[0] == 0.0);
    CHECK(g[1] == doctest::Approx(0.8411919906082768).epsilon(1e-12));
    CHECK(g[2] == doctest::Approx(-0.15880800939172324).epsilon(1e-12));
    CHECK(g[3] == doctest::Approx(1.954597694087775).epsilon(1e-9));

    Tensor s = Tensor::from_values({3}, {0.0, -1.0, 1.0}, DType::F64);
    auto sp = softplus(s).to_vector();
    CHECK(sp[0] == doctest::Approx(0.6931471805599453).epsilon(1e-14));
    CHECK(sp[1] == doctest::Approx(0.31326168751822286).epsilon(1e-12));
    CHECK(sp[2] == doctest::Approx(1.3132616875182228).epsilon(1e-12));

    // Stability at the extremes: no overflow, no negative zero drift.
    Tensor ex = Tensor::from_values({2}, {100.0, -100.0}, DType::F64);
    auto spx = softplus(ex).to_vector();
    CHECK(spx[0] == doctest::Approx(100.0).epsilon(1e-14));
    CHECK(spx[1] > 0.0);
    CHECK(spx[1] < 1e-40);
}

TEST_CASE("layernorm standardizes each row") {
    Rng rng(17);
    const int64_t rows = 4, n = 8;
    Tensor x = random_tensor({rows, n}, rng, -3.0, 3.0, false);
    Tensor gain = Tensor::full({n}, 1.0, DType::F64);
    Tensor bias = Tensor::zeros({n}, DType::F64);
    Tensor y = layernorm(x, gain, bias);
    for (int64_t r = 0; r < rows; ++r) {
        double mean = 0.0, var = 0.0;
        for (int64_t j = 0; j < n; ++j) mean += y.get(r * n + j);
        mean /= n;
        for (int64_t j = 0; j < n; ++j) {
            double d = y.get(r * n + j) - mean;
            var += d * d;
        }
        var /= n;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps in the denominator
    }

    Tensor gain2 = Tensor::full({n}, 2.0, DType::F64);
    Tensor bias2 = Tensor::full({n}, 0.5, DType::F64);
    Tensor y2 = layernorm(x, gain2, bias2);
    for (int64_t i = 0; i < rows * n; ++i)
        CHECK(y2.get(i) == doctest::Approx(2.0 * y.get(i) + 0.5).epsilon(1e-12));

    CHECK_THROWS_AS(layernorm(x, Tensor::zeros({n + 1}, DType::F64), bias), DimensionError);
}

TEST_CASE("gather_logprob agrees with log softmax") {
    Rng rng(19);
    const int64_t t = 6, v = 10;
    Tensor logits = random_tensor({t, v}, rng, -4.0, 4.0, false);
    std::vector<int> targets = {0, 3, 9, 5, 5, 1};
    Tensor lp = gather_logprob(logits, targets);
    REQUIRE(lp.shape() == Shape{t});
    Tensor reference = log_op(softmax(logits));
    for (int64_t r = 0; r < t; ++r) {
        CHECK(lp.get(r) ==
              doctest::Approx(reference.get(r * v + targets[static_cast<size_t>(r)])).epsilon(1e-12));
        CHECK(lp.get(r) < 0.0);
    }

    CHECK_THROWS_AS(gather_logprob(logits, {0, 1, 2}), DimensionError);
    CHECK_THROWS_WITH_AS(gather_logprob(logits, {0, 3, 10, 5, 5, 1}),
                         doctest::Contains("position 2"), IndexError);
}

TEST_CASE("embedding, slice, concat and stack move the right elements") {
    Tensor table = Tensor::from_values({3, 2}, {10, 11, 20, 21, 30, 31}, DType::F64);
    Tensor e = embedding_rows(table, {2, 0, 2});
    CHECK(e.to_vector() == std::vector<double>{30, 31, 10, 11, 30, 31});
    CHECK_THROWS_AS(embedding_rows(table, {3}), IndexError);
    CHECK_THROWS_AS(embedding_rows(table, {}), ContractError);

    Tensor x = Tensor::from_values({3, 4}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, DType::F64);
    CHECK(slice_rows(x, 1, 2).to_vector() == std::vector<double>{4, 5, 6, 7, 8, 9, 10, 11});
    CHECK(slice_cols(x, 1, 2).to_vector() == std::vector<double>{1, 2, 5, 6, 9, 10});
    CHECK_THROWS_AS(slice_rows(x, 2, 2), DimensionError);
    CHECK_THROWS_AS(slice_cols(x, 0, 5), DimensionError);

    Tensor left = Tensor::from_values({2, 1}, {1, 2}, DType::F64);
    Tensor right = Tensor::from_values({2, 2}, {3, 4, 5, 6}, DType::F64);
    CHECK(concat_cols({left, right}).to_vector() == std::vector<double>{1, 3, 4, 2, 5, 6});
    CHECK_THROWS_AS(concat_cols({left, Tensor::zeros({3, 1}, DType::F64)}), DimensionError);

    Tensor s = stack({left, left});
    CHECK(s.shape() == Shape{2, 2, 1});
    CHECK(s.to_vector() == std::vector<double>{1, 2, 1, 2});
    CHECK_THROWS_AS(stack({left, right}), DimensionError);
}

TEST_CASE("ops do not record without a tape or without requires_grad") {
    Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4}, DType::F64);
    a.set_requires_grad(true);
    Tensor b = Tensor::from_values({2, 2}, {5, 6, 7, 8}, DType::F64);

    Tensor no_tape = matmul(a, b, nullptr);
    CHECK(no_tape.node_id() == -1);
    CHECK_FALSE(no_tape.requires_grad());

    Tape tape;
    Tensor no_grad = matmul(b, b, &tape);
    CHECK(tape.size() == 0);
    CHECK_FALSE(no_grad.requires_grad());

    Tensor recorded = matmul(a, b, &tape);
    CHECK(tape.size() == 1);
    CHECK(recorded.node_id() == 0);
    CHECK(recorded.requires_grad());
}

TEST_CASE("backward accumulates additively across uses and calls") {
    Tensor x = Tensor::from_values({3}, {0.5, -1.0, 2.0}, DType::F64);
    x.set_requires_grad(true);

    auto run = [&]() {
        Tape tape;
        // loss = sum(x*x + 3x); d/dx = 2x + 3
        Tensor loss = sum(add(mul(x, x, &tape), scale(x, 3.0, &tape), &tape), &tape);
        tape.backward(loss);
    };
    run();
    std::vector<double> g1 = x.grad_to_vector();
    for (int i = 0; i < 3; ++i)
        CHECK(g1[static_cast<size_t>(i)] == doctest::Approx(2.0 * x.get(i) + 3.0).epsilon(1e-14));

    // A second pass without zero_grad doubles the gradient.
    run();
    std::vector<double> g2 = x.grad_to_vector();
    for (int i = 0; i < 3; ++i)
        CHECK(g2[static_cast<size_t>(i)] == doctest::Approx(2.0 * g1[static_cast<size_t>(i)]).epsilon(1e-14));

    x.zero_grad();
    CHECK_FALSE(x.has_grad());
}

TEST_CASE("backward skips branches the loss never touched") {
    Tensor used = Tensor::from_values({2}, {1.0, 2.0}, DType::F64);
    Tensor unused = Tensor::from_values({2}, {3.0, 4.0}, DType::F64);
    used.set_requires_grad(true);
    unused.set_requires_grad(true);

    Tape tape;
    Tensor y1 = mul(used, used, &tape);
    mul(unused, unused, &tape);  // recorded but not part of the loss
    Tensor loss = sum(y1, &tape);
    tape.backward(loss);

    CHECK(used.has_grad());
    CHECK_FALSE(unused.has_grad());
}

TEST_CASE("backward consumes the tape and rejects foreign losses") {
    Tensor x = Tensor::from_values({2}, {1.0, 2.0}, DType::F64);
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss = sum(mul(x, x, &tape), &tape);
    tape.backward(loss);
    CHECK(tape.size() == 0);
    CHECK_THROWS_AS(tape.backward(loss), ContractError);

    Tape other;
    Tensor y = sum(x, &other);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
    other.clear();

    Tape t2;
    Tensor not_scalar = mul(x, x, &t2);
    CHECK_THROWS_AS(t2.backward(not_scalar), ContractError);

    Tensor plain = Tensor::scalar(1.0, DType::F64);
    CHECK_THROWS_AS(t2.backward(plain), ContractError);
}

namespace {

// Scalar-loss builders for per-op gradient checks. Each returns the loss for
// the current parameter values; `tape` is null during finite differencing.
struct OpCheck {
    const char* name;
    std::function<Tensor(Tape*, std::vector<Tensor>&)> build;
    double lo = -1.0, hi = 1.0;
    std::vector<Shape> shapes;
};

}  // namespace

TEST_CASE("every op passes a finite-difference gradient check") {
    std::vector<OpCheck> checks;
    checks.push_back({"matmul",
                      [](Tape* t, std::vector<Tensor>& p) {
                          return sum(gelu(matmul(p[0], p[1], t), t), t);
                      },
                      -1.0, 1.0,
                      {{3, 4}, {4, 2}}});
    checks.push_back({"matmul_nt",
                      [](Tape* t, std::vector<Tensor>& p) {
                          return sum(gelu(matmul_nt(p[0], p[1], t), t), t);
                      },
                      -1.0, 1.0,
                      {{3, 4}, {2, 4}}});
    checks.push_back({"add_sub_mul",
                      [](Tape* t, std::vector<Tensor>& p) {
                          Tensor y = mul(add(p[0], p[1], t), sub(p[0], p[1], t), t);
                          return sum(y, t);
                      },
                      -1.0, 1.0,
                      {{2, 3}, {2, 3}}});
    checks.push_back({"scalar_broadcast",
                      [](Tape* t, std::vector<Tensor>& p) {
                          Tensor y = mul(p[0], p[1], t);       // tensor * scalar
                          Tensor z = add(p[1], gelu(y, t), t); // scalar + tensor
                          return sum(sub(z, p[1], t), t);
                      },
                      0.5, 1.5,
                      {{2, 3}, {1}}});
    checks.push_back({"scale_addconst_negate",
                      [](Tape* t, std::vector<Tensor>& p) {
                          return sum(negate(add_const(scale(p[0], 2.5, t), -0.25, t), t), t);
                      },
                      -1.0, 1.0,
                      {{5}}});
    checks.push_back({"exp_log",
                      [](Tape* t, std::vector<Tensor>& p) {
                          return sum(log_op(add_const(exp_op(p[0], t), 0.5, t), t), t);
                      },
                      -1.0, 1.0,
                      {{6}}});
    checks.push_back({"gelu",
                      [](Tape* t, std::vector<Tensor>& p) { return sum(gelu(p[0], t), t); },
                      -3.0, 3.0,
                      {{7}}});
    checks.push_back({"softplus",
                      [](Tape* t, std::vector<Tensor>& p) { return sum(softplus(p[0], t), t); },
                      -3.0, 3.0,
                      {{7}}});
    checks.push_back({"softmax",
                      [](Tape* t, std::vector<Tensor>& p) {
                          // Weighted sum, otherwise the row-sum constraint hides errors.
                          Tensor w = mul(softmax(p[0], t), p[1], t);
                          return sum(w, t);
                      },
                      -2.0, 2.0,
                      {{3, 5}, {3, 5}}});
    checks.push_back({"causal_softmax",
                      [](Tape* t, std::vector<Tensor>& p) {
                          Tensor w = mul(causal_softmax(p[0], t), p[1], t);
                          return sum(w, t);
                      },
                      -2.0, 2.0,
                      {{4, 4}, {4, 4}}});
    checks.push_back({"layernorm",
                      [](Tape* t, std::vector<Tensor>& p) {
                          Tensor y = layernorm(p[0], p[1], p[2], t);
                          return sum(gelu(y, t), t);
                      },
                      -2.0, 2.0,
                      {{3, 6}, {6}, {6}}});
    checks.push_back({"add_bias",
                      [](Tape* t, std::vector<Tensor>& p) {
                          return sum(gelu(add_bias(p[0], p[1], t), t), t);
                      },
                      -1.0, 1.0,
                      {{3, 4}, {4}}});
    checks.push_back({"gather_logprob",
                      [](Tape* t, std::vector<Tensor>& p) {
                          Tensor lp = gather_logprob(p[0], {1, 0, 3}, t);
                          return sum(lp, t);
                      },
                      -2.0, 2.0,
                      {{3, 4}}});
    checks.push_back({"embedding_rows",
                      [](Tape* t, std::vector<Tensor>& p) {
                          Tensor e = embedding_rows(p[0], {2, 0, 2, 1}, t);
                          return sum(gelu(e, t), t);
                      },
                      -1.0, 1.0,
                      {{3, 4}}});
    checks.push_back({"slices",
                      [](Tape* t, std::vector<Tensor>& p) {
                          Tensor r = slice_rows(p[0], 1, 2, t);
                          Tensor c = slice_cols(r, 0, 3, t);
                          return sum(gelu(c, t), t);
                      },
                      -1.0, 1.0,
                      {{4, 5}}});
    checks.push_back({"concat_cols",
                      [](Tape* t, std::vector<Tensor>& p) {
                          Tensor y = concat_cols({p[0], p[1]}, t);
                          return sum(gelu(y, t), t);
                      },
                      -1.0, 1.0,
                      {{3, 2}, {3, 3}}});
    checks.push_back({"stack",
                      [](Tape* t, std::vector<Tensor>& p) {
                          Tensor y = stack({p[0], p[1]}, t);
                          return sum(gelu(y, t), t);
                      },
                      -1.0, 1.0,
                      {{2, 3}, {2, 3}}});

    uint64_t seed = 1000;
    for (auto& check : checks) {
        CAPTURE(check.name);
        Rng rng(seed++);
        std::vector<Tensor> params;
        for (const Shape& s : check.shapes) params.push_back(random_tensor(s, rng, check.lo, check.hi));
        auto f = [&](Tape* t) { return check.build(t, params); };
        GradCheckResult r = finite_diff_check(f, params, 1e-5, 1e-7);
        CAPTURE(r.max_rel_error);
        CAPTURE(r.worst_param);
        CAPTURE(r.worst_coord);
        CHECK(r.passed);
        CHECK(r.checked_coords > 0);
    }
}

TEST_CASE("a corrupted backward rule is caught by the checker") {
    Tensor x = Tensor::from_values({4}, {0.8, -0.4, 1.2, 0.3}, DType::F64);
    x.set_requires_grad(true);

    // y = x^2 recorded with a deliberately wrong rule (3x instead of 2x).
    auto square_bad = [](const Tensor& in, Tape* tape) {
        Tensor out = Tensor::zeros(in.shape(), in.dtype());
        for (int64_t i = 0; i < in.numel(); ++i) out.set(i, in.get(i) * in.get(i));
        if (tape != nullptr && in.requires_grad()) {
            tape->record({in}, out, [in, out]() {
                auto& g = std::get<std::vector<double>>(out.impl()->grad);
                auto& gx = detail::ensure_grad<double>(*in.impl());
                for (size_t i = 0; i < g.size(); ++i) gx[i] += 3.0 * in.get(static_cast<int64_t>(i)) * g[i];
            });
        }
        return out;
    };

    std::vector<Tensor> params = {x};
    auto f = [&](Tape* t) { return sum(square_bad(x, t), t); };
    GradCheckResult r = finite_diff_check(f, params, 1e-5, 1e-7);
    CHECK_FALSE(r.passed);
    CHECK(r.max_rel_error > 1e-2);
}

TEST_CASE("gradcheck rejects f32 parameters and frozen parameters") {
    Tensor f32 = Tensor::zeros({2}, DType::F32, true);
    std::vector<Tensor> p32 = {f32};
    CHECK_THROWS_AS(finite_diff_check([&](Tape* t) { return sum(f32, t); }, p32), ContractError);

    Tensor frozen = Tensor::zeros({2}, DType::F64, false);
    std::vector<Tensor> pf = {frozen};
    CHECK_THROWS_AS(finite_diff_check([&](Tape* t) { return sum(frozen, t); }, pf), ContractError);

    std::vector<Tensor> none;
    CHECK_THROWS_AS(finite_diff_check([&](Tape* t) { return Tensor::scalar(0, DType::F64); }, none),
                    ContractError);
}

TEST_CASE("gradcheck coordinate sampling bounds the work") {
    Rng rng(23);
    Tensor x = random_tensor({10, 10}, rng);
    std::vector<Tensor> params = {x};
    auto f = [&](Tape* t) { return sum(gelu(x, t), t); };
    GradCheckResult r = finite_diff_check(f, params, 1e-5, 1e-7, 7, 42);
    CHECK(r.checked_coords == 7);
    CHECK(r.passed);
}

TEST_CASE("forward passes are bit-identical across reruns") {
    Rng rng(29);
    Tensor a = random_tensor({6, 6}, rng, -2.0, 2.0, false);
    Tensor b = random_tensor({6, 6}, rng, -2.0, 2.0, false);
    Tensor gain = Tensor::full({6}, 1.0, DType::F64);
    Tensor bias = Tensor::zeros({6}, DType::F64);

    auto run = [&]() {
        Tensor h = layernorm(matmul(a, b), gain, bias);
        Tensor p = causal_softmax(h);
        return sum(gelu(matmul_nt(p, b))).item();
    };
    double first = run();
    for (int i = 0; i < 5; ++i) CHECK(run() == first);
}
