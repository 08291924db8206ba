#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <omp.h>

#include <cmath>
#include <filesystem>

#include "phaforce/nn/checkpoint.hpp"
#include "phaforce/nn/gradcheck.hpp"
#include "phaforce/nn/kernels.hpp"
#include "phaforce/nn/layers.hpp"
#include "phaforce/nn/optim.hpp"

using namespace phaforce;
using namespace phaforce::nn;

namespace {

Tensor randn(Shape s, Rng& rng, bool grad = false) {
    std::vector<double> v(numel(s));
    for (auto& x : v) x = rng.normal();
    return Tensor::from(std::move(s), std::move(v), grad);
}

}  // namespace

TEST_CASE("linear: trivial values") {
    auto x = Tensor::from({2, 2}, {1, 0, 0, 1});
    auto W = Tensor::from({2, 2}, {1, 2, 3, 4});
    auto b = Tensor::from({2}, {0, 0});
    auto y = linear(x, W, b);
    CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{1, 2, 3, 4});

    auto z = linear(Tensor::zeros({3, 2}), W, Tensor::from({2}, {0.5, -1.5}));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(z[i * 2] == 0.5);
        CHECK(z[i * 2 + 1] == -1.5);
    }
    CHECK_THROWS_AS(linear(Tensor::zeros({3, 3}), W, b), ShapeMismatch);
}

TEST_CASE("linear: W gradient of sum(y) matches central differences") {
    Rng rng(10);
    ParamStore ps;
    Linear lin(ps, "lin", 4, 5, rng);
    auto x = randn({3, 4}, rng);
    auto rep = grad_check(ps, [&] { return sum(lin(x)); }, 1e-5);
    CHECK(rep.max_rel_error <= 1e-7);
    CHECK(rep.checked == 25);
}

TEST_CASE("dilated causal conv1d") {
    SUBCASE("k=1 unit weight is identity") {
        auto x = Tensor::from({5, 1}, {1, -2, 3, 4, 5});
        auto k = Tensor::from({1, 1, 1}, {1});
        auto y = dilated_causal_conv1d(x, k, 1, 1);
        for (std::size_t i = 0; i < 5; ++i) CHECK(y[i] == x[i]);
    }
    SUBCASE("impulse response matches the direct convolution sum") {
        const std::size_t T = 16;
        std::vector<double> xv(T, 0.0);
        xv[5] = 1.0;
        auto x = Tensor::from({T, 1}, xv);
        auto k = Tensor::from({2, 1, 1}, {0.7, 1.3});
        auto y = dilated_causal_conv1d(x, k, 1, 4);
        for (std::size_t t = 0; t < T; ++t) {
            // y[t] = sum_j w[j] * x[t - (k-1-j)*dil]
            double expect = 0.0;
            for (std::size_t j = 0; j < 2; ++j) {
                const long s = static_cast<long>(t) - static_cast<long>((1 - j) * 4);
                if (s >= 0) expect += k[j] * xv[static_cast<std::size_t>(s)];
            }
            CHECK(y[t] == expect);
            CHECK((y[t] != 0.0) == (t == 5 || t == 9));
        }
    }
    SUBCASE("perturbing the last input leaves earlier outputs unchanged") {
        Rng rng(11);
        auto x = randn({12, 3}, rng);
        auto k = randn({3, 3, 4}, rng);
        auto y0 = dilated_causal_conv1d(x, k, 1, 2);
        auto xv = std::vector<double>(x.data().begin(), x.data().end());
        for (std::size_t c = 0; c < 3; ++c) xv[11 * 3 + c] += 10.0;
        auto y1 = dilated_causal_conv1d(Tensor::from({12, 3}, xv), k, 1, 2);
        for (std::size_t i = 0; i < 11 * 4; ++i) CHECK(y0[i] == y1[i]);
        CHECK(y0[11 * 4] != y1[11 * 4]);
    }
    CHECK_THROWS_AS(dilated_causal_conv1d(Tensor::zeros({4, 2}), Tensor::zeros({2, 3, 1}), 1, 1), ShapeMismatch);
}

TEST_CASE("cross attention head") {
    Rng rng(12);
    SUBCASE("single key returns its value row") {
        auto q = randn({1, 4}, rng), K = randn({1, 4}, rng), V = randn({1, 4}, rng);
        auto y = cross_attention_head(q, K, V);
        for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == V[i]);
    }
    SUBCASE("identical keys give the column mean of V") {
        auto q = randn({1, 3}, rng);
        auto K = Tensor::from({4, 3}, {1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3});
        auto V = randn({4, 3}, rng);
        auto y = cross_attention_head(q, K, V);
        for (std::size_t i = 0; i < 3; ++i) {
            const double m = (V[i] + V[3 + i] + V[6 + i] + V[9 + i]) / 4.0;
            CHECK(y[i] == doctest::Approx(m).epsilon(1e-14));
        }
    }
    SUBCASE("matches a naive double-loop oracle") {
        auto q = randn({1, 8}, rng), K = randn({36, 8}, rng), V = randn({36, 8}, rng);
        auto y = cross_attention_head(q, K, V);
        std::vector<double> s(36);
        double mx = -1e300;
        for (int t = 0; t < 36; ++t) {
            double acc = 0.0;
            for (int i = 0; i < 8; ++i) acc += q[i] * K[t * 8 + i];
            s[t] = acc / std::sqrt(8.0);
            mx = std::max(mx, s[t]);
        }
        double z = 0.0;
        for (auto& v : s) z += (v = std::exp(v - mx));
        for (int i = 0; i < 8; ++i) {
            double acc = 0.0;
            for (int t = 0; t < 36; ++t) acc += s[t] / z * V[t * 8 + i];
            CHECK(std::abs(acc - y[i]) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(cross_attention_head(Tensor::zeros({1, 4}), Tensor::zeros({3, 5}), Tensor::zeros({3, 5})),
                    ShapeMismatch);
}

TEST_CASE("softmax, sigmoid, adam") {
    auto u = softmax(std::vector<double>(5, 0.0));
    for (double v : u) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(sigmoid(800.0) <= 1.0);
    CHECK_THROWS_AS(softmax(std::vector<double>{1.0, NAN}), NonFiniteInput);
    CHECK_THROWS_AS(sigmoid(INFINITY), NonFiniteInput);

    Rng rng(13);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x(7);
        for (auto& v : x) v = 50.0 * rng.normal();
        auto p = softmax(x);
        double s = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }

    // f(w) = w^2 from w = 1: g = 2, m_hat = 2, v_hat = 4, step = lr * 2 / (2 + eps)
    auto w = Tensor::from({1}, {1.0}, true);
    Adam opt({w}, AdamConfig{.lr = 0.1});
    square(w).backward();
    opt.step();
    CHECK(w[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-15));
    CHECK(w[0] < 1.0);
}

TEST_CASE("grad_check: two-layer MLP with 50 parameters") {
    Rng rng(14);
    ParamStore ps;
    Mlp mlp(ps, "mlp", {3, 8, 2}, rng);
    CHECK(ps.count() == 50);
    auto x = randn({4, 3}, rng);
    auto rep = grad_check(ps, [&] { return sum(tanh(mlp(x))); });
    CHECK(rep.max_rel_error <= 1e-4);
}

TEST_CASE("grad_check: composite ops") {
    Rng rng(15);
    ParamStore ps;
    auto a = ps.add("a", {3, 4}, 4, rng);
    auto b = ps.add("b", {3, 4}, 4, rng);
    auto s = ps.add("s", {3}, 1, rng);
    auto g = ps.add("g", {3, 2}, 1, rng);
    auto c = ps.add("c", {1}, 1, rng);
    std::vector<int> labels{0, 3, 1};
    std::vector<double> tgt{1.0, 0.0, 1.0};
    auto rep = grad_check(ps, [&] {
        auto d = div(mul(a, b), add_const(square(b), 1.0));
        auto e = mul_scalar(mul_colvec(d, s), c);
        auto f = scale_heads(softmax_rows(e), sigmoid(g));
        auto h = concat_cols({slice_cols(f, 1, 2), abs(a)});
        return add(add(mean(h), cross_entropy(e, labels)), bce_with_logits(row_sum(sub(a, b)), tgt));
    });
    CHECK(rep.max_rel_error <= 1e-6);
}

TEST_CASE("grad_check: conv2d and attention") {
    Rng rng(16);
    ParamStore ps;
    ConvEncoder enc(ps, "cnn", 8, {2, 3}, 4, rng);
    auto img = randn({2, 8, 8, 1}, rng);
    auto rep = grad_check(ps, [&] { return sum(tanh(enc(img))); });
    CHECK(rep.max_rel_error <= 1e-4);

    ParamStore pa;
    auto Q = pa.add("Q", {2, 6}, 1, rng);
    auto K = pa.add("K", {10, 6}, 1, rng);
    auto V = pa.add("V", {10, 6}, 1, rng);
    auto rep2 = grad_check(pa, [&] { return sum(square(multihead_cross_attention(Q, K, V, 3))); });
    CHECK(rep2.max_rel_error <= 1e-6);
}

TEST_CASE("gemm: parallel backend matches the serial reference and ignores the thread count") {
    Rng rng(17);
    const std::size_t m = 167, k = 129, n = 45;
    std::vector<double> A(m * k), B(k * n);
    for (auto& v : A) v = rng.normal();
    for (auto& v : B) v = rng.normal();
    std::vector<double> C1(m * n, 0.0), C2(m * n, 0.0);
    kernels::serial::gemm_nn(A.data(), B.data(), C1.data(), m, k, n);
    kernels::parallel::gemm_nn(A.data(), B.data(), C2.data(), m, k, n);
    for (std::size_t i = 0; i < m * n; ++i) CHECK(std::abs(C1[i] - C2[i]) <= 1e-12 * (1.0 + std::abs(C1[i])));
    // against a naive triple loop
    for (std::size_t i = 0; i < m; i += 7)
        for (std::size_t j = 0; j < n; j += 5) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[p * n + j];
            CHECK(std::abs(acc - C1[i * n + j]) < 1e-12);
        }
    // large enough to fork: 1 thread and 3 threads give the same bits
    const std::size_t M = 600, K = 40, N = 30;
    std::vector<double> P(M * K), Q(K * N);
    for (auto& v : P) v = rng.normal();
    for (auto& v : Q) v = rng.normal();
    std::vector<double> D1(M * N, 0.0), D3(M * N, 0.0);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    kernels::parallel::gemm_nn(P.data(), Q.data(), D1.data(), M, K, N);
    omp_set_num_threads(3);
    kernels::parallel::gemm_nn(P.data(), Q.data(), D3.data(), M, K, N);
    omp_set_num_threads(saved);
    CHECK(D1 == D3);
}

TEST_CASE("gemm_nt and gemm_tn: both backends match explicit transposes") {
    Rng rng(19);
    const std::size_t m = 23, k = 17, n = 11;
    std::vector<double> A(m * k), Bt(n * k), G(m * n);
    for (auto& v : A) v = rng.normal();
    for (auto& v : Bt) v = rng.normal();
    for (auto& v : G) v = rng.normal();
    for (auto be : {kernels::Backend::Serial, kernels::Backend::Parallel}) {
        kernels::set_backend(be);
        std::vector<double> C(m * n, 0.0), W(k * n, 0.0);
        kernels::gemm_nt(A.data(), Bt.data(), C.data(), m, k, n);
        kernels::gemm_tn(A.data(), G.data(), W.data(), m, k, n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * Bt[j * k + p];
                CHECK(std::abs(acc - C[i * n + j]) < 1e-12);
            }
        for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < m; ++i) acc += A[i * k + p] * G[i * n + j];
                CHECK(std::abs(acc - W[p * n + j]) < 1e-12);
            }
    }
    kernels::set_backend(kernels::Backend::Parallel);
}

TEST_CASE("forward passes are deterministic and no-grad mode records nothing") {
    Rng rng(18);
    ParamStore ps;
    Mlp mlp(ps, "m", {5, 16, 3}, rng);
    auto x = randn({4, 5}, rng);
    auto y1 = mlp(x), y2 = mlp(x);
    CHECK(std::vector<double>(y1.data().begin(), y1.data().end()) ==
          std::vector<double>(y2.data().begin(), y2.data().end()));
    CHECK(y1.requires_grad());
    NoGradGuard ng;
    CHECK_FALSE(mlp(x).requires_grad());
}

TEST_CASE("training is reproducible for a fixed seed") {
    auto run = [] {
        Rng rng(19);
        ParamStore ps;
        Mlp mlp(ps, "m", {2, 8, 1}, rng);
        Adam opt(ps.tensors(), AdamConfig{.lr = 1e-2});
        auto x = randn({16, 2}, rng);
        auto y = randn({16, 1}, rng);
        for (int i = 0; i < 50; ++i) {
            opt.zero_grad();
            mse(mlp(x), y).backward();
            opt.step();
        }
        std::vector<double> out;
        for (auto& t : ps.tensors()) out.insert(out.end(), t.data().begin(), t.data().end());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("checkpoint round trip and shape validation") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "phaforce_ckpt_test";
    fs::remove_all(dir);
    Rng rng(20);
    ParamStore a;
    Mlp m1(a, "m", {3, 4, 2}, rng);
    save_checkpoint(dir, a, {{"seed", 20}});
    Rng rng2(99);
    ParamStore b;
    Mlp m2(b, "m", {3, 4, 2}, rng2);
    auto meta = load_checkpoint(dir, b);
    CHECK(meta["seed"] == 20);
    for (std::size_t i = 0; i < a.items().size(); ++i) {
        auto ta = a.items()[i].second, tb = b.items()[i].second;
        CHECK(std::vector<double>(ta.data().begin(), ta.data().end()) ==
              std::vector<double>(tb.data().begin(), tb.data().end()));
    }
    ParamStore c;
    Mlp m3(c, "m", {3, 5, 2}, rng2);
    CHECK_THROWS_AS(load_checkpoint(dir, c), CheckpointError);
    CHECK(fs::file_size(dir / "params" / "m.0.W.f64") == 12 * sizeof(double));
    fs::remove_all(dir);
}
