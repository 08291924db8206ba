#include "phaforce/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "phaforce/nn/kernels.hpp"

namespace phaforce::nn {

using detail::make_result;

namespace {

void require(bool cond, const std::string& what) {
    if (!cond) throw ShapeMismatch(what);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    require(a.size() == b.size(), std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class F>
Tensor unary(const Tensor& x, F f, std::function<void(Node&)> bw) {
    std::vector<double> v(x.size());
    auto xd = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(xd[i]);
    return make_result(x.shape(), std::move(v), {x}, std::move(bw));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    require(b.rows() == k, "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& s) {
        Node& A = *s.parents[0];
        Node& B = *s.parents[1];
        if (A.requires_grad) kernels::gemm_nt(s.grad.data(), B.value.data(), A.grad.data(), m, n, k);
        if (B.requires_grad) kernels::gemm_tn(A.value.data(), s.grad.data(), B.grad.data(), m, k, n);
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
    return make_result(a.shape(), std::move(v), {a, b}, [](Node& s) {
        for (int p = 0; p < 2; ++p) {
            Node& P = *s.parents[p];
            if (!P.requires_grad) continue;
            for (std::size_t i = 0; i < s.grad.size(); ++i) P.grad[i] += s.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sub");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
    return make_result(a.shape(), std::move(v), {a, b}, [](Node& s) {
        Node& A = *s.parents[0];
        Node& B = *s.parents[1];
        if (A.requires_grad)
            for (std::size_t i = 0; i < s.grad.size(); ++i) A.grad[i] += s.grad[i];
        if (B.requires_grad)
            for (std::size_t i = 0; i < s.grad.size(); ++i) B.grad[i] -= s.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mul");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
    return make_result(a.shape(), std::move(v), {a, b}, [](Node& s) {
        Node& A = *s.parents[0];
        Node& B = *s.parents[1];
        if (A.requires_grad)
            for (std::size_t i = 0; i < s.grad.size(); ++i) A.grad[i] += s.grad[i] * B.value[i];
        if (B.requires_grad)
            for (std::size_t i = 0; i < s.grad.size(); ++i) B.grad[i] += s.grad[i] * A.value[i];
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same(a, b, "div");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] / b[i];
    return make_result(a.shape(), std::move(v), {a, b}, [](Node& s) {
        Node& A = *s.parents[0];
        Node& B = *s.parents[1];
        for (std::size_t i = 0; i < s.grad.size(); ++i) {
            const double inv = 1.0 / B.value[i];
            if (A.requires_grad) A.grad[i] += s.grad[i] * inv;
            if (B.requires_grad) B.grad[i] -= s.grad[i] * A.value[i] * inv * inv;
        }
    });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    const std::size_t m = x.rows(), n = x.cols();
    require(b.size() == n, "add_rowvec: " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = x[i * n + j] + b[j];
    return make_result(x.shape(), std::move(v), {x, b}, [m, n](Node& s) {
        Node& X = *s.parents[0];
        Node& B = *s.parents[1];
        if (X.requires_grad)
            for (std::size_t i = 0; i < m * n; ++i) X.grad[i] += s.grad[i];
        if (B.requires_grad)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) B.grad[j] += s.grad[i * n + j];
    });
}

Tensor mul_colvec(const Tensor& x, const Tensor& sc) {
    const std::size_t m = x.rows(), n = x.cols();
    require(sc.size() == m, "mul_colvec: " + shape_str(x.shape()) + " * " + shape_str(sc.shape()));
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = x[i * n + j] * sc[i];
    return make_result(x.shape(), std::move(v), {x, sc}, [m, n](Node& s) {
        Node& X = *s.parents[0];
        Node& S = *s.parents[1];
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (X.requires_grad) X.grad[i * n + j] += s.grad[i * n + j] * S.value[i];
                acc += s.grad[i * n + j] * X.value[i * n + j];
            }
            if (S.requires_grad) S.grad[i] += acc;
        }
    });
}

Tensor mul_scalar(const Tensor& x, const Tensor& sc) {
    require(sc.size() == 1, "mul_scalar: scale must hold one value");
    const double c = sc[0];
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * c;
    return make_result(x.shape(), std::move(v), {x, sc}, [](Node& s) {
        Node& X = *s.parents[0];
        Node& S = *s.parents[1];
        double acc = 0.0;
        for (std::size_t i = 0; i < s.grad.size(); ++i) {
            if (X.requires_grad) X.grad[i] += s.grad[i] * S.value[0];
            acc += s.grad[i] * X.value[i];
        }
        if (S.requires_grad) S.grad[0] += acc;
    });
}

Tensor scale(const Tensor& x, double c) {
    return unary(x, [c](double v) { return v * c; }, [c](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < s.grad.size(); ++i) X.grad[i] += c * s.grad[i];
    });
}

Tensor add_const(const Tensor& x, double c) {
    return unary(x, [c](double v) { return v + c; }, [](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < s.grad.size(); ++i) X.grad[i] += s.grad[i];
    });
}

Tensor relu(const Tensor& x) {
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < s.grad.size(); ++i)
            if (X.value[i] > 0.0) X.grad[i] += s.grad[i];
    });
}

Tensor tanh(const Tensor& x) {
    return unary(x, [](double v) { return std::tanh(v); }, [](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < s.grad.size(); ++i) X.grad[i] += s.grad[i] * (1.0 - s.value[i] * s.value[i]);
    });
}

double sigmoid(double x) {
    if (!std::isfinite(x)) throw NonFiniteInput("sigmoid: non-finite input");
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
    return unary(x, [](double v) { return sigmoid(v); }, [](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < s.grad.size(); ++i) X.grad[i] += s.grad[i] * s.value[i] * (1.0 - s.value[i]);
    });
}

Tensor square(const Tensor& x) {
    return unary(x, [](double v) { return v * v; }, [](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < s.grad.size(); ++i) X.grad[i] += 2.0 * X.value[i] * s.grad[i];
    });
}

Tensor abs(const Tensor& x) {
    return unary(x, [](double v) { return std::abs(v); }, [](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < s.grad.size(); ++i) {
            const double v = X.value[i];
            X.grad[i] += s.grad[i] * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
        }
    });
}

Tensor softmax_rows(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < m; ++i) {
        auto row = softmax(x.data().subspan(i * n, n));
        std::copy(row.begin(), row.end(), v.begin() + i * n);
    }
    return make_result(x.shape(), std::move(v), {x}, [m, n](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += s.grad[i * n + j] * s.value[i * n + j];
            for (std::size_t j = 0; j < n; ++j) X.grad[i * n + j] += s.value[i * n + j] * (s.grad[i * n + j] - dot);
        }
    });
}

Tensor log_softmax_rows(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < m; ++i) {
        double mx = x[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[i * n + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(x[i * n + j] - mx);
        const double lz = mx + std::log(z);
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = x[i * n + j] - lz;
    }
    return make_result(x.shape(), std::move(v), {x}, [m, n](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < m; ++i) {
            double gs = 0.0;
            for (std::size_t j = 0; j < n; ++j) gs += s.grad[i * n + j];
            for (std::size_t j = 0; j < n; ++j) X.grad[i * n + j] += s.grad[i * n + j] - std::exp(s.value[i * n + j]) * gs;
        }
    });
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    return make_result({1}, {acc}, {x}, [](Node& s) {
        Node& X = *s.parents[0];
        for (auto& g : X.grad) g += s.grad[0];
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor row_sum(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    std::vector<double> v(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i] += x[i * n + j];
    return make_result({m, 1}, std::move(v), {x}, [m, n](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) X.grad[i * n + j] += s.grad[i];
    });
}

Tensor group_mean(const Tensor& x, std::size_t groups) {
    const std::size_t rows = x.rows(), n = x.cols();
    require(groups > 0 && rows % groups == 0, "group_mean: rows not divisible by groups");
    const std::size_t len = rows / groups;
    const double inv = 1.0 / static_cast<double>(len);
    std::vector<double> v(groups * n, 0.0);
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t t = 0; t < len; ++t)
            for (std::size_t j = 0; j < n; ++j) v[g * n + j] += x[(g * len + t) * n + j];
    for (auto& e : v) e *= inv;
    return make_result({groups, n}, std::move(v), {x}, [groups, len, n, inv](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t j = 0; j < n; ++j) X.grad[(g * len + t) * n + j] += s.grad[g * n + j] * inv;
    });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
    require(!xs.empty(), "concat_cols: empty input");
    const std::size_t m = xs[0].rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& x : xs) {
        require(x.rows() == m, "concat_cols: row mismatch");
        widths.push_back(x.cols());
        total += x.cols();
    }
    std::vector<double> v(m * total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const std::size_t w = widths[k];
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(xs[k].data().data() + i * w, w, v.data() + i * total + off);
        off += w;
    }
    return make_result({m, total}, std::move(v), xs, [m, total, widths](Node& s) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            Node& P = *s.parents[k];
            const std::size_t w = widths[k];
            if (P.requires_grad)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < w; ++j) P.grad[i * w + j] += s.grad[i * total + off + j];
            off += w;
        }
    });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
    const std::size_t m = x.rows(), n = x.cols();
    require(start + len <= n, "slice_cols: out of range");
    std::vector<double> v(m * len);
    for (std::size_t i = 0; i < m; ++i) std::copy_n(x.data().data() + i * n + start, len, v.data() + i * len);
    return make_result({m, len}, std::move(v), {x}, [m, n, start, len](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < len; ++j) X.grad[i * n + start + j] += s.grad[i * len + j];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(numel(shape) == x.size(), "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    std::vector<double> v(x.data().begin(), x.data().end());
    return make_result(std::move(shape), std::move(v), {x}, [](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < s.grad.size(); ++i) X.grad[i] += s.grad[i];
    });
}

Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<long>> idx, Shape out_shape) {
    require(idx->size() == numel(out_shape), "gather: index map does not match output shape");
    std::vector<double> v(idx->size());
    auto xd = x.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const long k = (*idx)[i];
        v[i] = k >= 0 ? xd[static_cast<std::size_t>(k)] : 0.0;
    }
    return make_result(std::move(out_shape), std::move(v), {x}, [idx](Node& s) {
        Node& X = *s.parents[0];
        for (std::size_t i = 0; i < idx->size(); ++i) {
            const long k = (*idx)[i];
            if (k >= 0) X.grad[static_cast<std::size_t>(k)] += s.grad[i];
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) { return add_rowvec(matmul(x, W), b); }

namespace {

using IndexMap = std::shared_ptr<const std::vector<long>>;

IndexMap conv1d_index(std::size_t batch, std::size_t T, std::size_t cin, std::size_t k, std::size_t dil) {
    thread_local std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, std::size_t>, IndexMap> cache;
    auto key = std::make_tuple(batch, T, cin, k, dil);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    auto idx = std::make_shared<std::vector<long>>(batch * T * k * cin);
    std::size_t o = 0;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < k; ++j) {
                const long src = static_cast<long>(t) - static_cast<long>((k - 1 - j) * dil);
                for (std::size_t c = 0; c < cin; ++c)
                    (*idx)[o++] = src >= 0 ? static_cast<long>((b * T + static_cast<std::size_t>(src)) * cin + c) : -1;
            }
    cache.emplace(key, idx);
    return idx;
}

IndexMap conv2d_index(std::size_t B, std::size_t H, std::size_t W, std::size_t C, std::size_t kh, std::size_t kw,
                      std::size_t stride, std::size_t pad, std::size_t Ho, std::size_t Wo) {
    thread_local std::map<std::vector<std::size_t>, IndexMap> cache;
    std::vector<std::size_t> key{B, H, W, C, kh, kw, stride, pad};
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    auto idx = std::make_shared<std::vector<long>>(B * Ho * Wo * kh * kw * C);
    std::size_t o = 0;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t y = 0; y < Ho; ++y)
            for (std::size_t x = 0; x < Wo; ++x)
                for (std::size_t dy = 0; dy < kh; ++dy)
                    for (std::size_t dx = 0; dx < kw; ++dx) {
                        const long iy = static_cast<long>(y * stride + dy) - static_cast<long>(pad);
                        const long ix = static_cast<long>(x * stride + dx) - static_cast<long>(pad);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(H) && ix < static_cast<long>(W);
                        for (std::size_t c = 0; c < C; ++c)
                            (*idx)[o++] = inside ? static_cast<long>(((b * H + static_cast<std::size_t>(iy)) * W +
                                                                      static_cast<std::size_t>(ix)) * C + c)
                                                 : -1;
                    }
    cache.emplace(std::move(key), idx);
    return idx;
}

}  // namespace

Tensor dilated_causal_conv1d(const Tensor& x, const Tensor& kernel, std::size_t batch, std::size_t dilation) {
    require(kernel.ndim() == 3, "conv1d: kernel must be [k x cin x cout]");
    require(dilation >= 1, "conv1d: dilation must be >= 1");
    const std::size_t k = kernel.dim(0), cin = kernel.dim(1);
    require(k >= 1 && x.cols() == cin, "conv1d: input channels " + std::to_string(x.cols()) + " vs kernel " +
                                           shape_str(kernel.shape()));
    require(batch > 0 && x.rows() % batch == 0, "conv1d: rows not divisible by batch");
    const std::size_t T = x.rows() / batch;
    auto cols = gather(x, conv1d_index(batch, T, cin, k, dilation), {batch * T, k * cin});
    return matmul(cols, kernel);
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t pad) {
    require(x.ndim() == 4 && kernel.ndim() == 4, "conv2d: expects NHWC input and [kh x kw x cin x cout] kernel");
    const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
    require(kernel.dim(2) == C, "conv2d: channel mismatch");
    require(H + 2 * pad >= kh && W + 2 * pad >= kw && stride >= 1, "conv2d: kernel larger than padded input");
    const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
    const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;
    auto cols = gather(x, conv2d_index(B, H, W, C, kh, kw, stride, pad, Ho, Wo), {B * Ho * Wo, kh * kw * C});
    auto y = add_rowvec(matmul(cols, kernel), bias);
    return reshape(y, {B, Ho, Wo, cout});
}

Tensor multihead_cross_attention(const Tensor& Q, const Tensor& K, const Tensor& V, std::size_t heads) {
    const std::size_t B = Q.rows(), d = Q.cols();
    require(heads > 0 && d % heads == 0, "attention: d must be divisible by heads");
    require(K.cols() == d && V.cols() == d && K.rows() == V.rows() && K.rows() % B == 0,
            "attention: Q " + shape_str(Q.shape()) + " K " + shape_str(K.shape()) + " V " + shape_str(V.shape()));
    const std::size_t T = K.rows() / B, dk = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
    auto weights = std::make_shared<std::vector<double>>(B * heads * T);
    std::vector<double> out(B * d, 0.0);
    auto q = Q.data(), kd = K.data(), vd = V.data();
    std::vector<double> scores(T);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t h = 0; h < heads; ++h) {
            const double* qr = q.data() + b * d + h * dk;
            for (std::size_t t = 0; t < T; ++t) {
                const double* kr = kd.data() + (b * T + t) * d + h * dk;
                double acc = 0.0;
                for (std::size_t i = 0; i < dk; ++i) acc += qr[i] * kr[i];
                scores[t] = acc * inv_sqrt;
            }
            auto w = softmax(scores);
            double* orow = out.data() + b * d + h * dk;
            for (std::size_t t = 0; t < T; ++t) {
                (*weights)[(b * heads + h) * T + t] = w[t];
                const double* vr = vd.data() + (b * T + t) * d + h * dk;
                for (std::size_t i = 0; i < dk; ++i) orow[i] += w[t] * vr[i];
            }
        }
    return make_result({B, d}, std::move(out), {Q, K, V}, [B, d, T, heads, dk, inv_sqrt, weights](Node& s) {
        Node& Qn = *s.parents[0];
        Node& Kn = *s.parents[1];
        Node& Vn = *s.parents[2];
        std::vector<double> dw(T);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < heads; ++h) {
                const double* w = weights->data() + (b * heads + h) * T;
                const double* go = s.grad.data() + b * d + h * dk;
                double wdw = 0.0;
                for (std::size_t t = 0; t < T; ++t) {
                    const double* vr = Vn.value.data() + (b * T + t) * d + h * dk;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < dk; ++i) acc += go[i] * vr[i];
                    dw[t] = acc;
                    wdw += w[t] * acc;
                    if (Vn.requires_grad) {
                        double* gv = Vn.grad.data() + (b * T + t) * d + h * dk;
                        for (std::size_t i = 0; i < dk; ++i) gv[i] += w[t] * go[i];
                    }
                }
                const double* qr = Qn.value.data() + b * d + h * dk;
                double* gq = Qn.requires_grad ? Qn.grad.data() + b * d + h * dk : nullptr;
                for (std::size_t t = 0; t < T; ++t) {
                    const double ds = w[t] * (dw[t] - wdw) * inv_sqrt;
                    const double* kr = Kn.value.data() + (b * T + t) * d + h * dk;
                    if (gq)
                        for (std::size_t i = 0; i < dk; ++i) gq[i] += ds * kr[i];
                    if (Kn.requires_grad) {
                        double* gk = Kn.grad.data() + (b * T + t) * d + h * dk;
                        for (std::size_t i = 0; i < dk; ++i) gk[i] += ds * qr[i];
                    }
                }
            }
    });
}

Tensor cross_attention_head(const Tensor& q, const Tensor& K, const Tensor& V) {
    require(q.rows() == 1, "cross_attention_head: query must be a single row");
    return multihead_cross_attention(q, K, V, 1);
}

Tensor scale_heads(const Tensor& X, const Tensor& G) {
    const std::size_t B = X.rows(), d = X.cols(), H = G.cols();
    require(G.rows() == B && H > 0 && d % H == 0, "scale_heads: " + shape_str(X.shape()) + " by " + shape_str(G.shape()));
    const std::size_t dk = d / H;
    std::vector<double> v(X.size());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < d; ++j) v[b * d + j] = X[b * d + j] * G[b * H + j / dk];
    return make_result(X.shape(), std::move(v), {X, G}, [B, d, H, dk](Node& s) {
        Node& Xn = *s.parents[0];
        Node& Gn = *s.parents[1];
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < d; ++j) {
                const double g = s.grad[b * d + j];
                if (Xn.requires_grad) Xn.grad[b * d + j] += g * Gn.value[b * H + j / dk];
                if (Gn.requires_grad) Gn.grad[b * H + j / dk] += g * Xn.value[b * d + j];
            }
    });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets) {
    const std::size_t n = logits.size();
    require(targets.size() == n, "bce_with_logits: target count mismatch");
    auto y = std::make_shared<std::vector<double>>(targets.begin(), targets.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = logits[i];
        // max(x,0) - x*y + log(1 + exp(-|x|))
        acc += std::max(x, 0.0) - x * (*y)[i] + std::log1p(std::exp(-std::abs(x)));
    }
    return make_result({1}, {acc / static_cast<double>(n)}, {logits}, [y, n](Node& s) {
        Node& L = *s.parents[0];
        const double g = s.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) L.grad[i] += g * (sigmoid(L.value[i]) - (*y)[i]);
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    const std::size_t n = logits.rows(), K = logits.cols();
    require(labels.size() == n, "cross_entropy: label count mismatch");
    std::vector<long> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < K, "cross_entropy: label out of range");
        idx[i] = static_cast<long>(i * K + static_cast<std::size_t>(labels[i]));
    }
    auto picked = gather(log_softmax_rows(logits), std::make_shared<const std::vector<long>>(std::move(idx)), {n});
    return scale(mean(picked), -1.0);
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

Tensor l1(const Tensor& a, const Tensor& b) { return mean(abs(sub(a, b))); }

std::vector<double> softmax(std::span<const double> x) {
    std::vector<double> out(x.size());
    if (x.empty()) return out;
    double mx = x[0];
    for (double v : x) {
        if (!std::isfinite(v)) throw NonFiniteInput("softmax: non-finite input");
        mx = std::max(mx, v);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    return out;
}

}  // namespace phaforce::nn
