#pragma once

#include <span>
#include <vector>

#include "phaforce/nn/tensor.hpp"

// Differentiable ops. 2-D ops treat a tensor as [rows() x cols()].
namespace phaforce::nn {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// x[m x n] + b[n]
Tensor add_rowvec(const Tensor& x, const Tensor& b);
/// x[m x n] * s[m] (row-wise scaling)
Tensor mul_colvec(const Tensor& x, const Tensor& s);
/// x * s where s holds a single value
Tensor mul_scalar(const Tensor& x, const Tensor& s);
Tensor scale(const Tensor& x, double c);
Tensor add_const(const Tensor& x, double c);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// [m x n] -> [m x 1]
Tensor row_sum(const Tensor& x);
/// [groups*len x n] -> [groups x n], mean over each block of `len` rows
Tensor group_mean(const Tensor& x, std::size_t groups);

Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len);
Tensor reshape(const Tensor& x, Shape shape);

/// out[i] = idx[i] >= 0 ? x[idx[i]] : 0
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<long>> idx, Shape out_shape);

/// y = x W + b
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

/// Causal dilated 1-D convolution. x: [B*T x cin] (or [T x cin] with batch = 1),
/// kernel: [k x cin x cout]; left-pads (k-1)*dilation zeros per sequence.
Tensor dilated_causal_conv1d(const Tensor& x, const Tensor& kernel, std::size_t batch, std::size_t dilation);

/// 2-D convolution on NHWC input [B x H x W x cin], kernel [kh x kw x cin x cout], bias [cout].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t pad);

/// Multi-head cross attention, one query per batch row.
/// Q: [B x d], K, V: [B*T x d]; head h uses columns [h*dk, (h+1)*dk), dk = d/heads.
/// Returns the per-head outputs concatenated, [B x d].
Tensor multihead_cross_attention(const Tensor& Q, const Tensor& K, const Tensor& V, std::size_t heads);

/// softmax(q K^T / sqrt(dk)) V for a single head: q [1 x dk], K, V [Hw x dk].
Tensor cross_attention_head(const Tensor& q, const Tensor& K, const Tensor& V);

/// X[B x d] with head h's block of d/heads columns scaled by G[b, h].
Tensor scale_heads(const Tensor& X, const Tensor& G);

/// Mean binary cross-entropy with logits; logits [n x 1].
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);
/// Mean categorical cross-entropy; logits [n x K].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor mse(const Tensor& a, const Tensor& b);
/// Mean absolute error.
Tensor l1(const Tensor& a, const Tensor& b);

// Plain numeric helpers (no tape).
std::vector<double> softmax(std::span<const double> x);
double sigmoid(double x);

}  // namespace phaforce::nn
