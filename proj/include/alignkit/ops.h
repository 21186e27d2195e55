#pragma once

#include <vector>

#include "alignkit/tape.h"
#include "alignkit/tensor.h"

namespace alignkit {

// Differentiable tensor operations. Every op validates shapes, computes the
// forward value, and records itself on `tape` when the tape is non-null and
// at least one input requires grad. A null tape runs pure inference.
//
// Only scalar<->tensor broadcast is supported by add/sub/mul.

/// Standard matrix product [m x k] . [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

/// Matrix product with the second operand transposed: [m x k] . [n x k]^T -> [m x n].
Tensor matmul_nt(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

/// Softmax over the last axis with max-subtraction; each slice sums to 1.
Tensor softmax(const Tensor& x, Tape* tape = nullptr);

/// Row-wise causal softmax for attention scores [T x T]: row t is a softmax
/// over columns 0..t and exactly zero beyond, so position t never sees the
/// future.
Tensor causal_softmax(const Tensor& scores, Tape* tape = nullptr);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& x, double factor, Tape* tape = nullptr);
Tensor add_const(const Tensor& x, double constant, Tape* tape = nullptr);
Tensor negate(const Tensor& x, Tape* tape = nullptr);
Tensor exp_op(const Tensor& x, Tape* tape = nullptr);
Tensor log_op(const Tensor& x, Tape* tape = nullptr);

/// GELU with the tanh approximation 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x, Tape* tape = nullptr);

/// Softplus ln(1 + e^x) in the overflow-safe form max(x, 0) + log1p(e^-|x|).
Tensor softplus(const Tensor& x, Tape* tape = nullptr);

/// Normalizes the last axis to zero mean / unit variance (eps = 1e-5 added to
/// the variance), then applies learned gain and bias of shape [last_dim].
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, Tape* tape = nullptr);

/// Adds a [n]-vector to every row of a [rows x n] matrix.
Tensor add_bias(const Tensor& x, const Tensor& bias, Tape* tape = nullptr);

/// log softmax(logits)[..., targets[...]] for logits [... x V] and one target
/// id per leading position. Out-of-range ids raise IndexError with the position.
Tensor gather_logprob(const Tensor& logits, const std::vector<int>& targets, Tape* tape = nullptr);

/// Sum of all elements -> scalar.
Tensor sum(const Tensor& x, Tape* tape = nullptr);

/// Embedding lookup: rows of table [V x d] selected by ids -> [len(ids) x d].
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids, Tape* tape = nullptr);

/// Contiguous row slice [start, start+count) of a 2-D tensor.
Tensor slice_rows(const Tensor& x, int64_t start, int64_t count, Tape* tape = nullptr);

/// Contiguous column slice of a 2-D tensor.
Tensor slice_cols(const Tensor& x, int64_t start, int64_t count, Tape* tape = nullptr);

/// Concatenates 2-D tensors with equal row counts along columns.
Tensor concat_cols(const std::vector<Tensor>& parts, Tape* tape = nullptr);

/// Stacks equal-shape tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts, Tape* tape = nullptr);

namespace kernels {

// Raw unrecorded GEMM helpers shared by forward ops and backward rules.
// accumulate=false overwrites c, accumulate=true adds into it.
template <class T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate);
template <class T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate);
template <class T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate);

}  // namespace kernels

}  // namespace alignkit
