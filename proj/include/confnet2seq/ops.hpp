#pragma once

// Differentiable primitives. Every function returns a fresh tensor; when any
// input requires gradients the result records a backward rule.
//
// Shapes follow plain dense-algebra rules with no implicit broadcasting,
// except add_row which adds one vector to every row of a matrix. Scalars are
// tensors of shape [1].

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "confnet2seq/tensor.hpp"

namespace confnet2seq::num {

// [m,k]x[k,n] -> [m,n]; [m,k]x[k] -> [m]; [k]x[k,n] -> [n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_n(std::span<const Tensor> terms);
// matrix [n,d] + vector [d], added to every row.
Tensor add_row(const Tensor& matrix, const Tensor& row);

// alpha * a + beta, elementwise.
Tensor affine(const Tensor& a, double alpha, double beta = 0.0);
// s * a for a scalar tensor s.
Tensor scale_by(const Tensor& s, const Tensor& a);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// max(a, floor); no gradient flows through clamped entries.
Tensor clamp_min(const Tensor& a, double floor);

// Max-subtracted softmax along `axis` (0 for vectors; 0 or 1 for matrices).
Tensor softmax(const Tensor& x, std::size_t axis = 0);

Tensor concat(std::span<const Tensor> parts);
Tensor slice(const Tensor& v, std::size_t begin, std::size_t length);
Tensor stack_rows(std::span<const Tensor> rows);
Tensor row(const Tensor& matrix, std::size_t index);
Tensor embedding_lookup(const Tensor& table, std::size_t index);

Tensor sum(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor pick(const Tensor& v, std::size_t index);
// Mean of scalar tensors.
Tensor mean(std::span<const Tensor> scalars);

struct ScatterEntry {
  std::size_t source = 0;  // index into the source vector
  double weight = 0.0;
  std::size_t target = 0;  // index into the output vector
};

// out[e.target] += e.weight * src[e.source] for every entry, in entry order.
Tensor weighted_scatter(const Tensor& src, std::span<const ScatterEntry> entries, std::size_t out_size);

// Inverted dropout: surviving entries are scaled by 1/(1-rate). Rate 0 returns
// the input unchanged.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng);

}  // namespace confnet2seq::num
