#pragma once

#include <cstddef>
#include <random>

#include "confnet2seq/tensor.hpp"

namespace confnet2seq::num {

// Gate pre-activations are stacked [input; forget; candidate; output].
struct LstmCellParams {
  Tensor W;  // [4H, input]
  Tensor U;  // [4H, H]
  Tensor b;  // [4H]

  std::size_t input_size() const { return W.dim(1); }
  std::size_t hidden_size() const { return U.dim(1); }

  static LstmCellParams init(std::size_t input_size, std::size_t hidden_size, double range, std::mt19937_64& rng);
};

struct LstmState {
  Tensor h;
  Tensor c;
};

LstmState zero_state(std::size_t hidden_size);

// i = σ(W_i x + U_i h + b_i), f = σ(..), g = tanh(..), o = σ(..)
// c' = f ⊙ c + i ⊙ g,  h' = o ⊙ tanh(c')
LstmState lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev, const LstmCellParams& params);

}  // namespace confnet2seq::num
