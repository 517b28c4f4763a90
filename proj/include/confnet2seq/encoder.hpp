#pragma once

// Confusion-network encoder: each arc becomes q = tanh(W1 (π · e_w)), each
// bin is the attention-weighted sum of its arc encodings with weights
// softmax_j(W2 · q_j). The result is one E-dimensional vector per bin.

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "confnet2seq/confnet.hpp"
#include "confnet2seq/data.hpp"
#include "confnet2seq/tensor.hpp"

namespace confnet2seq::encoder {

struct ConfNetEncoderParams {
  num::Tensor embedding_table;  // [V, E]
  num::Tensor W1;               // [E, E]
  num::Tensor W2;               // [E]

  std::size_t embedding_dim() const { return W1.dim(0); }

  static ConfNetEncoderParams init(std::size_t vocab_size, std::size_t embedding_dim, double range,
                                   std::mt19937_64& rng);
};

struct EncodedBin {
  num::Tensor beta;                       // [E]
  num::Tensor alpha;                      // [n_arcs]
  std::vector<num::Tensor> word_encodings;  // q_j, each [E]

  std::vector<double> alphas() const;
};

num::Tensor encode_word(std::size_t token_index, double posterior, const ConfNetEncoderParams& params);
// Unknown tokens use the UNK row.
num::Tensor encode_word(const std::string& token, double posterior, const data::Vocabulary& vocab,
                        const ConfNetEncoderParams& params);

EncodedBin encode_bin(const confnet::Bin& bin, const data::Vocabulary& vocab, const ConfNetEncoderParams& params);

std::vector<EncodedBin> encode_network(const confnet::ConfusionNetwork& net, const data::Vocabulary& vocab,
                                       const ConfNetEncoderParams& params);

}  // namespace confnet2seq::encoder
