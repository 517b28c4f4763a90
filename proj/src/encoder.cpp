#include "confnet2seq/encoder.hpp"

#include "confnet2seq/errors.hpp"
#include "confnet2seq/ops.hpp"

namespace confnet2seq::encoder {

using num::Tensor;

ConfNetEncoderParams ConfNetEncoderParams::init(std::size_t vocab_size, std::size_t embedding_dim, double range,
                                                std::mt19937_64& rng) {
  ConfNetEncoderParams p;
  p.embedding_table = Tensor::uniform({vocab_size, embedding_dim}, range, rng);
  p.W1 = Tensor::uniform({embedding_dim, embedding_dim}, range, rng);
  p.W2 = Tensor::uniform({embedding_dim}, range, rng);
  return p;
}

std::vector<double> EncodedBin::alphas() const { return {alpha.values().begin(), alpha.values().end()}; }

Tensor encode_word(std::size_t token_index, double posterior, const ConfNetEncoderParams& params) {
  if (!(posterior >= 0.0 && posterior <= 1.0 + 1e-9))
    throw ContractError("encode_word: posterior " + std::to_string(posterior) + " outside [0, 1]");
  const Tensor e = num::embedding_lookup(params.embedding_table, token_index);
  return num::tanh(num::matmul(params.W1, num::affine(e, posterior)));
}

Tensor encode_word(const std::string& token, double posterior, const data::Vocabulary& vocab,
                   const ConfNetEncoderParams& params) {
  return encode_word(vocab.index(token), posterior, params);
}

EncodedBin encode_bin(const confnet::Bin& bin, const data::Vocabulary& vocab, const ConfNetEncoderParams& params) {
  if (bin.arcs.empty()) throw ContractError("encode_bin: empty bin");
  EncodedBin out;
  out.word_encodings.reserve(bin.arcs.size());
  for (const auto& arc : bin.arcs) out.word_encodings.push_back(encode_word(arc.token, arc.posterior, vocab, params));
  const Tensor q = num::stack_rows(out.word_encodings);  // [n, E]
  out.alpha = num::softmax(num::matmul(q, params.W2));
  out.beta = num::matmul(out.alpha, q);
  return out;
}

std::vector<EncodedBin> encode_network(const confnet::ConfusionNetwork& net, const data::Vocabulary& vocab,
                                       const ConfNetEncoderParams& params) {
  if (net.empty()) throw ContractError("encode_network: network '" + net.id + "' has no bins");
  std::vector<EncodedBin> out;
  out.reserve(net.size());
  for (const auto& bin : net.bins) out.push_back(encode_bin(bin, vocab, params));
  return out;
}

}  // namespace confnet2seq::encoder
