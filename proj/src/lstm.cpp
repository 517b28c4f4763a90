#include "confnet2seq/lstm.hpp"

#include "confnet2seq/errors.hpp"
#include "confnet2seq/ops.hpp"

namespace confnet2seq::num {

LstmCellParams LstmCellParams::init(std::size_t input_size, std::size_t hidden_size, double range,
                                    std::mt19937_64& rng) {
  LstmCellParams p;
  p.W = Tensor::uniform({4 * hidden_size, input_size}, range, rng);
  p.U = Tensor::uniform({4 * hidden_size, hidden_size}, range, rng);
  p.b = Tensor::uniform({4 * hidden_size}, range, rng);
  return p;
}

LstmState zero_state(std::size_t hidden_size) {
  return {Tensor::zeros({hidden_size}), Tensor::zeros({hidden_size})};
}

LstmState lstm_cell(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev, const LstmCellParams& params) {
  const std::size_t H = params.hidden_size();
  if (x.rank() != 1 || x.dim(0) != params.input_size())
    throw ShapeError("lstm_cell: input " + shape_string(x.shape()) + " but cell expects [" +
                     std::to_string(params.input_size()) + "]");
  if (h_prev.shape() != Shape{H} || c_prev.shape() != Shape{H})
    throw ShapeError("lstm_cell: state shapes " + shape_string(h_prev.shape()) + ", " +
                     shape_string(c_prev.shape()) + " but hidden size is " + std::to_string(H));
  const Tensor z = add(add(matmul(params.W, x), matmul(params.U, h_prev)), params.b);
  const Tensor i = sigmoid(slice(z, 0, H));
  const Tensor f = sigmoid(slice(z, H, H));
  const Tensor g = tanh(slice(z, 2 * H, H));
  const Tensor o = sigmoid(slice(z, 3 * H, H));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

}  // namespace confnet2seq::num
