#include <cmath>
#include <filesystem>
#include <random>

#include "confnet2seq/checkpoint.hpp"
#include "confnet2seq/errors.hpp"
#include "confnet2seq/lstm.hpp"
#include "confnet2seq/ops.hpp"
#include "confnet2seq/optim.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace confnet2seq;
using num::Tensor;

namespace {

Tensor rand_param(num::Shape shape, std::mt19937_64& rng, double range = 1.0) {
  return Tensor::uniform(std::move(shape), range, rng, true);
}

// Reduces any tensor to a scalar with fixed random weights so every output
// entry contributes a distinct gradient.
Tensor weighted_sum(const Tensor& t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensor w = Tensor::uniform(t.shape(), 1.0, rng, false);
  return num::sum(num::mul(t, w));
}

void check_fd(const std::function<Tensor()>& f, std::vector<num::NamedTensor> params) {
  const auto report = support::check_gradients(f, std::move(params));
  INFO(report.worst);
  CHECK(report.max_rel < 1e-4);
}

}  // namespace

TEST_CASE("primitive identities") {
  const Tensor z = num::tanh(Tensor::zeros({2, 3}));
  for (double v : z.values()) CHECK(v == 0.0);

  std::mt19937_64 rng(1);
  const Tensor x = Tensor::uniform({3, 4}, 1.0, rng, false);
  const Tensor eye = Tensor::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor y = num::matmul(eye, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.at(i) == x.at(i));

  CHECK_THROWS_AS(num::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  CHECK_THROWS_AS(num::add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
  CHECK_THROWS_AS(Tensor::constant({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(num::log(Tensor::vector({0.0})), NumericError);
}

TEST_CASE("softmax") {
  const Tensor s = num::softmax(Tensor::vector({0.0, 0.0}));
  CHECK(s.at(0) == 0.5);
  CHECK(s.at(1) == 0.5);
  CHECK(num::softmax(Tensor::vector({-3.7})).at(0) == 1.0);
  CHECK_THROWS_AS(num::softmax(Tensor::vector({1.0, NAN})), NumericError);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 17);
    for (double& x : v) x = u(rng);
    const Tensor out = num::softmax(Tensor::vector(v));
    long double z = 0.0L;
    for (double x : v) z += std::exp(static_cast<long double>(x));
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(std::abs(out.at(i) - static_cast<double>(std::exp(static_cast<long double>(v[i])) / z)) < 1e-12);
      CHECK(out.at(i) >= 0.0);
      total += out.at(i);
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }

  // Row- and column-wise on a matrix.
  const Tensor m = Tensor::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor rows = num::softmax(m, 1), cols = num::softmax(m, 0);
  CHECK(std::abs(rows.at(0) + rows.at(1) + rows.at(2) - 1.0) < 1e-12);
  CHECK(std::abs(cols.at(0) + cols.at(3) - 1.0) < 1e-12);
}

TEST_CASE("primitive gradients match central differences") {
  std::mt19937_64 rng(3);
  const Tensor A = rand_param({3, 4}, rng), B = rand_param({4, 2}, rng), v = rand_param({4}, rng);
  const Tensor u = rand_param({3}, rng), w = rand_param({3}, rng), M = rand_param({2, 3}, rng);
  const Tensor pos = Tensor::parameter({3}, {0.5, 1.3, 2.2});

  check_fd([&] { return weighted_sum(num::matmul(A, B), 1); }, {{"A", A}, {"B", B}});
  check_fd([&] { return weighted_sum(num::matmul(A, v), 2); }, {{"A", A}, {"v", v}});
  check_fd([&] { return weighted_sum(num::matmul(u, A), 3); }, {{"u", u}, {"A", A}});
  check_fd([&] { return weighted_sum(num::transpose(A), 4); }, {{"A", A}});
  check_fd([&] { return weighted_sum(num::add(u, w), 5); }, {{"u", u}, {"w", w}});
  check_fd([&] { return weighted_sum(num::sub(u, w), 6); }, {{"u", u}, {"w", w}});
  check_fd([&] { return weighted_sum(num::mul(u, w), 7); }, {{"u", u}, {"w", w}});
  check_fd([&] { return weighted_sum(num::add_row(M, u), 8); }, {{"M", M}, {"u", u}});
  check_fd([&] { return weighted_sum(num::affine(u, -2.5, 0.3), 9); }, {{"u", u}});
  check_fd([&] { return weighted_sum(num::scale_by(num::pick(w, 1), u), 10); }, {{"u", u}, {"w", w}});
  check_fd([&] { return weighted_sum(num::tanh(u), 11); }, {{"u", u}});
  check_fd([&] { return weighted_sum(num::sigmoid(u), 12); }, {{"u", u}});
  check_fd([&] { return weighted_sum(num::exp(u), 13); }, {{"u", u}});
  check_fd([&] { return weighted_sum(num::log(pos), 14); }, {{"pos", pos}});
  check_fd([&] { return weighted_sum(num::softmax(u), 15); }, {{"u", u}});
  check_fd([&] { return weighted_sum(num::softmax(M, 1), 16); }, {{"M", M}});
  check_fd([&] { return weighted_sum(num::softmax(M, 0), 17); }, {{"M", M}});
  check_fd(
      [&] {
        const Tensor parts[] = {u, v, w};
        return weighted_sum(num::concat(parts), 18);
      },
      {{"u", u}, {"v", v}, {"w", w}});
  check_fd([&] { return weighted_sum(num::slice(v, 1, 2), 19); }, {{"v", v}});
  check_fd(
      [&] {
        const Tensor rows[] = {u, w};
        return weighted_sum(num::stack_rows(rows), 20);
      },
      {{"u", u}, {"w", w}});
  check_fd([&] { return weighted_sum(num::embedding_lookup(A, 2), 21); }, {{"A", A}});
  check_fd([&] { return num::dot(u, w); }, {{"u", u}, {"w", w}});
  check_fd(
      [&] {
        const Tensor terms[] = {num::pick(u, 0), num::pick(w, 2), num::pick(u, 1)};
        return num::mean(terms);
      },
      {{"u", u}, {"w", w}});
  check_fd(
      [&] {
        const num::ScatterEntry entries[] = {{0, 0.5, 1}, {1, 2.0, 1}, {2, 1.0, 0}, {0, 0.25, 3}};
        return weighted_sum(num::weighted_scatter(u, entries, 4), 22);
      },
      {{"u", u}});
  check_fd([&] { return weighted_sum(num::clamp_min(u, 0.0), 23); }, {{"u", u}});
}

TEST_CASE("lstm cell") {
  SUBCASE("zero parameters and state give zero output") {
    num::LstmCellParams p{Tensor::zeros({16, 3}, true), Tensor::zeros({16, 4}, true), Tensor::zeros({16}, true)};
    const auto s = num::lstm_cell(Tensor::vector({1, 2, 3}), Tensor::zeros({4}), Tensor::zeros({4}), p);
    for (double v : s.h.values()) CHECK(v == 0.0);
    for (double v : s.c.values()) CHECK(v == 0.0);
  }
  SUBCASE("saturated forget gate with closed input gate keeps the cell") {
    const std::size_t H = 2;
    std::vector<double> b(4 * H, 0.0);
    for (std::size_t k = 0; k < H; ++k) {
      b[k] = -1000.0;     // input gate -> 0
      b[H + k] = 1000.0;  // forget gate -> 1
    }
    num::LstmCellParams p{Tensor::zeros({4 * H, 1}, true), Tensor::zeros({4 * H, H}, true),
                          Tensor::parameter({4 * H}, b)};
    const Tensor c_prev = Tensor::vector({0.7, -1.2});
    const auto s = num::lstm_cell(Tensor::vector({0.4}), Tensor::vector({0.1, 0.2}), c_prev, p);
    CHECK(s.c.at(0) == 0.7);
    CHECK(s.c.at(1) == -1.2);
  }
  SUBCASE("gradient on a 4-dimensional toy") {
    std::mt19937_64 rng(4);
    const auto p = num::LstmCellParams::init(4, 4, 0.5, rng);
    const Tensor x = rand_param({4}, rng), h = rand_param({4}, rng), c = rand_param({4}, rng);
    check_fd(
        [&] {
          const auto s = num::lstm_cell(x, h, c, p);
          return num::add(weighted_sum(s.h, 31), weighted_sum(s.c, 32));
        },
        {{"W", p.W}, {"U", p.U}, {"b", p.b}, {"x", x}, {"h", h}, {"c", c}});
  }
  SUBCASE("shape mismatch") {
    std::mt19937_64 rng(5);
    const auto p = num::LstmCellParams::init(3, 2, 0.1, rng);
    CHECK_THROWS_AS(num::lstm_cell(Tensor::zeros({4}), Tensor::zeros({2}), Tensor::zeros({2}), p), ShapeError);
  }
}

TEST_CASE("backward") {
  SUBCASE("identity") {
    const Tensor x = Tensor::parameter({1}, {3.0});
    num::backward(x);
    CHECK(x.grad()[0] == 1.0);
  }
  SUBCASE("shared parameter accumulates both uses") {
    std::mt19937_64 rng(6);
    const Tensor W = rand_param({2, 3}, rng);
    const Tensor x = Tensor::vector({1.0, 2.0, 3.0}), y = Tensor::vector({-1.0, 0.5, 4.0});
    num::backward(num::sum(num::add(num::matmul(W, x), num::matmul(W, y))));
    // d/dW_ij = x_j + y_j
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(W.grad()[i * 3 + j] == doctest::Approx(x.at(j) + y.at(j)));
  }
  SUBCASE("leaf gradients accumulate across passes until zeroed") {
    const Tensor x = Tensor::parameter({1}, {2.0});
    num::backward(num::mul(x, x));
    num::backward(num::mul(x, x));
    CHECK(x.grad()[0] == 8.0);
    Tensor(x).zero_grad();
    CHECK(x.grad()[0] == 0.0);
  }
  SUBCASE("a tape can be replayed") {
    const Tensor x = Tensor::parameter({1}, {1.5});
    const Tensor loss = num::tanh(num::mul(x, x));
    const auto tape = num::Tape::record(loss);
    num::backward(loss, tape);
    const double once = x.grad()[0];
    num::backward(loss, tape);
    CHECK(x.grad()[0] == doctest::Approx(2 * once));
  }
  SUBCASE("topological order") {
    const Tensor a = Tensor::parameter({2}, {1, 2});
    const Tensor b = num::tanh(a), c = num::mul(a, b), d = num::sum(num::add(b, c));
    const auto tape = num::Tape::record(d);
    std::map<const num::Node*, std::size_t> pos;
    for (std::size_t i = 0; i < tape.nodes().size(); ++i) pos[tape.nodes()[i]] = i;
    for (const num::Node* n : tape.nodes())
      for (const auto& p : n->parents)
        if (p->requires_grad) CHECK(pos.at(p.get()) < pos.at(n));
  }
  SUBCASE("non-scalar loss is rejected") {
    CHECK_THROWS_AS(num::backward(Tensor::parameter({2}, {1, 2})), ContractError);
  }
  SUBCASE("inference mode records nothing") {
    const Tensor x = Tensor::parameter({1}, {1.0});
    num::NoGradGuard guard;
    const Tensor y = num::tanh(x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node().parents.empty());
  }
  SUBCASE("deep chains do not overflow the stack") {
    Tensor x = Tensor::parameter({1}, {0.1});
    Tensor y = x;
    for (int i = 0; i < 200000; ++i) y = num::affine(y, 1.0, 0.0);
    num::backward(y);
    CHECK(x.grad()[0] == 1.0);
  }
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(7);
  const Tensor x = Tensor::vector({1, 2, 3, 4});
  CHECK(num::dropout(x, 0.0, rng).same_storage(x));
  const Tensor d = num::dropout(Tensor::vector(std::vector<double>(10000, 1.0)), 0.5, rng);
  std::size_t kept = 0;
  for (double v : d.values()) {
    CHECK((v == 0.0 || v == 2.0));
    kept += v != 0.0;
  }
  CHECK(kept > 4700);
  CHECK(kept < 5300);
}

TEST_CASE("optimizer") {
  SUBCASE("plain sgd step") {
    num::OptimizerConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.grad_clip_norm.reset();
    num::Optimizer opt(cfg);
    Tensor p = Tensor::parameter({1}, {0.0});
    p.mutable_grad()[0] = 1.0;
    std::vector<num::NamedTensor> params{{"p", p}};
    opt.step(params, 0);
    CHECK(p.at(0) == doctest::Approx(-0.1).epsilon(1e-15));
  }
  SUBCASE("learning-rate schedule") {
    num::OptimizerConfig cfg;
    CHECK(num::learning_rate_at(cfg, 0) == 1.0);
    CHECK(num::learning_rate_at(cfg, 9999) == 1.0);
    CHECK(num::learning_rate_at(cfg, 10000) == 0.5);
    CHECK(num::learning_rate_at(cfg, 25000) == 0.25);
  }
  SUBCASE("clipping halves gradients of twice the norm") {
    num::OptimizerConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.grad_clip_norm = 1.0;
    num::Optimizer opt(cfg);
    // Gradient (1.2, 1.6) has norm 2.
    Tensor p = Tensor::parameter({2}, {0.0, 0.0});
    p.mutable_grad()[0] = 1.2;
    p.mutable_grad()[1] = 1.6;
    std::vector<num::NamedTensor> params{{"p", p}};
    const double norm = opt.step(params, 0);
    CHECK(norm == doctest::Approx(2.0));
    CHECK(p.at(0) == doctest::Approx(-0.6));
    CHECK(p.at(1) == doctest::Approx(-0.8));
  }
  SUBCASE("non-finite gradient leaves parameters untouched") {
    num::Optimizer opt(num::OptimizerConfig{});
    Tensor a = Tensor::parameter({1}, {1.0}), b = Tensor::parameter({1}, {2.0});
    a.mutable_grad()[0] = 0.5;
    b.mutable_grad()[0] = NAN;
    std::vector<num::NamedTensor> params{{"a", a}, {"b", b}};
    CHECK_THROWS_AS(opt.step(params, 3), DivergenceError);
    CHECK(a.at(0) == 1.0);
    CHECK(b.at(0) == 2.0);
  }
  SUBCASE("adam first step moves by lr in the gradient's sign") {
    num::OptimizerConfig cfg;
    cfg.kind = num::OptimizerKind::adam;
    cfg.learning_rate = 0.01;
    cfg.grad_clip_norm.reset();
    num::Optimizer opt(cfg);
    Tensor p = Tensor::parameter({2}, {0.0, 0.0});
    p.mutable_grad()[0] = 3.0;
    p.mutable_grad()[1] = -0.2;
    std::vector<num::NamedTensor> params{{"p", p}};
    opt.step(params, 0);
    CHECK(p.at(0) == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.at(1) == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(opt.state().size() == 2);
  }
  SUBCASE("config validation and JSON") {
    num::OptimizerConfig cfg;
    cfg.decay_factor = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    num::OptimizerConfig def;
    CHECK(num::OptimizerConfig::from_json(def.to_json()).to_json() == def.to_json());
    CHECK(def.dropout_rate == 0.5);
    CHECK(def.decay_steps == 10000);
  }
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "confnet2seq_numcore_ckpt";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(8);
  num::Checkpoint ck;
  ck.step = 42;
  ck.config = {{"note", "x"}};
  ck.tensors = {{"a", rand_param({3, 2}, rng)}, {"b", rand_param({5}, rng)}};
  num::save_checkpoint(dir / "ck", ck);
  const auto back = num::load_checkpoint(dir / "ck");
  CHECK(back.step == 42);
  CHECK(back.config == ck.config);
  REQUIRE(back.tensors.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back.tensors[k].name == ck.tensors[k].name);
    CHECK(back.tensors[k].tensor.shape() == ck.tensors[k].tensor.shape());
    for (std::size_t i = 0; i < ck.tensors[k].tensor.size(); ++i)
      CHECK(back.tensors[k].tensor.at(i) == ck.tensors[k].tensor.at(i));
  }
  CHECK_THROWS_AS(back.find("missing"), CompatibilityError);
  std::filesystem::resize_file(num::blob_path(dir / "ck"), 8);
  CHECK_THROWS_AS(num::load_checkpoint(dir / "ck"), Error);
  std::filesystem::remove_all(dir);
}
