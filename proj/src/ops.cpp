#include "confnet2seq/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "confnet2seq/errors.hpp"

namespace confnet2seq::num {

namespace {

using Backward = std::function<void(Node&)>;

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> inputs, const char* op,
               Backward backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  const bool needs = !NoGradGuard::active() && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) node->parents.push_back(t.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Parent gradient buffer, or nullptr when that parent does not need one.
double* grad_of(Node& node, std::size_t parent) {
  Node& p = *node.parents[parent];
  return p.requires_grad ? p.grad.data() : nullptr;
}

const double* value_of(Node& node, std::size_t parent) { return node.parents[parent]->value.data(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

template <typename F, typename D>
Tensor unary(const Tensor& a, const char* op, F forward, D derivative_from_output) {
  require_defined(a, op);
  std::vector<double> out(a.size());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return make_op(a.shape(), std::move(out), {a}, op, [derivative_from_output](Node& n) {
    double* ga = grad_of(n, 0);
    const double* x = value_of(n, 0);
    for (std::size_t i = 0; i < n.value.size(); ++i)
      ga[i] += n.grad[i] * derivative_from_output(x[i], n.value[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const auto mismatch = [&] {
    return ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  };
  if (a.rank() == 2 && b.rank() == 2) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw mismatch();
    std::vector<double> c(m * n, 0.0);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        for (std::size_t j = 0; j < n; ++j) c[i * n + j] += aip * bv[p * n + j];
      }
    return make_op({m, n}, std::move(c), {a, b}, "matmul", [m, k, n](Node& node) {
      const double* A = value_of(node, 0);
      const double* B = value_of(node, 1);
      const double* G = node.grad.data();
      if (double* gA = grad_of(node, 0))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
            gA[i * k + p] += s;
          }
      if (double* gB = grad_of(node, 1))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gB[p * n + j] += aip * G[i * n + j];
          }
    });
  }
  if (a.rank() == 2 && b.rank() == 1) {
    const std::size_t m = a.dim(0), k = a.dim(1);
    if (b.dim(0) != k) throw mismatch();
    std::vector<double> c(m, 0.0);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[p];
      c[i] = s;
    }
    return make_op({m}, std::move(c), {a, b}, "matvec", [m, k](Node& node) {
      const double* A = value_of(node, 0);
      const double* B = value_of(node, 1);
      const double* G = node.grad.data();
      if (double* gA = grad_of(node, 0))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) gA[i * k + p] += G[i] * B[p];
      if (double* gB = grad_of(node, 1))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) gB[p] += A[i * k + p] * G[i];
    });
  }
  if (a.rank() == 1 && b.rank() == 2) {
    const std::size_t k = a.dim(0), n = b.dim(1);
    if (b.dim(0) != k) throw mismatch();
    std::vector<double> c(n, 0.0);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) c[j] += av[p] * bv[p * n + j];
    return make_op({n}, std::move(c), {a, b}, "vecmat", [k, n](Node& node) {
      const double* A = value_of(node, 0);
      const double* B = value_of(node, 1);
      const double* G = node.grad.data();
      if (double* gA = grad_of(node, 0))
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += B[p * n + j] * G[j];
          gA[p] += s;
        }
      if (double* gB = grad_of(node, 1))
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) gB[p * n + j] += A[p] * G[j];
    });
  }
  throw mismatch();
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_string(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  const auto v = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return make_op({c, r}, std::move(out), {a}, "transpose", [r, c](Node& node) {
    double* g = grad_of(node, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += node.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_op(a.shape(), std::move(out), {a, b}, "add", [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = grad_of(n, k))
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_op(a.shape(), std::move(out), {a, b}, "sub", [](Node& n) {
    if (double* g = grad_of(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    if (double* g = grad_of(n, 1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_op(a.shape(), std::move(out), {a, b}, "mul", [](Node& n) {
    const double* x = value_of(n, 0);
    const double* y = value_of(n, 1);
    if (double* g = grad_of(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * y[i];
    if (double* g = grad_of(n, 1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * x[i];
  });
}

Tensor add_n(std::span<const Tensor> terms) {
  if (terms.empty()) throw ContractError("add_n: no terms");
  std::vector<double> out(terms[0].size(), 0.0);
  for (const Tensor& t : terms) {
    require_same_shape(terms[0], t, "add_n");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.values()[i];
  }
  return make_op(terms[0].shape(), std::move(out), {terms.begin(), terms.end()}, "add_n", [](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k)
      if (double* g = grad_of(n, k))
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
  });
}

Tensor add_row(const Tensor& matrix, const Tensor& row_vec) {
  require_defined(matrix, "add_row");
  if (matrix.rank() != 2 || row_vec.rank() != 1 || matrix.dim(1) != row_vec.dim(0))
    throw ShapeError("add_row: cannot add " + shape_string(row_vec.shape()) + " to rows of " +
                     shape_string(matrix.shape()));
  const std::size_t r = matrix.dim(0), c = matrix.dim(1);
  std::vector<double> out(matrix.values().begin(), matrix.values().end());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += row_vec.values()[j];
  return make_op(matrix.shape(), std::move(out), {matrix, row_vec}, "add_row", [r, c](Node& n) {
    if (double* g = grad_of(n, 0))
      for (std::size_t i = 0; i < r * c; ++i) g[i] += n.grad[i];
    if (double* g = grad_of(n, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j];
  });
}

Tensor affine(const Tensor& a, double alpha, double beta) {
  return unary(
      a, "affine", [alpha, beta](double x) { return alpha * x + beta; },
      [alpha](double, double) { return alpha; });
}

Tensor scale_by(const Tensor& s, const Tensor& a) {
  require_defined(s, "scale_by");
  require_defined(a, "scale_by");
  if (s.size() != 1) throw ShapeError("scale_by: scale must have one element, got " + shape_string(s.shape()));
  const double k = s.item();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = k * a.values()[i];
  return make_op(a.shape(), std::move(out), {s, a}, "scale_by", [](Node& n) {
    const double k = n.parents[0]->value[0];
    const double* x = value_of(n, 1);
    if (double* gs = grad_of(n, 0)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * x[i];
      gs[0] += acc;
    }
    if (double* ga = grad_of(n, 1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i] * k;
  });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values())
    if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(
      a, "clamp_min", [floor](double x) { return x < floor ? floor : x; },
      [floor](double x, double) { return x < floor ? 0.0 : 1.0; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  for (double v : x.values())
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite input");
  std::size_t outer = 1, len = 0, stride = 1;
  if (x.rank() == 1 && axis == 0) {
    len = x.dim(0);
  } else if (x.rank() == 2 && axis == 1) {
    outer = x.dim(0);
    len = x.dim(1);
  } else if (x.rank() == 2 && axis == 0) {
    outer = x.dim(1);
    len = x.dim(0);
    stride = x.dim(1);
  } else {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_string(x.shape()));
  }
  // Slice o, element j lives at base(o) + j * stride.
  const auto base = [=](std::size_t o) { return stride == 1 ? o * len : o; };
  std::vector<double> out(x.size());
  const auto in = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t b = base(o);
    double mx = in[b];
    for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, in[b + j * stride]);
    double z = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double e = std::exp(in[b + j * stride] - mx);
      out[b + j * stride] = e;
      z += e;
    }
    for (std::size_t j = 0; j < len; ++j) out[b + j * stride] /= z;
  }
  return make_op(x.shape(), std::move(out), {x}, "softmax", [outer, len, stride, base](Node& n) {
    double* g = grad_of(n, 0);
    const double* y = n.value.data();
    const double* gy = n.grad.data();
    for (std::size_t o = 0; o < outer; ++o) {
      const std::size_t b = base(o);
      double d = 0.0;
      for (std::size_t j = 0; j < len; ++j) d += gy[b + j * stride] * y[b + j * stride];
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t idx = b + j * stride;
        g[idx] += y[idx] * (gy[idx] - d);
      }
    }
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat: no parts");
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    require_defined(p, "concat");
    if (p.rank() != 1) throw ShapeError("concat: expected vectors, got " + shape_string(p.shape()));
    offsets.push_back(out.size());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  const std::size_t n = out.size();
  return make_op({n}, std::move(out), {parts.begin(), parts.end()}, "concat",
                 [offsets = std::move(offsets)](Node& node) {
                   for (std::size_t k = 0; k < node.parents.size(); ++k)
                     if (double* g = grad_of(node, k)) {
                       const std::size_t len = node.parents[k]->value.size();
                       for (std::size_t i = 0; i < len; ++i) g[i] += node.grad[offsets[k] + i];
                     }
                 });
}

Tensor slice(const Tensor& v, std::size_t begin, std::size_t length) {
  require_defined(v, "slice");
  if (v.rank() != 1 || length == 0 || begin + length > v.dim(0))
    throw ShapeError("slice: [" + std::to_string(begin) + ", +" + std::to_string(length) + ") out of " +
                     shape_string(v.shape()));
  std::vector<double> out(v.values().begin() + begin, v.values().begin() + begin + length);
  return make_op({length}, std::move(out), {v}, "slice", [begin, length](Node& n) {
    double* g = grad_of(n, 0);
    for (std::size_t i = 0; i < length; ++i) g[begin + i] += n.grad[i];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ContractError("stack_rows: no rows");
  const std::size_t d = rows[0].size();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const Tensor& r : rows) {
    require_defined(r, "stack_rows");
    if (r.rank() != 1 || r.size() != d)
      throw ShapeError("stack_rows: row shape " + shape_string(r.shape()) + " vs " + shape_string(rows[0].shape()));
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  return make_op({rows.size(), d}, std::move(out), {rows.begin(), rows.end()}, "stack_rows", [d](Node& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k)
      if (double* g = grad_of(n, k))
        for (std::size_t i = 0; i < d; ++i) g[i] += n.grad[k * d + i];
  });
}

Tensor row(const Tensor& matrix, std::size_t index) {
  require_defined(matrix, "row");
  if (matrix.rank() != 2) throw ShapeError("row: expected a matrix, got " + shape_string(matrix.shape()));
  if (index >= matrix.dim(0))
    throw IndexError("row " + std::to_string(index) + " out of range for " + shape_string(matrix.shape()));
  const std::size_t d = matrix.dim(1);
  std::vector<double> out(matrix.values().begin() + index * d, matrix.values().begin() + (index + 1) * d);
  return make_op({d}, std::move(out), {matrix}, "row", [index, d](Node& n) {
    double* g = grad_of(n, 0);
    for (std::size_t i = 0; i < d; ++i) g[index * d + i] += n.grad[i];
  });
}

Tensor embedding_lookup(const Tensor& table, std::size_t index) { return row(table, index); }

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_op({1}, {s}, {a}, "sum", [](Node& n) {
    double* g = grad_of(n, 0);
    for (std::size_t i = 0; i < n.parents[0]->value.size(); ++i) g[i] += n.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return make_op({1}, {s}, {a, b}, "dot", [](Node& n) {
    const double* x = value_of(n, 0);
    const double* y = value_of(n, 1);
    const std::size_t len = n.parents[0]->value.size();
    if (double* g = grad_of(n, 0))
      for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[0] * y[i];
    if (double* g = grad_of(n, 1))
      for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[0] * x[i];
  });
}

Tensor pick(const Tensor& v, std::size_t index) {
  require_defined(v, "pick");
  if (index >= v.size())
    throw IndexError("pick: index " + std::to_string(index) + " out of range for " + shape_string(v.shape()));
  return make_op({1}, {v.values()[index]}, {v}, "pick", [index](Node& n) { grad_of(n, 0)[index] += n.grad[0]; });
}

Tensor mean(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw ContractError("mean: no terms");
  for (const Tensor& s : scalars)
    if (s.size() != 1) throw ShapeError("mean: expected scalars, got " + shape_string(s.shape()));
  return affine(add_n(scalars), 1.0 / static_cast<double>(scalars.size()));
}

Tensor weighted_scatter(const Tensor& src, std::span<const ScatterEntry> entries, std::size_t out_size) {
  require_defined(src, "weighted_scatter");
  if (out_size == 0) throw ShapeError("weighted_scatter: empty output");
  std::vector<double> out(out_size, 0.0);
  const auto sv = src.values();
  for (const ScatterEntry& e : entries) {
    if (e.source >= sv.size() || e.target >= out_size)
      throw IndexError("weighted_scatter: entry (" + std::to_string(e.source) + " -> " + std::to_string(e.target) +
                       ") out of range");
    out[e.target] += e.weight * sv[e.source];
  }
  return make_op({out_size}, std::move(out), {src}, "weighted_scatter",
                 [entries = std::vector<ScatterEntry>(entries.begin(), entries.end())](Node& n) {
                   double* g = grad_of(n, 0);
                   for (const ScatterEntry& e : entries) g[e.source] += e.weight * n.grad[e.target];
                 });
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(a.size());
  for (double& m : mask) m = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul(a, Tensor::constant(a.shape(), std::move(mask)));
}

}  // namespace confnet2seq::num
