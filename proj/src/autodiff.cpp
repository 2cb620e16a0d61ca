#include "halop/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace halop {

const ParameterStore::Slice& ParameterStore::add(const std::string& name, int rows, int cols,
                                                 std::span<const double> init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  if (rows <= 0 || cols <= 0) throw std::invalid_argument("parameter shape must be positive");
  Slice s{name, data_.size(), rows, cols};
  if (init.size() != s.size()) throw std::invalid_argument("initializer size mismatch for '" + name + "'");
  data_.insert(data_.end(), init.begin(), init.end());
  grad_.resize(data_.size(), 0.0);
  index_[name] = slices_.size();
  slices_.push_back(s);
  return slices_.back();
}

const ParameterStore::Slice& ParameterStore::slice(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return slices_[it->second];
}

std::span<double> ParameterStore::values(const std::string& name) {
  const auto& s = slice(name);
  return {data_.data() + s.offset, s.size()};
}

std::span<const double> ParameterStore::values(const std::string& name) const {
  const auto& s = slice(name);
  return {data_.data() + s.offset, s.size()};
}

std::span<double> ParameterStore::grads(const std::string& name) {
  const auto& s = slice(name);
  return {grad_.data() + s.offset, s.size()};
}

std::span<const double> ParameterStore::grads(const std::string& name) const {
  const auto& s = slice(name);
  return {grad_.data() + s.offset, s.size()};
}

void ParameterStore::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

namespace ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Tape::Node& Tape::node(Var v) {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("invalid tape variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("invalid tape variable");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::push(int rows, int cols, std::vector<double> value) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  n.grad.assign(n.value.size(), 0.0);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

double Tape::scalar(Var v) const {
  const auto& n = node(v);
  require(n.value.size() == 1, "scalar() on a non-scalar");
  return n.value[0];
}

Var Tape::constant(int rows, int cols, std::span<const double> values) {
  require(values.size() == static_cast<std::size_t>(rows * cols), "constant shape mismatch");
  return push(rows, cols, std::vector<double>(values.begin(), values.end()));
}

Var Tape::constant(int rows, int cols, double fill) {
  return push(rows, cols, std::vector<double>(static_cast<std::size_t>(rows * cols), fill));
}

Var Tape::parameter(ParameterStore& store, const std::string& name) {
  const auto& s = store.slice(name);
  auto vals = store.values(name);
  Var v = push(s.rows, s.cols, std::vector<double>(vals.begin(), vals.end()));
  nodes_.back().store = &store;
  nodes_.back().offset = s.offset;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const int n = rows(a), k = cols(a), m = cols(b);
  require(rows(b) == k, "matmul shape mismatch");
  std::vector<double> out(static_cast<std::size_t>(n * m), 0.0);
  {
    const auto& A = node(a).value;
    const auto& B = node(b).value;
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < k; ++p) {
        const double x = A[i * k + p];
        if (x == 0.0) continue;
        for (int j = 0; j < m; ++j) out[i * m + j] += x * B[p * m + j];
      }
  }
  Var r = push(n, m, std::move(out));
  nodes_.back().backward = [a, b, r, n, k, m](Tape& t) {
    const auto& G = t.node(r).grad;
    auto& A = t.node(a);
    auto& B = t.node(b);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const double g = G[i * m + j];
        if (g == 0.0) continue;
        for (int p = 0; p < k; ++p) {
          A.grad[i * k + p] += g * B.value[p * m + j];
          B.grad[p * m + j] += g * A.value[i * k + p];
        }
      }
  };
  return r;
}

Var Tape::matmul_nt(Var a, Var b) {
  const int n = rows(a), k = cols(a), m = rows(b);
  require(cols(b) == k, "matmul_nt shape mismatch");
  std::vector<double> out(static_cast<std::size_t>(n * m), 0.0);
  {
    const auto& A = node(a).value;
    const auto& B = node(b).value;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
        out[i * m + j] = acc;
      }
  }
  Var r = push(n, m, std::move(out));
  nodes_.back().backward = [a, b, r, n, k, m](Tape& t) {
    const auto& G = t.node(r).grad;
    auto& A = t.node(a);
    auto& B = t.node(b);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        const double g = G[i * m + j];
        if (g == 0.0) continue;
        for (int p = 0; p < k; ++p) {
          A.grad[i * k + p] += g * B.value[j * k + p];
          B.grad[j * k + p] += g * A.value[i * k + p];
        }
      }
  };
  return r;
}

Var Tape::add(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "add shape mismatch");
  std::vector<double> out = node(a).value;
  const auto& B = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  Var r = push(rows(a), cols(a), std::move(out));
  nodes_.back().backward = [a, b, r](Tape& t) {
    const auto& G = t.node(r).grad;
    auto& ga = t.node(a).grad;
    auto& gb = t.node(b).grad;
    for (std::size_t i = 0; i < G.size(); ++i) {
      ga[i] += G[i];
      gb[i] += G[i];
    }
  };
  return r;
}

Var Tape::add_row(Var a, Var row) {
  const int n = rows(a), m = cols(a);
  require(rows(row) == 1 && cols(row) == m, "add_row shape mismatch");
  std::vector<double> out = node(a).value;
  const auto& R = node(row).value;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[i * m + j] += R[j];
  Var r = push(n, m, std::move(out));
  nodes_.back().backward = [a, row, r, n, m](Tape& t) {
    const auto& G = t.node(r).grad;
    auto& ga = t.node(a).grad;
    auto& gr = t.node(row).grad;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        ga[i * m + j] += G[i * m + j];
        gr[j] += G[i * m + j];
      }
  };
  return r;
}

Var Tape::scale(Var a, double c) {
  std::vector<double> out = node(a).value;
  for (auto& x : out) x *= c;
  Var r = push(rows(a), cols(a), std::move(out));
  nodes_.back().backward = [a, r, c](Tape& t) {
    const auto& G = t.node(r).grad;
    auto& ga = t.node(a).grad;
    for (std::size_t i = 0; i < G.size(); ++i) ga[i] += c * G[i];
  };
  return r;
}

Var Tape::add_scalar(Var a, double c) {
  std::vector<double> out = node(a).value;
  for (auto& x : out) x += c;
  Var r = push(rows(a), cols(a), std::move(out));
  nodes_.back().backward = [a, r](Tape& t) {
    const auto& G = t.node(r).grad;
    auto& ga = t.node(a).grad;
    for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i];
  };
  return r;
}

Var Tape::mul(Var a, Var b) {
  require(rows(a) == rows(b) && cols(a) == cols(b), "mul shape mismatch");
  std::vector<double> out = node(a).value;
  const auto& B = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  Var r = push(rows(a), cols(a), std::move(out));
  nodes_.back().backward = [a, b, r](Tape& t) {
    const auto& G = t.node(r).grad;
    auto& A = t.node(a);
    auto& B = t.node(b);
    for (std::size_t i = 0; i < G.size(); ++i) {
      A.grad[i] += G[i] * B.value[i];
      B.grad[i] += G[i] * A.value[i];
    }
  };
  return r;
}

Var Tape::tanh(Var a) {
  std::vector<double> out = node(a).value;
  for (auto& x : out) x = std::tanh(x);
  Var r = push(rows(a), cols(a), std::move(out));
  nodes_.back().backward = [a, r](Tape& t) {
    const auto& R = t.node(r);
    auto& ga = t.node(a).grad;
    for (std::size_t i = 0; i < R.grad.size(); ++i) ga[i] += R.grad[i] * (1.0 - R.value[i] * R.value[i]);
  };
  return r;
}

Var Tape::softplus(Var a) {
  std::vector<double> out = node(a).value;
  for (auto& x : out) x = x > 30.0 ? x : std::log1p(std::exp(x));
  Var r = push(rows(a), cols(a), std::move(out));
  nodes_.back().backward = [a, r](Tape& t) {
    const auto& G = t.node(r).grad;
    auto& A = t.node(a);
    for (std::size_t i = 0; i < G.size(); ++i) A.grad[i] += G[i] / (1.0 + std::exp(-A.value[i]));
  };
  return r;
}

Var Tape::softmax_rows(Var a) {
  const int n = rows(a), m = cols(a);
  std::vector<double> out = node(a).value;
  for (int i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    const double hi = *std::max_element(row, row + m);
    double z = 0.0;
    for (int j = 0; j < m; ++j) z += (row[j] = std::exp(row[j] - hi));
    for (int j = 0; j < m; ++j) row[j] /= z;
  }
  Var r = push(n, m, std::move(out));
  nodes_.back().backward = [a, r, n, m](Tape& t) {
    const auto& R = t.node(r);
    auto& ga = t.node(a).grad;
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j < m; ++j) dot += R.grad[i * m + j] * R.value[i * m + j];
      for (int j = 0; j < m; ++j) ga[i * m + j] += R.value[i * m + j] * (R.grad[i * m + j] - dot);
    }
  };
  return r;
}

Var Tape::slice_cols(Var a, int begin, int end) {
  const int n = rows(a), m = cols(a);
  require(0 <= begin && begin < end && end <= m, "slice_cols range");
  const int w = end - begin;
  std::vector<double> out(static_cast<std::size_t>(n * w));
  const auto& A = node(a).value;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j) out[i * w + j] = A[i * m + begin + j];
  Var r = push(n, w, std::move(out));
  nodes_.back().backward = [a, r, n, m, w, begin](Tape& t) {
    const auto& G = t.node(r).grad;
    auto& ga = t.node(a).grad;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j) ga[i * m + begin + j] += G[i * w + j];
  };
  return r;
}

Var Tape::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const int n = rows(parts[0]);
  int m = 0;
  for (Var p : parts) {
    require(rows(p) == n, "concat_cols row mismatch");
    m += cols(p);
  }
  std::vector<double> out(static_cast<std::size_t>(n * m));
  int off = 0;
  for (Var p : parts) {
    const int w = cols(p);
    const auto& P = node(p).value;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j) out[i * m + off + j] = P[i * w + j];
    off += w;
  }
  Var r = push(n, m, std::move(out));
  std::vector<Var> ps(parts.begin(), parts.end());
  nodes_.back().backward = [ps, r, n, m](Tape& t) {
    const auto& G = t.node(r).grad;
    int off = 0;
    for (Var p : ps) {
      auto& P = t.node(p);
      const int w = P.cols;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < w; ++j) P.grad[i * w + j] += G[i * m + off + j];
      off += w;
    }
  };
  return r;
}

Var Tape::sum(Var a) {
  double s = 0.0;
  for (double x : node(a).value) s += x;
  Var r = push(1, 1, {s});
  nodes_.back().backward = [a, r](Tape& t) {
    const double g = t.node(r).grad[0];
    for (auto& x : t.node(a).grad) x += g;
  };
  return r;
}

Var Tape::im2col(Var a, int kernel, int stride, int pad) {
  const int n = rows(a), c = cols(a);
  require(kernel >= 1 && stride >= 1 && pad >= 0, "im2col arguments");
  const int out_rows = (n + 2 * pad - kernel) / stride + 1;
  require(out_rows >= 1, "im2col produces no rows");
  const int w = kernel * c;
  std::vector<double> out(static_cast<std::size_t>(out_rows * w), 0.0);
  const auto& A = node(a).value;
  for (int i = 0; i < out_rows; ++i)
    for (int j = 0; j < kernel; ++j) {
      const int src = i * stride - pad + j;
      if (src < 0 || src >= n) continue;
      for (int q = 0; q < c; ++q) out[i * w + j * c + q] = A[src * c + q];
    }
  Var r = push(out_rows, w, std::move(out));
  nodes_.back().backward = [a, r, n, c, kernel, stride, pad, out_rows, w](Tape& t) {
    const auto& G = t.node(r).grad;
    auto& ga = t.node(a).grad;
    for (int i = 0; i < out_rows; ++i)
      for (int j = 0; j < kernel; ++j) {
        const int src = i * stride - pad + j;
        if (src < 0 || src >= n) continue;
        for (int q = 0; q < c; ++q) ga[src * c + q] += G[i * w + j * c + q];
      }
  };
  return r;
}

void Tape::seed(Var v, std::span<const double> g) {
  auto& n = node(v);
  require(g.size() == n.grad.size(), "seed gradient shape mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  seeded_ = true;
}

void Tape::seed(Var v, double g) {
  auto& n = node(v);
  require(n.grad.size() == 1, "scalar seed on a non-scalar");
  n.grad[0] += g;
  seeded_ = true;
}

void Tape::backward() {
  if (nodes_.empty()) throw std::logic_error("backward without a recorded forward pass");
  if (!seeded_) throw std::logic_error("backward without a seeded output");
  if (swept_) throw std::logic_error("tape already swept backward");
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this);
  }
  for (auto& n : nodes_) {
    if (n.store == nullptr) continue;
    auto& g = n.store->grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[n.offset + i] += n.grad[i];
  }
  swept_ = true;
}

}  // namespace ad
}  // namespace halop
