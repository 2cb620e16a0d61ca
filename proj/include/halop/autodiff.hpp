#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace halop {

// Flat parameter vector with named row-major matrix slices and a gradient
// accumulator of the same shape.
class ParameterStore {
public:
  struct Slice {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  };

  const Slice& add(const std::string& name, int rows, int cols, std::span<const double> init);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Slice& slice(const std::string& name) const;
  const std::vector<Slice>& slices() const noexcept { return slices_; }

  std::span<double> values(const std::string& name);
  std::span<const double> values(const std::string& name) const;
  std::span<double> grads(const std::string& name);
  std::span<const double> grads(const std::string& name) const;

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& grad() noexcept { return grad_; }
  const std::vector<double>& grad() const noexcept { return grad_; }

  std::size_t size() const noexcept { return data_.size(); }
  void zero_grad();

private:
  std::vector<Slice> slices_;
  std::map<std::string, std::size_t> index_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

namespace ad {

class Tape;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over small dense row-major matrices. Nodes are appended
// in evaluation order, so a reverse sweep is a valid topological order.
class Tape {
public:
  Var constant(int rows, int cols, std::span<const double> values);
  Var constant(int rows, int cols, double fill);
  // Leaf bound to a parameter slice; backward() accumulates into store.grad().
  Var parameter(ParameterStore& store, const std::string& name);

  int rows(Var v) const { return node(v).rows; }
  int cols(Var v) const { return node(v).cols; }
  std::span<const double> value(Var v) const { return node(v).value; }
  double scalar(Var v) const;
  std::span<const double> grad(Var v) const { return node(v).grad; }

  Var matmul(Var a, Var b);       // (n x k)(k x m)
  Var matmul_nt(Var a, Var b);    // a b^T: (n x k)(m x k)^T
  Var add(Var a, Var b);          // same shape
  Var add_row(Var a, Var row);    // row broadcast: (n x m) + (1 x m)
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var mul(Var a, Var b);          // elementwise
  Var tanh(Var a);
  Var softplus(Var a);
  Var softmax_rows(Var a);
  Var slice_cols(Var a, int begin, int end);
  Var concat_cols(std::span<const Var> parts);
  Var sum(Var a);                 // 1 x 1
  // 1-D convolution patches: output row i holds input rows
  // i*stride - pad + j for j < kernel (zeros outside), concatenated.
  Var im2col(Var a, int kernel, int stride, int pad);

  // Adds `g` to the gradient of `v`; call before backward().
  void seed(Var v, std::span<const double> g);
  void seed(Var v, double g);
  // Reverse sweep; parameter gradients are accumulated into their stores.
  // A tape can be swept once.
  void backward();

  std::size_t size() const noexcept { return nodes_.size(); }

private:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    std::function<void(Tape&)> backward;
    ParameterStore* store = nullptr;
    std::size_t offset = 0;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(int rows, int cols, std::vector<double> value);

  std::vector<Node> nodes_;
  bool seeded_ = false;
  bool swept_ = false;
};

}  // namespace ad
}  // namespace halop
