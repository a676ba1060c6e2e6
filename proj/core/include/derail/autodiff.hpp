#pragma once

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tape records one forward pass. Every node owns its value; parameter
// leaves alias a Parameter in a ParameterStore and accumulate their
// gradient straight into Parameter::grad during backward(). Heavy model
// pieces (recurrent encoder, attention, graph convolution) register fused
// nodes with hand-written backward closures; the generic ops below cover
// the glue between them.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace derail {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

using ParamId = std::size_t;

// Named tensors in insertion order. Ids are stable indices, so a store can
// be copied without invalidating handles held by a model.
class ParameterStore {
 public:
  ParamId add(std::string name, Eigen::Index rows, Eigen::Index cols);

  Parameter& operator[](ParamId id) { return params_[id]; }
  const Parameter& operator[](ParamId id) const { return params_[id]; }

  const Parameter* find(std::string_view name) const;
  Parameter* find(std::string_view name);

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  void zero_grad();

  // Values only; used for best-epoch snapshots.
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  std::vector<Parameter> params_;
};

namespace ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  // Called with the tape and the node's own handle, whose grad() is final.
  using Backward = std::function<void(Tape&, Var self)>;

  Var constant(Matrix value);
  // Gradient-tracking leaf aliasing `param`.
  Var parameter(Parameter& param);
  // Read-only leaf aliasing `param`; no gradient flows into it.
  Var parameter(const Parameter& param);

  // Registers an op result. `inputs` decides whether the node needs a
  // gradient at all; the closure runs only when it does.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(Var v) const;
  // Gradient buffer of `v`, zero-initialised on first access.
  Matrix& grad(Var v);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Parameter* param = nullptr;
    const Parameter* view = nullptr;
    Backward backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

Var matmul(Tape& tape, Var a, Var b);
Var add(Tape& tape, Var a, Var b);
// a (n x k) plus row (1 x k) broadcast down the rows.
Var add_row(Tape& tape, Var a, Var row);
Var relu(Tape& tape, Var a);
Var sigmoid(Tape& tape, Var a);
Var tanh(Tape& tape, Var a);
Var concat_cols(Tape& tape, std::span<const Var> parts);
Var gather_rows(Tape& tape, Var table, std::vector<int> rows);
// Row-major flatten into 1 x (max_rows * cols); rows beyond the input are zero.
Var flatten_padded(Tape& tape, Var a, int max_rows);
Var sum(Tape& tape, Var a);
// Binary cross-entropy of a 1x1 probability, clamped 1e-7 away from {0,1}.
Var binary_cross_entropy(Tape& tape, Var probability, int label);

}  // namespace ad
}  // namespace derail
