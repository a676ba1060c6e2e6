#include "derail/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "derail/error.hpp"

namespace derail {

ParamId ParameterStore::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (find(name) != nullptr) {
    throw ConfigError("duplicate parameter name: " + name);
  }
  params_.push_back(Parameter{std::move(name), Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return params_.size() - 1;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    } else {
      p.grad.setZero();
    }
  }
}

std::vector<Matrix> ParameterStore::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void ParameterStore::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) {
    throw ShapeError("snapshot has " + std::to_string(values.size()) + " tensors, store has " +
                     std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) params_[i].value = values[i];
}

namespace ad {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, {}, false});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(Parameter& param) {
  if (param.grad.rows() != param.value.rows() || param.grad.cols() != param.value.cols()) {
    param.grad = Matrix::Zero(param.value.rows(), param.value.cols());
  }
  nodes_.push_back(Node{{}, {}, &param, &param, {}, true});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(const Parameter& param) {
  nodes_.push_back(Node{{}, {}, nullptr, &param, {}, false});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = std::any_of(inputs.begin(), inputs.end(), [&](Var v) { return nodes_[v.id].needs_grad; });
  nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, needs ? std::move(backward) : Backward{}, needs});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.view != nullptr ? n.view->value : n.value;
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.param != nullptr) return n.param->grad;
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(Var root) {
  const Matrix& v = value(root);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("backward() needs a scalar root");
  }
  grad(root)(0, 0) += 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, Var{i});
  }
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace

Var matmul(Tape& tape, Var a, Var b) {
  const Matrix& av = tape.value(a);
  const Matrix& bv = tape.value(b);
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(av.cols()) + " and " +
                     std::to_string(bv.rows()));
  }
  return tape.record(av * bv, {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
    if (t.needs_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

Var add(Tape& tape, Var a, Var b) {
  require_same_shape(tape.value(a), tape.value(b), "add");
  return tape.record(tape.value(a) + tape.value(b), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a)) t.grad(a) += g;
    if (t.needs_grad(b)) t.grad(b) += g;
  });
}

Var add_row(Tape& tape, Var a, Var row) {
  const Matrix& av = tape.value(a);
  const Matrix& rv = tape.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: bias must be 1x" + std::to_string(av.cols()));
  }
  Matrix out = av.rowwise() + rv.row(0);
  return tape.record(std::move(out), {a, row}, [a, row](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a)) t.grad(a) += g;
    if (t.needs_grad(row)) t.grad(row) += g.colwise().sum();
  });
}

Var relu(Tape& tape, Var a) {
  Matrix out = tape.value(a).cwiseMax(0.0);
  return tape.record(std::move(out), {a}, [a](Tape& t, Var self) {
    const Matrix& x = t.value(a);
    t.grad(a) += (x.array() > 0.0).select(t.grad(self), 0.0);
  });
}

Var sigmoid(Tape& tape, Var a) {
  Matrix out = tape.value(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return tape.record(std::move(out), {a}, [a](Tape& t, Var self) {
    const Matrix& y = t.value(self);
    t.grad(a).array() += t.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var tanh(Tape& tape, Var a) {
  Matrix out = tape.value(a).array().tanh().matrix();
  return tape.record(std::move(out), {a}, [a](Tape& t, Var self) {
    const Matrix& y = t.value(self);
    t.grad(a).array() += t.grad(self).array() * (1.0 - y.array().square());
  });
}

Var concat_cols(Tape& tape, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const Eigen::Index rows = tape.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (tape.value(p).rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += tape.value(p).cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    const Matrix& v = tape.value(p);
    out.middleCols(offset, v.cols()) = v;
    offset += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), parts, [inputs](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Eigen::Index off = 0;
    for (Var p : inputs) {
      const Eigen::Index c = t.value(p).cols();
      if (t.needs_grad(p)) t.grad(p) += g.middleCols(off, c);
      off += c;
    }
  });
}

Var gather_rows(Tape& tape, Var table, std::vector<int> rows) {
  const Matrix& tv = tape.value(table);
  Matrix out(static_cast<Eigen::Index>(rows.size()), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= tv.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " outside table of " +
                       std::to_string(tv.rows()));
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(rows[i]);
  }
  return tape.record(std::move(out), {table}, [table, rows = std::move(rows)](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& tg = t.grad(table);
    for (std::size_t i = 0; i < rows.size(); ++i) tg.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var flatten_padded(Tape& tape, Var a, int max_rows) {
  const Matrix& av = tape.value(a);
  if (av.rows() > max_rows) {
    throw ShapeError("flatten_padded: " + std::to_string(av.rows()) + " rows exceed cap " +
                     std::to_string(max_rows));
  }
  const Eigen::Index cols = av.cols();
  Matrix out = Matrix::Zero(1, cols * max_rows);
  for (Eigen::Index r = 0; r < av.rows(); ++r) out.block(0, r * cols, 1, cols) = av.row(r);
  return tape.record(std::move(out), {a}, [a](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& ag = t.grad(a);
    const Eigen::Index c = ag.cols();
    for (Eigen::Index r = 0; r < ag.rows(); ++r) ag.row(r) += g.block(0, r * c, 1, c);
  });
}

Var sum(Tape& tape, Var a) {
  Matrix out(1, 1);
  out(0, 0) = tape.value(a).sum();
  return tape.record(std::move(out), {a}, [a](Tape& t, Var self) { t.grad(a).array() += t.grad(self)(0, 0); });
}

Var binary_cross_entropy(Tape& tape, Var probability, int label) {
  const Matrix& pv = tape.value(probability);
  if (pv.rows() != 1 || pv.cols() != 1) throw ShapeError("binary_cross_entropy expects a 1x1 probability");
  constexpr double kClamp = 1e-7;
  const double raw = pv(0, 0);
  const double p = std::clamp(raw, kClamp, 1.0 - kClamp);
  const double y = label != 0 ? 1.0 : 0.0;
  Matrix out(1, 1);
  out(0, 0) = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  return tape.record(std::move(out), {probability}, [probability, p, y, raw](Tape& t, Var self) {
    if (raw != p) return;  // clamped: flat in the probability
    t.grad(probability)(0, 0) += t.grad(self)(0, 0) * (-(y / p) + (1.0 - y) / (1.0 - p));
  });
}

}  // namespace ad
}  // namespace derail
