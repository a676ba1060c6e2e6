#include "derail/gnn.hpp"

#include <cmath>
#include <memory>

#include "derail/error.hpp"

namespace derail {

namespace {

void check_alpha(const Matrix& alpha, const GraphTopology& topology) {
  const auto expected = static_cast<Eigen::Index>(topology.edges.size()) + topology.vertex_count;
  if (alpha.rows() != 1 || alpha.cols() != expected) {
    throw ShapeError("edge weights must be 1x" + std::to_string(expected));
  }
}

Matrix relu_mask(const Matrix& z) { return (z.array() > 0.0).cast<double>().matrix(); }

}  // namespace

ad::Var rgcn_step1(ad::Tape& tape, const GraphTopology& topology, ad::Var features, ad::Var alpha,
                   ad::Var relation_weights, ad::Var self_weight, ad::Var log_norm) {
  const Matrix& H = tape.value(features);
  const Matrix& A = tape.value(alpha);
  const Matrix& Wr = tape.value(relation_weights);
  const Matrix& W0 = tape.value(self_weight);
  const Matrix& logc = tape.value(log_norm);
  check_alpha(A, topology);
  const Eigen::Index d = H.cols();
  const Eigen::Index out_dim = W0.cols();
  const int R = static_cast<int>(logc.cols());
  if (H.rows() != topology.vertex_count) throw ShapeError("rgcn step 1: one feature row per vertex required");
  if (W0.rows() != d) throw ShapeError("rgcn step 1: W_0 must have " + std::to_string(d) + " rows");
  if (Wr.rows() != static_cast<Eigen::Index>(R) * d || Wr.cols() != out_dim) {
    throw ShapeError("rgcn step 1: relation stack must be " + std::to_string(R * d) + "x" + std::to_string(out_dim));
  }
  const int V = topology.vertex_count;
  const int E = static_cast<int>(topology.edges.size());
  for (const auto& e : topology.edges) {
    if (e.relation_index < 0 || e.relation_index >= R) {
      throw VocabularyError("relation " + to_string(e.relation) + " (id " + std::to_string(e.relation_index) +
                            ") outside a vocabulary of " + std::to_string(R));
    }
  }

  // messages->row(e) = h_src W_r for edge e
  auto messages = std::make_shared<Matrix>(E, out_dim);
  Matrix z = (H * W0);
  auto self_messages = std::make_shared<Matrix>(z);
  for (int i = 0; i < V; ++i) z.row(i) *= A(0, E + i);
  for (int k = 0; k < E; ++k) {
    const auto& e = topology.edges[static_cast<std::size_t>(k)];
    messages->row(k).noalias() = H.row(e.src) * Wr.middleRows(static_cast<Eigen::Index>(e.relation_index) * d, d);
    const double c = std::exp(logc(0, e.relation_index));
    z.row(e.dst) += (A(0, k) / c) * messages->row(k);
  }
  auto mask = std::make_shared<Matrix>(relu_mask(z));
  Matrix out = z.cwiseMax(0.0);

  auto topo = std::make_shared<const GraphTopology>(topology);
  return tape.record(std::move(out), {features, alpha, relation_weights, self_weight, log_norm},
                     [=](ad::Tape& t, ad::Var self) {
                       const Matrix gz = t.grad(self).cwiseProduct(*mask);
                       const Matrix& H = t.value(features);
                       const Matrix& A = t.value(alpha);
                       const Matrix& Wr = t.value(relation_weights);
                       const Matrix& W0 = t.value(self_weight);
                       const Matrix& logc = t.value(log_norm);
                       const bool gH = t.needs_grad(features);
                       const bool gA = t.needs_grad(alpha);
                       const bool gWr = t.needs_grad(relation_weights);
                       const bool gW0 = t.needs_grad(self_weight);
                       const bool gc = t.needs_grad(log_norm);
                       for (int k = 0; k < E; ++k) {
                         const auto& e = topo->edges[static_cast<std::size_t>(k)];
                         const Eigen::Index block = static_cast<Eigen::Index>(e.relation_index) * d;
                         const double c = std::exp(logc(0, e.relation_index));
                         const double coef = A(0, k) / c;
                         const double m_dot_g = messages->row(k).dot(gz.row(e.dst));
                         if (gWr) t.grad(relation_weights).middleRows(block, d).noalias() += coef * H.row(e.src).transpose() * gz.row(e.dst);
                         if (gH) t.grad(features).row(e.src).noalias() += coef * gz.row(e.dst) * Wr.middleRows(block, d).transpose();
                         if (gA) t.grad(alpha)(0, k) += m_dot_g / c;
                         if (gc) t.grad(log_norm)(0, e.relation_index) -= coef * m_dot_g;
                       }
                       for (int i = 0; i < V; ++i) {
                         const double a = A(0, E + i);
                         if (gW0) t.grad(self_weight).noalias() += a * H.row(i).transpose() * gz.row(i);
                         if (gH) t.grad(features).row(i).noalias() += a * gz.row(i) * W0.transpose();
                         if (gA) t.grad(alpha)(0, E + i) += self_messages->row(i).dot(gz.row(i));
                       }
                     });
}

ad::Var rgcn_step2(ad::Tape& tape, const GraphTopology& topology, ad::Var hidden, ad::Var alpha,
                   ad::Var neighbor_weight, ad::Var self_weight2) {
  const Matrix& H = tape.value(hidden);
  const Matrix& A = tape.value(alpha);
  const Matrix& W = tape.value(neighbor_weight);
  const Matrix& W0 = tape.value(self_weight2);
  check_alpha(A, topology);
  if (H.rows() != topology.vertex_count) throw ShapeError("rgcn step 2: one feature row per vertex required");
  if (W.rows() != H.cols() || W0.rows() != H.cols() || W.cols() != W0.cols()) {
    throw ShapeError("rgcn step 2: W and W_0 must both be " + std::to_string(H.cols()) + "xk");
  }
  const int V = topology.vertex_count;
  const int E = static_cast<int>(topology.edges.size());

  auto HW = std::make_shared<Matrix>(H * W);
  auto HW0 = std::make_shared<Matrix>(H * W0);
  Matrix z(V, W.cols());
  for (int i = 0; i < V; ++i) z.row(i) = A(0, E + i) * HW0->row(i);
  for (const auto& e : topology.edges) z.row(e.dst) += HW->row(e.src);
  auto mask = std::make_shared<Matrix>(relu_mask(z));
  Matrix out = z.cwiseMax(0.0);

  auto topo = std::make_shared<const GraphTopology>(topology);
  return tape.record(std::move(out), {hidden, alpha, neighbor_weight, self_weight2}, [=](ad::Tape& t, ad::Var self) {
    const Matrix gz = t.grad(self).cwiseProduct(*mask);
    const Matrix& H = t.value(hidden);
    const Matrix& A = t.value(alpha);
    // Row i of `scaled` = a_ii * gz_i (self path); `gathered` row j sums gz over out-edges of j.
    Matrix scaled(V, gz.cols());
    Matrix gathered = Matrix::Zero(V, gz.cols());
    for (int i = 0; i < V; ++i) scaled.row(i) = A(0, E + i) * gz.row(i);
    for (const auto& e : topo->edges) gathered.row(e.src) += gz.row(e.dst);
    if (t.needs_grad(neighbor_weight)) t.grad(neighbor_weight).noalias() += H.transpose() * gathered;
    if (t.needs_grad(self_weight2)) t.grad(self_weight2).noalias() += H.transpose() * scaled;
    if (t.needs_grad(hidden)) {
      t.grad(hidden).noalias() += gathered * t.value(neighbor_weight).transpose();
      t.grad(hidden).noalias() += scaled * t.value(self_weight2).transpose();
    }
    if (t.needs_grad(alpha)) {
      for (int i = 0; i < V; ++i) t.grad(alpha)(0, E + i) += HW0->row(i).dot(gz.row(i));
    }
  });
}

namespace {

Matrix alpha_row(const ConversationGraph& graph) {
  const auto E = static_cast<Eigen::Index>(graph.edge_weights.size());
  Matrix a(1, E + static_cast<Eigen::Index>(graph.self_weights.size()));
  for (Eigen::Index k = 0; k < E; ++k) a(0, k) = graph.edge_weights[static_cast<std::size_t>(k)];
  for (std::size_t i = 0; i < graph.self_weights.size(); ++i) a(0, E + static_cast<Eigen::Index>(i)) = graph.self_weights[i];
  return a;
}

}  // namespace

Matrix rgcn_step1(const ConversationGraph& graph, const Matrix& features, const RgcnWeights& weights) {
  ad::Tape tape;
  return tape.value(rgcn_step1(tape, graph.topology, tape.constant(features), tape.constant(alpha_row(graph)),
                               tape.constant(weights.relation_weights), tape.constant(weights.self_weight),
                               tape.constant(weights.log_norm)));
}

Matrix rgcn_step2(const ConversationGraph& graph, const Matrix& hidden, const RgcnWeights& weights) {
  ad::Tape tape;
  return tape.value(rgcn_step2(tape, graph.topology, tape.constant(hidden), tape.constant(alpha_row(graph)),
                               tape.constant(weights.neighbor_weight), tape.constant(weights.self_weight2)));
}

Matrix transform(const ConversationGraph& graph, const Matrix& features, const RgcnWeights& weights) {
  return rgcn_step2(graph, rgcn_step1(graph, features, weights), weights);
}

}  // namespace derail
