#pragma once

#include "derail/autodiff.hpp"
#include "derail/graph.hpp"

namespace derail {

// Weights of the two-step relational convolution for one channel. Row
// vectors throughout: a message is h_j * W.
struct RgcnWeights {
  // Relation r occupies rows [r*d, (r+1)*d) of this (R*d) x d' stack.
  Matrix relation_weights;
  Matrix self_weight;       // W_0,   d  x d'
  Matrix neighbor_weight;   // W,     d' x d''
  Matrix self_weight2;      // W_0^(2), d' x d''
  // c_r = exp(log_norm(r)) > 0, one per relation.
  RowVector log_norm;

  int relation_count() const { return static_cast<int>(log_norm.size()); }
};

// Step 1: H1_i = relu( sum_r sum_{j in N_i^r} (a_ij / c_r) h_j W_r + a_ii h_i W_0 ).
// `alpha` is the 1 x (E + V) output of attention_weights.
ad::Var rgcn_step1(ad::Tape& tape, const GraphTopology& topology, ad::Var features, ad::Var alpha,
                   ad::Var relation_weights, ad::Var self_weight, ad::Var log_norm);

// Step 2: H2_i = relu( sum_{j in N_i} h1_j W + a_ii h1_i W_0^(2) ). The
// neighbour sum is unweighted and ignores relation types; only the self
// weight a_ii enters.
ad::Var rgcn_step2(ad::Tape& tape, const GraphTopology& topology, ad::Var hidden, ad::Var alpha,
                   ad::Var neighbor_weight, ad::Var self_weight2);

Matrix rgcn_step1(const ConversationGraph& graph, const Matrix& features, const RgcnWeights& weights);
Matrix rgcn_step2(const ConversationGraph& graph, const Matrix& hidden, const RgcnWeights& weights);
// step2(step1(H')).
Matrix transform(const ConversationGraph& graph, const Matrix& features, const RgcnWeights& weights);

}  // namespace derail
