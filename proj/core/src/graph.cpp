#include "derail/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <unordered_map>

#include "derail/error.hpp"

namespace derail {

std::vector<StructuralEdge> build_edges(std::span<const Turn> context) {
  const int n = static_cast<int>(context.size());
  std::unordered_map<std::string_view, int> position;
  for (int i = 0; i < n; ++i) position.emplace(context[static_cast<std::size_t>(i)].turn_id, i);

  std::map<std::pair<int, int>, StructuralEdge> edges;
  auto link = [&](int a, int b, bool reply) {
    for (auto [s, d] : {std::pair{a, b}, std::pair{b, a}}) {
      StructuralEdge& e = edges[{s, d}];
      e.src = s;
      e.dst = d;
      (reply ? e.reply : e.same_user) = true;
    }
  };

  std::unordered_map<std::string_view, int> last_turn_of;
  for (int i = 0; i < n; ++i) {
    const Turn& t = context[static_cast<std::size_t>(i)];
    if (t.parent_id) {
      auto it = position.find(*t.parent_id);
      if (it != position.end() && it->second != i) link(it->second, i, true);
    }
    auto [it, fresh] = last_turn_of.try_emplace(t.user_id, i);
    if (!fresh) {
      link(it->second, i, false);
      it->second = i;
    }
  }

  std::vector<StructuralEdge> out;
  out.reserve(edges.size());
  for (auto& [key, e] : edges) out.push_back(e);
  return out;
}

std::vector<StructuralEdge> build_edges(const Conversation& conv) { return build_edges(conv.context()); }

std::vector<int> user_slots(std::span<const Turn> context, int max_users) {
  if (max_users < 1) throw ConfigError("max_users must be at least 1");
  std::unordered_map<std::string_view, int> first;
  std::vector<int> slots;
  slots.reserve(context.size());
  for (const Turn& t : context) {
    auto [it, fresh] = first.try_emplace(t.user_id, static_cast<int>(first.size()));
    slots.push_back(std::min(it->second, max_users - 1));
  }
  return slots;
}

RelationId relation_of(int src, int dst, std::span<const int> slots) {
  return RelationId{slots[static_cast<std::size_t>(src)], slots[static_cast<std::size_t>(dst)],
                    src < dst ? Direction::forward : Direction::backward};
}

RelationId relation_of(int src, int dst, std::span<const Turn> context, int max_users) {
  const auto slots = user_slots(context, max_users);
  return relation_of(src, dst, slots);
}

int relation_index(const RelationId& r, int max_users) {
  return (r.source_slot * max_users + r.target_slot) * 2 + static_cast<int>(r.direction);
}

std::string to_string(const RelationId& r) {
  return "u" + std::to_string(r.source_slot) + "->u" + std::to_string(r.target_slot) + "(" +
         (r.direction == Direction::forward ? "forward" : "backward") + ")";
}

GraphTopology build_topology(std::span<const Turn> context, int max_users) {
  GraphTopology g;
  g.vertex_count = static_cast<int>(context.size());
  g.max_users = max_users;
  g.incoming.resize(context.size());
  const auto slots = user_slots(context, max_users);
  for (const auto& e : build_edges(context)) {
    TopologyEdge te{e.src, e.dst, relation_of(e.src, e.dst, slots), 0};
    te.relation_index = relation_index(te.relation, max_users);
    g.incoming[static_cast<std::size_t>(e.dst)].push_back(static_cast<int>(g.edges.size()));
    g.edges.push_back(te);
  }
  return g;
}

ad::Var attention_weights(ad::Tape& tape, const GraphTopology& topology, ad::Var features, ad::Var attention) {
  const Matrix& H = tape.value(features);
  const Matrix& We = tape.value(attention);
  if (H.rows() != topology.vertex_count) {
    throw ShapeError("attention: " + std::to_string(H.rows()) + " feature rows for " +
                     std::to_string(topology.vertex_count) + " vertices");
  }
  if (We.rows() != H.cols() || We.cols() != H.cols()) {
    throw ShapeError("attention: W_e must be " + std::to_string(H.cols()) + "x" + std::to_string(H.cols()));
  }
  const int V = topology.vertex_count;
  const int E = static_cast<int>(topology.edges.size());
  // q_i = h_i W_e, so score(i, j) = q_i . h_j
  auto Q = std::make_shared<Matrix>(H * We);
  Matrix alpha(1, E + V);
  for (int i = 0; i < V; ++i) {
    const auto& in = topology.incoming[static_cast<std::size_t>(i)];
    double self_score = Q->row(i).dot(H.row(i));
    double top = self_score;
    std::vector<double> scores(in.size());
    for (std::size_t k = 0; k < in.size(); ++k) {
      scores[k] = Q->row(i).dot(H.row(topology.edges[static_cast<std::size_t>(in[k])].src));
      top = std::max(top, scores[k]);
    }
    double z = std::exp(self_score - top);
    for (double& s : scores) {
      s = std::exp(s - top);
      z += s;
    }
    alpha(0, E + i) = std::exp(self_score - top) / z;
    for (std::size_t k = 0; k < in.size(); ++k) alpha(0, in[k]) = scores[k] / z;
  }

  auto topo = std::make_shared<const GraphTopology>(topology);
  return tape.record(std::move(alpha), {features, attention}, [topo, features, attention, Q, V, E](ad::Tape& t, ad::Var self) {
    const GraphTopology& topology = *topo;
    const Matrix& H = t.value(features);
    const Matrix& We = t.value(attention);
    const Matrix& a = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix dQ = Matrix::Zero(H.rows(), H.cols());
    Matrix dH = Matrix::Zero(H.rows(), H.cols());
    for (int i = 0; i < V; ++i) {
      const auto& in = topology.incoming[static_cast<std::size_t>(i)];
      double mean = a(0, E + i) * g(0, E + i);
      for (int e : in) mean += a(0, e) * g(0, e);
      auto push = [&](double alpha, double grad, int j) {
        const double de = alpha * (grad - mean);
        dQ.row(i) += de * H.row(j);
        dH.row(j) += de * Q->row(i);
      };
      push(a(0, E + i), g(0, E + i), i);
      for (int e : in) push(a(0, e), g(0, e), topology.edges[static_cast<std::size_t>(e)].src);
    }
    if (t.needs_grad(attention)) t.grad(attention).noalias() += H.transpose() * dQ;
    if (t.needs_grad(features)) {
      dH.noalias() += dQ * We.transpose();
      t.grad(features) += dH;
    }
  });
}

ConversationGraph compute_edge_weights(const Matrix& attention, const Matrix& features, const GraphTopology& topology,
                                       Channel channel) {
  ad::Tape tape;
  ad::Var a = attention_weights(tape, topology, tape.constant(features), tape.constant(attention));
  const Matrix& alpha = tape.value(a);
  ConversationGraph g;
  g.channel = channel;
  g.topology = topology;
  const auto E = static_cast<Eigen::Index>(topology.edges.size());
  g.edge_weights.assign(alpha.data(), alpha.data() + E);
  g.self_weights.assign(alpha.data() + E, alpha.data() + alpha.cols());
  return g;
}

std::vector<ConversationGraph> build_graph(std::span<const Turn> context, std::span<const ChannelFeatures> channels,
                                           int max_users) {
  const GraphTopology topology = build_topology(context, max_users);
  std::vector<ConversationGraph> out;
  out.reserve(channels.size());
  for (const auto& c : channels) out.push_back(compute_edge_weights(*c.attention, *c.features, topology, c.channel));
  return out;
}

namespace {

std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace

ConversationGraph uniform_graph(const GraphTopology& topology, Channel channel) {
  ConversationGraph g;
  g.channel = channel;
  g.topology = topology;
  g.edge_weights.resize(topology.edges.size());
  g.self_weights.resize(static_cast<std::size_t>(topology.vertex_count));
  for (int i = 0; i < topology.vertex_count; ++i) {
    const auto& in = topology.incoming[static_cast<std::size_t>(i)];
    const double w = 1.0 / static_cast<double>(in.size() + 1);
    g.self_weights[static_cast<std::size_t>(i)] = w;
    for (int e : in) g.edge_weights[static_cast<std::size_t>(e)] = w;
  }
  return g;
}

std::string to_dot(const ConversationGraph& graph, std::span<const Turn> context, const std::string& name) {
  std::string out = "digraph \"" + dot_escape(name) + "\" {\n";
  out += "  graph [label=\"" + dot_escape(name) + " (" + std::string(to_string(graph.channel)) + ")\"];\n";
  char buf[32];
  for (int i = 0; i < graph.topology.vertex_count; ++i) {
    std::snprintf(buf, sizeof buf, "%.4f", graph.self_weights[static_cast<std::size_t>(i)]);
    const Turn& t = context[static_cast<std::size_t>(i)];
    out += "  v" + std::to_string(i) + " [label=\"" + std::to_string(i) + ":" + dot_escape(t.user_id) +
           "\\nself " + buf + "\"];\n";
  }
  for (std::size_t k = 0; k < graph.topology.edges.size(); ++k) {
    const auto& e = graph.topology.edges[k];
    std::snprintf(buf, sizeof buf, "%.4f", graph.edge_weights[k]);
    out += "  v" + std::to_string(e.src) + " -> v" + std::to_string(e.dst) + " [label=\"" +
           to_string(e.relation) + "/" + buf + "\"];\n";
  }
  out += "}\n";
  return out;
}

}  // namespace derail
