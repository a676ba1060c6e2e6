#pragma once

#include <span>
#include <string>
#include <vector>

#include "derail/autodiff.hpp"
#include "derail/channels.hpp"
#include "derail/corpus.hpp"

namespace derail {

// Vertices are context turns, numbered by their position in the context
// window. Edges point from the source turn to the target turn; a vertex's
// in-neighbors are the sources of edges ending at it.

struct StructuralEdge {
  int src = 0;
  int dst = 0;
  bool reply = false;      // parent <-> child
  bool same_user = false;  // consecutive turns of one user

  bool operator==(const StructuralEdge&) const = default;
};

// Reply edges in both directions plus same-user edges (both directions)
// between consecutive occurrences of each user. Deduplicated, sorted by
// (src, dst). Parents outside `context` are ignored.
std::vector<StructuralEdge> build_edges(std::span<const Turn> context);
std::vector<StructuralEdge> build_edges(const Conversation& conv);

enum class Direction { forward = 0, backward = 1 };

struct RelationId {
  int source_slot = 0;
  int target_slot = 0;
  Direction direction = Direction::forward;

  bool operator==(const RelationId&) const = default;
  auto operator<=>(const RelationId&) const = default;
};

// Conversation-local user slots in order of first appearance; users past
// `max_users - 1` share the last (overflow) slot.
std::vector<int> user_slots(std::span<const Turn> context, int max_users);

RelationId relation_of(int src, int dst, std::span<const int> slots);
RelationId relation_of(int src, int dst, std::span<const Turn> context, int max_users);

// Dense id in [0, 2 * max_users^2).
int relation_index(const RelationId& r, int max_users);
inline int relation_vocabulary_size(int max_users) { return 2 * max_users * max_users; }

std::string to_string(const RelationId& r);

struct TopologyEdge {
  int src = 0;
  int dst = 0;
  RelationId relation;
  int relation_index = 0;
};

// Channel-independent structure shared by every graph of a conversation.
struct GraphTopology {
  int vertex_count = 0;
  int max_users = 0;
  std::vector<TopologyEdge> edges;
  // incoming[i] lists indices into `edges` whose dst is i.
  std::vector<std::vector<int>> incoming;
};

GraphTopology build_topology(std::span<const Turn> context, int max_users);

// Attention-weighted graph for one channel. For every vertex the self
// weight plus the weights of its incoming edges sum to one.
struct ConversationGraph {
  Channel channel = Channel::text;
  GraphTopology topology;
  std::vector<double> edge_weights;  // parallel to topology.edges
  std::vector<double> self_weights;  // per vertex
};

// Softmax over {i} and the in-neighbors of i of the bilinear scores
// h_i W_e h_j^T. Output is 1 x (E + V): edge weights in topology order,
// then self weights.
ad::Var attention_weights(ad::Tape& tape, const GraphTopology& topology, ad::Var features, ad::Var attention);

ConversationGraph compute_edge_weights(const Matrix& attention, const Matrix& features, const GraphTopology& topology,
                                       Channel channel = Channel::text);

// Weights 1 / (in-degree + 1) for the self loop and every incoming edge.
ConversationGraph uniform_graph(const GraphTopology& topology, Channel channel = Channel::text);

// One weighted graph per provided channel; all share one topology.
struct ChannelFeatures {
  Channel channel;
  const Matrix* features;   // encoded vertex features H'
  const Matrix* attention;  // W_e of that channel
};
std::vector<ConversationGraph> build_graph(std::span<const Turn> context, std::span<const ChannelFeatures> channels,
                                           int max_users);

// Graphviz rendering: vertices labelled "index:user", edges labelled
// "relation(direction)/weight" with 4-decimal weights.
std::string to_dot(const ConversationGraph& graph, std::span<const Turn> context, const std::string& name);

}  // namespace derail
