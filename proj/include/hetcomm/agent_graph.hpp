#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hetcomm {

struct AgentClassId {
  std::size_t value = 0;
  auto operator<=>(const AgentClassId&) const = default;
};

// Directed arc: source's features flow into target's aggregation.
struct Arc {
  std::size_t source = 0;
  std::size_t target = 0;
  auto operator<=>(const Arc&) const = default;
};

// Dense labeling of ordered class pairs: r = from * |C| + to.
class RelationIndex {
 public:
  explicit RelationIndex(std::size_t num_classes);

  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t num_relations() const noexcept { return num_classes_ * num_classes_; }
  std::size_t relation(AgentClassId from, AgentClassId to) const;

 private:
  std::size_t num_classes_;
};

// Immutable directed labeled agent graph. Node u is agent u; every arc is
// labeled with the relation of its (source class, target class) pair.
class HeterogeneousAgentGraph {
 public:
  HeterogeneousAgentGraph() = default;

  // Rejects out-of-range endpoints, self-arcs, duplicate arcs and class ids
  // outside [0, num_classes).
  static HeterogeneousAgentGraph build(std::size_t num_classes, std::vector<AgentClassId> node_classes,
                                       std::vector<Arc> arcs);

  // Block-diagonal union; node indices of part k are offset by the node
  // counts of parts 0..k-1. All parts must share num_classes.
  static HeterogeneousAgentGraph disjoint_union(std::span<const HeterogeneousAgentGraph> parts);

  std::size_t num_nodes() const noexcept { return node_class_.size(); }
  std::size_t num_classes() const noexcept { return relations_.num_classes(); }
  std::size_t num_relations() const noexcept { return relations_.num_relations(); }
  const RelationIndex& relation_index() const noexcept { return relations_; }

  AgentClassId node_class(std::size_t node) const;
  std::span<const AgentClassId> node_classes() const noexcept { return node_class_; }
  std::span<const Arc> arcs() const noexcept { return arcs_; }
  std::span<const std::size_t> arc_relations() const noexcept { return arc_relation_; }

  // Sources j of arcs (j, node) with relation r, ascending.
  std::span<const std::size_t> neighbors_by_relation(std::size_t node, std::size_t relation) const;
  // All sources of arcs into node, ascending.
  std::vector<std::size_t> in_neighbors(std::size_t node) const;
  // |N_i^r|; zero means the relation contributes no term for this node.
  std::size_t degree_normalizer(std::size_t node, std::size_t relation) const;
  // Number of distinct relation labels carried by at least one arc.
  std::size_t relations_in_use() const;

  // One line per node "node <id> class <c>", then one per arc
  // "arc <src> <dst> rel <r>".
  std::string dump() const;
  // Parses dump() output; the class count must be given since unused
  // classes leave no trace in the text.
  static HeterogeneousAgentGraph parse(const std::string& text, std::size_t num_classes);

  bool operator==(const HeterogeneousAgentGraph& other) const;

 private:
  explicit HeterogeneousAgentGraph(std::size_t num_classes) : relations_(num_classes) {}

  void index_neighbors();

  RelationIndex relations_{1};
  std::vector<AgentClassId> node_class_;
  std::vector<Arc> arcs_;
  std::vector<std::size_t> arc_relation_;
  // CSR over (node, relation) buckets of incoming sources.
  std::vector<std::size_t> bucket_offset_;
  std::vector<std::size_t> bucket_source_;
};

}  // namespace hetcomm
