#include "hetcomm/agent_graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "hetcomm/error.hpp"

namespace hetcomm {

RelationIndex::RelationIndex(std::size_t num_classes) : num_classes_(num_classes) {
  if (num_classes == 0) throw GraphError("at least one agent class is required");
}

std::size_t RelationIndex::relation(AgentClassId from, AgentClassId to) const {
  if (from.value >= num_classes_ || to.value >= num_classes_) {
    throw GraphError("class id out of range for " + std::to_string(num_classes_) + " classes");
  }
  return from.value * num_classes_ + to.value;
}

HeterogeneousAgentGraph HeterogeneousAgentGraph::build(std::size_t num_classes,
                                                       std::vector<AgentClassId> node_classes,
                                                       std::vector<Arc> arcs) {
  HeterogeneousAgentGraph g(num_classes);
  for (std::size_t u = 0; u < node_classes.size(); ++u) {
    if (node_classes[u].value >= num_classes) {
      throw GraphError("node " + std::to_string(u) + " has class " + std::to_string(node_classes[u].value) +
                       " but only " + std::to_string(num_classes) + " classes exist");
    }
  }
  const std::size_t n = node_classes.size();
  std::set<Arc> seen;
  for (const Arc& a : arcs) {
    if (a.source >= n || a.target >= n) {
      throw GraphError("arc (" + std::to_string(a.source) + "," + std::to_string(a.target) +
                       ") has an endpoint outside [0," + std::to_string(n) + ")");
    }
    if (a.source == a.target) throw GraphError("self-arc on node " + std::to_string(a.source));
    if (!seen.insert(a).second) {
      throw GraphError("duplicate arc (" + std::to_string(a.source) + "," + std::to_string(a.target) + ")");
    }
  }
  g.node_class_ = std::move(node_classes);
  g.arcs_ = std::move(arcs);
  g.arc_relation_.reserve(g.arcs_.size());
  for (const Arc& a : g.arcs_) {
    g.arc_relation_.push_back(g.relations_.relation(g.node_class_[a.source], g.node_class_[a.target]));
  }
  g.index_neighbors();
  return g;
}

void HeterogeneousAgentGraph::index_neighbors() {
  const std::size_t buckets = num_nodes() * num_relations();
  bucket_offset_.assign(buckets + 1, 0);
  for (std::size_t e = 0; e < arcs_.size(); ++e) {
    bucket_offset_[arcs_[e].target * num_relations() + arc_relation_[e] + 1] += 1;
  }
  for (std::size_t b = 0; b < buckets; ++b) bucket_offset_[b + 1] += bucket_offset_[b];
  bucket_source_.assign(arcs_.size(), 0);
  std::vector<std::size_t> fill(bucket_offset_.begin(), bucket_offset_.end() - 1);
  for (std::size_t e = 0; e < arcs_.size(); ++e) {
    bucket_source_[fill[arcs_[e].target * num_relations() + arc_relation_[e]]++] = arcs_[e].source;
  }
  for (std::size_t b = 0; b < buckets; ++b) {
    std::sort(bucket_source_.begin() + static_cast<std::ptrdiff_t>(bucket_offset_[b]),
              bucket_source_.begin() + static_cast<std::ptrdiff_t>(bucket_offset_[b + 1]));
  }
}

HeterogeneousAgentGraph HeterogeneousAgentGraph::disjoint_union(std::span<const HeterogeneousAgentGraph> parts) {
  if (parts.empty()) throw GraphError("disjoint_union of zero graphs");
  const std::size_t num_classes = parts.front().num_classes();
  HeterogeneousAgentGraph g(num_classes);
  std::size_t offset = 0;
  for (const auto& part : parts) {
    if (part.num_classes() != num_classes) throw GraphError("disjoint_union: class counts differ");
    g.node_class_.insert(g.node_class_.end(), part.node_class_.begin(), part.node_class_.end());
    for (std::size_t e = 0; e < part.arcs_.size(); ++e) {
      g.arcs_.push_back({part.arcs_[e].source + offset, part.arcs_[e].target + offset});
      g.arc_relation_.push_back(part.arc_relation_[e]);
    }
    offset += part.num_nodes();
  }
  g.index_neighbors();
  return g;
}

AgentClassId HeterogeneousAgentGraph::node_class(std::size_t node) const {
  if (node >= num_nodes()) throw GraphError("node " + std::to_string(node) + " out of range");
  return node_class_[node];
}

std::span<const std::size_t> HeterogeneousAgentGraph::neighbors_by_relation(std::size_t node,
                                                                            std::size_t relation) const {
  if (node >= num_nodes()) throw GraphError("node " + std::to_string(node) + " out of range");
  if (relation >= num_relations()) throw GraphError("relation " + std::to_string(relation) + " out of range");
  const std::size_t b = node * num_relations() + relation;
  return std::span<const std::size_t>(bucket_source_).subspan(bucket_offset_[b],
                                                              bucket_offset_[b + 1] - bucket_offset_[b]);
}

std::vector<std::size_t> HeterogeneousAgentGraph::in_neighbors(std::size_t node) const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < num_relations(); ++r) {
    auto nb = neighbors_by_relation(node, r);
    out.insert(out.end(), nb.begin(), nb.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t HeterogeneousAgentGraph::degree_normalizer(std::size_t node, std::size_t relation) const {
  return neighbors_by_relation(node, relation).size();
}

std::size_t HeterogeneousAgentGraph::relations_in_use() const {
  std::set<std::size_t> used(arc_relation_.begin(), arc_relation_.end());
  return used.size();
}

std::string HeterogeneousAgentGraph::dump() const {
  std::ostringstream os;
  for (std::size_t u = 0; u < num_nodes(); ++u) os << "node " << u << " class " << node_class_[u].value << '\n';
  for (std::size_t e = 0; e < arcs_.size(); ++e) {
    os << "arc " << arcs_[e].source << ' ' << arcs_[e].target << " rel " << arc_relation_[e] << '\n';
  }
  return os.str();
}

HeterogeneousAgentGraph HeterogeneousAgentGraph::parse(const std::string& text, std::size_t num_classes) {
  std::istringstream is(text);
  std::vector<AgentClassId> classes;
  std::vector<Arc> arcs;
  std::vector<std::size_t> stated_relations;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind, keyword;
    ls >> kind;
    if (kind == "node") {
      std::size_t id = 0, cls = 0;
      ls >> id >> keyword >> cls;
      if (!ls || keyword != "class" || id != classes.size()) {
        throw GraphError("graph dump line " + std::to_string(line_no) + ": malformed node entry");
      }
      classes.push_back({cls});
    } else if (kind == "arc") {
      Arc a;
      std::size_t rel = 0;
      ls >> a.source >> a.target >> keyword >> rel;
      if (!ls || keyword != "rel") {
        throw GraphError("graph dump line " + std::to_string(line_no) + ": malformed arc entry");
      }
      arcs.push_back(a);
      stated_relations.push_back(rel);
    } else {
      throw GraphError("graph dump line " + std::to_string(line_no) + ": unknown entry '" + kind + "'");
    }
  }
  auto g = build(num_classes, std::move(classes), std::move(arcs));
  if (!std::equal(stated_relations.begin(), stated_relations.end(), g.arc_relation_.begin())) {
    throw GraphError("graph dump relation labels disagree with node classes");
  }
  return g;
}

bool HeterogeneousAgentGraph::operator==(const HeterogeneousAgentGraph& other) const {
  return num_classes() == other.num_classes() && node_class_ == other.node_class_ && arcs_ == other.arcs_;
}

}  // namespace hetcomm
