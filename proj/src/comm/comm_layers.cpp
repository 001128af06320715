#include "hetcomm/comm_layers.hpp"

#include <algorithm>

#include "hetcomm/autodiff/ops.hpp"
#include "hetcomm/error.hpp"

namespace hetcomm::comm {

using ad::Tensor;

std::string_view to_string(CommKind kind) {
  switch (kind) {
    case CommKind::none: return "none";
    case CommKind::rgcn: return "rgcn";
    case CommKind::gat: return "gat";
  }
  return "none";
}

CommKind parse_comm_kind(std::string_view text) {
  if (text == "none") return CommKind::none;
  if (text == "rgcn") return CommKind::rgcn;
  if (text == "gat") return CommKind::gat;
  throw ConfigError("unknown communication kind '" + std::string(text) + "' (expected rgcn, gat or none)");
}

namespace {

void check_features(const HeterogeneousAgentGraph& graph, const Tensor& features, std::size_t width,
                    const char* op) {
  if (features.rank() != 2 || features.cols() != width || features.rows() != graph.num_nodes()) {
    throw ShapeError(op, "features " + ad::to_string(features.shape()) + " for " +
                             std::to_string(graph.num_nodes()) + " nodes of width " + std::to_string(width));
  }
}

}  // namespace

RgcnLayer::RgcnLayer(std::string prefix, std::size_t in_width, std::size_t out_width, std::size_t num_relations,
                     std::size_t num_bases, double negative_slope)
    : prefix_(std::move(prefix)),
      in_width_(in_width),
      out_width_(out_width),
      num_relations_(num_relations),
      num_bases_(num_bases),
      negative_slope_(negative_slope) {
  if (num_bases_ == 0 || num_bases_ > num_relations_) {
    throw ConfigError("rgcn basis count " + std::to_string(num_bases_) + " must be in [1, " +
                      std::to_string(num_relations_) + "]");
  }
}

std::string RgcnLayer::basis_name(std::size_t b) const { return prefix_ + ".basis" + std::to_string(b); }

void RgcnLayer::init_parameters(ad::ParameterStore& store, Rng& rng) const {
  for (std::size_t b = 0; b < num_bases_; ++b) {
    store.add(basis_name(b), {in_width_, out_width_}, fan_in_uniform(in_width_ * out_width_, in_width_, rng));
  }
  store.add(coefficients_name(), {num_relations_, num_bases_},
            fan_in_uniform(num_relations_ * num_bases_, num_bases_, rng));
  store.add(self_name(), {in_width_, out_width_}, fan_in_uniform(in_width_ * out_width_, in_width_, rng));
}

void RgcnLayer::check_input(const HeterogeneousAgentGraph& graph, const Tensor& features) const {
  check_features(graph, features, in_width_, "rgcn_forward");
  if (graph.num_relations() != num_relations_) {
    throw ShapeError("rgcn_forward", "graph has " + std::to_string(graph.num_relations()) +
                                         " relations, layer expects " + std::to_string(num_relations_));
  }
}

Tensor RgcnLayer::preactivation(const ad::ParameterStore& store, const HeterogeneousAgentGraph& graph,
                                const Tensor& features) const {
  check_input(graph, features);
  Tensor out = ad::matmul(features, store.get(self_name()));
  const auto arcs = graph.arcs();
  if (arcs.empty()) return out;

  const std::size_t n_arcs = arcs.size();
  std::vector<std::size_t> source(n_arcs), target(n_arcs);
  std::vector<double> inv_degree(n_arcs);
  const auto relation = graph.arc_relations();
  for (std::size_t e = 0; e < n_arcs; ++e) {
    source[e] = arcs[e].source;
    target[e] = arcs[e].target;
    inv_degree[e] = 1.0 / static_cast<double>(graph.degree_normalizer(arcs[e].target, relation[e]));
  }

  // Per-arc basis weights a_{r(e),b} / c_{i,r(e)}; the sum over relations is
  // regrouped per basis so only B dense products are needed.
  Tensor arc_coeff = ad::gather_rows(store.get(coefficients_name()), relation);
  arc_coeff = ad::mul(arc_coeff, Tensor::from({n_arcs, 1}, std::move(inv_degree)));
  const Tensor messages = ad::gather_rows(features, source);
  for (std::size_t b = 0; b < num_bases_; ++b) {
    Tensor weighted = ad::mul(messages, ad::slice(arc_coeff, 1, b, b + 1));
    Tensor pooled = ad::scatter_add_rows(weighted, target, graph.num_nodes());
    out = ad::add(out, ad::matmul(pooled, store.get(basis_name(b))));
  }
  return out;
}

Tensor RgcnLayer::forward(const ad::ParameterStore& store, const HeterogeneousAgentGraph& graph,
                          const Tensor& features) const {
  return ad::leaky_relu(preactivation(store, graph, features), negative_slope_);
}

Tensor RgcnLayer::relation_matrix(const ad::ParameterStore& store, std::size_t relation) const {
  if (relation >= num_relations_) throw GraphError("relation " + std::to_string(relation) + " out of range");
  const Tensor& coeff = store.get(coefficients_name());
  Tensor w;
  for (std::size_t b = 0; b < num_bases_; ++b) {
    Tensor a = ad::slice(ad::slice(coeff, 0, relation, relation + 1), 1, b, b + 1);
    Tensor term = ad::mul(store.get(basis_name(b)), a);
    w = w.defined() ? ad::add(w, term) : term;
  }
  return w;
}

GatLayer::GatLayer(std::string prefix, std::size_t in_width, std::size_t out_width, std::size_t num_heads,
                   double negative_slope, double attention_slope)
    : prefix_(std::move(prefix)),
      in_width_(in_width),
      out_width_(out_width),
      num_heads_(num_heads),
      negative_slope_(negative_slope),
      attention_slope_(attention_slope) {
  if (num_heads_ == 0 || out_width_ % num_heads_ != 0) {
    throw ConfigError("gat width " + std::to_string(out_width_) + " is not divisible by " +
                      std::to_string(num_heads_) + " heads");
  }
}

void GatLayer::init_parameters(ad::ParameterStore& store, Rng& rng) const {
  const std::size_t hw = head_width();
  store.add(prefix_ + ".weight", {in_width_, out_width_}, fan_in_uniform(in_width_ * out_width_, in_width_, rng));
  store.add(prefix_ + ".att_src", {hw, num_heads_}, fan_in_uniform(hw * num_heads_, hw, rng));
  store.add(prefix_ + ".att_dst", {hw, num_heads_}, fan_in_uniform(hw * num_heads_, hw, rng));
}

std::vector<Arc> GatLayer::attention_arcs(const HeterogeneousAgentGraph& graph) {
  std::vector<Arc> arcs(graph.arcs().begin(), graph.arcs().end());
  for (std::size_t u = 0; u < graph.num_nodes(); ++u) arcs.push_back({u, u});
  return arcs;
}

GatLayer::HeadScores GatLayer::attend(const ad::ParameterStore& store, const HeterogeneousAgentGraph& graph,
                                      const Tensor& features, const std::vector<Arc>& arcs) const {
  check_features(graph, features, in_width_, "gat_forward");
  std::vector<std::size_t> source(arcs.size()), target(arcs.size());
  for (std::size_t e = 0; e < arcs.size(); ++e) {
    source[e] = arcs[e].source;
    target[e] = arcs[e].target;
  }
  const Tensor projected = ad::matmul(features, store.get(prefix_ + ".weight"));
  const Tensor& att_src = store.get(prefix_ + ".att_src");
  const Tensor& att_dst = store.get(prefix_ + ".att_dst");
  const std::size_t hw = head_width();

  HeadScores scores;
  for (std::size_t h = 0; h < num_heads_; ++h) {
    Tensor z = ad::slice(projected, 1, h * hw, (h + 1) * hw);
    Tensor s_src = ad::matmul(z, ad::slice(att_src, 1, h, h + 1));
    Tensor s_dst = ad::matmul(z, ad::slice(att_dst, 1, h, h + 1));
    Tensor logits = ad::add(ad::gather_rows(s_dst, target), ad::gather_rows(s_src, source));
    logits = ad::leaky_relu(logits, attention_slope_);
    scores.attention.push_back(ad::segment_softmax(logits, target, graph.num_nodes()));
    scores.projected.push_back(std::move(z));
  }
  return scores;
}

Tensor GatLayer::forward(const ad::ParameterStore& store, const HeterogeneousAgentGraph& graph,
                         const Tensor& features) const {
  const auto arcs = attention_arcs(graph);
  const HeadScores scores = attend(store, graph, features, arcs);
  std::vector<std::size_t> source(arcs.size()), target(arcs.size());
  for (std::size_t e = 0; e < arcs.size(); ++e) {
    source[e] = arcs[e].source;
    target[e] = arcs[e].target;
  }
  std::vector<Tensor> heads;
  heads.reserve(num_heads_);
  for (std::size_t h = 0; h < num_heads_; ++h) {
    Tensor weighted = ad::mul(ad::gather_rows(scores.projected[h], source), scores.attention[h]);
    heads.push_back(ad::scatter_add_rows(weighted, target, graph.num_nodes()));
  }
  return ad::leaky_relu(num_heads_ == 1 ? heads.front() : ad::concat(heads, 1), negative_slope_);
}

std::vector<std::vector<double>> GatLayer::attention_weights(const ad::ParameterStore& store,
                                                             const HeterogeneousAgentGraph& graph,
                                                             const Tensor& features) const {
  const auto scores = attend(store, graph, features, attention_arcs(graph));
  std::vector<std::vector<double>> out;
  for (const auto& a : scores.attention) out.emplace_back(a.values().begin(), a.values().end());
  return out;
}

CommStack::CommStack(const CommModuleConfig& config, std::size_t num_relations) : config_(config) {
  if (config_.kind == CommKind::none) return;
  for (std::size_t k = 0; k < config_.num_layers; ++k) {
    if (config_.kind == CommKind::rgcn) {
      // A single-class team has one relation; more bases than relations
      // would not compress anything.
      rgcn_.emplace_back(layer_prefix(k), config_.width, config_.width, num_relations,
                         std::min(config_.num_bases, num_relations), config_.negative_slope);
    } else {
      gat_.emplace_back(layer_prefix(k), config_.width, config_.width, config_.num_heads, config_.negative_slope,
                        config_.attention_slope);
    }
  }
}

void CommStack::init_parameters(ad::ParameterStore& store, Rng& rng) const {
  for (const auto& layer : rgcn_) layer.init_parameters(store, rng);
  for (const auto& layer : gat_) layer.init_parameters(store, rng);
}

Tensor CommStack::forward(const ad::ParameterStore& store, const HeterogeneousAgentGraph& graph,
                          const Tensor& features) const {
  if (features.rank() != 2 || features.cols() != config_.width) {
    throw ShapeError("comm_stack_forward",
                     ad::to_string(features.shape()) + " vs module width " + std::to_string(config_.width));
  }
  Tensor x = features;
  for (const auto& layer : rgcn_) x = layer.forward(store, graph, x);
  for (const auto& layer : gat_) x = layer.forward(store, graph, x);
  return x;
}

}  // namespace hetcomm::comm
