#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "hetcomm/agent_graph.hpp"
#include "hetcomm/autodiff/parameter_store.hpp"
#include "hetcomm/autodiff/tensor.hpp"
#include "hetcomm/random.hpp"

namespace hetcomm::comm {

enum class CommKind { none, rgcn, gat };

std::string_view to_string(CommKind kind);
CommKind parse_comm_kind(std::string_view text);

struct CommModuleConfig {
  CommKind kind = CommKind::rgcn;
  std::size_t num_layers = 2;
  std::size_t width = 96;
  std::size_t num_bases = 2;
  std::size_t num_heads = 3;
  double negative_slope = 0.01;
  // Slope inside the attention scoring function.
  double attention_slope = 0.2;
};

// Relational graph convolution with basis-decomposed relation matrices:
//
//   v_i' = act( sum_r sum_{j in N_i^r} (1/|N_i^r|) W_r v_j + W_0 v_i ),
//   W_r  = sum_b a_{r,b} V_b.
//
// Parameters: "<prefix>.basis<b>" (in x out), "<prefix>.coefficients"
// (relations x bases), "<prefix>.self" (in x out). No bias.
class RgcnLayer {
 public:
  RgcnLayer(std::string prefix, std::size_t in_width, std::size_t out_width, std::size_t num_relations,
            std::size_t num_bases, double negative_slope);

  void init_parameters(ad::ParameterStore& store, Rng& rng) const;

  // Sum inside the activation. Features are [nodes, in_width].
  ad::Tensor preactivation(const ad::ParameterStore& store, const HeterogeneousAgentGraph& graph,
                           const ad::Tensor& features) const;
  ad::Tensor forward(const ad::ParameterStore& store, const HeterogeneousAgentGraph& graph,
                     const ad::Tensor& features) const;

  // Materialized W_r.
  ad::Tensor relation_matrix(const ad::ParameterStore& store, std::size_t relation) const;

  std::string basis_name(std::size_t b) const;
  std::string coefficients_name() const { return prefix_ + ".coefficients"; }
  std::string self_name() const { return prefix_ + ".self"; }

  std::size_t in_width() const noexcept { return in_width_; }
  std::size_t out_width() const noexcept { return out_width_; }
  std::size_t num_relations() const noexcept { return num_relations_; }
  std::size_t num_bases() const noexcept { return num_bases_; }
  double negative_slope() const noexcept { return negative_slope_; }

 private:
  void check_input(const HeterogeneousAgentGraph& graph, const ad::Tensor& features) const;

  std::string prefix_;
  std::size_t in_width_;
  std::size_t out_width_;
  std::size_t num_relations_;
  std::size_t num_bases_;
  double negative_slope_;
};

// Multi-head graph attention over each node's incoming arcs plus itself.
// Head outputs are concatenated, then passed through LeakyReLU.
//
// Parameters: "<prefix>.weight" (in x out), "<prefix>.att_src" and
// "<prefix>.att_dst" (head_width x heads).
class GatLayer {
 public:
  GatLayer(std::string prefix, std::size_t in_width, std::size_t out_width, std::size_t num_heads,
           double negative_slope, double attention_slope);

  void init_parameters(ad::ParameterStore& store, Rng& rng) const;

  ad::Tensor forward(const ad::ParameterStore& store, const HeterogeneousAgentGraph& graph,
                     const ad::Tensor& features) const;

  // Attention coefficients per head, aligned with attention_arcs(graph).
  std::vector<std::vector<double>> attention_weights(const ad::ParameterStore& store,
                                                     const HeterogeneousAgentGraph& graph,
                                                     const ad::Tensor& features) const;
  // Graph arcs followed by one self-loop per node.
  static std::vector<Arc> attention_arcs(const HeterogeneousAgentGraph& graph);

  std::size_t num_heads() const noexcept { return num_heads_; }
  std::size_t head_width() const noexcept { return out_width_ / num_heads_; }

 private:
  struct HeadScores {
    std::vector<ad::Tensor> projected;  // per head [nodes, head_width]
    std::vector<ad::Tensor> attention;  // per head [arcs + nodes, 1]
  };
  HeadScores attend(const ad::ParameterStore& store, const HeterogeneousAgentGraph& graph,
                    const ad::Tensor& features, const std::vector<Arc>& arcs) const;

  std::string prefix_;
  std::size_t in_width_;
  std::size_t out_width_;
  std::size_t num_heads_;
  double negative_slope_;
  double attention_slope_;
};

// K communication layers applied in sequence over one graph.
class CommStack {
 public:
  CommStack(const CommModuleConfig& config, std::size_t num_relations);

  void init_parameters(ad::ParameterStore& store, Rng& rng) const;
  ad::Tensor forward(const ad::ParameterStore& store, const HeterogeneousAgentGraph& graph,
                     const ad::Tensor& features) const;

  const CommModuleConfig& config() const noexcept { return config_; }
  const std::vector<RgcnLayer>& rgcn_layers() const noexcept { return rgcn_; }
  const std::vector<GatLayer>& gat_layers() const noexcept { return gat_; }

  static std::string layer_prefix(std::size_t k) { return "comm.layer" + std::to_string(k); }

 private:
  CommModuleConfig config_;
  std::vector<RgcnLayer> rgcn_;
  std::vector<GatLayer> gat_;
};

}  // namespace hetcomm::comm
