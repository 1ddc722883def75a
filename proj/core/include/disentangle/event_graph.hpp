#pragma once

// DAG of latent probability heads and composed events. Composed events are
// closed-form formulas over head outputs (products, complements and weighted
// sums), evaluated per sample and differentiated by the chain rule.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "disentangle/nn.hpp"

namespace disentangle::graph {

using nn::Index;
using nn::Vector;

/// Per-variable vectors keyed by variable name.
using Values = std::map<std::string, Vector, std::less<>>;

class Formula {
 public:
  enum class Kind { Ref, Product, Complement, WeightedSum };

  /// Reference to a head or to another composed node.
  static Formula ref(std::string name);
  static Formula product(std::vector<Formula> factors);
  static Formula complement(Formula inner);
  static Formula weighted_sum(std::vector<std::pair<double, Formula>> terms);

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] std::span<const Formula> children() const { return children_; }
  [[nodiscard]] std::span<const double> weights() const { return weights_; }

  /// Names of every Ref leaf, in depth-first order (may repeat).
  [[nodiscard]] std::vector<std::string> references() const;
  [[nodiscard]] std::string to_string() const;

 private:
  Formula() = default;

  Kind kind_ = Kind::Ref;
  std::string name_;
  std::vector<Formula> children_;
  std::vector<double> weights_;
};

struct LatentHead {
  std::string name;
  std::vector<Index> feature_subset;
  std::vector<Index> hidden_layers{3};
  nn::Activation hidden_activation = nn::Activation::ReLU;

  /// [|subset|, hidden..., 1]
  [[nodiscard]] std::vector<Index> layer_dims() const;
  /// hidden activation per hidden layer, then Sigmoid.
  [[nodiscard]] std::vector<nn::Activation> activations() const;
};

enum class NodeRole { Observed, AggregateOnly };

struct NodeDecl {
  std::string name;
  Formula formula;
};

struct GraphDescription {
  std::vector<LatentHead> heads;
  std::vector<NodeDecl> observed;
  std::vector<NodeDecl> aggregate;
};

struct ComposedNode {
  std::string name;
  Formula formula;
  NodeRole role;
};

class EventGraph {
 public:
  [[nodiscard]] std::span<const LatentHead> heads() const { return heads_; }
  /// Composed nodes in evaluation (topological) order.
  [[nodiscard]] std::span<const ComposedNode> nodes() const { return nodes_; }

  [[nodiscard]] const LatentHead* find_head(std::string_view name) const;
  [[nodiscard]] const ComposedNode* find_node(std::string_view name) const;
  [[nodiscard]] bool contains(std::string_view name) const;

  /// Heads first (declaration order), then composed nodes (topological order).
  [[nodiscard]] std::vector<std::string> variable_names() const;
  [[nodiscard]] std::vector<std::string> observed_names() const;

  /// Largest feature index any head reads, plus one.
  [[nodiscard]] Index required_feature_dim() const;

 private:
  friend EventGraph build_graph(GraphDescription description);

  std::vector<LatentHead> heads_;
  std::vector<ComposedNode> nodes_;
};

/// Validates names, references and acyclicity. Throws ConfigError.
EventGraph build_graph(GraphDescription description);

enum class GraphPreset { Product2, EmailChain, SearchDag };

std::string_view to_string(GraphPreset p);
GraphPreset parse_graph_preset(std::string_view name);

/// Preset with every head reading all `feature_dim` features.
GraphDescription preset_description(GraphPreset preset, Index feature_dim,
                                    std::vector<Index> hidden_layers = {3},
                                    nn::Activation hidden_activation = nn::Activation::ReLU);

/// Variables reported by experiments on a preset. For SEARCH_DAG this is the
/// eight tracked events (AdNotShown is an intermediate only).
std::vector<std::string> reported_variables(GraphPreset preset);

namespace names {
inline constexpr std::string_view kY = "Y";
inline constexpr std::string_view kY1 = "Y1";
inline constexpr std::string_view kY2 = "Y2";

inline constexpr std::string_view kSend = "Send";
inline constexpr std::string_view kOpenGivenSend = "Open|Send";
inline constexpr std::string_view kOpen = "Open";
inline constexpr std::string_view kClickGivenOpen = "Click|Open";
inline constexpr std::string_view kClick = "Click";

inline constexpr std::string_view kSearch = "Search";
inline constexpr std::string_view kAdShownGivenSearch = "AdShown|Search";
inline constexpr std::string_view kAdClickGivenAdShown = "AdClick|AdShown";
inline constexpr std::string_view kOrgClickGivenAdShown = "OrgClick|AdShown";
inline constexpr std::string_view kOrgClickGivenAdNotShown = "OrgClick|AdNotShown";
inline constexpr std::string_view kAdShown = "AdShown";
inline constexpr std::string_view kAdNotShown = "AdNotShown";
inline constexpr std::string_view kAdClick = "AdClick";
inline constexpr std::string_view kOrgClick = "OrgClick";
}  // namespace names

/// Values for every head and composed node. Throws EvaluationError when a
/// head vector is missing and ShapeError on length mismatch.
Values eval_graph(const EventGraph& graph, const Values& head_values);

/// d(sum_v <node_grads[v], value_v>) / d(head output) for every head.
/// node_grads may be keyed by composed nodes or by heads.
Values graph_backward(const EventGraph& graph, const Values& head_values, const Values& node_grads);

struct ScaleDiagnostic {
  double mean_ratio = 0.0;
  double coefficient_of_variation = 0.0;
  std::size_t count = 0;
  std::size_t excluded = 0;  // samples with truth <= 1e-6
};

inline constexpr double kRatioTruthFloor = 1e-6;

/// Ratio estimated/truth summarized over samples with truth > 1e-6.
ScaleDiagnostic scale_diagnostic(const Vector& estimated, const Vector& truth);

}  // namespace disentangle::graph
