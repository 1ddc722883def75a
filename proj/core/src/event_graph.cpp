#include "disentangle/event_graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "disentangle/errors.hpp"
#include "text_io.hpp"

namespace disentangle::graph {

Formula Formula::ref(std::string name) {
  if (name.empty()) throw ConfigError("formula reference with empty name");
  Formula f;
  f.kind_ = Kind::Ref;
  f.name_ = std::move(name);
  return f;
}

Formula Formula::product(std::vector<Formula> factors) {
  if (factors.empty()) throw ConfigError("product formula needs at least one factor");
  Formula f;
  f.kind_ = Kind::Product;
  f.children_ = std::move(factors);
  return f;
}

Formula Formula::complement(Formula inner) {
  Formula f;
  f.kind_ = Kind::Complement;
  f.children_.push_back(std::move(inner));
  return f;
}

Formula Formula::weighted_sum(std::vector<std::pair<double, Formula>> terms) {
  if (terms.empty()) throw ConfigError("weighted sum needs at least one term");
  Formula f;
  f.kind_ = Kind::WeightedSum;
  for (auto& [w, term] : terms) {
    if (!std::isfinite(w) || w < 0.0)
      throw ConfigError("weighted sum weights must be finite and non-negative");
    f.weights_.push_back(w);
    f.children_.push_back(std::move(term));
  }
  return f;
}

std::vector<std::string> Formula::references() const {
  std::vector<std::string> out;
  if (kind_ == Kind::Ref) {
    out.push_back(name_);
    return out;
  }
  for (const auto& c : children_) {
    auto sub = c.references();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::string Formula::to_string() const {
  switch (kind_) {
    case Kind::Ref:
      return name_;
    case Kind::Complement:
      return "(1 - " + children_[0].to_string() + ")";
    case Kind::Product: {
      std::string s = "(";
      for (std::size_t i = 0; i < children_.size(); ++i) {
        if (i) s += " * ";
        s += children_[i].to_string();
      }
      return s + ")";
    }
    case Kind::WeightedSum: {
      std::string s = "(";
      for (std::size_t i = 0; i < children_.size(); ++i) {
        if (i) s += " + ";
        s += detail::format_double(weights_[i]) + " * " + children_[i].to_string();
      }
      return s + ")";
    }
  }
  return {};
}

std::vector<Index> LatentHead::layer_dims() const {
  std::vector<Index> dims;
  dims.push_back(static_cast<Index>(feature_subset.size()));
  dims.insert(dims.end(), hidden_layers.begin(), hidden_layers.end());
  dims.push_back(1);
  return dims;
}

std::vector<nn::Activation> LatentHead::activations() const {
  std::vector<nn::Activation> acts(hidden_layers.size(), hidden_activation);
  acts.push_back(nn::Activation::Sigmoid);
  return acts;
}

const LatentHead* EventGraph::find_head(std::string_view name) const {
  for (const auto& h : heads_)
    if (h.name == name) return &h;
  return nullptr;
}

const ComposedNode* EventGraph::find_node(std::string_view name) const {
  for (const auto& n : nodes_)
    if (n.name == name) return &n;
  return nullptr;
}

bool EventGraph::contains(std::string_view name) const {
  return find_head(name) != nullptr || find_node(name) != nullptr;
}

std::vector<std::string> EventGraph::variable_names() const {
  std::vector<std::string> out;
  for (const auto& h : heads_) out.push_back(h.name);
  for (const auto& n : nodes_) out.push_back(n.name);
  return out;
}

std::vector<std::string> EventGraph::observed_names() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_)
    if (n.role == NodeRole::Observed) out.push_back(n.name);
  return out;
}

Index EventGraph::required_feature_dim() const {
  Index d = 0;
  for (const auto& h : heads_)
    for (Index i : h.feature_subset) d = std::max(d, i + 1);
  return d;
}

EventGraph build_graph(GraphDescription description) {
  std::set<std::string, std::less<>> seen;
  auto claim = [&](const std::string& name) {
    if (name.empty()) throw ConfigError("graph variable with empty name");
    if (!seen.insert(name).second) throw ConfigError("duplicate graph variable '" + name + "'");
  };

  for (const auto& h : description.heads) {
    claim(h.name);
    if (h.feature_subset.empty())
      throw ConfigError("head '" + h.name + "' has an empty feature subset");
    std::set<Index> unique(h.feature_subset.begin(), h.feature_subset.end());
    if (unique.size() != h.feature_subset.size() || *unique.begin() < 0)
      throw ConfigError("head '" + h.name + "' feature subset has negative or repeated indices");
    for (Index width : h.hidden_layers)
      if (width <= 0) throw ConfigError("head '" + h.name + "' has a non-positive hidden width");
  }

  struct Pending {
    NodeDecl decl;
    NodeRole role;
  };
  std::vector<Pending> pending;
  for (auto& d : description.observed) pending.push_back({std::move(d), NodeRole::Observed});
  for (auto& d : description.aggregate) pending.push_back({std::move(d), NodeRole::AggregateOnly});
  if (pending.empty()) throw ConfigError("graph declares no composed nodes");
  for (const auto& p : pending) claim(p.decl.name);

  std::map<std::string, std::size_t, std::less<>> node_index;
  for (std::size_t i = 0; i < pending.size(); ++i) node_index[pending[i].decl.name] = i;
  auto is_head = [&](std::string_view name) {
    return std::any_of(description.heads.begin(), description.heads.end(),
                       [&](const LatentHead& h) { return h.name == name; });
  };

  for (const auto& p : pending)
    for (const auto& r : p.decl.formula.references())
      if (!is_head(r) && !node_index.contains(r))
        throw ConfigError("node '" + p.decl.name + "' references undeclared variable '" + r + "'");

  // Depth-first topological order; a grey node reached again is a cycle.
  enum class Mark { White, Grey, Black };
  std::vector<Mark> mark(pending.size(), Mark::White);
  std::vector<std::size_t> order;
  auto visit = [&](auto&& self, std::size_t i) -> void {
    if (mark[i] == Mark::Black) return;
    if (mark[i] == Mark::Grey)
      throw ConfigError("graph has a cycle through node '" + pending[i].decl.name + "'");
    mark[i] = Mark::Grey;
    for (const auto& r : pending[i].decl.formula.references()) {
      auto it = node_index.find(r);
      if (it != node_index.end()) self(self, it->second);
    }
    mark[i] = Mark::Black;
    order.push_back(i);
  };
  for (std::size_t i = 0; i < pending.size(); ++i) visit(visit, i);

  EventGraph g;
  g.heads_ = std::move(description.heads);
  for (std::size_t i : order)
    g.nodes_.push_back({pending[i].decl.name, pending[i].decl.formula, pending[i].role});
  return g;
}

std::string_view to_string(GraphPreset p) {
  switch (p) {
    case GraphPreset::Product2:
      return "PRODUCT2";
    case GraphPreset::EmailChain:
      return "EMAIL_CHAIN";
    case GraphPreset::SearchDag:
      return "SEARCH_DAG";
  }
  return "PRODUCT2";
}

GraphPreset parse_graph_preset(std::string_view name) {
  for (auto p : {GraphPreset::Product2, GraphPreset::EmailChain, GraphPreset::SearchDag})
    if (to_string(p) == name) return p;
  throw ConfigError("unknown graph preset '" + std::string(name) +
                    "' (valid: PRODUCT2, EMAIL_CHAIN, SEARCH_DAG)");
}

GraphDescription preset_description(GraphPreset preset, Index feature_dim,
                                    std::vector<Index> hidden_layers,
                                    nn::Activation hidden_activation) {
  if (feature_dim <= 0) throw ConfigError("preset needs a positive feature dimension");
  std::vector<Index> all(static_cast<std::size_t>(feature_dim));
  for (Index i = 0; i < feature_dim; ++i) all[static_cast<std::size_t>(i)] = i;
  auto head = [&](std::string_view name) {
    return LatentHead{std::string(name), all, hidden_layers, hidden_activation};
  };
  auto ref = [](std::string_view name) { return Formula::ref(std::string(name)); };
  using namespace names;

  GraphDescription d;
  switch (preset) {
    case GraphPreset::Product2:
      d.heads = {head(kY1), head(kY2)};
      d.observed.push_back({std::string(kY), Formula::product({ref(kY1), ref(kY2)})});
      break;
    case GraphPreset::EmailChain:
      d.heads = {head(kSend), head(kOpenGivenSend), head(kClickGivenOpen)};
      d.observed.push_back({std::string(kOpen), Formula::product({ref(kSend), ref(kOpenGivenSend)})});
      d.observed.push_back({std::string(kClick), Formula::product({ref(kOpen), ref(kClickGivenOpen)})});
      break;
    case GraphPreset::SearchDag:
      d.heads = {head(kSearch), head(kAdShownGivenSearch), head(kAdClickGivenAdShown),
                 head(kOrgClickGivenAdShown), head(kOrgClickGivenAdNotShown)};
      d.observed.push_back(
          {std::string(kAdClick), Formula::product({ref(kAdShown), ref(kAdClickGivenAdShown)})});
      d.observed.push_back(
          {std::string(kOrgClick),
           Formula::weighted_sum({{1.0, Formula::product({ref(kAdShown), ref(kOrgClickGivenAdShown)})},
                                  {1.0, Formula::product({ref(kAdNotShown),
                                                          ref(kOrgClickGivenAdNotShown)})}})});
      d.aggregate.push_back(
          {std::string(kAdShown), Formula::product({ref(kSearch), ref(kAdShownGivenSearch)})});
      d.aggregate.push_back(
          {std::string(kAdNotShown),
           Formula::product({ref(kSearch), Formula::complement(ref(kAdShownGivenSearch))})});
      break;
  }
  return d;
}

std::vector<std::string> reported_variables(GraphPreset preset) {
  using namespace names;
  auto s = [](std::initializer_list<std::string_view> l) {
    return std::vector<std::string>(l.begin(), l.end());
  };
  switch (preset) {
    case GraphPreset::Product2:
      return s({kY, kY1, kY2});
    case GraphPreset::EmailChain:
      return s({kSend, kOpenGivenSend, kOpen, kClickGivenOpen, kClick});
    case GraphPreset::SearchDag:
      return s({kSearch, kAdShownGivenSearch, kAdShown, kOrgClickGivenAdShown,
                kOrgClickGivenAdNotShown, kOrgClick, kAdClickGivenAdShown, kAdClick});
  }
  return {};
}

namespace {

Vector evaluate(const Formula& f, const Values& values) {
  switch (f.kind()) {
    case Formula::Kind::Ref: {
      auto it = values.find(f.name());
      if (it == values.end()) throw EvaluationError("no values for variable '" + f.name() + "'");
      return it->second;
    }
    case Formula::Kind::Product: {
      Vector out = evaluate(f.children()[0], values);
      for (std::size_t i = 1; i < f.children().size(); ++i)
        out.array() *= evaluate(f.children()[i], values).array();
      return out;
    }
    case Formula::Kind::Complement:
      return (1.0 - evaluate(f.children()[0], values).array()).matrix();
    case Formula::Kind::WeightedSum: {
      Vector out = f.weights()[0] * evaluate(f.children()[0], values);
      for (std::size_t i = 1; i < f.children().size(); ++i)
        out += f.weights()[i] * evaluate(f.children()[i], values);
      return out;
    }
  }
  return {};
}

void accumulate(Values& adjoints, const std::string& name, const Vector& g) {
  auto it = adjoints.find(name);
  if (it == adjoints.end())
    adjoints.emplace(name, g);
  else
    it->second += g;
}

// Pushes `adjoint` (d loss / d value of f) down to the Ref leaves of f.
void backprop(const Formula& f, const Vector& adjoint, const Values& values, Values& adjoints) {
  switch (f.kind()) {
    case Formula::Kind::Ref:
      accumulate(adjoints, f.name(), adjoint);
      return;
    case Formula::Kind::Product: {
      const auto kids = f.children();
      std::vector<Vector> vals;
      vals.reserve(kids.size());
      for (const auto& k : kids) vals.push_back(evaluate(k, values));
      for (std::size_t i = 0; i < kids.size(); ++i) {
        Vector g = adjoint;
        for (std::size_t j = 0; j < kids.size(); ++j)
          if (j != i) g.array() *= vals[j].array();
        backprop(kids[i], g, values, adjoints);
      }
      return;
    }
    case Formula::Kind::Complement:
      backprop(f.children()[0], -adjoint, values, adjoints);
      return;
    case Formula::Kind::WeightedSum:
      for (std::size_t i = 0; i < f.children().size(); ++i)
        backprop(f.children()[i], f.weights()[i] * adjoint, values, adjoints);
      return;
  }
}

}  // namespace

Values eval_graph(const EventGraph& graph, const Values& head_values) {
  Values values;
  Index n = -1;
  for (const auto& h : graph.heads()) {
    auto it = head_values.find(h.name);
    if (it == head_values.end()) throw EvaluationError("missing values for head '" + h.name + "'");
    if (n < 0) n = it->second.size();
    if (it->second.size() != n)
      throw ShapeError("head '" + h.name + "' has " + std::to_string(it->second.size()) +
                       " values, expected " + std::to_string(n));
    values.emplace(h.name, it->second);
  }
  for (const auto& node : graph.nodes()) values.emplace(node.name, evaluate(node.formula, values));
  return values;
}

Values graph_backward(const EventGraph& graph, const Values& head_values, const Values& node_grads) {
  const Values values = eval_graph(graph, head_values);
  const Index n = values.begin()->second.size();

  Values adjoints;
  for (const auto& [name, g] : node_grads) {
    if (!graph.contains(name)) throw ConfigError("gradient supplied for unknown variable '" + name + "'");
    if (g.size() != n)
      throw ShapeError("gradient for '" + name + "' has " + std::to_string(g.size()) +
                       " entries, expected " + std::to_string(n));
    accumulate(adjoints, name, g);
  }

  const auto nodes = graph.nodes();
  for (std::size_t i = nodes.size(); i-- > 0;) {
    auto it = adjoints.find(nodes[i].name);
    if (it == adjoints.end()) continue;
    const Vector adj = it->second;
    backprop(nodes[i].formula, adj, values, adjoints);
  }

  Values out;
  for (const auto& h : graph.heads()) {
    auto it = adjoints.find(h.name);
    out.emplace(h.name, it == adjoints.end() ? Vector::Zero(n) : it->second);
  }
  return out;
}

ScaleDiagnostic scale_diagnostic(const Vector& estimated, const Vector& truth) {
  if (estimated.size() != truth.size())
    throw ShapeError("scale_diagnostic: estimated and truth lengths differ");
  ScaleDiagnostic d;
  std::vector<double> ratios;
  ratios.reserve(static_cast<std::size_t>(truth.size()));
  for (Index i = 0; i < truth.size(); ++i) {
    if (truth(i) > kRatioTruthFloor)
      ratios.push_back(estimated(i) / truth(i));
    else
      ++d.excluded;
  }
  if (ratios.empty()) throw ConfigError("scale_diagnostic: no samples with truth > 1e-6");
  d.count = ratios.size();
  double sum = 0.0;
  for (double r : ratios) sum += r;
  d.mean_ratio = sum / static_cast<double>(d.count);
  double ss = 0.0;
  for (double r : ratios) ss += (r - d.mean_ratio) * (r - d.mean_ratio);
  const double stddev = std::sqrt(ss / static_cast<double>(d.count));
  d.coefficient_of_variation = stddev / d.mean_ratio;
  return d;
}

}  // namespace disentangle::graph
