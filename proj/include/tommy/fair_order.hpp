#pragma once

// Likely-happened-before tournaments, cycle handling, and threshold batching.

#include <algorithm>
#include <concepts>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tommy/clock_stats.hpp"
#include "tommy/errors.hpp"

namespace tommy {

inline constexpr double kDefaultThreshold = 0.75;

struct Message {
  std::string id;
  std::string client;
  double local_ts = 0.0;            // client clock reading, microseconds
  std::optional<double> true_ts;    // ground truth, simulation only

  friend bool operator==(const Message&, const Message&) = default;
};

using ModelMap = std::map<std::string, ClockModel>;

// Probabilities are compared after rounding to 12 decimal digits so tie
// detection does not depend on the last bits of a platform's libm.
inline double round12(double p) { return std::round(p * 1e12) / 1e12; }

struct Edge {
  std::string from;
  std::string to;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

// Directed graph over messages with at most one edge per unordered pair.
// Freshly built tournaments have exactly one; cycle breaking may remove some.
class Tournament {
 public:
  Tournament() = default;

  explicit Tournament(std::vector<Message> nodes) : nodes_(std::move(nodes)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!index_.emplace(nodes_[i].id, i).second) {
        throw PreconditionError("duplicate message id '" + nodes_[i].id + "'");
      }
    }
    weights_.assign(nodes_.size() * nodes_.size(), 0.0);
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Message>& nodes() const noexcept { return nodes_; }
  const Message& node(std::size_t i) const { return nodes_.at(i); }

  std::size_t index_of(std::string_view id) const {
    const auto it = index_.find(std::string(id));
    if (it == index_.end()) throw PreconditionError("unknown message id '" + std::string(id) + "'");
    return it->second;
  }

  bool contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }

  bool has_edge(std::size_t from, std::size_t to) const { return at(from, to) > 0.0; }
  double weight(std::size_t from, std::size_t to) const { return at(from, to); }

  // Sets from -> to, dropping any reverse edge.
  void set_edge(std::size_t from, std::size_t to, double weight) {
    if (from == to) throw PreconditionError("self edge");
    if (!(weight > 0.0)) throw PreconditionError("edge weight must be positive");
    ref(to, from) = 0.0;
    ref(from, to) = weight;
  }

  void remove_edge(std::size_t from, std::size_t to) { ref(from, to) = 0.0; }

  std::size_t edge_count() const {
    return static_cast<std::size_t>(
        std::count_if(weights_.begin(), weights_.end(), [](double w) { return w > 0.0; }));
  }

  std::size_t out_degree(std::size_t i) const {
    std::size_t d = 0;
    for (std::size_t j = 0; j < size(); ++j) d += has_edge(i, j) ? 1 : 0;
    return d;
  }

  // Edges in row-major node order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < size(); ++i) {
      for (std::size_t j = 0; j < size(); ++j) {
        if (has_edge(i, j)) out.push_back({nodes_[i].id, nodes_[j].id, weight(i, j)});
      }
    }
    return out;
  }

  std::optional<double> edge_weight(std::string_view from, std::string_view to) const {
    const auto w = weight(index_of(from), index_of(to));
    if (w > 0.0) return w;
    return std::nullopt;
  }

 private:
  double at(std::size_t i, std::size_t j) const { return weights_.at(i * nodes_.size() + j); }
  double& ref(std::size_t i, std::size_t j) { return weights_.at(i * nodes_.size() + j); }

  std::vector<Message> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> weights_;  // row-major, 0 = no edge
};

// Pairwise P(a precedes b) from per-client clock models. Difference PDFs for
// non-Gaussian client pairs are computed once and reused.
class PrecedenceOracle {
 public:
  PrecedenceOracle(const ModelMap& models, double resolution)
      : models_(&models), resolution_(resolution) {
    if (!(resolution > 0.0)) throw DomainError("resolution must be > 0");
  }

  const ClockModel& model(const std::string& client) const {
    const auto it = models_->find(client);
    if (it == models_->end()) throw UnknownClient(client);
    return it->second;
  }

  double resolution() const noexcept { return resolution_; }

  double operator()(const Message& a, const Message& b) {
    const ClockModel& ca = model(a.client);
    const ClockModel& cb = model(b.client);
    try {
      if (probability_path(ca, cb) == ProbabilityPath::closed_form) {
        return preceding_prob_gaussian(a.local_ts, b.local_ts, ca.as_gaussian(), cb.as_gaussian());
      }
    } catch (const TieError&) {
      throw TieError(a.id, b.id);
    }
    auto key = std::make_pair(a.client, b.client);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_.emplace(std::move(key), difference_pdf(ca, cb, resolution_)).first;
    }
    return preceding_prob(a.local_ts, b.local_ts, it->second);
  }

 private:
  const ModelMap* models_;
  double resolution_;
  std::map<std::pair<std::string, std::string>, DifferencePdf> cache_;
};

// Builds the tournament from any pairwise probability source
// `prob(i, j) = P(node i precedes node j)`. For each pair both directions are
// evaluated and the higher one is kept.
template <class PairProbability>
  requires std::invocable<PairProbability&, std::size_t, std::size_t>
Tournament build_tournament(std::vector<Message> messages, PairProbability&& prob) {
  Tournament t(std::move(messages));
  const std::size_t n = t.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p_ij = prob(i, j);
      const double p_ji = prob(j, i);
      const double r_ij = round12(p_ij);
      const double r_ji = round12(p_ji);
      if (r_ij > r_ji && r_ij > 0.5) {
        t.set_edge(i, j, p_ij);
      } else if (r_ji > r_ij && r_ji > 0.5) {
        t.set_edge(j, i, p_ji);
      } else {
        throw TieError(t.node(i).id, t.node(j).id);
      }
    }
  }
  return t;
}

inline Tournament build_tournament(std::vector<Message> messages, PrecedenceOracle& oracle) {
  // Keep a copy so the callback can reach messages by index.
  const std::vector<Message> snapshot = messages;
  return build_tournament(std::move(messages), [&](std::size_t i, std::size_t j) {
    return oracle(snapshot[i], snapshot[j]);
  });
}

inline Tournament build_tournament(std::vector<Message> messages, const ModelMap& models,
                                   double resolution = 1.0) {
  PrecedenceOracle oracle(models, resolution);
  return build_tournament(std::move(messages), oracle);
}

// Some directed cycle as a list of node ids, or nullopt when acyclic.
inline std::optional<std::vector<std::string>> detect_cycle(const Tournament& t) {
  const std::size_t n = t.size();
  enum class Mark : unsigned char { fresh, active, done };
  std::vector<Mark> mark(n, Mark::fresh);
  std::vector<std::size_t> parent(n, n);

  for (std::size_t root = 0; root < n; ++root) {
    if (mark[root] != Mark::fresh) continue;
    // (node, next neighbour to try)
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    mark[root] = Mark::active;
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      if (next == n) {
        mark[u] = Mark::done;
        stack.pop_back();
        continue;
      }
      const std::size_t v = next++;
      if (!t.has_edge(u, v)) continue;
      if (mark[v] == Mark::active) {
        std::vector<std::string> cycle;
        for (std::size_t w = u; w != v; w = parent[w]) cycle.push_back(t.node(w).id);
        cycle.push_back(t.node(v).id);
        std::reverse(cycle.begin(), cycle.end());
        return cycle;
      }
      if (mark[v] == Mark::fresh) {
        mark[v] = Mark::active;
        parent[v] = u;
        stack.emplace_back(v, 0);
      }
    }
  }
  return std::nullopt;
}

namespace detail {

// Tarjan's algorithm, iterative. Returns a component id per node.
inline std::vector<std::size_t> strongly_connected(const Tournament& t) {
  const std::size_t n = t.size();
  constexpr std::size_t unvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, unvisited), low(n, 0), comp(n, unvisited);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::size_t counter = 0;
  std::size_t components = 0;

  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != unvisited) continue;
    std::vector<std::pair<std::size_t, std::size_t>> call{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      auto& [u, next] = call.back();
      if (next < n) {
        const std::size_t v = next++;
        if (!t.has_edge(u, v)) continue;
        if (index[v] == unvisited) {
          index[v] = low[v] = counter++;
          stack.push_back(v);
          on_stack[v] = true;
          call.emplace_back(v, 0);
        } else if (on_stack[v]) {
          low[u] = std::min(low[u], index[v]);
        }
        continue;
      }
      if (low[u] == index[u]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = components;
        } while (w != u);
        ++components;
      }
      const std::size_t done = u;
      call.pop_back();
      if (!call.empty()) {
        const std::size_t caller = call.back().first;
        low[caller] = std::min(low[caller], low[done]);
      }
    }
  }
  return comp;
}

}  // namespace detail

// Greedy feedback-arc removal: while any edge lies on a cycle (both ends in
// the same strongly connected component), delete the lightest such edge,
// ties going to the lexicographically smallest (from, to) id pair.
inline Tournament break_cycles(Tournament t) {
  for (;;) {
    const auto comp = detail::strongly_connected(t);
    std::optional<std::tuple<double, std::string_view, std::string_view, std::size_t, std::size_t>>
        lightest;
    for (std::size_t u = 0; u < t.size(); ++u) {
      for (std::size_t v = 0; v < t.size(); ++v) {
        if (!t.has_edge(u, v) || comp[u] != comp[v]) continue;
        auto candidate = std::make_tuple(round12(t.weight(u, v)), std::string_view(t.node(u).id),
                                         std::string_view(t.node(v).id), u, v);
        if (!lightest || candidate < *lightest) lightest = candidate;
      }
    }
    if (!lightest) return t;
    t.remove_edge(std::get<3>(*lightest), std::get<4>(*lightest));
  }
}

// Kahn's algorithm. Among nodes that are simultaneously free, the one with
// the smallest (local_ts, client, id) goes first; in a complete transitive
// tournament exactly one node is free at each step.
inline std::vector<std::string> topological_order(const Tournament& t) {
  const std::size_t n = t.size();
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = 0; v < n; ++v) indegree[v] += t.has_edge(u, v) ? 1 : 0;
  }

  auto before = [&t](std::size_t a, std::size_t b) {
    const Message& x = t.node(a);
    const Message& y = t.node(b);
    return std::tie(x.local_ts, x.client, x.id) < std::tie(y.local_ts, y.client, y.id);
  };
  std::set<std::size_t, decltype(before)> ready(before);
  for (std::size_t v = 0; v < n; ++v) {
    if (indegree[v] == 0) ready.insert(v);
  }

  std::vector<std::string> order;
  order.reserve(n);
  while (!ready.empty()) {
    const std::size_t u = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(t.node(u).id);
    for (std::size_t v = 0; v < n; ++v) {
      if (t.has_edge(u, v) && --indegree[v] == 0) ready.insert(v);
    }
  }
  if (order.size() != n) throw PreconditionError("topological_order: graph has a cycle");
  return order;
}

struct Batch {
  std::size_t rank = 0;
  std::vector<std::string> ids;  // in linear order

  friend bool operator==(const Batch&, const Batch&) = default;
};

struct SequencedOutput {
  std::vector<Batch> batches;
  std::vector<double> boundary_ps;  // edge weight that opened each boundary
  std::size_t removed_edges = 0;    // edges dropped to break cycles

  friend bool operator==(const SequencedOutput&, const SequencedOutput&) = default;

  std::size_t message_count() const {
    std::size_t n = 0;
    for (const auto& b : batches) n += b.ids.size();
    return n;
  }
};

inline void check_threshold(double threshold) {
  if (!(threshold >= 0.5 && threshold < 1.0)) {
    throw DomainError("threshold must lie in [0.5, 1)");
  }
}

// Splits a topological order wherever the adjacent edge i -> j has weight
// above the threshold.
inline SequencedOutput form_batches(const std::vector<std::string>& order, const Tournament& t,
                                    double threshold = kDefaultThreshold) {
  check_threshold(threshold);
  if (order.size() != t.size()) {
    throw PreconditionError("form_batches: order does not cover the tournament");
  }
  std::vector<std::size_t> pos(t.size(), t.size());
  std::vector<std::size_t> idx(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    idx[k] = t.index_of(order[k]);
    if (pos[idx[k]] != t.size()) throw PreconditionError("form_batches: repeated id in order");
    pos[idx[k]] = k;
  }
  for (std::size_t u = 0; u < t.size(); ++u) {
    for (std::size_t v = 0; v < t.size(); ++v) {
      if (t.has_edge(u, v) && pos[u] > pos[v]) {
        throw PreconditionError("form_batches: order contradicts edge " + t.node(u).id + " -> " +
                                t.node(v).id);
      }
    }
  }

  SequencedOutput out;
  if (order.empty()) return out;
  out.batches.push_back({0, {order.front()}});
  for (std::size_t k = 1; k < order.size(); ++k) {
    const double w = t.weight(idx[k - 1], idx[k]);
    if (w > 0.0 && round12(w) > threshold) {
      out.batches.push_back({out.batches.size(), {}});
      out.boundary_ps.push_back(w);
    }
    out.batches.back().ids.push_back(order[k]);
  }
  return out;
}

// build -> detect -> break (if needed) -> order -> batch.
template <class PairProbability>
  requires std::invocable<PairProbability&, std::size_t, std::size_t>
SequencedOutput sequence(std::vector<Message> messages, PairProbability&& prob,
                         double threshold = kDefaultThreshold) {
  check_threshold(threshold);
  if (messages.empty()) return {};
  Tournament t = build_tournament(std::move(messages), std::forward<PairProbability>(prob));
  std::size_t removed = 0;
  if (detect_cycle(t)) {
    const std::size_t before = t.edge_count();
    t = break_cycles(std::move(t));
    removed = before - t.edge_count();
  }
  auto out = form_batches(topological_order(t), t, threshold);
  out.removed_edges = removed;
  return out;
}

inline SequencedOutput sequence(std::vector<Message> messages, PrecedenceOracle& oracle,
                                double threshold = kDefaultThreshold) {
  const std::vector<Message> snapshot = messages;
  return sequence(
      std::move(messages),
      [&](std::size_t i, std::size_t j) { return oracle(snapshot[i], snapshot[j]); }, threshold);
}

inline SequencedOutput sequence(std::vector<Message> messages, const ModelMap& models,
                                double threshold = kDefaultThreshold, double resolution = 1.0) {
  check_threshold(threshold);
  PrecedenceOracle oracle(models, resolution);
  return sequence(std::move(messages), oracle, threshold);
}

inline std::unordered_map<std::string, std::size_t> rank_map(const SequencedOutput& out) {
  std::unordered_map<std::string, std::size_t> ranks;
  for (const auto& b : out.batches) {
    for (const auto& id : b.ids) ranks[id] = b.rank;
  }
  return ranks;
}

}  // namespace tommy
