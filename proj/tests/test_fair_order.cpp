#include <catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tommy/fair_order.hpp"

using Catch::Approx;
using namespace tommy;

namespace {

Message msg(std::string id, std::string client, double ts) {
  return Message{std::move(id), std::move(client), ts, std::nullopt};
}

// Pairwise table from the four-message worked example: row precedes column.
const std::array<std::array<double, 4>, 4> kWorkedTable{{
    {0.0, 0.85, 0.65, 0.92},
    {0.15, 0.0, 0.72, 0.68},
    {0.35, 0.28, 0.0, 0.80},
    {0.08, 0.32, 0.20, 0.0},
}};

std::vector<Message> worked_messages() {
  return {msg("A", "a", 0), msg("B", "b", 1), msg("C", "c", 2), msg("D", "d", 3)};
}

Tournament worked_tournament() {
  return build_tournament(worked_messages(),
                          [](std::size_t i, std::size_t j) { return kWorkedTable[i][j]; });
}

// Tournament with explicit edges; missing pairs stay absent.
Tournament graph(std::vector<std::string> ids, const std::vector<Edge>& edges) {
  std::vector<Message> nodes;
  for (std::size_t i = 0; i < ids.size(); ++i) nodes.push_back(msg(ids[i], "c", static_cast<double>(i)));
  Tournament t(std::move(nodes));
  for (const auto& e : edges) t.set_edge(t.index_of(e.from), t.index_of(e.to), e.weight);
  return t;
}

// Offset distribution with 1/3 mass in a unit-wide bin around each value.
ClockModel die(std::array<double, 3> faces) {
  std::sort(faces.begin(), faces.end());
  std::vector<double> edges, dens;
  for (std::size_t k = 0; k < faces.size(); ++k) {
    if (k > 0) dens.push_back(0.0);
    edges.push_back(faces[k] - 0.5);
    edges.push_back(faces[k] + 0.5);
    dens.push_back(1.0 / 3.0);
  }
  return ClockModel::empirical(edges, dens);
}

bool is_topological(const std::vector<std::string>& order, const Tournament& t) {
  for (std::size_t a = 0; a < order.size(); ++a) {
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      if (t.has_edge(t.index_of(order[b]), t.index_of(order[a]))) return false;
    }
  }
  return true;
}

std::vector<Message> random_gaussian_set(std::mt19937_64& rng, std::size_t n, ModelMap& models) {
  std::uniform_real_distribution<double> ts(0.0, 100.0), mu(-5.0, 5.0), sd(0.5, 30.0);
  std::uniform_int_distribution<int> client(0, 4);
  models.clear();
  for (int c = 0; c < 5; ++c) models.emplace("k" + std::to_string(c), ClockModel::gaussian(mu(rng), sd(rng)));
  std::vector<Message> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(msg("m" + std::to_string(i), "k" + std::to_string(client(rng)), ts(rng)));
  }
  return out;
}

}  // namespace

TEST_CASE("worked example: tournament edges", "[fair_order]") {
  const auto t = worked_tournament();
  CHECK(t.edge_count() == 6);
  CHECK(t.edge_weight("A", "B") == 0.85);
  CHECK(t.edge_weight("A", "C") == 0.65);
  CHECK(t.edge_weight("A", "D") == 0.92);
  CHECK(t.edge_weight("B", "C") == 0.72);
  CHECK(t.edge_weight("B", "D") == 0.68);
  CHECK(t.edge_weight("C", "D") == 0.80);
  CHECK_FALSE(t.edge_weight("B", "A"));
  CHECK_FALSE(detect_cycle(t));
  CHECK(topological_order(t) == std::vector<std::string>{"A", "B", "C", "D"});
}

TEST_CASE("worked example: batching at several thresholds", "[fair_order]") {
  const auto t = worked_tournament();
  const auto order = topological_order(t);

  const auto at75 = form_batches(order, t, 0.75);
  REQUIRE(at75.batches.size() == 3);
  CHECK(at75.batches[0] == Batch{0, {"A"}});
  CHECK(at75.batches[1] == Batch{1, {"B", "C"}});
  CHECK(at75.batches[2] == Batch{2, {"D"}});
  CHECK(at75.boundary_ps == std::vector<double>{0.85, 0.80});

  const auto at99 = form_batches(order, t, 0.99);
  REQUIRE(at99.batches.size() == 1);
  CHECK(at99.batches[0].ids == std::vector<std::string>{"A", "B", "C", "D"});

  const auto at60 = form_batches(order, t, 0.6);
  REQUIRE(at60.batches.size() == 4);
  for (std::size_t r = 0; r < 4; ++r) CHECK(at60.batches[r].rank == r);

  const auto end_to_end = sequence(worked_messages(),
                                   [](std::size_t i, std::size_t j) { return kWorkedTable[i][j]; });
  CHECK(end_to_end == at75);
}

TEST_CASE("build_tournament from clock models", "[fair_order]") {
  const ModelMap models{{"x", ClockModel::gaussian(0.0, 1.0)}, {"y", ClockModel::gaussian(0.0, 1.0)}};

  SECTION("single message") {
    const auto t = build_tournament({msg("only", "x", 5.0)}, models);
    CHECK(t.size() == 1);
    CHECK(t.edge_count() == 0);
  }
  SECTION("two messages with p = 0.6") {
    // Phi(dt / sqrt 2) = 0.6
    const double dt = std::sqrt(2.0) * oracle::bisect_normal_quantile(0.6);
    const auto t = build_tournament({msg("late", "y", dt), msg("early", "x", 0.0)}, models);
    REQUIRE(t.edge_count() == 1);
    const auto w = t.edge_weight("early", "late");
    REQUIRE(w);
    CHECK(*w == preceding_prob(0.0, dt, models.at("x"), models.at("y")));
    CHECK(*w == Approx(0.6).margin(1e-12));
  }
  SECTION("exact ties name the pair") {
    const ModelMap exact{{"p", ClockModel::point_mass(0.0)}};
    try {
      build_tournament({msg("u", "p", 1.0), msg("v", "p", 1.0)}, exact);
      FAIL("expected a tie");
    } catch (const TieError& e) {
      CHECK(e.first() == "u");
      CHECK(e.second() == "v");
    }
    // identical Gaussian messages tie at exactly one half as well
    CHECK_THROWS_AS(build_tournament({msg("u", "x", 1.0), msg("v", "x", 1.0)}, models), TieError);
  }
  SECTION("unknown client and duplicate ids") {
    CHECK_THROWS_AS(build_tournament({msg("u", "nobody", 1.0), msg("v", "x", 2.0)}, models), UnknownClient);
    CHECK_THROWS_AS(build_tournament({msg("u", "x", 1.0), msg("u", "y", 2.0)}, models), PreconditionError);
  }
}

TEST_CASE("detect_cycle", "[fair_order]") {
  const auto t = graph({"A", "B", "C"}, {{"A", "B", 0.6}, {"B", "C", 0.6}, {"C", "A", 0.9}});
  const auto cycle = detect_cycle(t);
  REQUIRE(cycle);
  CHECK(*cycle == std::vector<std::string>{"A", "B", "C"});
  CHECK_THROWS_AS(topological_order(t), PreconditionError);
}

TEST_CASE("intransitive dice produce a cycle", "[fair_order]") {
  const std::array<double, 3> fa{20, 40, 90}, fb{10, 60, 80}, fc{30, 50, 70};
  const ModelMap models{{"A", die(fa)}, {"B", die(fb)}, {"C", die(fc)}};
  auto discrete = [](std::array<double, 3> f) {
    return oracle::Discrete{{f[0], 1.0 / 3}, {f[1], 1.0 / 3}, {f[2], 1.0 / 3}};
  };
  // B before A, A before C, C before B, each with probability 5/9
  const double ba = oracle::enumerate_precedence(0, 0, discrete(fb), discrete(fa));
  const double ac = oracle::enumerate_precedence(0, 0, discrete(fa), discrete(fc));
  const double cb = oracle::enumerate_precedence(0, 0, discrete(fc), discrete(fb));
  CHECK(ba == Approx(5.0 / 9));
  CHECK(ac == Approx(5.0 / 9));
  CHECK(cb == Approx(5.0 / 9));
  CHECK(preceding_prob(0, 0, models.at("B"), models.at("A"), 0.5) == Approx(ba).margin(1e-9));
  CHECK(preceding_prob(0, 0, models.at("A"), models.at("C"), 0.5) == Approx(ac).margin(1e-9));
  CHECK(preceding_prob(0, 0, models.at("C"), models.at("B"), 0.5) == Approx(cb).margin(1e-9));

  const auto t = build_tournament({msg("a", "A", 0), msg("b", "B", 0), msg("c", "C", 0)}, models, 0.5);
  CHECK(detect_cycle(t));
  const auto fixed = break_cycles(t);
  CHECK_FALSE(detect_cycle(fixed));
  CHECK(fixed.edge_count() == 2);
  CHECK(is_topological(topological_order(fixed), fixed));
}

TEST_CASE("break_cycles", "[fair_order]") {
  SECTION("acyclic input is unchanged") {
    const auto t = graph({"A", "B", "C"}, {{"A", "B", 0.6}, {"B", "C", 0.7}, {"A", "C", 0.9}});
    CHECK(break_cycles(t).edges() == t.edges());
  }
  SECTION("equal light edges: lexicographic tie-break") {
    const auto t = graph({"A", "B", "C"}, {{"A", "B", 0.6}, {"B", "C", 0.6}, {"C", "A", 0.9}});
    const auto fixed = break_cycles(t);
    CHECK_FALSE(fixed.edge_weight("A", "B"));
    CHECK(fixed.edge_count() == 2);
    CHECK(topological_order(fixed) == std::vector<std::string>{"B", "C", "A"});
  }
  SECTION("distinct weights: only the lightest edge goes") {
    const std::vector<Edge> edges{{"A", "B", 0.7}, {"B", "C", 0.55}, {"C", "A", 0.9}};
    const auto t = graph({"A", "B", "C"}, edges);
    const auto fixed = break_cycles(t);

    // Oracle: among single-edge removals that leave the graph acyclic, the
    // lightest, ties going to the smaller (from, to).
    std::optional<Edge> best;
    for (const auto& e : edges) {
      auto trial = t;
      trial.remove_edge(trial.index_of(e.from), trial.index_of(e.to));
      if (detect_cycle(trial)) continue;
      if (!best || std::tie(e.weight, e.from, e.to) < std::tie(best->weight, best->from, best->to)) best = e;
    }
    REQUIRE(best);
    CHECK(best->weight == 0.55);
    CHECK_FALSE(fixed.edge_weight(best->from, best->to));
    CHECK(fixed.edge_count() == 2);
  }
  SECTION("two overlapping cycles") {
    const auto t = graph({"A", "B", "C", "D"}, {{"A", "B", 0.8},
                                                {"B", "C", 0.8},
                                                {"C", "A", 0.6},
                                                {"C", "D", 0.7},
                                                {"D", "B", 0.65},
                                                {"A", "D", 0.9}});
    const auto fixed = break_cycles(t);
    CHECK_FALSE(detect_cycle(fixed));
    CHECK_FALSE(fixed.edge_weight("C", "A"));
    CHECK_FALSE(fixed.edge_weight("D", "B"));
    CHECK(fixed.edge_count() == 4);
    CHECK(break_cycles(t).edges() == fixed.edges());  // deterministic
  }
}

TEST_CASE("topological_order", "[fair_order]") {
  SECTION("single node") {
    const Tournament t({msg("solo", "c", 0)});
    CHECK(topological_order(t) == std::vector<std::string>{"solo"});
  }
  SECTION("incomparable nodes fall back to local_ts then client") {
    Tournament t({msg("x", "c2", 5.0), msg("y", "c1", 5.0), msg("z", "c0", 1.0)});
    CHECK(topological_order(t) == std::vector<std::string>{"z", "y", "x"});
  }
  SECTION("complete Gaussian tournaments: unique order, sorted by out-degree") {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 20; ++round) {
      ModelMap models;
      const auto messages = random_gaussian_set(rng, 5, models);
      const auto t = build_tournament(messages, models);
      const auto order = topological_order(t);

      std::vector<std::string> ids;
      for (const auto& m : messages) ids.push_back(m.id);
      std::sort(ids.begin(), ids.end());
      std::size_t valid = 0;
      do {
        if (is_topological(ids, t)) {
          ++valid;
          CHECK(ids == order);
        }
      } while (std::next_permutation(ids.begin(), ids.end()));
      CHECK(valid == 1);

      for (std::size_t k = 1; k < order.size(); ++k) {
        CHECK(t.out_degree(t.index_of(order[k - 1])) > t.out_degree(t.index_of(order[k])));
      }
    }
  }
}

TEST_CASE("form_batches rejects inconsistent orders", "[fair_order]") {
  const auto t = worked_tournament();
  CHECK_THROWS_AS(form_batches({"B", "A", "C", "D"}, t, 0.75), PreconditionError);
  CHECK_THROWS_AS(form_batches({"A", "B", "C"}, t, 0.75), PreconditionError);
  CHECK_THROWS_AS(form_batches({"A", "B", "C", "C"}, t, 0.75), PreconditionError);
  CHECK_THROWS_AS(form_batches({"A", "B", "C", "D"}, t, 1.0), DomainError);
  CHECK_THROWS_AS(form_batches({"A", "B", "C", "D"}, t, 0.4), DomainError);
}

TEST_CASE("sequence end to end", "[fair_order]") {
  SECTION("empty input") {
    CHECK(sequence({}, ModelMap{}).batches.empty());
  }
  SECTION("one tight client gives singleton batches in timestamp order") {
    const ModelMap models{{"solo", ClockModel::gaussian(3.0, 0.01)}};
    const auto out = sequence({msg("m3", "solo", 30), msg("m1", "solo", 10), msg("m2", "solo", 20)}, models);
    REQUIRE(out.batches.size() == 3);
    CHECK(out.batches[0].ids == std::vector<std::string>{"m1"});
    CHECK(out.batches[1].ids == std::vector<std::string>{"m2"});
    CHECK(out.batches[2].ids == std::vector<std::string>{"m3"});
  }
  SECTION("intransitive input records the removed edges") {
    const ModelMap models{{"A", die({20, 40, 90})}, {"B", die({10, 60, 80})}, {"C", die({30, 50, 70})}};
    const auto out = sequence({msg("a", "A", 0), msg("b", "B", 0), msg("c", "C", 0)}, models, 0.75, 0.5);
    CHECK(out.removed_edges == 1);
    CHECK(out.message_count() == 3);
    // 5/9 never clears 0.75: one batch
    CHECK(out.batches.size() == 1);
  }
}

TEST_CASE("ordering properties over random Gaussian sets", "[fair_order][property]") {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<std::size_t> size(1, 12);
  for (int round = 0; round < 1000; ++round) {
    ModelMap models;
    const auto messages = random_gaussian_set(rng, size(rng), models);
    const std::size_t n = messages.size();
    const auto t = build_tournament(messages, models);

    CHECK(t.edge_count() == n * (n - 1) / 2);
    for (const auto& e : t.edges()) CHECK(e.weight > 0.5);
    CHECK_FALSE(detect_cycle(t));

    const auto order = topological_order(t);
    std::size_t last_batches = n + 1;
    for (double thr : {0.5, 0.6, 0.75, 0.9, 0.99, 0.999999}) {
      const auto out = form_batches(order, t, thr);
      // partition with consecutive ranks
      std::vector<std::string> flat;
      for (std::size_t r = 0; r < out.batches.size(); ++r) {
        CHECK(out.batches[r].rank == r);
        CHECK_FALSE(out.batches[r].ids.empty());
        flat.insert(flat.end(), out.batches[r].ids.begin(), out.batches[r].ids.end());
      }
      CHECK(flat == order);
      // boundary soundness
      for (std::size_t r = 1; r < out.batches.size(); ++r) {
        const auto w = t.edge_weight(out.batches[r - 1].ids.back(), out.batches[r].ids.front());
        REQUIRE(w);
        CHECK(*w > thr);
      }
      // threshold monotonicity
      CHECK(out.batches.size() <= last_batches);
      last_batches = out.batches.size();
    }
    CHECK(sequence(messages, models) == sequence(messages, models));
  }
}
