#pragma once

// Synthetic workloads with ground truth, the TrueTime-style and waits-for-one
// baselines, the Rank Agreement Score, and seeded trials.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "tommy/clock_stats.hpp"
#include "tommy/errors.hpp"
#include "tommy/fair_order.hpp"
#include "tommy/online_seq.hpp"

namespace tommy {

using RankMap = std::unordered_map<std::string, std::size_t>;

enum class GapModel { exponential, fixed };
enum class SimMode { offline, online };

struct Baselines {
  bool tommy = true;
  bool truetime = true;
  bool wfo = true;

  friend bool operator==(const Baselines&, const Baselines&) = default;
};

struct SimConfig {
  std::size_t n_clients = 50;
  std::size_t n_messages_per_client = 20;

  // Explicit per-client offset models. When empty, clients get
  // N(mu, sigma^2) with sigma = sigma_scale * U(sigma_min, sigma_max)
  // and mu = U(mu_min, mu_max).
  std::vector<ClockModel> client_models;
  double sigma_scale = 1.0;
  double sigma_min = 0.5;
  double sigma_max = 1.5;
  double mu_min = 0.0;
  double mu_max = 0.0;

  double mean_gap_us = 10.0;  // between consecutive messages system-wide
  GapModel gap_model = GapModel::exponential;

  double threshold = kDefaultThreshold;
  double p_safe = kDefaultPSafe;
  double resolution = 1.0;
  std::uint64_t seed = 1;
  Baselines baselines;
  SimMode mode = SimMode::offline;

  // online mode only
  double network_delay_us = 5.0;   // fixed part of every delivery
  double network_jitter_us = 5.0;  // mean of the exponential extra delay
  double heartbeat_period_us = 10.0;
  double tick_period_us = 1.0;
  std::optional<double> max_wait_us;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

inline void validate(const SimConfig& c) {
  if (c.n_clients < 1) throw ConfigError("n_clients", "must be >= 1");
  if (c.n_messages_per_client < 1) throw ConfigError("n_messages_per_client", "must be >= 1");
  if (!c.client_models.empty() && c.client_models.size() != c.n_clients) {
    throw ConfigError("client_models", "must list exactly n_clients models");
  }
  if (!(c.sigma_scale >= 0.0)) throw ConfigError("sigma_scale", "must be >= 0");
  if (!(c.sigma_min >= 0.0 && c.sigma_min <= c.sigma_max)) {
    throw ConfigError("sigma_min", "need 0 <= sigma_min <= sigma_max");
  }
  if (!(c.mu_min <= c.mu_max)) throw ConfigError("mu_min", "need mu_min <= mu_max");
  // Strictly positive so ground-truth times never collide.
  if (!(c.mean_gap_us > 0.0)) throw ConfigError("mean_gap_us", "must be > 0");
  if (!(c.threshold >= 0.5 && c.threshold < 1.0)) throw ConfigError("threshold", "must lie in [0.5, 1)");
  if (!(c.p_safe > 0.5 && c.p_safe < 1.0)) throw ConfigError("p_safe", "must lie in (0.5, 1)");
  if (!(c.resolution > 0.0)) throw ConfigError("resolution", "must be > 0");
  if (!(c.network_delay_us >= 0.0)) throw ConfigError("network_delay_us", "must be >= 0");
  if (!(c.network_jitter_us >= 0.0)) throw ConfigError("network_jitter_us", "must be >= 0");
  if (!(c.heartbeat_period_us > 0.0)) throw ConfigError("heartbeat_period_us", "must be > 0");
  if (!(c.tick_period_us > 0.0)) throw ConfigError("tick_period_us", "must be > 0");
  if (c.max_wait_us && !(*c.max_wait_us > 0.0)) throw ConfigError("max_wait_us", "must be > 0");
}

inline std::string client_name(std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return "c" + digits;
}

// splitmix64 finalizer; derives independent per-trial streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Draw of theta from a clock model.
inline double sample_offset(const ClockModel& model, std::mt19937_64& rng) {
  if (model.is_gaussian()) {
    const auto& g = model.as_gaussian();
    if (g.stddev == 0.0) return g.mean;
    return std::normal_distribution<double>(g.mean, g.stddev)(rng);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double q = u(rng);
  while (q <= 0.0) q = u(rng);
  return offset_quantile(model, q);
}

struct Workload {
  std::vector<Message> messages;  // in ground-truth order
  ModelMap models;
};

// Clients share the sequencer's reference clock up to their offset: a message
// generated at true time t is stamped t - theta, so that T + theta = t.
inline Workload generate_workload(const SimConfig& cfg, std::mt19937_64& rng) {
  validate(cfg);
  Workload w;
  for (std::size_t c = 0; c < cfg.n_clients; ++c) {
    ClockModel model;
    if (!cfg.client_models.empty()) {
      model = cfg.client_models[c];
    } else {
      std::uniform_real_distribution<double> sig(cfg.sigma_min, cfg.sigma_max);
      const double sigma = cfg.sigma_scale * sig(rng);
      const double mu = cfg.mu_min == cfg.mu_max
                            ? cfg.mu_min
                            : std::uniform_real_distribution<double>(cfg.mu_min, cfg.mu_max)(rng);
      model = ClockModel::gaussian(mu, sigma);
    }
    w.models.emplace(client_name(c), std::move(model));
  }

  std::vector<std::size_t> owner;
  owner.reserve(cfg.n_clients * cfg.n_messages_per_client);
  for (std::size_t c = 0; c < cfg.n_clients; ++c) {
    owner.insert(owner.end(), cfg.n_messages_per_client, c);
  }
  std::shuffle(owner.begin(), owner.end(), rng);

  std::exponential_distribution<double> gap(1.0 / cfg.mean_gap_us);
  std::vector<std::size_t> seq(cfg.n_clients, 0);
  double t = 0.0;
  w.messages.reserve(owner.size());
  for (std::size_t c : owner) {
    double step = cfg.gap_model == GapModel::fixed ? cfg.mean_gap_us : gap(rng);
    // An exponential draw can underflow to exactly zero.
    if (!(step > 0.0)) step = std::numeric_limits<double>::min();
    const double next = t + step;
    t = next > t ? next : std::nextafter(t, std::numeric_limits<double>::infinity());
    const std::string client = client_name(c);
    const double theta = sample_offset(w.models.at(client), rng);
    w.messages.push_back(
        Message{client + "-" + std::to_string(seq[c]++), client, t - theta, t});
  }
  return w;
}

inline Workload generate_workload(const SimConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  return generate_workload(cfg, rng);
}

// Uncertainty interval [T + mean - 3 std, T + mean + 3 std] per message;
// transitively overlapping intervals share a rank.
inline RankMap truetime_rank(const std::vector<Message>& messages, const ModelMap& models) {
  struct Interval {
    double lo, hi;
    const std::string* id;
  };
  std::vector<Interval> iv;
  iv.reserve(messages.size());
  for (const auto& m : messages) {
    const auto it = models.find(m.client);
    if (it == models.end()) throw UnknownClient(m.client);
    const double centre = m.local_ts + it->second.mean();
    const double half = 3.0 * it->second.stddev();
    iv.push_back({centre - half, centre + half, &m.id});
  }
  std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) {
    return a.lo != b.lo ? a.lo < b.lo : *a.id < *b.id;
  });

  RankMap ranks;
  std::size_t rank = 0;
  double reach = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < iv.size(); ++k) {
    if (k > 0 && iv[k].lo > reach) ++rank;
    reach = k == 0 ? iv[k].hi : std::max(reach, iv[k].hi);
    ranks[*iv[k].id] = rank;
  }
  return ranks;
}

// Waits-for-one: each client's messages form a FIFO stream in the order
// given; the sequencer repeatedly releases the smallest-timestamp head among
// all clients that still have messages. Equal heads go to the smaller client id.
inline std::vector<std::string> wfo_order(const std::vector<Message>& messages) {
  std::map<std::string, std::vector<const Message*>> streams;
  for (const auto& m : messages) streams[m.client].push_back(&m);
  std::map<std::string, std::size_t> head;

  std::vector<std::string> order;
  order.reserve(messages.size());
  while (order.size() < messages.size()) {
    const Message* best = nullptr;
    for (const auto& [client, stream] : streams) {
      const std::size_t h = head[client];
      if (h == stream.size()) continue;  // exhausted: sentinel says "done"
      const Message* cand = stream[h];
      if (!best || cand->local_ts < best->local_ts) best = cand;
    }
    order.push_back(best->id);
    ++head[best->client];
  }
  return order;
}

inline RankMap wfo_rank(const std::vector<Message>& messages) {
  RankMap ranks;
  const auto order = wfo_order(messages);
  for (std::size_t i = 0; i < order.size(); ++i) ranks[order[i]] = i;
  return ranks;
}

// +1 per correctly ordered pair, -1 per inverted pair, 0 for equal ranks.
inline long long ras(const RankMap& ranks, const std::unordered_map<std::string, double>& truth) {
  std::vector<std::pair<double, std::size_t>> rows;
  rows.reserve(truth.size());
  for (const auto& [id, t] : truth) {
    const auto it = ranks.find(id);
    if (it == ranks.end()) throw PreconditionError("ras: no rank for '" + id + "'");
    rows.emplace_back(t, it->second);
  }
  if (ranks.size() != truth.size()) throw PreconditionError("ras: rank for message without truth");
  std::sort(rows.begin(), rows.end());

  long long score = 0;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) {
      if (rows[a].second < rows[b].second) {
        ++score;
      } else if (rows[a].second > rows[b].second) {
        --score;
      }
    }
  }
  return score;
}

inline std::unordered_map<std::string, double> truth_of(const std::vector<Message>& messages) {
  std::unordered_map<std::string, double> truth;
  for (const auto& m : messages) {
    if (!m.true_ts) throw PreconditionError("message '" + m.id + "' has no ground truth");
    truth[m.id] = *m.true_ts;
  }
  return truth;
}

inline constexpr double kClockGranularityUs = 1e-3;

struct OnlineRun {
  std::vector<EmittedBatch> batches;
  std::size_t violations = 0;       // flagged by the sequencer itself
  std::size_t late_inversions = 0;  // arrived after emission yet truly preceded an emitted message
  std::size_t forced = 0;
};

// Drives the online sequencer with a simulated network. Every client stamps
// messages and periodic heartbeats with its (monotone) local clock and sends
// them over a FIFO channel with delay network_delay + Exp(network_jitter).
// The sequencer ticks every tick_period; anything still buffered after the
// horizon is flushed and counted as forced.
inline OnlineRun run_online(const SimConfig& cfg, const Workload& w, std::mt19937_64& rng) {
  struct Send {
    double true_time;
    std::string client;
    std::optional<Message> message;  // heartbeat when empty
  };

  double spread = 0.0;
  for (const auto& [_, m] : w.models) spread = std::max(spread, std::abs(m.mean()) + m.stddev());
  const double last = w.messages.empty() ? 0.0 : *w.messages.back().true_ts;
  const double horizon = last + 12.0 * spread + 20.0 * (cfg.network_delay_us + cfg.network_jitter_us) +
                         2.0 * cfg.heartbeat_period_us + cfg.tick_period_us;

  std::map<std::string, std::vector<Send>> per_client;
  for (const auto& m : w.messages) per_client[m.client].push_back({*m.true_ts, m.client, m});
  for (const auto& [client, _] : w.models) {
    auto& sends = per_client[client];
    for (double t = cfg.heartbeat_period_us; t < horizon; t += cfg.heartbeat_period_us) {
      sends.push_back({t, client, std::nullopt});
    }
    sends.push_back({horizon, client, std::nullopt});
    std::stable_sort(sends.begin(), sends.end(),
                     [](const Send& a, const Send& b) { return a.true_time < b.true_time; });
  }

  struct Delivery {
    double at;
    int kind;  // 0 arrival, 1 tick
    std::size_t seq;
    Event event;
  };
  std::vector<Delivery> deliveries;
  std::exponential_distribution<double> jitter(
      cfg.network_jitter_us > 0.0 ? 1.0 / cfg.network_jitter_us : 1.0);
  std::size_t seq = 0;
  std::unordered_map<std::string, double> truth;
  for (auto& [client, sends] : per_client) {
    const ClockModel& model = w.models.at(client);
    double clock = -std::numeric_limits<double>::infinity();
    double channel = -std::numeric_limits<double>::infinity();
    double last_message = -std::numeric_limits<double>::infinity();
    for (auto& s : sends) {
      double stamp;
      if (s.message) {
        stamp = s.message->local_ts;
      } else {
        stamp = s.true_time - sample_offset(model, rng);
      }
      // Client clocks never run backwards on the wire, and two messages never
      // carry the same reading (1 ns clock granularity).
      clock = std::max(clock, stamp);
      if (s.message) clock = std::max(clock, last_message + kClockGranularityUs);
      const double delay =
          cfg.network_delay_us + (cfg.network_jitter_us > 0.0 ? jitter(rng) : 0.0);
      channel = std::max(channel, s.true_time + delay);
      if (s.message) {
        Message m = *s.message;
        m.local_ts = clock;
        last_message = clock;
        truth[m.id] = *m.true_ts;
        deliveries.push_back({channel, 0, seq++, MessageArrival{std::move(m)}});
      } else {
        deliveries.push_back({channel, 0, seq++, Heartbeat{client, clock}});
      }
    }
  }
  const double end = horizon + 40.0 * (cfg.network_delay_us + cfg.network_jitter_us) + spread;
  for (double t = cfg.tick_period_us; t <= end + cfg.tick_period_us; t += cfg.tick_period_us) {
    deliveries.push_back({t, 1, seq++, ClockTick{t}});
  }
  std::sort(deliveries.begin(), deliveries.end(), [](const Delivery& a, const Delivery& b) {
    return std::tie(a.at, a.kind, a.seq) < std::tie(b.at, b.kind, b.seq);
  });

  SequencerConfig sc;
  sc.threshold = cfg.threshold;
  sc.p_safe = cfg.p_safe;
  sc.resolution = cfg.resolution;
  sc.max_wait = cfg.max_wait_us;
  OnlineSequencer seqr(sc, w.models);

  OnlineRun run;
  double emitted_truth = -std::numeric_limits<double>::infinity();
  auto record = [&](std::vector<EmittedBatch> out) {
    for (auto& b : out) {
      for (const auto& id : b.ids) emitted_truth = std::max(emitted_truth, truth.at(id));
      run.batches.push_back(std::move(b));
    }
  };
  for (auto& d : deliveries) {
    if (const auto* a = std::get_if<MessageArrival>(&d.event)) {
      if (truth.at(a->message.id) < emitted_truth) ++run.late_inversions;
    }
    record(seqr.ingest(d.event));
  }
  record(seqr.flush());
  run.violations = seqr.violations();
  run.forced = seqr.forced_emissions();
  return run;
}

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::size_t n_messages = 0;
  long long max_ras = 0;  // number of message pairs
  std::optional<long long> ras_tommy;
  std::optional<long long> ras_truetime;
  std::optional<long long> ras_wfo;
  std::optional<std::size_t> batches_tommy;
  std::optional<double> mean_batch_size;
  std::optional<std::size_t> violations_online;
  std::optional<std::size_t> late_inversions;
  std::optional<std::size_t> forced_emissions;
  SimConfig params;
  double wall_time_s = 0.0;  // not part of equality

  bool same_outcome(const TrialResult& o) const {
    return trial == o.trial && seed == o.seed && n_messages == o.n_messages &&
           max_ras == o.max_ras && ras_tommy == o.ras_tommy && ras_truetime == o.ras_truetime &&
           ras_wfo == o.ras_wfo && batches_tommy == o.batches_tommy &&
           mean_batch_size == o.mean_batch_size && violations_online == o.violations_online &&
           late_inversions == o.late_inversions && forced_emissions == o.forced_emissions &&
           params == o.params;
  }
};

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) { return mix_seed(seed, trial); }

inline TrialResult run_trial(const SimConfig& cfg, std::size_t trial = 0) {
  validate(cfg);
  const auto started = std::chrono::steady_clock::now();

  TrialResult r;
  r.trial = trial;
  r.seed = trial_seed(cfg.seed, trial);
  r.params = cfg;
  std::mt19937_64 rng(r.seed);
  const Workload w = generate_workload(cfg, rng);
  const auto truth = truth_of(w.messages);
  r.n_messages = w.messages.size();
  r.max_ras = static_cast<long long>(r.n_messages) * (static_cast<long long>(r.n_messages) - 1) / 2;

  if (cfg.baselines.tommy) {
    RankMap ranks;
    std::size_t batches = 0;
    if (cfg.mode == SimMode::offline) {
      const auto out = sequence(w.messages, w.models, cfg.threshold, cfg.resolution);
      ranks = rank_map(out);
      batches = out.batches.size();
    } else {
      std::mt19937_64 net(mix_seed(r.seed, 0xD1A1));
      const auto run = run_online(cfg, w, net);
      for (const auto& b : run.batches) {
        for (const auto& id : b.ids) ranks[id] = b.rank;
      }
      batches = run.batches.size();
      r.violations_online = run.violations;
      r.late_inversions = run.late_inversions;
      r.forced_emissions = run.forced;
    }
    r.ras_tommy = ras(ranks, truth);
    r.batches_tommy = batches;
    r.mean_batch_size = batches ? static_cast<double>(r.n_messages) / static_cast<double>(batches) : 0.0;
  }
  if (cfg.baselines.truetime) r.ras_truetime = ras(truetime_rank(w.messages, w.models), truth);
  if (cfg.baselines.wfo) r.ras_wfo = ras(wfo_rank(w.messages), truth);

  r.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return r;
}

// A grid of sigma scales x mean gaps, each run for `trials` seeded trials.
struct SweepConfig {
  SimConfig base;
  std::vector<double> sigma_scales{1.0};
  std::vector<double> mean_gaps_us{10.0};
  std::size_t trials = 1;

  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

inline void validate(const SweepConfig& s) {
  if (s.sigma_scales.empty()) throw ConfigError("sigma_scales", "must not be empty");
  if (s.mean_gaps_us.empty()) throw ConfigError("mean_gaps_us", "must not be empty");
  if (s.trials < 1) throw ConfigError("trials", "must be >= 1");
  for (double sigma : s.sigma_scales) {
    SimConfig c = s.base;
    c.sigma_scale = sigma;
    for (double gap : s.mean_gaps_us) {
      c.mean_gap_us = gap;
      validate(c);
    }
  }
}

// Rows ordered sigma-major, then gap, then trial. Trial k at every grid point
// shares the seed stream (common random numbers across the grid).
inline std::vector<TrialResult> run_sweep(const SweepConfig& s) {
  validate(s);
  std::vector<TrialResult> rows;
  for (double sigma : s.sigma_scales) {
    for (double gap : s.mean_gaps_us) {
      SimConfig c = s.base;
      c.sigma_scale = sigma;
      c.mean_gap_us = gap;
      for (std::size_t k = 0; k < s.trials; ++k) rows.push_back(run_trial(c, k));
    }
  }
  return rows;
}

}  // namespace tommy
