#pragma once

// Text formats: clock-model JSON, message files, event traces, emission logs,
// sequenced output, simulation configs and CSV results.

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tommy/clock_stats.hpp"
#include "tommy/errors.hpp"
#include "tommy/fair_order.hpp"
#include "tommy/online_seq.hpp"
#include "tommy/sim_harness.hpp"

namespace tommy {

using json = nlohmann::ordered_json;

// Shortest decimal text that round-trips the double.
inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view text, std::size_t line, std::string_view what) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) {
    throw ParseError(line, "bad " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

// ---- clock models ----------------------------------------------------------

inline json to_json(const ClockModel& m) {
  if (m.is_gaussian()) {
    return json{{"kind", "gaussian"}, {"mean", m.as_gaussian().mean}, {"std", m.as_gaussian().stddev}};
  }
  return json{{"kind", "empirical"},
              {"bin_edges", m.as_empirical().bin_edges},
              {"densities", m.as_empirical().densities}};
}

inline ClockModel clock_model_from_json(const json& j, const std::string& where = "model") {
  if (!j.is_object()) throw ConfigError(where, "expected an object");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError(where + ".kind", "missing");
  const std::string kind = j["kind"];
  try {
    if (kind == "gaussian") {
      for (const auto& [key, _] : j.items()) {
        if (key != "kind" && key != "mean" && key != "std") {
          throw ConfigError(where + "." + key, "unknown field");
        }
      }
      if (!j.contains("mean") || !j["mean"].is_number()) throw ConfigError(where + ".mean", "expected a number");
      if (!j.contains("std") || !j["std"].is_number()) throw ConfigError(where + ".std", "expected a number");
      return ClockModel::gaussian(j["mean"].get<double>(), j["std"].get<double>());
    }
    if (kind == "empirical") {
      for (const auto& [key, _] : j.items()) {
        if (key != "kind" && key != "bin_edges" && key != "densities") {
          throw ConfigError(where + "." + key, "unknown field");
        }
      }
      if (!j.contains("bin_edges") || !j["bin_edges"].is_array()) {
        throw ConfigError(where + ".bin_edges", "expected an array");
      }
      if (!j.contains("densities") || !j["densities"].is_array()) {
        throw ConfigError(where + ".densities", "expected an array");
      }
      return ClockModel::empirical(j["bin_edges"].get<std::vector<double>>(),
                                   j["densities"].get<std::vector<double>>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(where, e.what());
  } catch (const InvalidDistribution& e) {
    throw ConfigError(where, e.what());
  }
  throw ConfigError(where + ".kind", "expected 'gaussian' or 'empirical', got '" + kind + "'");
}

inline json to_json(const ModelMap& models) {
  json j = json::object();
  for (const auto& [client, m] : models) j[client] = to_json(m);
  return j;
}

inline ModelMap models_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("models", "expected an object of client -> model");
  ModelMap out;
  for (const auto& [client, m] : j.items()) out.emplace(client, clock_model_from_json(m, client));
  return out;
}

inline ModelMap read_models(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("models: ") + e.what());
  }
  return models_from_json(j);
}

// ---- message files ---------------------------------------------------------
// One record per line: <id> <client> <local_ts> [<true_ts>]. Blank lines and
// lines starting with '#' are ignored.

inline std::vector<std::string> split_words(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> words;
  for (std::string w; ss >> w;) words.push_back(w);
  return words;
}

inline bool skippable(const std::vector<std::string>& words) {
  return words.empty() || words.front().starts_with('#');
}

inline std::vector<Message> read_messages(std::istream& in) {
  std::vector<Message> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto w = split_words(line);
    if (skippable(w)) continue;
    if (w.size() < 3 || w.size() > 4) {
      throw ParseError(line_no, "expected '<id> <client> <local_ts> [<true_ts>]'");
    }
    Message m{w[0], w[1], parse_number(w[2], line_no, "local_ts"), std::nullopt};
    if (w.size() == 4) m.true_ts = parse_number(w[3], line_no, "true_ts");
    if (!seen.insert(m.id).second) throw ParseError(line_no, "duplicate id '" + m.id + "'");
    out.push_back(std::move(m));
  }
  return out;
}

inline void write_messages(std::ostream& out, const std::vector<Message>& messages) {
  for (const auto& m : messages) {
    out << m.id << ' ' << m.client << ' ' << format_number(m.local_ts);
    if (m.true_ts) out << ' ' << format_number(*m.true_ts);
    out << '\n';
  }
}

// ---- sequenced output ------------------------------------------------------

inline json to_json(const SequencedOutput& s) {
  json batches = json::array();
  for (const auto& b : s.batches) batches.push_back(json{{"rank", b.rank}, {"ids", b.ids}});
  return batches;
}

// ---- event traces ----------------------------------------------------------
// M <client> <local_ts> <id> | H <client> <local_ts> | T <now>

struct TraceLine {
  std::size_t line = 0;
  Event event;
};

inline std::vector<TraceLine> read_trace(std::istream& in) {
  std::vector<TraceLine> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto w = split_words(line);
    if (skippable(w)) continue;
    const std::string& tag = w[0];
    if (tag == "M" && w.size() == 4) {
      out.push_back({line_no, MessageArrival{Message{w[3], w[1], parse_number(w[2], line_no, "local_ts"), std::nullopt}}});
    } else if (tag == "H" && w.size() == 3) {
      out.push_back({line_no, Heartbeat{w[1], parse_number(w[2], line_no, "local_ts")}});
    } else if (tag == "T" && w.size() == 2) {
      out.push_back({line_no, ClockTick{parse_number(w[1], line_no, "now")}});
    } else {
      throw ParseError(line_no, "expected 'M <client> <local_ts> <id>', 'H <client> <local_ts>' or 'T <now>'");
    }
  }
  return out;
}

inline std::string format_event(const Event& e) {
  return std::visit(
      [](const auto& ev) -> std::string {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, MessageArrival>) {
          return "M " + ev.message.client + " " + format_number(ev.message.local_ts) + " " + ev.message.id;
        } else if constexpr (std::is_same_v<T, Heartbeat>) {
          return "H " + ev.client + " " + format_number(ev.local_ts);
        } else {
          return "T " + format_number(ev.now);
        }
      },
      e);
}

// B <rank> <id,id,...> <emit_time>
inline std::string format_emission(const EmittedBatch& b) {
  std::string ids;
  for (std::size_t i = 0; i < b.ids.size(); ++i) {
    if (i) ids += ',';
    ids += b.ids[i];
  }
  return "B " + std::to_string(b.rank) + " " + ids + " " + format_number(b.emit_time);
}

// ---- simulation config -----------------------------------------------------

inline json to_json(const SimConfig& c) {
  json baselines = json::array();
  if (c.baselines.tommy) baselines.push_back("tommy");
  if (c.baselines.truetime) baselines.push_back("truetime");
  if (c.baselines.wfo) baselines.push_back("wfo");
  json j{{"n_clients", c.n_clients},
         {"n_messages_per_client", c.n_messages_per_client},
         {"sigma_min", c.sigma_min},
         {"sigma_max", c.sigma_max},
         {"mu_min", c.mu_min},
         {"mu_max", c.mu_max},
         {"gap_model", c.gap_model == GapModel::fixed ? "fixed" : "exponential"},
         {"threshold", c.threshold},
         {"p_safe", c.p_safe},
         {"resolution_us", c.resolution},
         {"seed", c.seed},
         {"baselines", baselines},
         {"mode", c.mode == SimMode::online ? "online" : "offline"},
         {"network_delay_us", c.network_delay_us},
         {"network_jitter_us", c.network_jitter_us},
         {"heartbeat_period_us", c.heartbeat_period_us},
         {"tick_period_us", c.tick_period_us},
         {"max_wait_us", c.max_wait_us ? json(*c.max_wait_us) : json(nullptr)}};
  if (!c.client_models.empty()) {
    json models = json::array();
    for (const auto& m : c.client_models) models.push_back(to_json(m));
    j["client_models"] = models;
  }
  return j;
}

inline json to_json(const SweepConfig& s) {
  json j = to_json(s.base);
  j["sigma_scales"] = s.sigma_scales;
  j["mean_gaps_us"] = s.mean_gaps_us;
  j["trials"] = s.trials;
  return j;
}

namespace detail {

inline double get_number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError(key, "expected a number");
  return j.get<double>();
}

inline std::size_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError(key, "expected a non-negative integer");
  }
  return j.get<std::size_t>();
}

inline std::vector<double> get_numbers(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError(key, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(get_number(v, key));
  return out;
}

}  // namespace detail

// Accepts a sweep config, or a run manifest (its "config" member).
inline SweepConfig sweep_config_from_json(const json& root) {
  const json& j = root.contains("config") && root["config"].is_object() ? root["config"] : root;
  if (!j.is_object()) throw ConfigError("config", "expected an object");
  SweepConfig s;
  SimConfig& c = s.base;
  for (const auto& [key, v] : j.items()) {
    using detail::get_count;
    using detail::get_number;
    if (key == "n_clients") c.n_clients = get_count(v, key);
    else if (key == "n_messages_per_client") c.n_messages_per_client = get_count(v, key);
    else if (key == "sigma_min") c.sigma_min = get_number(v, key);
    else if (key == "sigma_max") c.sigma_max = get_number(v, key);
    else if (key == "mu_min") c.mu_min = get_number(v, key);
    else if (key == "mu_max") c.mu_max = get_number(v, key);
    else if (key == "sigma_scale") s.sigma_scales = {get_number(v, key)};
    else if (key == "sigma_scales") s.sigma_scales = detail::get_numbers(v, key);
    else if (key == "mean_gap_us") s.mean_gaps_us = {get_number(v, key)};
    else if (key == "mean_gaps_us") s.mean_gaps_us = detail::get_numbers(v, key);
    else if (key == "trials") s.trials = get_count(v, key);
    else if (key == "gap_model") {
      if (v == "exponential") c.gap_model = GapModel::exponential;
      else if (v == "fixed") c.gap_model = GapModel::fixed;
      else throw ConfigError(key, "expected 'exponential' or 'fixed'");
    } else if (key == "threshold") c.threshold = get_number(v, key);
    else if (key == "p_safe") c.p_safe = get_number(v, key);
    else if (key == "resolution_us") c.resolution = get_number(v, key);
    else if (key == "seed") {
      if (!v.is_number_unsigned()) throw ConfigError(key, "expected a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "baselines") {
      if (!v.is_array()) throw ConfigError(key, "expected an array");
      c.baselines = {false, false, false};
      for (const auto& b : v) {
        if (b == "tommy") c.baselines.tommy = true;
        else if (b == "truetime") c.baselines.truetime = true;
        else if (b == "wfo") c.baselines.wfo = true;
        else throw ConfigError(key, "unknown baseline " + b.dump());
      }
    } else if (key == "mode") {
      if (v == "offline") c.mode = SimMode::offline;
      else if (v == "online") c.mode = SimMode::online;
      else throw ConfigError(key, "expected 'offline' or 'online'");
    } else if (key == "network_delay_us") c.network_delay_us = get_number(v, key);
    else if (key == "network_jitter_us") c.network_jitter_us = get_number(v, key);
    else if (key == "heartbeat_period_us") c.heartbeat_period_us = get_number(v, key);
    else if (key == "tick_period_us") c.tick_period_us = get_number(v, key);
    else if (key == "max_wait_us") {
      if (v.is_null()) c.max_wait_us.reset();
      else c.max_wait_us = get_number(v, key);
    } else if (key == "client_models") {
      if (!v.is_array()) throw ConfigError(key, "expected an array of models");
      c.client_models.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        c.client_models.push_back(clock_model_from_json(v[i], key + "[" + std::to_string(i) + "]"));
      }
    } else {
      throw ConfigError(key, "unknown field");
    }
  }
  validate(s);
  return s;
}

// ---- results CSV -----------------------------------------------------------

inline constexpr std::string_view kCsvHeader =
    "trial,seed,n_clients,sigma_scale,mean_gap_us,threshold,p_safe,ras_tommy,ras_truetime,"
    "ras_wfo,batches_tommy,violations_online";

inline void write_csv_row(std::ostream& out, const TrialResult& r) {
  auto opt = [](const auto& v) { return v ? std::to_string(*v) : std::string(); };
  out << r.trial << ',' << r.seed << ',' << r.params.n_clients << ','
      << format_number(r.params.sigma_scale) << ','
      << format_number(r.params.mean_gap_us) << ',' << format_number(r.params.threshold) << ','
      << format_number(r.params.p_safe) << ',' << opt(r.ras_tommy) << ',' << opt(r.ras_truetime)
      << ',' << opt(r.ras_wfo) << ',' << opt(r.batches_tommy) << ',' << opt(r.violations_online)
      << '\n';
}

inline void write_csv(std::ostream& out, const std::vector<TrialResult>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) write_csv_row(out, r);
}

}  // namespace tommy
