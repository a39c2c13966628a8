#pragma once

// Command-line front end: probe, order, replay, simulate.

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tommy/io.hpp"
#include "tommy/version.hpp"

namespace tommy::cli {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::optional<double> resolution_us;
  std::optional<double> threshold;
  std::optional<double> p_safe;
  std::optional<std::string> output;
};

namespace detail {

inline std::ifstream open_input(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw Error(std::string("cannot open ") + what + " '" + path + "'");
  return in;
}

inline ModelMap load_models(const std::string& path) {
  auto in = open_input(path, "models file");
  return read_models(in);
}

// Writes to --output when given, otherwise to `fallback`.
class Sink {
 public:
  Sink(const std::optional<std::string>& path, std::ostream& fallback) : stream_(&fallback) {
    if (path) {
      file_ = std::make_unique<std::ofstream>(*path, std::ios::binary);
      if (!*file_) throw Error("cannot write '" + *path + "'");
      stream_ = file_.get();
    }
  }
  std::ostream& get() { return *stream_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

inline std::string run_timestamp() {
  std::time_t now = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) now = std::strtoll(epoch, nullptr, 10);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

struct ProbeArgs {
  std::string models;
  std::string client_i;
  std::string client_j;
  double t_i = 0.0;
  double t_j = 0.0;
};

inline int cmd_probe(const ProbeArgs& a, const GlobalOptions& g, std::ostream& out) {
  const ModelMap models = detail::load_models(a.models);
  const auto ci = models.find(a.client_i);
  if (ci == models.end()) throw UnknownClient(a.client_i);
  const auto cj = models.find(a.client_j);
  if (cj == models.end()) throw UnknownClient(a.client_j);
  const double p = preceding_prob(a.t_i, a.t_j, ci->second, cj->second, g.resolution_us.value_or(1.0));
  detail::Sink sink(g.output, out);
  sink.get() << std::fixed << std::setprecision(6) << p << ' '
             << to_string(probability_path(ci->second, cj->second)) << '\n';
  return 0;
}

struct OrderArgs {
  std::string messages;
  std::string models;
};

inline int cmd_order(const OrderArgs& a, const GlobalOptions& g, std::ostream& out,
                     std::ostream& err) {
  const ModelMap models = detail::load_models(a.models);
  auto in = detail::open_input(a.messages, "messages file");
  const auto messages = read_messages(in);
  const auto result = sequence(messages, models, g.threshold.value_or(kDefaultThreshold),
                               g.resolution_us.value_or(1.0));
  detail::Sink sink(g.output, out);
  sink.get() << to_json(result).dump(2) << '\n';
  err << "cycle_breaks " << result.removed_edges << '\n';
  return 0;
}

struct ReplayArgs {
  std::string trace;
  std::string models;
  std::optional<double> max_wait_us;
};

inline int cmd_replay(const ReplayArgs& a, const GlobalOptions& g, std::ostream& out) {
  ModelMap models = detail::load_models(a.models);
  auto in = detail::open_input(a.trace, "trace file");
  const auto trace = read_trace(in);

  SequencerConfig cfg;
  cfg.threshold = g.threshold.value_or(kDefaultThreshold);
  cfg.p_safe = g.p_safe.value_or(kDefaultPSafe);
  cfg.resolution = g.resolution_us.value_or(1.0);
  cfg.max_wait = a.max_wait_us;
  OnlineSequencer seq(cfg, std::move(models));

  std::ostringstream log;
  for (const auto& line : trace) {
    try {
      for (const auto& b : seq.ingest(line.event)) log << format_emission(b) << '\n';
    } catch (const Error& e) {
      throw ParseError(line.line, e.what());
    }
  }
  log << "V " << seq.violations() << '\n';
  detail::Sink sink(g.output, out);
  sink.get() << log.str();
  return 0;
}

struct SimulateArgs {
  std::string config;
};

inline json manifest(const SweepConfig& s) {
  return json{{"tool", "tommy"},
              {"version", kVersion},
              {"seed", s.base.seed},
              {"run_timestamp", detail::run_timestamp()},
              {"grid_note", "sigma/gap grid is a harness choice; no published values"},
              {"config", to_json(s)}};
}

inline int cmd_simulate(const SimulateArgs& a, const GlobalOptions& g, std::ostream& out) {
  auto in = detail::open_input(a.config, "config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("config: ") + e.what());
  }
  SweepConfig s = sweep_config_from_json(j);
  if (g.seed) s.base.seed = *g.seed;
  if (g.resolution_us) s.base.resolution = *g.resolution_us;
  if (g.threshold) s.base.threshold = *g.threshold;
  if (g.p_safe) s.base.p_safe = *g.p_safe;
  validate(s);

  const auto rows = run_sweep(s);
  detail::Sink sink(g.output, out);
  write_csv(sink.get(), rows);
  if (g.output) {
    std::ofstream m(*g.output + ".manifest.json", std::ios::binary);
    if (!m) throw Error("cannot write manifest");
    m << manifest(s).dump(2) << '\n';
  }
  return 0;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Probabilistic fair-ordering sequencer"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "RNG seed (simulate)");
  app.add_option("--resolution-us", g.resolution_us, "PDF bin width in microseconds")
      ->check(CLI::PositiveNumber);
  app.add_option("--threshold", g.threshold, "batch boundary probability");
  app.add_option("--p-safe", g.p_safe, "safe-emission confidence");
  app.add_option("--output", g.output, "output file (default stdout)");

  ProbeArgs probe;
  auto* p = app.add_subcommand("probe", "P(message i truly precedes message j)");
  p->add_option("--models", probe.models, "client -> clock model JSON")->required();
  p->add_option("--client-i", probe.client_i)->required();
  p->add_option("--client-j", probe.client_j)->required();
  p->add_option("--t-i", probe.t_i, "local timestamp of i (us)")->required();
  p->add_option("--t-j", probe.t_j, "local timestamp of j (us)")->required();

  OrderArgs order;
  auto* o = app.add_subcommand("order", "sequence a message file into ranked batches");
  o->add_option("--messages", order.messages)->required();
  o->add_option("--models", order.models)->required();

  ReplayArgs replay;
  auto* r = app.add_subcommand("replay", "replay an event trace through the online sequencer");
  r->add_option("--trace", replay.trace)->required();
  r->add_option("--models", replay.models)->required();
  r->add_option("--max-wait-us", replay.max_wait_us, "force-emit after waiting this long");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "run seeded simulation trials, write CSV");
  s->add_option("--config", sim.config)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (p->parsed()) return cmd_probe(probe, g, out);
    if (o->parsed()) return cmd_order(order, g, out, err);
    if (r->parsed()) return cmd_replay(replay, g, out);
    if (s->parsed()) return cmd_simulate(sim, g, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace tommy::cli
