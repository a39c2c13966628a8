#pragma once

// Streaming sequencer: buffers arrivals, tracks per-client watermarks, and
// emits batches irrevocably once they are safe.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tommy/clock_stats.hpp"
#include "tommy/errors.hpp"
#include "tommy/fair_order.hpp"

namespace tommy {

inline constexpr double kDefaultPSafe = 0.999;

struct MessageArrival {
  Message message;
};

struct Heartbeat {
  std::string client;
  double local_ts = 0.0;
};

struct ClockTick {
  double now = 0.0;  // sequencer clock, microseconds
};

using Event = std::variant<MessageArrival, Heartbeat, ClockTick>;

inline void check_p_safe(double p_safe) {
  if (!(p_safe > 0.5 && p_safe < 1.0)) throw DomainError("p_safe must lie in (0.5, 1)");
}

// Earliest sequencer time T^F with P(T* < T^F) > p_safe. A point mass needs
// one extra resolution step to make the inequality strict.
inline double safe_time(const Message& m, const ClockModel& model, double p_safe,
                        double resolution = 1.0) {
  check_p_safe(p_safe);
  if (model.is_point_mass()) return m.local_ts + model.as_gaussian().mean + resolution;
  return m.local_ts + offset_quantile(model, p_safe);
}

inline double batch_emission_time(const std::vector<Message>& batch, const ModelMap& models,
                                  double p_safe, double resolution = 1.0) {
  if (batch.empty()) throw PreconditionError("batch_emission_time: empty batch");
  double latest = -std::numeric_limits<double>::infinity();
  for (const auto& m : batch) {
    const auto it = models.find(m.client);
    if (it == models.end()) throw UnknownClient(m.client);
    latest = std::max(latest, safe_time(m, it->second, p_safe, resolution));
  }
  return latest;
}

// Lower confidence bound on how far every client's true clock has advanced:
// min over clients of watermark + (1 - p_safe) offset quantile.
inline double conservative_watermark(const std::map<std::string, double>& watermarks,
                                     const std::vector<std::string>& clients,
                                     const ModelMap& models, double p_safe) {
  check_p_safe(p_safe);
  double w = std::numeric_limits<double>::infinity();
  for (const auto& c : clients) {
    const auto wm = watermarks.find(c);
    if (wm == watermarks.end()) throw WatermarkNotEstablished(c);
    const auto model = models.find(c);
    if (model == models.end()) throw UnknownClient(c);
    const double low = model->second.is_point_mass() ? model->second.as_gaussian().mean
                                                     : offset_quantile(model->second, 1.0 - p_safe);
    w = std::min(w, wm->second + low);
  }
  return w;
}

struct SequencerConfig {
  double threshold = kDefaultThreshold;
  double p_safe = kDefaultPSafe;
  double resolution = 1.0;
  std::vector<std::string> clients;  // fixed participant set
  std::optional<double> max_wait;    // force-emit after this long; off by default
};

struct EmittedBatch {
  std::size_t rank = 0;
  std::vector<std::string> ids;
  double emit_time = 0.0;
  bool forced = false;

  friend bool operator==(const EmittedBatch&, const EmittedBatch&) = default;
};

class OnlineSequencer {
 public:
  OnlineSequencer(SequencerConfig config, ModelMap models)
      : config_(std::move(config)),
        models_(std::make_shared<const ModelMap>(std::move(models))),
        oracle_(*models_, config_.resolution) {
    check_threshold(config_.threshold);
    check_p_safe(config_.p_safe);
    if (config_.clients.empty()) {
      for (const auto& [client, _] : *models_) config_.clients.push_back(client);
    }
    std::sort(config_.clients.begin(), config_.clients.end());
    config_.clients.erase(std::unique(config_.clients.begin(), config_.clients.end()),
                          config_.clients.end());
    for (const auto& c : config_.clients) {
      if (!models_->count(c)) throw UnknownClient(c);
    }
  }

  std::vector<EmittedBatch> ingest(const Event& event) {
    return std::visit([this](const auto& e) { return handle(e); }, event);
  }

  // Emits everything still buffered, ignoring safety; each batch counts as forced.
  std::vector<EmittedBatch> flush() {
    std::vector<EmittedBatch> out;
    while (!buffer_.empty()) {
      if (!pending_) establish();
      out.push_back(emit(true));
    }
    return out;
  }

  std::optional<double> conservative_watermark() const {
    try {
      return tommy::conservative_watermark(watermarks_, config_.clients, *models_, config_.p_safe);
    } catch (const WatermarkNotEstablished&) {
      return std::nullopt;
    }
  }

  std::optional<double> watermark(const std::string& client) const {
    const auto it = watermarks_.find(client);
    if (it == watermarks_.end()) return std::nullopt;
    return it->second;
  }

  // Safe emission time of the batch currently awaiting emission.
  std::optional<double> pending_emission_time() const {
    if (!pending_) return std::nullopt;
    return batch_emission_time(members(pending_->ids), *models_, config_.p_safe,
                               config_.resolution);
  }

  std::vector<std::string> pending_batch() const {
    return pending_ ? pending_->ids : std::vector<std::string>{};
  }

  const std::vector<Message>& buffer() const noexcept { return buffer_; }
  const SequencerConfig& config() const noexcept { return config_; }
  const ModelMap& models() const noexcept { return *models_; }
  std::size_t emitted_batches() const noexcept { return next_rank_; }
  std::size_t violations() const noexcept { return violations_; }
  std::size_t forced_emissions() const noexcept { return forced_; }
  std::optional<double> now() const noexcept { return now_; }

 private:
  struct Pending {
    std::vector<std::string> ids;
    double established_at = 0.0;
    bool grown = false;  // members joined after establishment
  };

  bool is_client(const std::string& c) const {
    return std::binary_search(config_.clients.begin(), config_.clients.end(), c);
  }

  void advance_watermark(const std::string& client, double local_ts) {
    if (!is_client(client)) throw UnknownClient(client);
    auto [it, inserted] = watermarks_.try_emplace(client, local_ts);
    if (inserted) return;
    if (local_ts < it->second) {
      throw ProtocolError("client '" + client + "' went back in time: " +
                          std::to_string(local_ts) + " < " + std::to_string(it->second));
    }
    it->second = local_ts;
  }

  // True when b cannot be confidently placed after a.
  bool not_confidently_after(const Message& a, const Message& b) {
    try {
      return oracle_(a, b) <= config_.threshold;
    } catch (const TieError&) {
      return true;
    }
  }

  const Message& find(const std::string& id) const {
    const auto it = std::find_if(buffer_.begin(), buffer_.end(),
                                 [&](const Message& m) { return m.id == id; });
    return *it;
  }

  std::vector<Message> members(const std::vector<std::string>& ids) const {
    std::vector<Message> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(find(id));
    return out;
  }

  std::vector<EmittedBatch> handle(const MessageArrival& arrival) {
    const Message& m = arrival.message;
    if (ids_.count(m.id)) throw PreconditionError("duplicate message id '" + m.id + "'");
    advance_watermark(m.client, m.local_ts);
    ids_.insert(m.id);

    for (const auto& k : last_emitted_) {
      if (not_confidently_after(k, m)) {
        ++violations_;
        break;
      }
    }

    buffer_.push_back(m);
    planned_.clear();

    if (pending_) {
      bool joins = false;
      for (const auto& f : members(pending_->ids)) {
        if (not_confidently_after(f, m)) {
          joins = true;
          break;
        }
      }
      if (joins) absorb(m.id);
    }
    return {};
  }

  // Adds `id` to the pending batch and pulls in any buffered message that
  // cannot be confidently placed after a newly added member.
  void absorb(const std::string& id) {
    std::set<std::string> in_batch(pending_->ids.begin(), pending_->ids.end());
    std::vector<std::string> frontier{id};
    in_batch.insert(id);
    pending_->ids.push_back(id);
    pending_->grown = true;
    while (!frontier.empty()) {
      const Message joined = find(frontier.back());
      frontier.pop_back();
      for (const auto& r : buffer_) {
        if (in_batch.count(r.id)) continue;
        if (not_confidently_after(joined, r)) {
          in_batch.insert(r.id);
          pending_->ids.push_back(r.id);
          frontier.push_back(r.id);
        }
      }
    }
  }

  std::vector<EmittedBatch> handle(const Heartbeat& hb) {
    advance_watermark(hb.client, hb.local_ts);
    return {};
  }

  std::vector<EmittedBatch> handle(const ClockTick& tick) {
    if (now_ && tick.now < *now_) throw ProtocolError("sequencer clock went backwards");
    now_ = tick.now;

    std::vector<EmittedBatch> out;
    while (!buffer_.empty()) {
      if (!pending_) establish();
      const double tb = *pending_emission_time();
      const auto w = conservative_watermark();
      const bool safe = tick.now >= tb && w && *w >= tb;
      const bool overdue =
          config_.max_wait && tick.now - pending_->established_at >= *config_.max_wait;
      if (!safe && !overdue) break;
      out.push_back(emit(!safe));
    }
    return out;
  }

  // Re-sequences the buffer when needed and takes its first batch as pending.
  void establish() {
    if (planned_.empty()) {
      for (const auto& b : sequence(buffer_, oracle_, config_.threshold).batches) {
        planned_.push_back(b.ids);
      }
    }
    pending_ = Pending{planned_.front(), now_.value_or(0.0), false};
    planned_.erase(planned_.begin());
  }

  EmittedBatch emit(bool forced) {
    std::vector<std::string> ids = pending_->ids;
    if (pending_->grown) {
      ids.clear();
      for (const auto& b : sequence(members(pending_->ids), oracle_, config_.threshold).batches) {
        ids.insert(ids.end(), b.ids.begin(), b.ids.end());
      }
    }
    last_emitted_ = members(ids);
    const std::set<std::string> gone(ids.begin(), ids.end());
    std::erase_if(buffer_, [&](const Message& m) { return gone.count(m.id) != 0; });
    pending_.reset();
    if (forced) ++forced_;
    return EmittedBatch{next_rank_++, std::move(ids), now_.value_or(0.0), forced};
  }

  SequencerConfig config_;
  std::shared_ptr<const ModelMap> models_;
  PrecedenceOracle oracle_;

  std::vector<Message> buffer_;
  std::set<std::string> ids_;
  std::map<std::string, double> watermarks_;
  std::optional<Pending> pending_;
  std::vector<std::vector<std::string>> planned_;  // batches after pending_, valid until next arrival
  std::vector<Message> last_emitted_;
  std::size_t next_rank_ = 0;
  std::size_t violations_ = 0;
  std::size_t forced_ = 0;
  std::optional<double> now_;
};

}  // namespace tommy
