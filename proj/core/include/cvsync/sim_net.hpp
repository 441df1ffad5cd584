#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <random>
#include <vector>

#include "cvsync/bytes.hpp"
#include "cvsync/session.hpp"

namespace cvsync {

struct SimNetConfig {
  std::uint64_t seed = 1;
  std::int64_t latency_min_ms = 5;
  std::int64_t latency_max_ms = 5;
  double loss_rate = 0.0;
  double duplicate_rate = 0.0;
  double reorder_rate = 0.0;
  std::int64_t reorder_extra_ms = 60;  // extra delay drawn for a reordered frame
  // Reliable channel: chance an attempt is lost, and what each loss costs.
  double reliable_loss_rate = 0.0;
  std::int64_t retransmit_delay_ms = 200;

  /// Throws invalid_argument for rates outside [0, 1] or min > max.
  void validate() const;
};

/// Deterministic clock-driven network between numbered nodes.
///
/// reliable_ordered links deliver every frame exactly once, in send order:
/// a lost attempt (reliable_loss_rate) only costs retransmit_delay_ms, and
/// delivery times on a link never decrease. lossy_unordered frames are lost
/// with loss_rate, duplicated, or held back by up to reorder_extra_ms.
class SimNetwork {
 public:
  struct Delivery {
    std::int64_t at_ms = 0;
    std::size_t from = 0;
    std::size_t to = 0;
    ChannelKind channel = ChannelKind::reliable_ordered;
    Bytes frame;
  };

  struct Stats {
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::uint64_t lost = 0;
    std::uint64_t duplicated = 0;
    std::uint64_t reordered = 0;
    std::uint64_t retransmitted = 0;
  };

  explicit SimNetwork(SimNetConfig config);

  void send(std::int64_t now_ms, std::size_t from, std::size_t to, ChannelKind channel, Bytes frame);

  std::optional<std::int64_t> next_time() const;

  /// Next delivery due at or before until_ms, in (time, send order).
  std::optional<Delivery> pop_due(std::int64_t until_ms);

  bool idle() const { return queue_.empty(); }
  const Stats& stats() const { return stats_; }
  const SimNetConfig& config() const { return config_; }

 private:
  struct Item {
    std::int64_t at_ms;
    std::uint64_t order;
    Delivery delivery;
  };
  struct Later {
    bool operator()(const Item& a, const Item& b) const {
      return a.at_ms != b.at_ms ? a.at_ms > b.at_ms : a.order > b.order;
    }
  };

  double uniform01();
  std::int64_t latency();
  void schedule(std::int64_t at_ms, Delivery d);

  SimNetConfig config_;
  std::mt19937_64 rng_;
  std::priority_queue<Item, std::vector<Item>, Later> queue_;
  std::uint64_t order_ = 0;
  std::vector<std::vector<std::int64_t>> link_clock_;  // reliable: last delivery time per (from, to)
  Stats stats_;
};

}  // namespace cvsync
