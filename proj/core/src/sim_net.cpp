#include "cvsync/sim_net.hpp"

#include <algorithm>

#include "cvsync/error.hpp"

namespace cvsync {

namespace {

constexpr int kMaxReliableAttempts = 1000;

bool in_unit(double r) { return r >= 0.0 && r <= 1.0; }

}  // namespace

void SimNetConfig::validate() const {
  if (!in_unit(loss_rate) || !in_unit(duplicate_rate) || !in_unit(reorder_rate) || !in_unit(reliable_loss_rate)) {
    throw Error(ErrorCode::invalid_argument, "network rates must lie in [0, 1]");
  }
  if (latency_min_ms < 0 || latency_min_ms > latency_max_ms) {
    throw Error(ErrorCode::invalid_argument, "latency range must satisfy 0 <= min <= max");
  }
  if (reorder_extra_ms < 0 || retransmit_delay_ms < 0) {
    throw Error(ErrorCode::invalid_argument, "delays must be non-negative");
  }
}

SimNetwork::SimNetwork(SimNetConfig config) : config_(config), rng_(config.seed) { config_.validate(); }

double SimNetwork::uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

std::int64_t SimNetwork::latency() {
  const auto span = static_cast<std::uint64_t>(config_.latency_max_ms - config_.latency_min_ms) + 1;
  return config_.latency_min_ms + static_cast<std::int64_t>(rng_() % span);
}

void SimNetwork::schedule(std::int64_t at_ms, Delivery d) {
  d.at_ms = at_ms;
  queue_.push(Item{at_ms, order_++, std::move(d)});
}

void SimNetwork::send(std::int64_t now_ms, std::size_t from, std::size_t to, ChannelKind channel, Bytes frame) {
  ++stats_.sent;
  Delivery d{0, from, to, channel, std::move(frame)};

  if (channel == ChannelKind::reliable_ordered) {
    std::int64_t delay = 0;
    for (int attempt = 0; attempt < kMaxReliableAttempts && uniform01() < config_.reliable_loss_rate; ++attempt) {
      delay += config_.retransmit_delay_ms;
      ++stats_.retransmitted;
    }
    const auto n = std::max(from, to) + 1;
    if (link_clock_.size() < n) link_clock_.resize(n);
    for (auto& row : link_clock_) {
      if (row.size() < n) row.resize(n, 0);
    }
    auto& clock = link_clock_[from][to];
    const std::int64_t at = std::max(now_ms + delay + latency(), clock);
    clock = at;
    schedule(at, std::move(d));
    return;
  }

  if (uniform01() < config_.loss_rate) {
    ++stats_.lost;
    return;
  }
  auto extra = [&]() -> std::int64_t {
    if (uniform01() >= config_.reorder_rate) return 0;
    ++stats_.reordered;
    return static_cast<std::int64_t>(uniform01() * static_cast<double>(config_.reorder_extra_ms));
  };
  if (uniform01() < config_.duplicate_rate) {
    ++stats_.duplicated;
    schedule(now_ms + latency() + extra(), d);
  }
  schedule(now_ms + latency() + extra(), std::move(d));
}

std::optional<std::int64_t> SimNetwork::next_time() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.top().at_ms;
}

std::optional<SimNetwork::Delivery> SimNetwork::pop_due(std::int64_t until_ms) {
  if (queue_.empty() || queue_.top().at_ms > until_ms) return std::nullopt;
  Delivery d = queue_.top().delivery;
  queue_.pop();
  ++stats_.delivered;
  return d;
}

}  // namespace cvsync
