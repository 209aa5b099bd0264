// Copyright 2026 The SplitFSS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Byte accounting per (party, peer, direction, phase). Every frame is counted
// once by its sender and once by its receiver, header included.

#include <array>
#include <atomic>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "splitfss/net/frame.hpp"

namespace splitfss::net {

enum class Party : std::uint8_t { kClient = 0, kServer0 = 1, kServer1 = 2, kDealer = 3 };
inline constexpr int kNumParties = 4;

enum class Phase : std::uint8_t { kSetup = 0, kPreprocessing = 1, kTraining = 2, kTesting = 3 };
inline constexpr int kNumPhases = 4;

enum class Direction : std::uint8_t { kSent = 0, kReceived = 1 };

inline const char* party_name(Party p) {
  switch (p) {
    case Party::kClient: return "client";
    case Party::kServer0: return "server0";
    case Party::kServer1: return "server1";
    case Party::kDealer: return "dealer";
  }
  return "?";
}

inline Party parse_party(const std::string& s) {
  if (s == "client") return Party::kClient;
  if (s == "server0") return Party::kServer0;
  if (s == "server1") return Party::kServer1;
  if (s == "dealer") return Party::kDealer;
  throw ConfigError("unknown party '" + s + "'");
}

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::kSetup: return "setup";
    case Phase::kPreprocessing: return "preprocessing";
    case Phase::kTraining: return "training";
    case Phase::kTesting: return "testing";
  }
  return "?";
}

inline constexpr double kBytesPerMB = 1e6;

/// Counters owned by one party. The party's state machine sets the current
/// phase; dealer material (KEY_BLOB, TRIPLE_BLOB) always counts as
/// preprocessing outside the setup phase.
class ByteMeter {
 public:
  explicit ByteMeter(Party owner) : owner_(owner) {}

  Party owner() const { return owner_; }
  void set_phase(Phase p) { phase_.store(p); }
  Phase phase() const { return phase_.load(); }

  Phase classify(MsgType type) const {
    const Phase p = phase();
    if (p == Phase::kSetup) return p;
    if (type == MsgType::kKeyBlob || type == MsgType::kTripleBlob) return Phase::kPreprocessing;
    return p;
  }

  void record(Party peer, Direction dir, MsgType type, std::uint64_t bytes) {
    at(peer, dir, classify(type)).fetch_add(bytes, std::memory_order_relaxed);
  }

  std::uint64_t bytes(Party peer, Direction dir, Phase phase) const {
    return at(peer, dir, phase).load(std::memory_order_relaxed);
  }
  std::uint64_t total(Direction dir, Phase phase) const {
    std::uint64_t s = 0;
    for (int q = 0; q < kNumParties; ++q) s += bytes(static_cast<Party>(q), dir, phase);
    return s;
  }
  std::uint64_t total(Direction dir) const {
    std::uint64_t s = 0;
    for (int p = 0; p < kNumPhases; ++p) s += total(dir, static_cast<Phase>(p));
    return s;
  }

 private:
  using Counter = std::atomic<std::uint64_t>;
  Counter& at(Party peer, Direction dir, Phase phase) {
    return counters_[static_cast<int>(peer)][static_cast<int>(dir)][static_cast<int>(phase)];
  }
  const Counter& at(Party peer, Direction dir, Phase phase) const {
    return counters_[static_cast<int>(peer)][static_cast<int>(dir)][static_cast<int>(phase)];
  }

  Party owner_;
  std::atomic<Phase> phase_{Phase::kSetup};
  std::array<std::array<std::array<Counter, kNumPhases>, 2>, kNumParties> counters_{};
};

/// Per-phase byte totals of one party, with MB figures (10^6 bytes).
inline nlohmann::json meter_report(const ByteMeter& m) {
  nlohmann::json j;
  j["party"] = party_name(m.owner());
  for (int p = 0; p < kNumPhases; ++p) {
    const auto phase = static_cast<Phase>(p);
    const auto sent = m.total(Direction::kSent, phase);
    const auto recv = m.total(Direction::kReceived, phase);
    j["phases"][phase_name(phase)] = {{"sent_bytes", sent},
                                      {"received_bytes", recv},
                                      {"sent_mb", sent / kBytesPerMB},
                                      {"received_mb", recv / kBytesPerMB}};
  }
  for (int q = 0; q < kNumParties; ++q) {
    const auto peer = static_cast<Party>(q);
    std::uint64_t s = 0, r = 0;
    for (int p = 0; p < kNumPhases; ++p) {
      s += m.bytes(peer, Direction::kSent, static_cast<Phase>(p));
      r += m.bytes(peer, Direction::kReceived, static_cast<Phase>(p));
    }
    if (s || r) j["peers"][party_name(peer)] = {{"sent_bytes", s}, {"received_bytes", r}};
  }
  j["sent_bytes"] = m.total(Direction::kSent);
  j["received_bytes"] = m.total(Direction::kReceived);
  return j;
}

}  // namespace splitfss::net
