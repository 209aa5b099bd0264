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

// Session establishment. The connecting side opens with a SYNC frame carrying
// its party id and the digest of the agreed hyperparameters; the accepting
// side checks the digest and that the session id has not been seen before,
// then answers with its own SYNC. Any mismatch is reported to the peer with a
// CLOSE frame and raised locally as ProtocolError.
//
// SYNC payload: [1B party][8B digest, little-endian].

#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "splitfss/net/channel.hpp"

namespace splitfss::net {

/// Session ids already used in this process. A SYNC that reuses one is a
/// replay and is rejected.
class SessionRegistry {
 public:
  bool claim(std::uint64_t id) {
    std::lock_guard lock(mu_);
    return seen_.insert(id).second;
  }
  bool seen(std::uint64_t id) const {
    std::lock_guard lock(mu_);
    return seen_.count(id) != 0;
  }

  static SessionRegistry& global() {
    static SessionRegistry r;
    return r;
  }

 private:
  mutable std::mutex mu_;
  std::set<std::uint64_t> seen_;
};

inline std::uint64_t fresh_session_id() {
  static std::mutex mu;
  static std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(mu);
  std::uint64_t id = 0;
  while (id == 0) id = gen();
  return id;
}

namespace detail {

inline Bytes sync_payload(Party self, std::uint64_t digest) {
  ByteWriter w(9);
  w.u8(static_cast<std::uint8_t>(self));
  w.u64(digest);
  return w.take();
}

struct SyncInfo {
  Party party;
  std::uint64_t digest;
};

inline SyncInfo parse_sync(const Bytes& payload) {
  ByteReader r(payload, "SYNC payload");
  const auto p = r.u8();
  if (p >= kNumParties) throw ProtocolError("SYNC: unknown party id " + std::to_string(p));
  SyncInfo s{static_cast<Party>(p), r.u64()};
  r.expect_end();
  return s;
}

inline void reject(Channel& ch, const std::string& why) {
  try {
    ch.send(MsgType::kClose, std::span(reinterpret_cast<const std::uint8_t*>(why.data()), why.size()));
  } catch (const Error&) {
  }
  throw ProtocolError(why);
}

}  // namespace detail

/// Connecting side. Returns once the peer has acknowledged.
inline void connect_handshake(Channel& ch, std::uint64_t digest,
                              std::uint64_t session_id = fresh_session_id()) {
  ch.set_session_id(session_id);
  ch.send(MsgType::kSync, detail::sync_payload(ch.self(), digest));
  const auto ack = detail::parse_sync(ch.recv(MsgType::kSync));
  if (ack.party != ch.peer()) {
    detail::reject(ch, std::string("expected to reach ") + party_name(ch.peer()) + ", reached " +
                           party_name(ack.party));
  }
  if (ack.digest != digest) detail::reject(ch, "hyperparameter digest mismatch");
}

/// Accepting side. With expected_peer unset, any party may connect and the
/// channel is re-labelled with the peer's id.
inline Party accept_handshake(Channel& ch, std::uint64_t digest,
                              std::optional<Party> expected_peer = std::nullopt,
                              SessionRegistry& registry = SessionRegistry::global()) {
  ch.set_session_id(0);
  Message m = ch.recv_any();
  if (m.type != MsgType::kSync) {
    detail::reject(ch, std::string("expected SYNC, got ") + msg_type_name(m.type));
  }
  const auto hello = detail::parse_sync(m.payload);
  ch.set_session_id(m.session_id);
  if (m.session_id == 0 || !registry.claim(m.session_id)) {
    detail::reject(ch, "stale or invalid session id " + std::to_string(m.session_id));
  }
  if (expected_peer && hello.party != *expected_peer) {
    detail::reject(ch, std::string("unexpected peer ") + party_name(hello.party));
  }
  ch.set_peer(hello.party);
  if (hello.digest != digest) {
    detail::reject(ch, "hyperparameter digest mismatch (local " + std::to_string(digest) +
                           ", peer " + std::to_string(hello.digest) + ")");
  }
  ch.send(MsgType::kSync, detail::sync_payload(ch.self(), digest));
  return hello.party;
}

}  // namespace splitfss::net
