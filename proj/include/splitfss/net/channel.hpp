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

// Framed, metered duplex channel between two parties, and the in-process
// loopback implementation used by local simulation and tests.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "splitfss/net/frame.hpp"
#include "splitfss/net/meter.hpp"

namespace splitfss::net {

struct Message {
  MsgType type;
  std::uint64_t session_id;
  Bytes payload;
};

class Channel {
 public:
  Channel(Party self, Party peer, std::shared_ptr<ByteMeter> meter)
      : self_(self), peer_(peer), meter_(std::move(meter)) {}
  virtual ~Channel() = default;
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  Party self() const { return self_; }
  Party peer() const { return peer_; }
  ByteMeter& meter() { return *meter_; }
  std::shared_ptr<ByteMeter> meter_ptr() const { return meter_; }

  /// Re-labels the peer of an accepted connection once the handshake has
  /// identified it.
  void set_peer(Party p) { peer_ = p; }

  std::uint64_t session_id() const { return session_id_; }
  /// Frames received with any other session id are rejected. Zero accepts
  /// any id (used before the handshake).
  void set_session_id(std::uint64_t id) { session_id_ = id; }

  /// Observer of every payload sent or received, for transcript audits.
  using Tap = std::function<void(Direction, MsgType, std::span<const std::uint8_t>)>;
  void set_tap(Tap tap) { tap_ = std::move(tap); }

  void send(MsgType type, std::span<const std::uint8_t> payload) {
    if (tap_) tap_(Direction::kSent, type, payload);
    Bytes frame = encode_frame(type, session_id_, payload);
    meter_->record(peer_, Direction::kSent, type, frame.size());
    transmit(std::move(frame));
  }

  /// Next frame of any type, validated against the session id.
  Message recv_any() {
    Bytes frame = receive();
    const FrameHeader h = decode_header(frame);
    if (frame.size() != kHeaderSize + h.payload_len) {
      throw FormatError("frame: payload length field disagrees with frame size");
    }
    meter_->record(peer_, Direction::kReceived, h.type, frame.size());
    if (session_id_ != 0 && h.session_id != session_id_) {
      throw ProtocolError(std::string("frame from ") + party_name(peer_) +
                          " carries session id " + std::to_string(h.session_id) +
                          ", expected " + std::to_string(session_id_));
    }
    frame.erase(frame.begin(), frame.begin() + kHeaderSize);
    if (tap_) tap_(Direction::kReceived, h.type, frame);
    return {h.type, h.session_id, std::move(frame)};
  }

  /// Next frame, which must have the given type. A CLOSE from the peer
  /// surfaces as ProtocolError carrying its reason.
  Bytes recv(MsgType expected) {
    Message m = recv_any();
    if (m.type != expected) {
      if (m.type == MsgType::kClose) {
        throw ProtocolError(std::string(party_name(peer_)) + " closed the session: " +
                            std::string(m.payload.begin(), m.payload.end()));
      }
      throw ProtocolError(std::string("expected ") + msg_type_name(expected) + " from " +
                          party_name(peer_) + ", got " + msg_type_name(m.type));
    }
    return std::move(m.payload);
  }

  virtual void close() = 0;

 protected:
  virtual void transmit(Bytes frame) = 0;
  virtual Bytes receive() = 0;

 private:
  Party self_;
  Party peer_;
  std::shared_ptr<ByteMeter> meter_;
  std::uint64_t session_id_ = 0;
  Tap tap_;
};

/// Bounded single-producer single-consumer frame queue. A frame larger than
/// the capacity is admitted once the queue has drained.
class FramePipe {
 public:
  explicit FramePipe(std::size_t capacity_bytes) : capacity_(capacity_bytes) {}

  void push(Bytes frame) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] {
      return closed_ || queued_ == 0 || queued_ + frame.size() <= capacity_;
    });
    if (closed_) throw ChannelError("loopback: write to closed channel");
    queued_ += frame.size();
    q_.push_back(std::move(frame));
    not_empty_.notify_one();
  }

  Bytes pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    if (!not_empty_.wait_for(lock, timeout, [&] { return closed_ || !q_.empty(); })) {
      throw ChannelError("loopback: receive timed out");
    }
    if (q_.empty()) throw ChannelError("loopback: peer closed the channel");
    Bytes f = std::move(q_.front());
    q_.pop_front();
    queued_ -= f.size();
    not_full_.notify_one();
    return f;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<Bytes> q_;
  std::size_t queued_ = 0;
  std::size_t capacity_;
  bool closed_ = false;
};

class LoopbackChannel : public Channel {
 public:
  LoopbackChannel(Party self, Party peer, std::shared_ptr<ByteMeter> meter,
                  std::shared_ptr<FramePipe> out, std::shared_ptr<FramePipe> in,
                  std::chrono::milliseconds timeout)
      : Channel(self, peer, std::move(meter)), out_(std::move(out)), in_(std::move(in)),
        timeout_(timeout) {}
  ~LoopbackChannel() override { close(); }

  /// Closes both directions so a peer blocked on either side wakes up.
  /// Frames already queued stay readable.
  void close() override {
    out_->close();
    in_->close();
  }

 protected:
  void transmit(Bytes frame) override { out_->push(std::move(frame)); }
  Bytes receive() override { return in_->pop(timeout_); }

 private:
  std::shared_ptr<FramePipe> out_, in_;
  std::chrono::milliseconds timeout_;
};

inline constexpr std::size_t kDefaultPipeCapacity = 64u << 20;

/// Connected pair of loopback channels between parties a and b.
inline std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> make_loopback_pair(
    Party a, std::shared_ptr<ByteMeter> meter_a, Party b, std::shared_ptr<ByteMeter> meter_b,
    std::size_t capacity = kDefaultPipeCapacity,
    std::chrono::milliseconds timeout = std::chrono::minutes(30)) {
  auto ab = std::make_shared<FramePipe>(capacity);
  auto ba = std::make_shared<FramePipe>(capacity);
  return {std::make_unique<LoopbackChannel>(a, b, std::move(meter_a), ab, ba, timeout),
          std::make_unique<LoopbackChannel>(b, a, std::move(meter_b), ba, ab, timeout)};
}

}  // namespace splitfss::net
