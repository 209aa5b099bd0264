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

// Wiring of roles to channels. Connections follow a fixed direction so that
// handshakes never wait on each other: server1 dials server0, the client
// dials both servers, and the dealer dials everyone it serves.
//
// local-sim runs every role as a thread over loopback channels; multi-process
// mode runs one role per process over TCP. With a tape directory the dealer
// writes its material to files first and the other roles read them back.

#include <chrono>
#include <exception>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "splitfss/harness/experiment.hpp"
#include "splitfss/net/session.hpp"
#include "splitfss/net/tcp.hpp"
#include "splitfss/proto/roles.hpp"

namespace splitfss::harness {

using net::Party;

/// Parties taking part in a variant.
inline std::vector<Party> participants(Variant v) {
  if (proto::is_private(v)) return {Party::kServer0, Party::kServer1, Party::kClient, Party::kDealer};
  return {Party::kServer0, Party::kClient};
}

struct Edge {
  Party dialer;
  Party listener;
};

/// Channels of a variant. Without a dealer link the dealer edges disappear
/// (tape mode).
inline std::vector<Edge> topology(Variant v, bool dealer_online = true) {
  if (!proto::is_private(v)) return {{Party::kClient, Party::kServer0}};
  std::vector<Edge> e = {{Party::kServer1, Party::kServer0},
                         {Party::kClient, Party::kServer0},
                         {Party::kClient, Party::kServer1}};
  if (dealer_online) {
    e.push_back({Party::kDealer, Party::kServer0});
    e.push_back({Party::kDealer, Party::kServer1});
    if (v == Variant::kPrivateVanilla) e.push_back({Party::kDealer, Party::kClient});
  }
  return e;
}

/// Tape file of one party inside a tape directory.
inline std::filesystem::path tape_path(const std::string& dir, Party p) {
  return std::filesystem::path(dir) / (std::string(net::party_name(p)) + ".tape");
}

struct RunResult {
  std::optional<proto::ClientOutcome> client;
  std::optional<proto::ServerOutcome> server[2];
  std::optional<proto::DealerOutcome> dealer;
  std::map<Party, std::shared_ptr<net::ByteMeter>> meters;
  double wall_seconds = 0.0;
};

struct Datasets {
  const data::Dataset* train = nullptr;
  const data::Dataset* test = nullptr;
};

namespace detail {

inline proto::Links links_of(const std::map<Party, net::Channel*>& ch) {
  proto::Links l;
  auto get = [&](Party p) -> net::Channel* {
    auto it = ch.find(p);
    return it == ch.end() ? nullptr : it->second;
  };
  l.client = get(Party::kClient);
  l.server0 = get(Party::kServer0);
  l.server1 = get(Party::kServer1);
  l.dealer = get(Party::kDealer);
  return l;
}

/// Runs one role on established channels. Tape mode replaces the dealer
/// link by the party's tape; the dealer itself then writes all tapes.
inline void execute_role(Party role, const ExperimentConfig& cfg, const std::map<Party, net::Channel*>& ch,
                         Datasets data, RunResult& out) {
  const auto& hp = cfg.hp;
  const proto::Links links = links_of(ch);
  const bool tapes = !cfg.tape_dir.empty() && proto::is_private(hp.variant);
  const std::uint64_t digest = proto::digest(hp);
  std::unique_ptr<mpc::MaterialSource> source;
  auto material_for = [&](Party p) -> mpc::MaterialSource* {
    if (!proto::is_private(hp.variant)) return nullptr;
    if (p == Party::kClient && hp.variant != Variant::kPrivateVanilla) return nullptr;
    if (tapes) {
      source = std::make_unique<mpc::TapeReader>(tape_path(cfg.tape_dir, p).string(), static_cast<int>(p), digest);
    } else {
      if (!links.dealer) throw ConfigError(std::string(net::party_name(p)) + ": private variant needs the dealer");
      source = std::make_unique<mpc::ChannelSource>(*links.dealer);
    }
    return source.get();
  };

  switch (role) {
    case Party::kClient:
      if (!data.train || !data.test) throw ConfigError("client: no dataset loaded");
      out.client = proto::run_client(hp, links, *data.train, *data.test, material_for(role));
      break;
    case Party::kServer0:
    case Party::kServer1: {
      const int j = role == Party::kServer0 ? 0 : 1;
      out.server[j] = proto::run_server(j, hp, links, material_for(role));
      break;
    }
    case Party::kDealer: {
      if (tapes) {
        std::filesystem::create_directories(cfg.tape_dir);
        auto writer = [&](Party p) {
          return std::make_unique<mpc::TapeWriter>(tape_path(cfg.tape_dir, p).string(), static_cast<int>(p), digest);
        };
        auto t0 = writer(Party::kServer0), t1 = writer(Party::kServer1);
        std::unique_ptr<mpc::TapeWriter> tc;
        if (hp.variant == Variant::kPrivateVanilla) tc = writer(Party::kClient);
        out.dealer = proto::run_dealer(hp, *t0, *t1, tc.get(), links);
      } else {
        if (!links.server0 || !links.server1) throw ConfigError("dealer: missing server links");
        mpc::ChannelSink s0(*links.server0), s1(*links.server1);
        std::optional<mpc::ChannelSink> sc;
        if (hp.variant == Variant::kPrivateVanilla) {
          if (!links.client) throw ConfigError("dealer: missing client link");
          sc.emplace(*links.client);
        }
        out.dealer = proto::run_dealer(hp, s0, s1, sc ? &*sc : nullptr, links);
      }
      break;
    }
  }
}

/// Rethrows the most informative failure: one that is not merely a peer
/// reporting that someone else went away.
inline void rethrow_root(const std::vector<std::exception_ptr>& errors) {
  std::exception_ptr first, root;
  for (const auto& e : errors) {
    if (!e) continue;
    if (!first) first = e;
    try {
      std::rethrow_exception(e);
    } catch (const std::exception& ex) {
      const std::string w = ex.what();
      const bool secondary = w.find("closed the session") != std::string::npos ||
                             w.find("closed the channel") != std::string::npos ||
                             w.find("closed the connection") != std::string::npos ||
                             w.find("closed channel") != std::string::npos;
      if (!secondary && !root) root = e;
    } catch (...) {
      if (!root) root = e;
    }
  }
  if (root) std::rethrow_exception(root);
  if (first) std::rethrow_exception(first);
}

}  // namespace detail

/// Optional observer of each channel once its handshake is complete
/// (transcript audits attach taps here).
using ChannelHook = std::function<void(Party self, Party peer, net::Channel&)>;

/// Runs every role of the configured variant in this process.
inline RunResult run_local_sim(const ExperimentConfig& cfg, Datasets data, const ChannelHook& hook = {}) {
  const auto& hp = cfg.hp;
  hp.validate();
  const bool tapes = !cfg.tape_dir.empty() && proto::is_private(hp.variant);
  const std::uint64_t digest = proto::digest(hp);
  const auto parties = participants(hp.variant);
  RunResult out;
  for (auto p : parties) out.meters[p] = std::make_shared<net::ByteMeter>(p);

  std::map<Party, std::map<Party, std::unique_ptr<net::Channel>>> chans;
  const auto edges = topology(hp.variant, !tapes);
  for (const auto& e : edges) {
    auto [a, b] = net::make_loopback_pair(e.dialer, out.meters[e.dialer], e.listener, out.meters[e.listener]);
    chans[e.dialer][e.listener] = std::move(a);
    chans[e.listener][e.dialer] = std::move(b);
  }
  for (auto p : parties) chans[p];  // no insertion once the threads run
  net::SessionRegistry registry;
  const auto t0 = std::chrono::steady_clock::now();

  auto role_main = [&](Party self) {
    std::map<Party, net::Channel*> ch;
    for (auto& [peer, c] : chans[self]) ch[peer] = c.get();
    try {
      for (const auto& e : edges) {
        if (e.dialer == self) net::connect_handshake(*ch[e.listener], digest);
      }
      for (const auto& e : edges) {
        if (e.listener == self) net::accept_handshake(*ch[e.dialer], digest, e.dialer, registry);
      }
      if (hook) {
        for (auto& [peer, c] : ch) hook(self, peer, *c);
      }
      detail::execute_role(self, cfg, ch, data, out);
    } catch (const std::exception& ex) {
      proto::detail::abort_links(detail::links_of(ch), ex.what());
      throw;
    }
  };

  std::vector<std::exception_ptr> errors;
  if (tapes) {
    // dealing completes before anyone consumes
    try {
      role_main(Party::kDealer);
    } catch (...) {
      errors.push_back(std::current_exception());
      detail::rethrow_root(errors);
    }
  }
  std::vector<std::pair<Party, std::future<void>>> running;
  for (auto p : parties) {
    if (tapes && p == Party::kDealer) continue;
    running.emplace_back(p, std::async(std::launch::async, role_main, p));
  }
  for (auto& [p, f] : running) {
    try {
      f.get();
    } catch (...) {
      errors.push_back(std::current_exception());
    }
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail::rethrow_root(errors);
  return out;
}

/// Runs a single role in this process over TCP. Listeners bind the role's
/// own endpoint; dialers retry until connect_timeout_s.
inline RunResult run_tcp_role(Party self, const ExperimentConfig& cfg, Datasets data) {
  const auto& hp = cfg.hp;
  hp.validate();
  const bool tapes = !cfg.tape_dir.empty() && proto::is_private(hp.variant);
  const std::uint64_t digest = proto::digest(hp);
  const auto parties = participants(hp.variant);
  if (std::find(parties.begin(), parties.end(), self) == parties.end()) {
    throw ConfigError(std::string(net::party_name(self)) + " takes no part in " +
                      proto::variant_name(hp.variant));
  }
  RunResult out;
  auto meter = std::make_shared<net::ByteMeter>(self);
  out.meters[self] = meter;
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(cfg.connect_timeout_s * 1000));
  auto endpoint_of = [&](Party p) {
    switch (p) {
      case Party::kClient: return net::parse_endpoint(cfg.endpoints.client);
      case Party::kServer0: return net::parse_endpoint(cfg.endpoints.server0);
      case Party::kServer1: return net::parse_endpoint(cfg.endpoints.server1);
      case Party::kDealer: return net::parse_endpoint(cfg.endpoints.dealer);
    }
    throw ConfigError("bad party");
  };

  // tape mode: the dealer only writes files
  const auto edges = (tapes && self == Party::kDealer) ? std::vector<Edge>{} : topology(hp.variant, !tapes);
  std::vector<Party> dial, expect;
  for (const auto& e : edges) {
    if (e.dialer == self) dial.push_back(e.listener);
    if (e.listener == self) expect.push_back(e.dialer);
  }
  std::unique_ptr<net::TcpListener> listener;
  if (!expect.empty()) listener = std::make_unique<net::TcpListener>(endpoint_of(self));

  std::map<Party, std::unique_ptr<net::Channel>> owned;
  std::map<Party, net::Channel*> ch;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    for (auto peer : dial) {
      const int fd = net::tcp_connect(endpoint_of(peer), timeout);
      auto c = std::make_unique<net::TcpChannel>(fd, self, peer, meter);
      net::connect_handshake(*c, digest);
      ch[peer] = c.get();
      owned[peer] = std::move(c);
    }
    for (std::size_t i = 0; i < expect.size(); ++i) {
      auto c = std::make_unique<net::TcpChannel>(listener->accept_fd(timeout), self, Party::kDealer, meter);
      const Party peer = net::accept_handshake(*c, digest);
      if (std::find(expect.begin(), expect.end(), peer) == expect.end() || ch.count(peer)) {
        net::detail::reject(*c, std::string("unexpected connection from ") + net::party_name(peer));
      }
      ch[peer] = c.get();
      owned[peer] = std::move(c);
    }
    detail::execute_role(self, cfg, ch, data, out);
  } catch (const std::exception& ex) {
    proto::detail::abort_links(detail::links_of(ch), ex.what());
    throw;
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace splitfss::harness
