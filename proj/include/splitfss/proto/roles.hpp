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

// Role state machines: client, server0, server1 and dealer, for all four
// variants. Each role runs one batch at a time in lockstep with its peers.
//
// Per training batch:
//   public-local    client -> s0: X_PUB image, LABEL_SHARE one-hot
//   public-vanilla  client -> s0: X_PUB activation map, LABEL_SHARE one-hot
//                   s0 -> client: GRAD_SHARE dJ/dATm
//   private-local   client -> sj: X_PUB image share, LABEL_SHARE label share
//   private-vanilla client -> sj: X_PUB masked activation map, LABEL_SHARE label share
//                   sj -> client: GRAD_SHARE share of dJ/dATm
// With log_loss, private servers also send LOSS_SHARE (output shares) after the
// forward pass. Every epoch ends with a METRIC from each server; evaluation
// batches carry X_PUB from the client and LOSS_SHARE (output or output share)
// back.

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "splitfss/data/mnist.hpp"
#include "splitfss/net/session.hpp"
#include "splitfss/proto/config.hpp"
#include "splitfss/proto/secure_model.hpp"

namespace splitfss::proto {

using net::Channel;
using net::MsgType;
using net::Phase;

/// Channels held by one role; unused peers stay null.
struct Links {
  Channel* client = nullptr;
  Channel* server0 = nullptr;
  Channel* server1 = nullptr;
  Channel* dealer = nullptr;

  Channel* server(int j) const { return j == 0 ? server0 : server1; }
  std::vector<Channel*> all() const {
    std::vector<Channel*> v;
    for (auto* c : {client, server0, server1, dealer}) {
      if (c) v.push_back(c);
    }
    return v;
  }
};

inline constexpr double kNotMeasured = std::numeric_limits<double>::quiet_NaN();

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t batches = 0;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
  double test_accuracy = kNotMeasured;  // NaN when the epoch was not evaluated
  double train_loss = kNotMeasured;     // mean batch loss, when known
};

struct ClientOutcome {
  std::vector<EpochMetrics> epochs;
  ClientParams<Elem> params;  // split variants only
  std::vector<double> batch_losses;
};

/// Final server state: plaintext in public variants, this server's shares in
/// private ones. The client half is filled only in local variants.
struct ServerOutcome {
  ring::ModelParams<Elem> params;
  std::vector<double> batch_losses;  // public variants
};

struct DealerOutcome {
  std::uint64_t setup_bytes = 0;
  std::uint64_t train_bytes = 0;
  std::uint64_t test_bytes = 0;
  std::size_t train_batches = 0;

  double train_bytes_per_batch() const {
    return train_batches ? static_cast<double>(train_bytes) / train_batches : 0.0;
  }
};

// -- schedule shared by every role ------------------------------------------------------

inline bool evaluates(const Hyperparams& hp, std::size_t epoch) {
  return hp.eval_every_epoch || epoch + 1 == hp.epochs;
}

inline std::vector<std::vector<std::uint32_t>> train_schedule(const Hyperparams& hp, std::size_t epoch) {
  auto b = data::epoch_batches(hp.train_samples, hp.batch, hp.seed, epoch);
  b.resize(hp.batches_per_epoch());
  return b;
}

/// Loss gradient scale. The batch-mean factor 1/n is folded into the step
/// size instead, so dJ/dATm stays large enough to survive truncation on the
/// way back through the client convolutions.
inline Elem mse_scale(const Hyperparams& hp) { return ring::encode_fixed(2.0, hp.fixed); }

/// SGD step on the batch-sum gradient: lr / batch.
inline Elem step_size(const Hyperparams& hp) {
  return ring::encode_fixed(hp.lr / static_cast<double>(hp.batch), hp.fixed);
}

namespace detail {

inline void send_tensor(Channel& ch, MsgType type, const RingTensor& t, const ring::FixedPointConfig& cfg) {
  ch.send(type, net::encode_tensor(t, cfg));
}

inline RingTensor recv_tensor(Channel& ch, MsgType type, ring::Shape shape,
                              const ring::FixedPointConfig& cfg) {
  return net::decode_tensor(ch.recv(type), std::move(shape), cfg);
}

inline void send_json(Channel& ch, const nlohmann::json& j) {
  const std::string s = j.dump();
  ch.send(MsgType::kMetric, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

inline nlohmann::json recv_json(Channel& ch) {
  const Bytes b = ch.recv(MsgType::kMetric);
  try {
    return nlohmann::json::parse(b.begin(), b.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("METRIC payload: ") + e.what());
  }
}

inline void set_phase(const Links& l, Phase p) {
  for (auto* c : l.all()) c->meter().set_phase(p);
}

/// Tells every peer why this role stopped and closes the channels, so no
/// peer stays blocked on a dead session.
inline void abort_links(const Links& l, const std::string& why) {
  for (auto* c : l.all()) {
    try {
      c->send(MsgType::kClose, std::span(reinterpret_cast<const std::uint8_t*>(why.data()), why.size()));
    } catch (...) {
    }
    try {
      c->close();
    } catch (...) {
    }
  }
}

template <typename Fn>
auto guarded(const Links& l, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    abort_links(l, e.what());
    throw;
  }
}

inline RingTensor encode_batch(const ring::Tensor<double>& t, const ring::FixedPointConfig& cfg) {
  return ring::encode_tensor(t, cfg);
}

inline std::size_t count_correct(const RingTensor& logits, const std::vector<std::uint8_t>& labels,
                                 const Hyperparams& hp) {
  const auto pred = ring::argmax_rows(ring::RingArith{hp.fixed}, logits, hp.arch.classes);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == labels[i];
  return ok;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline constexpr std::uint64_t kClientShareStream = 0x434c4e54;  // "CLNT"

inline ring::ModelParams<Elem> initial_model(const Hyperparams& hp) {
  const auto m = ring::init_model(hp.arch, hp.seed);
  return {ring::encode_params(m.client, hp.fixed), ring::encode_params(m.server, hp.fixed)};
}

template <typename Params>
Params read_param_shares(mpc::MaterialReader& mat, const Params& like) {
  Params out;
  auto dst = out.tensors();
  auto src = like.tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = mat.tensor(src[i]->shape()).take();
  return out;
}

}  // namespace detail

// -- client ----------------------------------------------------------------------------------

/// Runs the data owner. `material` supplies the private-vanilla masks (from
/// the dealer channel or a tape); other variants pass null.
inline ClientOutcome run_client(const Hyperparams& hp, const Links& links, const data::Dataset& train,
                                const data::Dataset& test, mpc::MaterialSource* material = nullptr) {
  hp.validate();
  if (train.count < hp.train_samples || test.count < hp.test_samples) {
    throw ConfigError("dataset smaller than train_samples/test_samples");
  }
  const Variant v = hp.variant;
  const bool priv = is_private(v);
  const auto& cfg = hp.fixed;
  const ring::RingArith ar{cfg};
  const int nservers = priv ? 2 : 1;
  for (int j = 0; j < nservers; ++j) {
    if (!links.server(j)) throw ConfigError("client: missing server link");
  }
  if (v == Variant::kPrivateVanilla && !material) throw ConfigError("client: private-vanilla needs dealer material");

  return detail::guarded(links, [&] {
    std::optional<mpc::MaterialReader> masks;
    if (material) masks.emplace(*material, cfg);
    fss::Prng rng(hp.seed, detail::kClientShareStream);

    ClientOutcome out;
    ClientParams<Elem> params, velocity;
    if (is_split(v)) {
      params = detail::initial_model(hp).client;
      velocity = ring::zeros_like(params);
    }
    const Elem lr = step_size(hp), mom = ring::encode_fixed(hp.momentum, cfg);
    const std::size_t feat = hp.arch.split_features(), classes = hp.arch.classes;

    // Sends one batch's input; returns the forward cache (split variants).
    auto send_input = [&](const data::Batch& b, ring::ClientCache<Elem>* cache) {
      const std::size_t n = b.labels.size();
      RingTensor x = detail::encode_batch(b.x, cfg);
      if (v == Variant::kPublicLocal) {
        detail::send_tensor(*links.server0, MsgType::kXPub, x, cfg);
      } else if (v == Variant::kPrivateLocal) {
        auto [s0, s1] = mpc::share(x, rng, cfg);
        detail::send_tensor(*links.server0, MsgType::kXPub, s0.tensor, cfg);
        detail::send_tensor(*links.server1, MsgType::kXPub, s1.tensor, cfg);
      } else {
        auto c = ring::client_forward(ar, params, std::move(x));
        RingTensor atm = c.atm.reshaped({n, feat});
        if (v == Variant::kPrivateVanilla) {
          const RingTensor r = masks->tensor({n, feat}).take();
          atm = mpc::add(atm, r, cfg);
          detail::send_tensor(*links.server1, MsgType::kXPub, atm, cfg);
        }
        detail::send_tensor(*links.server0, MsgType::kXPub, atm, cfg);
        if (cache) *cache = std::move(c);
      }
    };

    auto recv_outputs = [&](std::size_t n) {
      RingTensor y = detail::recv_tensor(*links.server0, MsgType::kLossShare, {n, classes}, cfg);
      if (priv) {
        y = mpc::reconstruct(y, detail::recv_tensor(*links.server1, MsgType::kLossShare, {n, classes}, cfg), cfg);
      }
      return y;
    };

    for (std::size_t e = 0; e < hp.epochs; ++e) {
      EpochMetrics em;
      em.epoch = e;
      detail::set_phase(links, Phase::kTraining);
      const auto schedule = train_schedule(hp, e);
      const auto t0 = std::chrono::steady_clock::now();
      double loss_sum = 0.0;
      for (const auto& idx : schedule) {
        const data::Batch b = data::make_batch(train, idx);
        const std::size_t n = idx.size();
        ring::ClientCache<Elem> cache;
        send_input(b, &cache);
        const RingTensor y = detail::encode_batch(b.y, cfg);
        if (priv) {
          auto [y0, y1] = mpc::share(y, rng, cfg);
          detail::send_tensor(*links.server0, MsgType::kLabelShare, y0.tensor, cfg);
          detail::send_tensor(*links.server1, MsgType::kLabelShare, y1.tensor, cfg);
          if (hp.log_loss) {
            const double l = ring::mse_loss(ar, recv_outputs(n), y);
            out.batch_losses.push_back(l);
            loss_sum += l;
          }
        } else {
          detail::send_tensor(*links.server0, MsgType::kLabelShare, y, cfg);
        }
        if (is_split(v)) {
          RingTensor g = detail::recv_tensor(*links.server0, MsgType::kGradShare, {n, feat}, cfg);
          if (priv) {
            g = mpc::add(g, detail::recv_tensor(*links.server1, MsgType::kGradShare, {n, feat}, cfg), cfg);
          }
          const auto grads = ring::client_backward(ar, params, cache, g);
          ring::apply_sgd(ar, params, grads, velocity, lr, mom);
        }
        ++em.batches;
      }
      for (int j = 0; j < nservers; ++j) {
        const auto m = detail::recv_json(*links.server(j));
        if (j == 0 && m.contains("train_loss")) em.train_loss = m["train_loss"].get<double>();
      }
      em.train_seconds = detail::seconds_since(t0);
      if (priv && hp.log_loss && em.batches) em.train_loss = loss_sum / em.batches;

      if (evaluates(hp, e)) {
        detail::set_phase(links, Phase::kTesting);
        const auto t1 = std::chrono::steady_clock::now();
        std::size_t correct = 0;
        for (const auto& idx : data::eval_batches(hp.test_samples, hp.batch)) {
          const data::Batch b = data::make_batch(test, idx);
          send_input(b, nullptr);
          correct += detail::count_correct(recv_outputs(idx.size()), b.labels, hp);
        }
        em.test_seconds = detail::seconds_since(t1);
        em.test_accuracy = static_cast<double>(correct) / static_cast<double>(hp.test_samples);
      }
      out.epochs.push_back(em);
    }
    out.params = std::move(params);
    return out;
  });
}

// -- servers -----------------------------------------------------------------------------------

namespace detail {

inline nlohmann::json epoch_metric(int party, std::size_t epoch, std::size_t batches, double loss_sum) {
  nlohmann::json m{{"server", party}, {"epoch", epoch}, {"batches", batches}};
  if (!std::isnan(loss_sum) && batches) m["train_loss"] = loss_sum / batches;
  return m;
}

/// Plaintext server of the public variants (server0 only).
inline ServerOutcome run_public_server(const Hyperparams& hp, const Links& links) {
  const Variant v = hp.variant;
  const auto& cfg = hp.fixed;
  const ring::RingArith ar{cfg};
  const bool local = v == Variant::kPublicLocal;
  Channel& cl = *links.client;
  const std::size_t feat = hp.arch.split_features(), classes = hp.arch.classes;
  const std::size_t side = hp.arch.input_size, cin = hp.arch.conv1.in_channels;

  ServerOutcome out;
  auto init = initial_model(hp);
  if (local) out.params.client = std::move(init.client);
  out.params.server = std::move(init.server);
  auto& cp = out.params.client;
  auto& sp = out.params.server;
  ClientParams<Elem> cv = local ? ring::zeros_like(cp) : ClientParams<Elem>{};
  ServerParams<Elem> sv = ring::zeros_like(sp);
  const Elem lr = step_size(hp), mom = ring::encode_fixed(hp.momentum, cfg);

  // Server-side forward from whatever the client sent.
  auto forward = [&](std::size_t n, ring::ClientCache<Elem>* cc) {
    if (local) {
      RingTensor x = recv_tensor(cl, MsgType::kXPub, {n, cin, side, side}, cfg);
      auto c = ring::client_forward(ar, cp, std::move(x));
      RingTensor atm = c.atm.reshaped({n, feat});
      if (cc) *cc = std::move(c);
      return ring::server_forward(ar, hp.arch, sp, std::move(atm));
    }
    return ring::server_forward(ar, hp.arch, sp, recv_tensor(cl, MsgType::kXPub, {n, feat}, cfg));
  };

  for (std::size_t e = 0; e < hp.epochs; ++e) {
    set_phase(links, Phase::kTraining);
    const std::size_t batches = hp.batches_per_epoch();
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t n = hp.batch;
      ring::ClientCache<Elem> cc;
      auto sc = forward(n, &cc);
      const RingTensor y = recv_tensor(cl, MsgType::kLabelShare, {n, classes}, cfg);
      const double loss = ring::mse_loss(ar, sc.out, y);
      out.batch_losses.push_back(loss);
      loss_sum += loss;
      const auto g = ring::mse_grad(ar, sc.out, y, mse_scale(hp));
      auto bw = ring::server_backward(ar, hp.arch, sp, sc, g);
      if (local) {
        const auto cg = ring::client_backward(ar, cp, cc, bw.grad_input);
        ring::apply_sgd(ar, cp, cg, cv, lr, mom);
      } else {
        send_tensor(cl, MsgType::kGradShare, bw.grad_input, cfg);
      }
      ring::apply_sgd(ar, sp, bw.grads, sv, lr, mom);
    }
    send_json(cl, epoch_metric(0, e, batches, loss_sum));
    if (evaluates(hp, e)) {
      set_phase(links, Phase::kTesting);
      for (std::size_t n : data::eval_batch_sizes(hp.test_samples, hp.batch)) {
        send_tensor(cl, MsgType::kLossShare, forward(n, nullptr).out, cfg);
      }
    }
  }
  return out;
}

/// One of the two computing servers of the private variants.
inline ServerOutcome run_private_server(int j, const Hyperparams& hp, const Links& links,
                                        mpc::MaterialSource& material) {
  const Variant v = hp.variant;
  const auto& cfg = hp.fixed;
  const bool local = v == Variant::kPrivateLocal;
  Channel& cl = *links.client;
  Channel* peer = links.server(1 - j);
  if (!peer) throw ConfigError("private server: missing peer server link");
  const std::size_t feat = hp.arch.split_features(), classes = hp.arch.classes;
  const std::size_t side = hp.arch.input_size, cin = hp.arch.conv1.in_channels;

  mpc::MaterialReader mat(material, cfg);
  const MpcContext ctx{j, cfg, peer, &mat};

  set_phase(links, Phase::kSetup);
  ServerOutcome out;
  const auto shapes = initial_model(hp);
  if (local) out.params.client = read_param_shares(mat, shapes.client);
  out.params.server = read_param_shares(mat, shapes.server);
  auto& cp = out.params.client;
  auto& sp = out.params.server;
  ClientParams<Elem> cv = local ? ring::zeros_like(cp) : ClientParams<Elem>{};
  ServerParams<Elem> sv = ring::zeros_like(sp);
  const Elem lr = step_size(hp), mom = ring::encode_fixed(hp.momentum, cfg);

  auto forward = [&](std::size_t n, SecureClientCache* cc, SecureServerCache* sc) {
    RingTensor input;
    if (local) {
      const RingTensor x = recv_tensor(cl, MsgType::kXPub, {n, cin, side, side}, cfg);
      input = secure_client_forward(ctx, cp, x, cc).reshaped({n, feat});
    } else {
      const RingTensor x_pub = recv_tensor(cl, MsgType::kXPub, {n, feat}, cfg);
      input = mpc::unmask(j, x_pub, mat.tensor({n, feat}).take(), cfg);
    }
    return secure_server_forward(ctx, hp.arch, sp, input, sc);
  };

  for (std::size_t e = 0; e < hp.epochs; ++e) {
    set_phase(links, Phase::kTraining);
    const std::size_t batches = hp.batches_per_epoch();
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t n = hp.batch;
      SecureClientCache cc;
      SecureServerCache sc;
      const RingTensor yhat = forward(n, &cc, &sc);
      const RingTensor y = recv_tensor(cl, MsgType::kLabelShare, {n, classes}, cfg);
      if (hp.log_loss) send_tensor(cl, MsgType::kLossShare, yhat, cfg);
      const RingTensor g = secure_mse_grad(j, yhat, y, mse_scale(hp), cfg);
      auto bw = secure_server_backward(ctx, hp.arch, sp, sc, g, true);
      if (local) {
        const auto cg = secure_client_backward(ctx, cp, cc, bw.grad_input);
        secure_sgd(j, cp, cg, cv, lr, mom, cfg);
      } else {
        send_tensor(cl, MsgType::kGradShare, bw.grad_input, cfg);
      }
      secure_sgd(j, sp, bw.grads, sv, lr, mom, cfg);
    }
    send_json(cl, epoch_metric(j, e, batches, kNotMeasured));
    if (evaluates(hp, e)) {
      set_phase(links, Phase::kTesting);
      for (std::size_t n : data::eval_batch_sizes(hp.test_samples, hp.batch)) {
        send_tensor(cl, MsgType::kLossShare, forward(n, nullptr, nullptr), cfg);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Runs server j (0 or 1). Private variants read dealer material from
/// `material`; public variants run on server0 alone.
inline ServerOutcome run_server(int j, const Hyperparams& hp, const Links& links,
                                mpc::MaterialSource* material = nullptr) {
  hp.validate();
  if (j != 0 && j != 1) throw ConfigError("server index must be 0 or 1");
  if (!links.client) throw ConfigError("server: missing client link");
  if (!is_private(hp.variant)) {
    if (j != 0) throw ConfigError("public variants use server0 only");
    return detail::guarded(links, [&] { return detail::run_public_server(hp, links); });
  }
  if (!material) throw ConfigError("private server needs a dealer link or a tape");
  return detail::guarded(links, [&] { return detail::run_private_server(j, hp, links, *material); });
}

// -- dealer -------------------------------------------------------------------------------------

namespace detail {

/// Forwards records and counts their framed size.
class MeteredSink : public mpc::MaterialSink {
 public:
  explicit MeteredSink(mpc::MaterialSink& inner) : inner_(inner) {}
  void put(MsgType type, Bytes record) override {
    bytes_ += net::kHeaderSize + record.size();
    inner_.put(type, std::move(record));
  }
  void finish() override { inner_.finish(); }
  std::uint64_t bytes() const { return bytes_; }

 private:
  mpc::MaterialSink& inner_;
  std::uint64_t bytes_ = 0;
};

}  // namespace detail

/// Material for one private-variant training batch of n samples.
inline void deal_train_batch(MaterialWriter& w, mpc::MaterialSink* client, const Hyperparams& hp,
                             std::size_t n) {
  const auto& a = hp.arch;
  if (hp.variant == Variant::kPrivateLocal) {
    deal_client_forward(w, a, n);
  } else {
    w.mask({n, a.split_features()}, client);
  }
  deal_server_forward(w, a, n);
  deal_server_backward(w, a, n, true);
  if (hp.variant == Variant::kPrivateLocal) deal_client_backward(w, a, n);
}

/// Material for one evaluation batch of n samples.
inline void deal_test_batch(MaterialWriter& w, mpc::MaterialSink* client, const Hyperparams& hp,
                            std::size_t n) {
  const auto& a = hp.arch;
  if (hp.variant == Variant::kPrivateLocal) {
    deal_client_forward(w, a, n);
  } else {
    w.mask({n, a.split_features()}, client);
  }
  deal_server_forward(w, a, n);
}

/// Initial parameter shares (the whole model for private-local).
inline void deal_setup(MaterialWriter& w, const Hyperparams& hp) {
  const auto init = detail::initial_model(hp);
  if (hp.variant == Variant::kPrivateLocal) {
    for (const auto* t : init.client.tensors()) w.shares(*t);
  }
  for (const auto* t : init.server.tensors()) w.shares(*t);
}

/// Produces every record the servers (and the private-vanilla client) will
/// consume, in consumption order. `links` only serves to set meter phases
/// and to report failures.
inline DealerOutcome run_dealer(const Hyperparams& hp, mpc::MaterialSink& s0, mpc::MaterialSink& s1,
                                mpc::MaterialSink* client, const Links& links = {}) {
  hp.validate();
  if (!is_private(hp.variant)) throw ConfigError("the dealer serves private variants only");
  return detail::guarded(links, [&] {
    detail::MeteredSink m0(s0), m1(s1);
    std::optional<detail::MeteredSink> mc;
    if (client) mc.emplace(*client);
    mpc::MaterialSink* cl = mc ? &*mc : nullptr;
    auto total = [&] { return m0.bytes() + m1.bytes() + (mc ? mc->bytes() : 0); };

    mpc::Dealer dealer(hp.fixed, hp.seed);
    MaterialWriter w(dealer, m0, m1);
    DealerOutcome out;
    detail::set_phase(links, Phase::kSetup);
    deal_setup(w, hp);
    out.setup_bytes = total();
    for (std::size_t e = 0; e < hp.epochs; ++e) {
      detail::set_phase(links, Phase::kTraining);
      std::uint64_t before = total();
      for (std::size_t b = 0; b < hp.batches_per_epoch(); ++b) {
        deal_train_batch(w, cl, hp, hp.batch);
        ++out.train_batches;
      }
      out.train_bytes += total() - before;
      if (evaluates(hp, e)) {
        detail::set_phase(links, Phase::kTesting);
        before = total();
        for (std::size_t n : data::eval_batch_sizes(hp.test_samples, hp.batch)) deal_test_batch(w, cl, hp, n);
        out.test_bytes += total() - before;
      }
    }
    w.finish();
    if (mc) mc->finish();
    return out;
  });
}

}  // namespace splitfss::proto
