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

// Dealer-issued correlated randomness: Beaver triples, comparison material
// for the sign test, and masks. Material moves as records, either over a
// channel (KEY_BLOB / TRIPLE_BLOB frames) or from a tape file, and is
// consumed strictly in the order it was dealt.
//
// Record layout (little-endian):
//   [1B kind][1B ndim][ndim x 8B dims][payload]
//
//   kind  name        dims                 payload
//   1     elem triple [count]              a, b, c        (count elements each)
//   2     mat triple  [m, k, n]            a (m*k), b (k*n), c (m*n)
//   3     sign mask   [count]              r, msb(r)      (shares)
//   4     sign keys   [count, domain_bits] count serialized comparison keys
//   5     tensor      shape                elements       (mask, or share of one)
//
// Elements take ring_bits/8 bytes.

#include <cstdint>
#include <deque>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "splitfss/fss/dcf.hpp"
#include "splitfss/mpc/share.hpp"
#include "splitfss/net/channel.hpp"
#include "splitfss/net/codec.hpp"

namespace splitfss::mpc {

/// A piece of correlated randomness that may be used exactly once.
template <typename T>
class OneTime {
 public:
  explicit OneTime(T value, const char* what = "material") : v_(std::move(value)), what_(what) {}

  T take() {
    if (!v_) throw MaterialError(std::string(what_) + " consumed twice");
    T out = std::move(*v_);
    v_.reset();
    return out;
  }
  bool used() const { return !v_.has_value(); }

 private:
  std::optional<T> v_;
  const char* what_;
};

enum class RecordKind : std::uint8_t {
  kElemTriple = 1,
  kMatTriple = 2,
  kSignMask = 3,
  kSignKeys = 4,
  kTensor = 5,
};

inline const char* record_kind_name(RecordKind k) {
  switch (k) {
    case RecordKind::kElemTriple: return "elementwise triple";
    case RecordKind::kMatTriple: return "matrix triple";
    case RecordKind::kSignMask: return "sign mask";
    case RecordKind::kSignKeys: return "sign keys";
    case RecordKind::kTensor: return "tensor";
  }
  return "?";
}

inline net::MsgType record_msg_type(RecordKind k) {
  return k == RecordKind::kSignKeys ? net::MsgType::kKeyBlob : net::MsgType::kTripleBlob;
}

/// Keys per sign-keys record.
inline constexpr std::size_t kKeyChunk = 4096;

/// Domain of the comparison keys used by the sign test.
inline int sign_domain_bits(const FixedPointConfig& cfg) { return cfg.ring_bits - 1; }

// -- per-party material --------------------------------------------------------

struct ElemTriple {
  RingTensor a, b, c;  // flat [count]
};

struct MatTriple {
  RingTensor a, b, c;  // [m,k], [k,n], [m,n]
};

struct SignMask {
  RingTensor r;    // share of the mask
  RingTensor msb;  // share of the mask's top bit
};

struct SignKeys {
  int domain_bits = 0;
  std::size_t count = 0;
  Bytes keys;  // count serialized keys, back to back

  std::size_t key_size() const { return fss::serialized_key_size(domain_bits); }
  std::span<const std::uint8_t> key(std::size_t i) const {
    return std::span(keys).subspan(i * key_size(), key_size());
  }
};

// -- records ---------------------------------------------------------------------

namespace detail {

inline void write_record_header(ByteWriter& w, RecordKind kind, const std::vector<std::uint64_t>& dims) {
  w.u8(static_cast<std::uint8_t>(kind));
  w.u8(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) w.u64(d);
}

inline RingTensor read_tensor(ByteReader& r, Shape shape, const FixedPointConfig& cfg) {
  RingTensor t(std::move(shape));
  net::read_elems(r, t.span(), cfg);
  return t;
}

}  // namespace detail

inline Bytes encode_elem_triple(const ElemTriple& t, const FixedPointConfig& cfg) {
  ByteWriter w(10 + 3 * t.a.size() * net::elem_bytes(cfg));
  detail::write_record_header(w, RecordKind::kElemTriple, {t.a.size()});
  for (const auto* x : {&t.a, &t.b, &t.c}) net::write_elems(w, x->span(), cfg);
  return w.take();
}

inline Bytes encode_mat_triple(const MatTriple& t, const FixedPointConfig& cfg) {
  ByteWriter w(26 + (t.a.size() + t.b.size() + t.c.size()) * net::elem_bytes(cfg));
  detail::write_record_header(w, RecordKind::kMatTriple, {t.a.dim(0), t.a.dim(1), t.b.dim(1)});
  for (const auto* x : {&t.a, &t.b, &t.c}) net::write_elems(w, x->span(), cfg);
  return w.take();
}

inline Bytes encode_sign_mask(const SignMask& s, const FixedPointConfig& cfg) {
  ByteWriter w(10 + 2 * s.r.size() * net::elem_bytes(cfg));
  detail::write_record_header(w, RecordKind::kSignMask, {s.r.size()});
  net::write_elems(w, s.r.span(), cfg);
  net::write_elems(w, s.msb.span(), cfg);
  return w.take();
}

inline Bytes encode_sign_keys(const SignKeys& k) {
  ByteWriter w(18 + k.keys.size());
  detail::write_record_header(w, RecordKind::kSignKeys,
                              {k.count, static_cast<std::uint64_t>(k.domain_bits)});
  w.raw(k.keys);
  return w.take();
}

inline Bytes encode_tensor_record(const RingTensor& t, const FixedPointConfig& cfg) {
  ByteWriter w(2 + 8 * t.rank() + t.size() * net::elem_bytes(cfg));
  std::vector<std::uint64_t> dims(t.shape().begin(), t.shape().end());
  detail::write_record_header(w, RecordKind::kTensor, dims);
  net::write_elems(w, t.span(), cfg);
  return w.take();
}

// -- sources ---------------------------------------------------------------------

struct RawRecord {
  net::MsgType type;
  Bytes bytes;
};

/// Where a party's material comes from.
class MaterialSource {
 public:
  virtual ~MaterialSource() = default;
  /// Next record; throws MaterialError once the stream is exhausted.
  virtual RawRecord next() = 0;
};

class ChannelSource : public MaterialSource {
 public:
  explicit ChannelSource(net::Channel& ch) : ch_(ch) {}
  RawRecord next() override {
    net::Message m = ch_.recv_any();
    if (m.type == net::MsgType::kClose) {
      throw MaterialError("dealer closed the material stream (material exhausted)");
    }
    if (m.type != net::MsgType::kKeyBlob && m.type != net::MsgType::kTripleBlob) {
      throw ProtocolError(std::string("expected dealer material, got ") + net::msg_type_name(m.type));
    }
    return {m.type, std::move(m.payload)};
  }

 private:
  net::Channel& ch_;
};

/// Consumer side: decodes records and checks that each one is the material
/// the protocol expects next.
class MaterialReader {
 public:
  MaterialReader(MaterialSource& src, FixedPointConfig cfg) : src_(src), cfg_(cfg) {}

  const FixedPointConfig& cfg() const { return cfg_; }

  OneTime<ElemTriple> elem_triple(std::size_t count) {
    auto [r, rec] = open(RecordKind::kElemTriple, {count});
    ElemTriple t;
    t.a = detail::read_tensor(r, {count}, cfg_);
    t.b = detail::read_tensor(r, {count}, cfg_);
    t.c = detail::read_tensor(r, {count}, cfg_);
    r.expect_end();
    return OneTime<ElemTriple>(std::move(t), "elementwise triple");
  }

  OneTime<MatTriple> mat_triple(std::size_t m, std::size_t k, std::size_t n) {
    auto [r, rec] = open(RecordKind::kMatTriple, {m, k, n});
    MatTriple t;
    t.a = detail::read_tensor(r, {m, k}, cfg_);
    t.b = detail::read_tensor(r, {k, n}, cfg_);
    t.c = detail::read_tensor(r, {m, n}, cfg_);
    r.expect_end();
    return OneTime<MatTriple>(std::move(t), "matrix triple");
  }

  OneTime<SignMask> sign_mask(std::size_t count) {
    auto [r, rec] = open(RecordKind::kSignMask, {count});
    SignMask s;
    s.r = detail::read_tensor(r, {count}, cfg_);
    s.msb = detail::read_tensor(r, {count}, cfg_);
    r.expect_end();
    return OneTime<SignMask>(std::move(s), "sign mask");
  }

  OneTime<SignKeys> sign_keys(std::size_t count) {
    const auto bits = static_cast<std::uint64_t>(sign_domain_bits(cfg_));
    auto [r, rec] = open(RecordKind::kSignKeys, {count, bits});
    SignKeys k;
    k.domain_bits = static_cast<int>(bits);
    k.count = count;
    const auto raw = r.raw(count * k.key_size());
    k.keys.assign(raw.begin(), raw.end());
    r.expect_end();
    return OneTime<SignKeys>(std::move(k), "sign keys");
  }

  OneTime<RingTensor> tensor(const Shape& shape) {
    std::vector<std::uint64_t> dims(shape.begin(), shape.end());
    auto [r, rec] = open(RecordKind::kTensor, dims);
    RingTensor t = detail::read_tensor(r, shape, cfg_);
    r.expect_end();
    return OneTime<RingTensor>(std::move(t), "mask");
  }

  std::uint64_t records_read() const { return records_; }

 private:
  struct Opened {
    ByteReader reader;
    std::shared_ptr<Bytes> storage;
  };

  Opened open(RecordKind want, const std::vector<std::uint64_t>& dims) {
    auto rec = std::make_shared<Bytes>(src_.next().bytes);
    ++records_;
    ByteReader r(*rec, "material record");
    const auto kind = static_cast<RecordKind>(r.u8());
    const auto ndim = r.u8();
    std::vector<std::uint64_t> got(ndim);
    for (auto& d : got) d = r.u64();
    if (kind != want || got != dims) {
      std::string g;
      for (auto d : got) g += (g.empty() ? "" : ",") + std::to_string(d);
      std::string w;
      for (auto d : dims) w += (w.empty() ? "" : ",") + std::to_string(d);
      throw ProtocolError(std::string("material out of step: expected ") + record_kind_name(want) +
                          " [" + w + "], got " + record_kind_name(kind) + " [" + g + "]");
    }
    return {std::move(r), std::move(rec)};
  }

  MaterialSource& src_;
  FixedPointConfig cfg_;
  std::uint64_t records_ = 0;
};

// -- sinks -----------------------------------------------------------------------

/// Where the dealer sends one party's material.
class MaterialSink {
 public:
  virtual ~MaterialSink() = default;
  virtual void put(net::MsgType type, Bytes record) = 0;
  virtual void finish() {}
};

class ChannelSink : public MaterialSink {
 public:
  explicit ChannelSink(net::Channel& ch) : ch_(ch) {}
  void put(net::MsgType type, Bytes record) override { ch_.send(type, record); }

 private:
  net::Channel& ch_;
};

/// Discards records but counts their framed size; used to size material
/// without generating a tape.
class CountingSink : public MaterialSink {
 public:
  void put(net::MsgType, Bytes record) override { bytes_ += net::kHeaderSize + record.size(); ++records_; }
  std::uint64_t bytes() const { return bytes_; }
  std::uint64_t records() const { return records_; }

 private:
  std::uint64_t bytes_ = 0;
  std::uint64_t records_ = 0;
};

/// In-memory queue usable as both sink and source; single-threaded.
class MemoryTape : public MaterialSink, public MaterialSource {
 public:
  void put(net::MsgType type, Bytes record) override {
    bytes_ += net::kHeaderSize + record.size();
    q_.push_back({type, std::move(record)});
  }
  RawRecord next() override {
    if (q_.empty()) throw MaterialError("in-memory material exhausted");
    RawRecord r = std::move(q_.front());
    q_.pop_front();
    return r;
  }
  std::size_t pending() const { return q_.size(); }
  std::uint64_t bytes() const { return bytes_; }

 private:
  std::deque<RawRecord> q_;
  std::uint64_t bytes_ = 0;
};

// -- tape files --------------------------------------------------------------------
//
// Header: [8B magic "SFSSTAPE"][1B version][1B party][2B reserved][8B digest]
// Then one entry per record: [1B message type][8B length][record bytes].
// A CLOSE entry of length 0 terminates the tape.

inline constexpr char kTapeMagic[8] = {'S', 'F', 'S', 'S', 'T', 'A', 'P', 'E'};
inline constexpr std::uint8_t kTapeVersion = 1;

class TapeWriter : public MaterialSink {
 public:
  TapeWriter(const std::string& path, int party, std::uint64_t digest)
      : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw ConfigError("cannot create tape file " + path);
    ByteWriter w(20);
    w.raw(kTapeMagic, 8);
    w.u8(kTapeVersion);
    w.u8(static_cast<std::uint8_t>(party));
    w.le(0, 2);
    w.u64(digest);
    write(w.bytes());
  }
  ~TapeWriter() override {
    try {
      finish();
    } catch (...) {
    }
  }

  void put(net::MsgType type, Bytes record) override {
    ByteWriter w(9);
    w.u8(static_cast<std::uint8_t>(type));
    w.u64(record.size());
    write(w.bytes());
    write(record);
  }

  void finish() override {
    if (finished_) return;
    finished_ = true;
    ByteWriter w(9);
    w.u8(static_cast<std::uint8_t>(net::MsgType::kClose));
    w.u64(0);
    write(w.bytes());
    out_.flush();
    if (!out_) throw FormatError("write to tape " + path_ + " failed");
  }

 private:
  void write(const Bytes& b) {
    out_.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }

  std::ofstream out_;
  std::string path_;
  bool finished_ = false;
};

class TapeReader : public MaterialSource {
 public:
  TapeReader(const std::string& path, int party, std::uint64_t digest)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw ConfigError("cannot open tape file " + path);
    Bytes h = read(20, "header");
    ByteReader r(h, "tape header");
    const auto magic = r.raw(8);
    if (!std::equal(magic.begin(), magic.end(), kTapeMagic)) {
      throw FormatError("tape " + path + ": bad magic");
    }
    const auto version = r.u8();
    if (version != kTapeVersion) {
      throw FormatError("tape " + path + ": unsupported version " + std::to_string(version));
    }
    const auto p = r.u8();
    if (p != party) {
      throw ProtocolError("tape " + path + " belongs to party " + std::to_string(p) +
                          ", expected " + std::to_string(party));
    }
    r.le(2);
    if (r.u64() != digest) {
      throw ProtocolError("tape " + path + " was dealt for different hyperparameters");
    }
  }

  RawRecord next() override {
    if (done_) throw MaterialError("tape " + path_ + " exhausted");
    Bytes h = read(9, "entry header");
    ByteReader r(h, "tape entry");
    const auto type = r.u8();
    const auto len = r.u64();
    if (type == static_cast<std::uint8_t>(net::MsgType::kClose)) {
      done_ = true;
      throw MaterialError("tape " + path_ + " exhausted");
    }
    if (type != static_cast<std::uint8_t>(net::MsgType::kKeyBlob) &&
        type != static_cast<std::uint8_t>(net::MsgType::kTripleBlob)) {
      throw FormatError("tape " + path_ + ": bad entry type " + std::to_string(type));
    }
    if (len > net::kMaxPayload) throw FormatError("tape " + path_ + ": oversize entry");
    return {static_cast<net::MsgType>(type), read(len, "record")};
  }

 private:
  Bytes read(std::uint64_t n, const char* what) {
    Bytes b(n);
    in_.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::uint64_t>(in_.gcount()) != n) {
      throw FormatError("tape " + path_ + ": truncated " + what);
    }
    return b;
  }

  std::ifstream in_;
  std::string path_;
  bool done_ = false;
};

// -- generation --------------------------------------------------------------------

/// Generates material pairs (index = party) from one seeded stream.
class Dealer {
 public:
  Dealer(FixedPointConfig cfg, std::uint64_t seed, std::uint64_t stream = 0x4445414c)
      : cfg_(cfg), rng_(seed, stream) {}

  const FixedPointConfig& cfg() const { return cfg_; }
  fss::Prng& rng() { return rng_; }

  std::pair<ElemTriple, ElemTriple> elem_triple(std::size_t count) {
    const RingTensor a = random_tensor({count}, rng_, cfg_);
    const RingTensor b = random_tensor({count}, rng_, cfg_);
    const RingTensor c = hadamard(a, b, cfg_);
    auto [a0, a1] = share(a, rng_, cfg_);
    auto [b0, b1] = share(b, rng_, cfg_);
    auto [c0, c1] = share(c, rng_, cfg_);
    return {ElemTriple{std::move(a0.tensor), std::move(b0.tensor), std::move(c0.tensor)},
            ElemTriple{std::move(a1.tensor), std::move(b1.tensor), std::move(c1.tensor)}};
  }

  std::pair<MatTriple, MatTriple> mat_triple(std::size_t m, std::size_t k, std::size_t n) {
    const RingTensor a = random_tensor({m, k}, rng_, cfg_);
    const RingTensor b = random_tensor({k, n}, rng_, cfg_);
    const RingTensor c = matmul(a, b, cfg_);
    auto [a0, a1] = share(a, rng_, cfg_);
    auto [b0, b1] = share(b, rng_, cfg_);
    auto [c0, c1] = share(c, rng_, cfg_);
    return {MatTriple{std::move(a0.tensor), std::move(b0.tensor), std::move(c0.tensor)},
            MatTriple{std::move(a1.tensor), std::move(b1.tensor), std::move(c1.tensor)}};
  }

  /// Mask r for the sign test, returned in the clear so that callers can
  /// also generate the matching keys.
  struct SignDeal {
    RingTensor r;
    SignMask share[2];
  };

  SignDeal sign_mask(std::size_t count) {
    SignDeal d;
    d.r = random_tensor({count}, rng_, cfg_);
    RingTensor msb({count});
    for (std::size_t i = 0; i < count; ++i) msb[i] = ring::is_negative(d.r[i], cfg_) ? 1 : 0;
    auto [r0, r1] = share(d.r, rng_, cfg_);
    auto [m0, m1] = share(msb, rng_, cfg_);
    d.share[0] = {std::move(r0.tensor), std::move(m0.tensor)};
    d.share[1] = {std::move(r1.tensor), std::move(m1.tensor)};
    return d;
  }

  /// Comparison keys for masks r[begin, begin+count). For each mask the key
  /// pays out beta = 1 - 2 msb(r) when low(x_pub) < low(r), so that
  /// msb share + key output is a sharing of msb(r) xor borrow.
  std::pair<SignKeys, SignKeys> sign_keys(const RingTensor& r, std::size_t begin,
                                          std::size_t count) {
    const int bits = sign_domain_bits(cfg_);
    const Elem low_mask = cfg_.sign_bit() - 1;
    std::pair<SignKeys, SignKeys> out;
    for (auto* k : {&out.first, &out.second}) {
      k->domain_bits = bits;
      k->count = count;
      k->keys.reserve(count * fss::serialized_key_size(bits));
    }
    for (std::size_t i = begin; i < begin + count; ++i) {
      const Elem low = r[i] & low_mask;
      const bool m = ring::is_negative(r[i], cfg_);
      const std::uint64_t alpha = low == 0 ? 0 : low - 1;
      const std::uint64_t beta = low == 0 ? 0 : (m ? ~std::uint64_t{0} : 1);
      const auto [k0, k1] = fss::dcf_keygen(bits, alpha, beta, rng_);
      ByteWriter w0, w1;
      fss::write_key(w0, k0);
      fss::write_key(w1, k1);
      out.first.keys.insert(out.first.keys.end(), w0.bytes().begin(), w0.bytes().end());
      out.second.keys.insert(out.second.keys.end(), w1.bytes().begin(), w1.bytes().end());
    }
    return out;
  }

 private:
  FixedPointConfig cfg_;
  fss::Prng rng_;
};

/// Streams dealt material to the two servers (and masks to a client).
class MaterialWriter {
 public:
  MaterialWriter(Dealer& dealer, MaterialSink& s0, MaterialSink& s1)
      : dealer_(dealer), sinks_{&s0, &s1} {}

  Dealer& dealer() { return dealer_; }

  void elem_triple(std::size_t count) {
    auto [t0, t1] = dealer_.elem_triple(count);
    put(RecordKind::kElemTriple, encode_elem_triple(t0, cfg()), encode_elem_triple(t1, cfg()));
  }

  void mat_triple(std::size_t m, std::size_t k, std::size_t n) {
    auto [t0, t1] = dealer_.mat_triple(m, k, n);
    put(RecordKind::kMatTriple, encode_mat_triple(t0, cfg()), encode_mat_triple(t1, cfg()));
  }

  /// Sign-test material for count elements: one mask record, then keys in
  /// chunks of kKeyChunk.
  void sign(std::size_t count) {
    auto d = dealer_.sign_mask(count);
    put(RecordKind::kSignMask, encode_sign_mask(d.share[0], cfg()),
        encode_sign_mask(d.share[1], cfg()));
    for (std::size_t off = 0; off < count; off += kKeyChunk) {
      const std::size_t n = std::min(kKeyChunk, count - off);
      auto [k0, k1] = dealer_.sign_keys(d.r, off, n);
      put(RecordKind::kSignKeys, encode_sign_keys(k0), encode_sign_keys(k1));
    }
  }

  /// Sign test followed by the selection multiply.
  void relu(std::size_t count) {
    sign(count);
    elem_triple(count);
  }

  /// A fresh mask: in the clear to `owner` (if any), shared to the servers.
  void mask(const Shape& shape, MaterialSink* owner) {
    const RingTensor m = random_tensor(shape, dealer_.rng(), cfg());
    if (owner) owner->put(net::MsgType::kTripleBlob, encode_tensor_record(m, cfg()));
    shares(m);
  }

  /// Shares of a given tensor.
  void shares(const RingTensor& t) {
    auto [s0, s1] = share(t, dealer_.rng(), cfg());
    put(RecordKind::kTensor, encode_tensor_record(s0.tensor, cfg()),
        encode_tensor_record(s1.tensor, cfg()));
  }

  void finish() {
    sinks_[0]->finish();
    sinks_[1]->finish();
  }

 private:
  const FixedPointConfig& cfg() const { return dealer_.cfg(); }

  void put(RecordKind kind, Bytes r0, Bytes r1) {
    const auto type = record_msg_type(kind);
    sinks_[0]->put(type, std::move(r0));
    sinks_[1]->put(type, std::move(r1));
  }

  Dealer& dealer_;
  MaterialSink* sinks_[2];
};

}  // namespace splitfss::mpc
