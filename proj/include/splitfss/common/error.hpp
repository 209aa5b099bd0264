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

#include <stdexcept>
#include <string>

namespace splitfss {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A real value does not fit the fixed-point range.
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized data (keys, frames, tapes, IDX files).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// One-time correlated randomness was consumed twice, or ran out.
class MaterialError : public Error {
 public:
  using Error::Error;
};

/// Peers disagree on session state: digest mismatch, stale session,
/// unexpected message type, or material of the wrong kind.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Socket-level failure: refused connection, broken pipe, closed peer.
class ChannelError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-facing configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace splitfss
