// Copyright 2026 The iscon Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "iscon/optim.hpp"
#include "iscon/parameters.hpp"

namespace iscon {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Versioned binary container for named tensors.
//
// Layout (all integers little-endian, doubles as little-endian IEEE-754):
//   magic    8 bytes  "ISCNCKPT"
//   version  u32      currently 1
//   kind     str      artifact kind, e.g. "context_predictor"
//   metadata u32 count, then count x (str key, str value)
//   params   tensor group
//   extras   tensor group (non-trainable: centers, predictions, ...)
//   adam     u8 present; if 1: f64 lr, f64 beta1, f64 beta2, f64 epsilon,
//            u64 step, then for each params tensor in order its first and
//            second moment data (same element count as the tensor)
// where
//   str          = u32 byte length, bytes
//   tensor group = u32 count, then count x (str name, u32 rank,
//                  rank x u64 dim, product(dims) x f64)
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;
  // Holds config snapshot ("config"), stage hash ("hash"), parent hash
  // ("parent_hash") and model dimensions.
  std::map<std::string, std::string> metadata;
  ParameterSet params;
  ParameterSet extras;
  std::optional<AdamState> adam;

  const std::string& meta(const std::string& key) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws FormatError on a bad magic, unsupported version or truncated data.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace iscon
