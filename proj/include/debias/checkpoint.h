// Copyright 2026 The debias-dg Authors.
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

// Flat binary parameter checkpoints; layout in docs/formats.md.

#ifndef DEBIAS_CHECKPOINT_H_
#define DEBIAS_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "debias/heads.h"
#include "debias/network.h"

namespace debias::ckpt {

inline constexpr char kMagic[8] = {'D', 'B', 'D', 'G', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
  net::LayeredNet net;
  std::optional<heads::BiasHeadBank> heads;
  std::optional<heads::DomainClassifier> domain;
};

std::vector<std::uint8_t> Encode(const Checkpoint& c);
Checkpoint Decode(std::span<const std::uint8_t> bytes);

void Save(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint Load(const std::filesystem::path& path);

}  // namespace debias::ckpt

#endif  // DEBIAS_CHECKPOINT_H_
