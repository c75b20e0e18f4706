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

// On-disk datasets. A dataset with stem S is three files:
//   S.json        manifest
//   S.f64         rows x feature_dim little-endian doubles, row-major
//   S.labels.i64  rows x (label_dim + 2) little-endian int64, row-major:
//                 label columns, then entity id, then sample id
// docs/formats.md has the byte-level description.

#ifndef DEBIAS_DATASET_IO_H_
#define DEBIAS_DATASET_IO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "debias/datagen.h"

namespace debias::data {

inline constexpr int kDatasetFormatVersion = 1;

// Throws unless the ranges are ordered, non-overlapping and cover [0, rows).
void ValidateSplitRanges(const RowRange& train, const RowRange& val,
                         const RowRange& test, std::size_t rows,
                         const std::string& context);

void WriteDataset(const DomainDataset& ds, const std::filesystem::path& stem);
// Accepts the stem or the manifest path.
DomainDataset ReadDataset(const std::filesystem::path& stem);

// A directory holding collection.json plus one dataset per domain, in order.
void WriteCollection(std::span<const DomainDataset> domains,
                     const std::filesystem::path& dir,
                     const nlohmann::json& extra = nlohmann::json::object());
std::vector<DomainDataset> ReadCollection(const std::filesystem::path& dir);

// IDX arrays (big-endian header, element type codes 0x08..0x0E).
struct IdxArray {
  std::uint8_t type_code = 0x08;
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

IdxArray ParseIdx(std::span<const std::uint8_t> bytes,
                  const std::string& source = "<memory>");
IdxArray ReadIdx(const std::filesystem::path& path);
std::vector<std::uint8_t> EncodeIdx(const IdxArray& a);
void WriteIdx(const IdxArray& a, const std::filesystem::path& path);

std::vector<std::uint8_t> ReadBytes(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it over `path`.
void WriteFileAtomic(const std::filesystem::path& path,
                     std::span<const std::uint8_t> bytes);
void WriteFileAtomic(const std::filesystem::path& path,
                     const std::string& text);

}  // namespace debias::data

#endif  // DEBIAS_DATASET_IO_H_
