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

#include "debias/dataset_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace debias::data {
namespace fs = std::filesystem;
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

fs::path StemOf(const fs::path& p) {
  const std::string s = p.string();
  const std::string suffix = ".json";
  if (s.size() > suffix.size() &&
      s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return fs::path(s.substr(0, s.size() - suffix.size()));
  }
  return p;
}

fs::path WithSuffix(const fs::path& stem, const std::string& suffix) {
  return fs::path(stem.string() + suffix);
}

template <typename T>
std::vector<std::uint8_t> PackLe(std::span<const T> values) {
  std::vector<std::uint8_t> out(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

template <typename T>
std::vector<T> UnpackLe(const std::vector<std::uint8_t>& bytes,
                        std::size_t count, const fs::path& path) {
  const std::size_t expected = count * sizeof(T);
  if (bytes.size() != expected) {
    throw std::runtime_error(path.string() + ": expected " +
                             std::to_string(expected) + " bytes, found " +
                             std::to_string(bytes.size()));
  }
  std::vector<T> out(count);
  if (count) std::memcpy(out.data(), bytes.data(), expected);
  return out;
}

nlohmann::json RangeJson(const RowRange& r) { return {r.begin, r.end}; }

RowRange RangeFromJson(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2) {
    throw std::runtime_error("manifest: split '" + what +
                             "' must be [begin, end]");
  }
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

std::size_t IdxElementSize(std::uint8_t code) {
  switch (code) {
    case 0x08: case 0x09: return 1;
    case 0x0B: return 2;
    case 0x0C: case 0x0D: return 4;
    case 0x0E: return 8;
    default: return 0;
  }
}

std::uint64_t ReadBe(const std::uint8_t* p, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v = (v << 8) | p[i];
  return v;
}

void WriteBe(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * (n - 1 - i))));
  }
}

}  // namespace

void ValidateSplitRanges(const RowRange& train, const RowRange& val,
                         const RowRange& test, std::size_t rows,
                         const std::string& context) {
  const RowRange* r[3] = {&train, &val, &test};
  const char* names[3] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i) {
    if (r[i]->begin > r[i]->end || r[i]->end > rows) {
      throw std::invalid_argument(
          context + "split '" + names[i] + "' [" + std::to_string(r[i]->begin) +
          ", " + std::to_string(r[i]->end) + ") is outside [0, " +
          std::to_string(rows) + ")");
    }
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const bool empty = r[i]->size() == 0 || r[j]->size() == 0;
      if (!empty && r[i]->begin < r[j]->end && r[j]->begin < r[i]->end) {
        throw std::invalid_argument(context + "splits '" + names[i] +
                                    "' and '" + names[j] + "' overlap");
      }
    }
  }
  if (train.begin != 0 || train.end != val.begin || val.end != test.begin ||
      test.end != rows) {
    throw std::invalid_argument(context +
                                "split ranges must tile [0, rows) as "
                                "train | val | test");
  }
}

void WriteDataset(const DomainDataset& ds, const fs::path& stem_in) {
  ds.Validate();
  const fs::path stem = StemOf(stem_in);
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  const std::size_t n = ds.rows(), k = ds.y.cols();
  std::vector<std::int64_t> labels;
  labels.reserve(n * (k + 2));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      const double v = ds.y.at(r, c);
      if (v != 0.0 && v != 1.0) {
        throw std::invalid_argument("dataset '" + ds.name +
                                    "': label file stores 0/1 labels only");
      }
      labels.push_back(static_cast<std::int64_t>(v));
    }
    labels.push_back(ds.entity[r]);
    labels.push_back(ds.sample_id[r]);
  }
  const fs::path xfile = WithSuffix(stem, ".f64");
  const fs::path yfile = WithSuffix(stem, ".labels.i64");
  WriteFileAtomic(xfile, PackLe<double>(ds.x.storage()));
  WriteFileAtomic(yfile, PackLe<std::int64_t>(labels));
  nlohmann::json m = {
      {"format", "debias-dataset"},
      {"version", kDatasetFormatVersion},
      {"name", ds.name},
      {"domain_id", ds.domain_id},
      {"rows", n},
      {"feature_dim", ds.x.cols()},
      {"label_dim", k},
      {"matrix_file", xfile.filename().string()},
      {"label_file", yfile.filename().string()},
      {"splits",
       {{"train", RangeJson(ds.train)},
        {"val", RangeJson(ds.val)},
        {"test", RangeJson(ds.test)}}},
      {"image_shape", ds.image_shape},
      {"provenance", ds.provenance}};
  WriteFileAtomic(WithSuffix(stem, ".json"), m.dump(2) + "\n");
}

DomainDataset ReadDataset(const fs::path& stem_in) {
  const fs::path stem = StemOf(stem_in);
  const fs::path mpath = WithSuffix(stem, ".json");
  nlohmann::json m;
  try {
    const auto bytes = ReadBytes(mpath);
    m = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(mpath.string() + ": " + e.what());
  }
  if (m.value("format", "") != "debias-dataset") {
    throw std::runtime_error(mpath.string() + ": not a dataset manifest");
  }
  if (m.value("version", 0) != kDatasetFormatVersion) {
    throw std::runtime_error(mpath.string() + ": unsupported version " +
                             m.value("version", nlohmann::json()).dump());
  }
  DomainDataset ds;
  const std::size_t n = m.at("rows").get<std::size_t>();
  const std::size_t d = m.at("feature_dim").get<std::size_t>();
  const std::size_t k = m.at("label_dim").get<std::size_t>();
  ds.name = m.at("name").get<std::string>();
  ds.domain_id = m.at("domain_id").get<std::int64_t>();
  ds.train = RangeFromJson(m.at("splits").at("train"), "train");
  ds.val = RangeFromJson(m.at("splits").at("val"), "val");
  ds.test = RangeFromJson(m.at("splits").at("test"), "test");
  ValidateSplitRanges(ds.train, ds.val, ds.test, n, mpath.string() + ": ");
  ds.image_shape = m.value("image_shape", std::vector<std::size_t>{});
  ds.provenance = m.value("provenance", nlohmann::json::object());

  const fs::path dir = stem.parent_path();
  const fs::path xfile = dir / m.at("matrix_file").get<std::string>();
  const fs::path yfile = dir / m.at("label_file").get<std::string>();
  ds.x = Tensor(Shape{n, d}, UnpackLe<double>(ReadBytes(xfile), n * d, xfile));
  const auto labels =
      UnpackLe<std::int64_t>(ReadBytes(yfile), n * (k + 2), yfile);
  ds.y = Tensor(Shape{n, k});
  for (std::size_t r = 0; r < n; ++r) {
    const std::int64_t* row = labels.data() + r * (k + 2);
    for (std::size_t c = 0; c < k; ++c) {
      ds.y.at(r, c) = static_cast<double>(row[c]);
    }
    ds.entity.push_back(row[k]);
    ds.sample_id.push_back(row[k + 1]);
  }
  ds.Validate();
  return ds;
}

void WriteCollection(std::span<const DomainDataset> domains,
                     const fs::path& dir, const nlohmann::json& extra) {
  fs::create_directories(dir);
  nlohmann::json names = nlohmann::json::array();
  for (const DomainDataset& ds : domains) {
    WriteDataset(ds, dir / ds.name);
    names.push_back(ds.name);
  }
  nlohmann::json c = {{"format", "debias-collection"},
                      {"version", kDatasetFormatVersion},
                      {"domains", names}};
  if (!extra.empty()) c["extra"] = extra;
  WriteFileAtomic(dir / "collection.json", c.dump(2) + "\n");
}

std::vector<DomainDataset> ReadCollection(const fs::path& dir) {
  const fs::path cpath = dir / "collection.json";
  const auto bytes = ReadBytes(cpath);
  nlohmann::json c;
  try {
    c = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(cpath.string() + ": " + e.what());
  }
  if (c.value("format", "") != "debias-collection") {
    throw std::runtime_error(cpath.string() + ": not a dataset collection");
  }
  std::vector<DomainDataset> out;
  for (const auto& name : c.at("domains")) {
    out.push_back(ReadDataset(dir / name.get<std::string>()));
  }
  return out;
}

IdxArray ParseIdx(std::span<const std::uint8_t> bytes,
                  const std::string& source) {
  auto fail = [&](std::size_t offset, const std::string& msg) {
    throw std::runtime_error(source + ": IDX error at offset " +
                             std::to_string(offset) + ": " + msg);
  };
  if (bytes.size() < 4) fail(0, "file shorter than the 4-byte magic");
  if (bytes[0] != 0 || bytes[1] != 0) fail(0, "magic must start with two zero bytes");
  IdxArray a;
  a.type_code = bytes[2];
  const std::size_t elem = IdxElementSize(a.type_code);
  if (elem == 0) fail(2, "unknown element type code " + std::to_string(bytes[2]));
  const std::size_t rank = bytes[3];
  if (rank == 0) fail(3, "rank must be >= 1");
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) {
    fail(bytes.size(), "header needs " + std::to_string(header) + " bytes");
  }
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const auto dim = static_cast<std::size_t>(ReadBe(&bytes[4 + 4 * i], 4));
    a.dims.push_back(dim);
    count *= dim;
  }
  const std::size_t expected = header + count * elem;
  if (bytes.size() != expected) {
    fail(std::min(bytes.size(), expected),
         "expected " + std::to_string(expected) + " bytes, found " +
             std::to_string(bytes.size()));
  }
  a.values.resize(count);
  const std::uint8_t* p = bytes.data() + header;
  for (std::size_t i = 0; i < count; ++i, p += elem) {
    const std::uint64_t raw = ReadBe(p, elem);
    switch (a.type_code) {
      case 0x08: a.values[i] = static_cast<double>(raw); break;
      case 0x09: a.values[i] = static_cast<std::int8_t>(raw); break;
      case 0x0B: a.values[i] = static_cast<std::int16_t>(raw); break;
      case 0x0C: a.values[i] = static_cast<std::int32_t>(raw); break;
      case 0x0D:
        a.values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(raw));
        break;
      default: a.values[i] = std::bit_cast<double>(raw); break;
    }
  }
  return a;
}

IdxArray ReadIdx(const fs::path& path) {
  const auto bytes = ReadBytes(path);
  return ParseIdx(bytes, path.string());
}

std::vector<std::uint8_t> EncodeIdx(const IdxArray& a) {
  const std::size_t elem = IdxElementSize(a.type_code);
  if (elem == 0 || a.dims.empty() || a.dims.size() > 255) {
    throw std::invalid_argument("idx: bad type code or rank");
  }
  std::size_t count = 1;
  for (std::size_t d : a.dims) count *= d;
  if (count != a.values.size()) {
    throw std::invalid_argument("idx: dims do not match value count");
  }
  std::vector<std::uint8_t> out = {0, 0, a.type_code,
                                   static_cast<std::uint8_t>(a.dims.size())};
  for (std::size_t d : a.dims) WriteBe(out, d, 4);
  for (double v : a.values) {
    std::uint64_t raw = 0;
    switch (a.type_code) {
      case 0x08: raw = static_cast<std::uint8_t>(v); break;
      case 0x09: raw = static_cast<std::uint8_t>(static_cast<std::int8_t>(v)); break;
      case 0x0B: raw = static_cast<std::uint16_t>(static_cast<std::int16_t>(v)); break;
      case 0x0C: raw = static_cast<std::uint32_t>(static_cast<std::int32_t>(v)); break;
      case 0x0D: raw = std::bit_cast<std::uint32_t>(static_cast<float>(v)); break;
      default: raw = std::bit_cast<std::uint64_t>(v); break;
    }
    WriteBe(out, raw, elem);
  }
  return out;
}

void WriteIdx(const IdxArray& a, const fs::path& path) {
  WriteFileAtomic(path, EncodeIdx(a));
}

std::vector<std::uint8_t> ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFileAtomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

void WriteFileAtomic(const fs::path& path, const std::string& text) {
  WriteFileAtomic(path, std::span<const std::uint8_t>(
                            reinterpret_cast<const std::uint8_t*>(text.data()),
                            text.size()));
}

}  // namespace debias::data
