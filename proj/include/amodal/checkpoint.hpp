// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amodal/tensor.hpp"

namespace amodal {

inline constexpr char kCheckpointMagic[4] = {'A', 'M', 'G', 'C'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kF64 = 0, kI64 = 1, kBlob = 2 };

/// Layout, all little-endian:
///   "AMGC" u16 version, then records until end of file:
///   u32 name_len, name bytes, u8 dtype, u8 rank, rank x u64 extents, payload.
/// f64/i64 payloads hold prod(extents) 8-byte values; a blob is rank 1 bytes.
struct Record {
  std::string name;
  DType dtype = DType::kF64;
  std::vector<std::uint64_t> extents;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;
  std::string blob;
};

class Container {
 public:
  void put_tensor(const std::string& name, const Tensor& t);
  void put_f64(const std::string& name, const std::vector<double>& values);
  void put_i64(const std::string& name, std::int64_t value);
  void put_blob(const std::string& name, const std::string& bytes);

  bool has(const std::string& name) const { return find(name) != nullptr; }
  const Record* find(const std::string& name) const;
  const Record& get(const std::string& name) const;

  Tensor tensor(const std::string& name) const;
  std::vector<double> f64(const std::string& name) const;
  std::int64_t i64(const std::string& name) const;
  const std::string& blob(const std::string& name) const;

  const std::vector<Record>& records() const { return records_; }

  std::string serialize() const;
  static Container parse(const std::string& bytes);

  /// Writes to a sibling temporary then renames into place.
  void save(const std::string& path) const;
  static Container load(const std::string& path);

 private:
  void put(Record r);
  std::vector<Record> records_;
};

}  // namespace amodal
