// SPDX-License-Identifier: Apache-2.0
#include "amodal/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "amodal/error.hpp"

namespace amodal {

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T le() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      fail(ErrorKind::kFormat, "truncated checkpoint at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t product(const std::vector<std::uint64_t>& e) {
  std::uint64_t p = 1;
  for (auto v : e) p *= v;
  return p;
}

}  // namespace

void Container::put(Record r) {
  for (auto& existing : records_)
    if (existing.name == r.name) {
      existing = std::move(r);
      return;
    }
  records_.push_back(std::move(r));
}

void Container::put_tensor(const std::string& name, const Tensor& t) {
  const Shape& s = t.shape();
  Record r{name, DType::kF64, {static_cast<std::uint64_t>(s.n), static_cast<std::uint64_t>(s.c),
                               static_cast<std::uint64_t>(s.h), static_cast<std::uint64_t>(s.w)},
           t.to_vector(), {}, {}};
  put(std::move(r));
}

void Container::put_f64(const std::string& name, const std::vector<double>& values) {
  put({name, DType::kF64, {values.size()}, values, {}, {}});
}

void Container::put_i64(const std::string& name, std::int64_t value) {
  put({name, DType::kI64, {1}, {}, {value}, {}});
}

void Container::put_blob(const std::string& name, const std::string& bytes) {
  put({name, DType::kBlob, {bytes.size()}, {}, {}, bytes});
}

const Record* Container::find(const std::string& name) const {
  for (const auto& r : records_)
    if (r.name == name) return &r;
  return nullptr;
}

const Record& Container::get(const std::string& name) const {
  const Record* r = find(name);
  if (!r) fail(ErrorKind::kFormat, "checkpoint has no record '" + name + "'");
  return *r;
}

Tensor Container::tensor(const std::string& name) const {
  const Record& r = get(name);
  require(r.dtype == DType::kF64 && r.extents.size() == 4, ErrorKind::kFormat,
          "record '" + name + "' is not a rank-4 f64 tensor");
  return Tensor({static_cast<int>(r.extents[0]), static_cast<int>(r.extents[1]), static_cast<int>(r.extents[2]),
                 static_cast<int>(r.extents[3])},
                r.f64);
}

std::vector<double> Container::f64(const std::string& name) const {
  const Record& r = get(name);
  require(r.dtype == DType::kF64, ErrorKind::kFormat, "record '" + name + "' is not f64");
  return r.f64;
}

std::int64_t Container::i64(const std::string& name) const {
  const Record& r = get(name);
  require(r.dtype == DType::kI64 && r.i64.size() == 1, ErrorKind::kFormat, "record '" + name + "' is not an i64 scalar");
  return r.i64.front();
}

const std::string& Container::blob(const std::string& name) const {
  const Record& r = get(name);
  require(r.dtype == DType::kBlob, ErrorKind::kFormat, "record '" + name + "' is not a blob");
  return r.blob;
}

std::string Container::serialize() const {
  std::string out(kCheckpointMagic, 4);
  put_le<std::uint16_t>(out, kCheckpointVersion);
  for (const auto& r : records_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
    out += r.name;
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.dtype));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.extents.size()));
    for (auto e : r.extents) put_le<std::uint64_t>(out, e);
    switch (r.dtype) {
      case DType::kF64:
        for (double v : r.f64) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        break;
      case DType::kI64:
        for (auto v : r.i64) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(v));
        break;
      case DType::kBlob:
        out += r.blob;
        break;
    }
  }
  return out;
}

Container Container::parse(const std::string& bytes) {
  Reader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    fail(ErrorKind::kFormat, "not a checkpoint: bad magic (expected AMGC)");
  (void)in.take(4);
  const auto version = in.le<std::uint16_t>();
  if (version != kCheckpointVersion)
    fail(ErrorKind::kFormat, "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  Container c;
  while (!in.done()) {
    Record r;
    r.name = in.take(in.le<std::uint32_t>());
    const auto tag = in.le<std::uint8_t>();
    require(tag <= 2, ErrorKind::kFormat, "record '" + r.name + "' has unknown dtype " + std::to_string(tag));
    r.dtype = static_cast<DType>(tag);
    const auto rank = in.le<std::uint8_t>();
    for (int i = 0; i < rank; ++i) r.extents.push_back(in.le<std::uint64_t>());
    const std::uint64_t count = product(r.extents);
    switch (r.dtype) {
      case DType::kF64:
        r.f64.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) r.f64.push_back(std::bit_cast<double>(in.le<std::uint64_t>()));
        break;
      case DType::kI64:
        for (std::uint64_t i = 0; i < count; ++i) r.i64.push_back(static_cast<std::int64_t>(in.le<std::uint64_t>()));
        break;
      case DType::kBlob:
        require(rank == 1, ErrorKind::kFormat, "blob record '" + r.name + "' must be rank 1");
        r.blob = in.take(count);
        break;
    }
    c.records_.push_back(std::move(r));
  }
  return c;
}

void Container::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write checkpoint '" + path + "'");
    const std::string bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::kIo, "failed writing checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

Container Container::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace amodal
