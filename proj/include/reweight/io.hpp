#pragma once

// Text and binary persistence helpers: round-trip float formatting, flat
// key=value files, and a versioned container of shape-tagged tensors.

#include <array>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "reweight/common.hpp"

namespace reweight::io {

/// Shortest text that parses back to exactly x.
inline std::string format_double(double x) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

template <typename Range>
std::string join(const Range& values, char sep = ',') {
  std::ostringstream os;
  bool first = true;
  for (const auto& v : values) {
    if (!first) os << sep;
    first = false;
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
      os << format_double(v);
    else
      os << v;
  }
  return os.str();
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(text);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline void write_key_values(const std::string& path, const KeyValues& kv) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open for writing: " + path);
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
}

inline std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open for reading: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("malformed key=value line in " + path + ": " + line);
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

/// Binary container: "RWCK" magic, u32 version, u32 entry count, then entries
/// of (u32 name length, name, u8 kind, payload). Kind 0 is a float64 tensor
/// (u32 rank, u64 dims..., little-endian doubles); kind 1 is a byte blob
/// (u64 length, bytes). Tensors are stored row-major.
class TensorArchive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    std::uint8_t kind = 0;
    std::vector<std::uint64_t> dims;
    std::vector<double> values;
    std::string bytes;
  };

  void add_matrix(const std::string& name, const Matrix& m) {
    Entry e{name, 0, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}, {}};
    e.values.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) e.values.push_back(m(r, c));
    push(std::move(e));
  }

  void add_vector(const std::string& name, const Vector& v) {
    Entry e{name, 0, {static_cast<std::uint64_t>(v.size())}, {v.data(), v.data() + v.size()}, {}};
    push(std::move(e));
  }

  void add_bytes(const std::string& name, std::string bytes) { push(Entry{name, 1, {}, {}, std::move(bytes)}); }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  const Entry& entry(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("checkpoint: missing entry '" + name + "'");
    return entries_[it->second];
  }

  Matrix matrix(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.kind != 0 || e.dims.size() != 2) throw InvalidArgument("checkpoint: '" + name + "' is not a matrix");
    Matrix m(static_cast<Eigen::Index>(e.dims[0]), static_cast<Eigen::Index>(e.dims[1]));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = e.values[k++];
    return m;
  }

  Vector vector(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.kind != 0 || e.dims.size() != 1) throw InvalidArgument("checkpoint: '" + name + "' is not a vector");
    return Eigen::Map<const Vector>(e.values.data(), static_cast<Eigen::Index>(e.values.size()));
  }

  const std::string& bytes(const std::string& name) const {
    const Entry& e = entry(name);
    if (e.kind != 1) throw InvalidArgument("checkpoint: '" + name + "' is not a byte blob");
    return e.bytes;
  }

  std::string serialize() const {
    std::string out = "RWCK";
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
      put_u32(out, static_cast<std::uint32_t>(e.name.size()));
      out += e.name;
      out.push_back(static_cast<char>(e.kind));
      if (e.kind == 0) {
        put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
        for (auto d : e.dims) put_u64(out, d);
        for (double v : e.values) {
          std::uint64_t bits = 0;
          std::memcpy(&bits, &v, sizeof bits);
          put_u64(out, bits);
        }
      } else {
        put_u64(out, e.bytes.size());
        out += e.bytes;
      }
    }
    return out;
  }

  static TensorArchive deserialize(const std::string& data) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
      if (pos + n > data.size()) throw InvalidArgument("checkpoint: truncated file");
    };
    need(4);
    if (data.compare(0, 4, "RWCK") != 0) throw InvalidArgument("checkpoint: bad magic");
    pos = 4;
    auto u32 = [&] {
      need(4);
      std::uint32_t v = 0;
      for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
      return v;
    };
    auto u64 = [&] {
      need(8);
      std::uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
      return v;
    };
    const std::uint32_t version = u32();
    if (version != kVersion) throw InvalidArgument("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t count = u32();
    TensorArchive archive;
    for (std::uint32_t k = 0; k < count; ++k) {
      Entry e;
      const std::uint32_t len = u32();
      need(len);
      e.name = data.substr(pos, len);
      pos += len;
      need(1);
      e.kind = static_cast<std::uint8_t>(data[pos++]);
      if (e.kind == 0) {
        const std::uint32_t rank = u32();
        std::uint64_t total = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
          e.dims.push_back(u64());
          total *= e.dims.back();
        }
        need(total * 8);
        e.values.resize(total);
        for (auto& v : e.values) {
          const std::uint64_t bits = u64();
          std::memcpy(&v, &bits, sizeof v);
        }
      } else if (e.kind == 1) {
        const std::uint64_t n = u64();
        need(n);
        e.bytes = data.substr(pos, n);
        pos += n;
      } else {
        throw InvalidArgument("checkpoint: unknown entry kind");
      }
      archive.push(std::move(e));
    }
    return archive;
  }

  void write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot open for writing: " + path);
    const std::string blob = serialize();
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }

  static TensorArchive read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidArgument("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return deserialize(ss.str());
  }

 private:
  void push(Entry e) {
    if (contains(e.name)) throw InvalidArgument("checkpoint: duplicate entry '" + e.name + "'");
    index_[e.name] = entries_.size();
    entries_.push_back(std::move(e));
  }

  static void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  static void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace reweight::io
