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

#include "iscon/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace iscon {

namespace {

constexpr std::array<char, 8> kMagic = {'I', 'S', 'C', 'N', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) { little_endian(v); }
  void u64(std::uint64_t v) { little_endian(v); }
  void f64(double v) { little_endian(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) u64(d);
    for (double x : t.data) f64(x);
  }
  void group(const ParameterSet& set) {
    u32(static_cast<std::uint32_t>(set.size()));
    for (ParamId i = 0; i < set.size(); ++i) tensor(set.name(i), set.value(i));
  }

 private:
  template <typename T>
  void little_endian(T v) {
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(bytes, sizeof(T));
  }

  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::uint8_t u8() {
    char c;
    read(&c, 1);
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() { return little_endian<std::uint32_t>(); }
  std::uint64_t u64() { return little_endian<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(little_endian<std::uint64_t>()); }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = str();
    const std::uint32_t rank = u32();
    if (rank > 8) fail("implausible tensor rank for " + name);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(u64());
    Tensor t(shape);
    for (double& x : t.data) x = f64();
    return {std::move(name), std::move(t)};
  }
  ParameterSet group() {
    ParameterSet set;
    const std::uint32_t n = u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      auto [name, t] = tensor();
      set.add(std::move(name), std::move(t));
    }
    return set;
  }
  [[noreturn]] void fail(const std::string& what) { throw FormatError(source_ + ": " + what); }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated checkpoint");
  }
  template <typename T>
  T little_endian() {
    unsigned char bytes[sizeof(T)];
    read(reinterpret_cast<char*>(bytes), sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
    return v;
  }

  std::istream& in_;
  std::string source_;
};

}  // namespace

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw FormatError("checkpoint (" + kind + ") has no metadata key " + key);
  return it->second;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.u32(Checkpoint::kVersion);
  w.str(checkpoint.kind);
  w.u32(static_cast<std::uint32_t>(checkpoint.metadata.size()));
  for (const auto& [k, v] : checkpoint.metadata) {
    w.str(k);
    w.str(v);
  }
  w.group(checkpoint.params);
  w.group(checkpoint.extras);
  if (checkpoint.adam) {
    const AdamState& a = *checkpoint.adam;
    if (a.first_moment.size() != checkpoint.params.size()) {
      throw std::invalid_argument("optimizer state does not match parameters");
    }
    w.u8(1);
    w.f64(a.config.lr);
    w.f64(a.config.beta1);
    w.f64(a.config.beta2);
    w.f64(a.config.epsilon);
    w.u64(a.step);
    for (std::size_t i = 0; i < a.first_moment.size(); ++i) {
      for (double x : a.first_moment[i].data) w.f64(x);
      for (double x : a.second_moment[i].data) w.f64(x);
    }
  } else {
    w.u8(0);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Reader r(in, path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    r.fail("not a checkpoint container");
  }
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) r.fail("unsupported version " + std::to_string(version));
  Checkpoint c;
  c.kind = r.str();
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    c.metadata[k] = r.str();
  }
  c.params = r.group();
  c.extras = r.group();
  if (r.u8() == 1) {
    AdamConfig cfg;
    cfg.lr = r.f64();
    cfg.beta1 = r.f64();
    cfg.beta2 = r.f64();
    cfg.epsilon = r.f64();
    AdamState a(c.params, cfg);
    a.step = r.u64();
    for (std::size_t i = 0; i < a.first_moment.size(); ++i) {
      for (double& x : a.first_moment[i].data) x = r.f64();
      for (double& x : a.second_moment[i].data) x = r.f64();
    }
    c.adam = std::move(a);
  }
  return c;
}

}  // namespace iscon
