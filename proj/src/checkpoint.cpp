#include "dcdm/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dcdm {

namespace {

void require_little_endian() {
  const std::uint32_t probe = 0x01020304u;
  unsigned char bytes[4];
  std::memcpy(bytes, &probe, 4);
  if (bytes[0] != 0x04)
    throw std::runtime_error("checkpoint io requires a little-endian host");
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.write(buf, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.write(buf, 8);
}

void put_f64(std::ostream& out, double v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.write(buf, 8);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  char buf[4];
  if (!in.read(buf, 4)) throw std::runtime_error("checkpoint truncated: " + path);
  std::uint32_t v;
  std::memcpy(&v, buf, 4);
  return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  char buf[8];
  if (!in.read(buf, 8)) throw std::runtime_error("checkpoint truncated: " + path);
  std::uint64_t v;
  std::memcpy(&v, buf, 8);
  return v;
}

double get_f64(std::istream& in, const std::string& path) {
  char buf[8];
  if (!in.read(buf, 8)) throw std::runtime_error("checkpoint truncated: " + path);
  double v;
  std::memcpy(&v, buf, 8);
  return v;
}

std::string get_string(std::istream& in, const std::string& path) {
  const std::uint32_t n = get_u32(in, path);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n))
    throw std::runtime_error("checkpoint truncated: " + path);
  return s;
}

void expect_magic(std::istream& in, const char* magic, const std::string& path) {
  char buf[4];
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw std::runtime_error("not a " + std::string(magic) + " file: " + path);
}

constexpr std::uint32_t kFormatVersion = 1;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return in;
}

}  // namespace

void write_named_tensors(std::ostream& out,
                         const std::vector<std::pair<std::string, Tensor>>& tensors) {
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int dim : t.shape) put_u32(out, static_cast<std::uint32_t>(dim));
    out.write(reinterpret_cast<const char*>(t.ptr()),
              static_cast<std::streamsize>(sizeof(double) * t.numel()));
  }
}

std::vector<std::pair<std::string, Tensor>> read_named_tensors(std::istream& in,
                                                               const std::string& path) {
  const std::uint32_t count = get_u32(in, path);
  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    std::string name = get_string(in, path);
    if (name.empty()) throw std::runtime_error("unnamed tensor record: " + path);
    const std::uint32_t rank = get_u32(in, path);
    if (rank > 8) throw std::runtime_error("implausible tensor rank in " + path);
    std::vector<int> shape(rank);
    long long numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(get_u32(in, path));
      numel *= shape[i];
    }
    Tensor t = Tensor::zeros(shape);
    if (numel != t.numel()) throw std::runtime_error("corrupt shape in " + path);
    if (!in.read(reinterpret_cast<char*>(t.ptr()),
                 static_cast<std::streamsize>(sizeof(double) * t.numel())))
      throw std::runtime_error("checkpoint truncated: " + path);
    tensors.emplace_back(std::move(name), std::move(t));
  }
  return tensors;
}

void write_checkpoint(const std::string& path, const std::string& config_text,
                      const Parameters& params) {
  require_little_endian();
  std::ofstream out = open_out(path);
  out.write("DCDM", 4);
  put_u32(out, kFormatVersion);
  put_string(out, config_text);
  std::vector<std::pair<std::string, Tensor>> records;
  records.reserve(params.order.size());
  for (const auto& name : params.order) records.emplace_back(name, params.at(name));
  write_named_tensors(out, records);
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  require_little_endian();
  std::ifstream in = open_in(path);
  expect_magic(in, "DCDM", path);
  const std::uint32_t version = get_u32(in, path);
  if (version != kFormatVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version) + ": " + path);
  Checkpoint ckpt;
  ckpt.config_text = get_string(in, path);
  for (auto& [name, t] : read_named_tensors(in, path))
    ckpt.params.add(name, std::move(t));
  return ckpt;
}

void write_train_state(const std::string& path, const TrainState& state) {
  require_little_endian();
  std::ofstream out = open_out(path);
  out.write("DCST", 4);
  put_u32(out, kFormatVersion);
  put_u64(out, static_cast<std::uint64_t>(state.step));
  put_f64(out, state.seconds);
  put_string(out, state.rng_state);
  put_u32(out, static_cast<std::uint32_t>(state.counts.size()));
  for (long long c : state.counts) put_u64(out, static_cast<std::uint64_t>(c));
  write_named_tensors(out, state.moments);
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

TrainState read_train_state(const std::string& path) {
  require_little_endian();
  std::ifstream in = open_in(path);
  expect_magic(in, "DCST", path);
  const std::uint32_t version = get_u32(in, path);
  if (version != kFormatVersion)
    throw std::runtime_error("unsupported train-state version " +
                             std::to_string(version) + ": " + path);
  TrainState state;
  state.step = static_cast<long long>(get_u64(in, path));
  state.seconds = get_f64(in, path);
  state.rng_state = get_string(in, path);
  const std::uint32_t k = get_u32(in, path);
  state.counts.resize(k);
  for (std::uint32_t i = 0; i < k; ++i)
    state.counts[i] = static_cast<long long>(get_u64(in, path));
  state.moments = read_named_tensors(in, path);
  return state;
}

}  // namespace dcdm
