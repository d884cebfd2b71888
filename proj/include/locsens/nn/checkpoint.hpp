#pragma once

// Checkpoint layout (all integers little-endian):
//   "LSNN" | u32 version | u32 count |
//   count x { u32 name_len | name | u32 rank | rank x u64 dim | f64 values }

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "locsens/error.hpp"
#include "locsens/nn/tensor.hpp"

namespace locsens::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'L', 'S', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using TensorMap = std::map<std::string, Tensor<double>>;

namespace detail {

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path, const char* what) {
  T value{};
  const auto offset = static_cast<long long>(in.tellg());
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw FormatError(path + ": truncated while reading " + what + " at offset " +
                      std::to_string(offset));
  }
  return value;
}

}  // namespace detail

namespace detail {

inline void put_tensor(std::ostream& out, const std::string& name, const Tensor<double>& values) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(out, 2);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(values.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(values.cols()));
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

}  // namespace detail

/// Writes `extra` (stored at full precision, e.g. configuration rows)
/// followed by the parameters.
template <typename Scalar>
void save_checkpoint(const std::string& path,
                     const ParamList<Scalar>& params, const TensorMap& extra = {}) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 4);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(extra.size() + params.size()));
  for (const auto& [name, values] : extra) detail::put_tensor(out, name, values);
  for (const auto* p : params) detail::put_tensor(out, p->name, p->value.template cast<double>());
  if (!out) throw Error("write failed for " + path);
}

inline TensorMap load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError(path + ": bad magic at offset 0, expected \"LSNN\"");
  }
  const auto version = detail::get<std::uint32_t>(in, path, "version");
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " +
                      std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = detail::get<std::uint32_t>(in, path, "parameter count");
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get<std::uint32_t>(in, path, "name length");
    if (len > 4096) throw FormatError(path + ": implausible name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError(path + ": truncated name");
    const auto rank = detail::get<std::uint32_t>(in, path, "rank");
    if (rank == 0 || rank > 2) {
      throw FormatError(path + ": parameter " + name + " has unsupported rank " +
                        std::to_string(rank));
    }
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t d = 0; d < rank; ++d) {
      dims[2 - rank + d] = detail::get<std::uint64_t>(in, path, "dimension");
    }
    Tensor<double> t(static_cast<Index>(dims[0]), static_cast<Index>(dims[1]));
    const auto bytes = static_cast<std::streamsize>(t.size() * sizeof(double));
    if (!in.read(reinterpret_cast<char*>(t.data()), bytes)) {
      throw FormatError(path + ": truncated values for " + name + ", expected " +
                        std::to_string(bytes) + " bytes, got " +
                        std::to_string(in.gcount()));
    }
    if (!out.emplace(name, std::move(t)).second) {
      throw FormatError(path + ": duplicate parameter " + name);
    }
  }
  return out;
}

/// Copies tensors into `params` by name. Every parameter must be present with
/// a matching shape.
template <typename Scalar>
void assign_parameters(const TensorMap& tensors,
                       const ParamList<Scalar>& params) {
  for (auto* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw FormatError("checkpoint lacks parameter " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw FormatError("checkpoint shape mismatch for " + p->name);
    }
    p->value = it->second.template cast<Scalar>();
    p->grad.setZero(p->value.rows(), p->value.cols());
  }
}

}  // namespace locsens::nn
