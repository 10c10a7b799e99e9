// Copyright 2026 The BlindPnP Authors.
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

#include "bpnp/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "bpnp/error.hpp"

namespace bpnp {

std::size_t ParamStore::Add(std::string name, std::vector<std::size_t> shape,
                            std::vector<double> init) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                        std::multiplies<>());
  Require(init.size() == n, ErrorKind::kContractViolation,
          "initial values do not match shape of " + name);
  Require(Find(name) == tensors_.size(), ErrorKind::kContractViolation,
          "duplicate tensor " + name);
  tensors_.push_back({std::move(name), std::move(shape), std::move(init),
                      std::vector<double>(n, 0.0)});
  return tensors_.size() - 1;
}

std::size_t ParamStore::Find(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  return tensors_.size();
}

std::size_t ParamStore::NumValues() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParamStore::ZeroGrad() {
  for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

void ParamStore::CheckFinite() const {
  for (const auto& t : tensors_) {
    for (double v : t.value) {
      Require(std::isfinite(v), ErrorKind::kNumericFailure,
              "non-finite parameter in " + t.name);
    }
  }
}

bool ParamStore::SameValues(const ParamStore& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (tensors_[i].name != other[i].name || tensors_[i].value != other[i].value) {
      return false;
    }
  }
  return true;
}

void AdamStep(ParamStore& params, AdamState& state, const AdamOptions& opt) {
  if (state.m.empty() && state.step == 0) {
    for (const auto& t : params.tensors()) {
      state.m.emplace_back(t.size(), 0.0);
      state.v.emplace_back(t.size(), 0.0);
    }
  }
  Require(state.m.size() == params.size() && state.v.size() == params.size(),
          ErrorKind::kInvalidInput, "optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params[i];
    Require(state.m[i].size() == t.size() && state.v[i].size() == t.size(),
            ErrorKind::kInvalidInput, "optimizer state shape mismatch for " + t.name);
    for (double g : t.grad) {
      Require(std::isfinite(g), ErrorKind::kNumericFailure,
              "non-finite gradient in " + t.name);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double g = t.grad[k];
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * g;
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * g * g;
      t.value[k] -= opt.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opt.eps);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'B', 'P', 'N', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void Write(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T Read(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  Require(in.good(), ErrorKind::kIo, "truncated checkpoint");
  return v;
}

}  // namespace

void WriteCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(out.good(), ErrorKind::kIo, "cannot open " + path.string());
  out.write(kMagic, sizeof(kMagic));
  Write<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = ckpt.config.dump();
  Write<std::uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  Write<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    Write<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    Write<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) Write<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
  Require(out.good(), ErrorKind::kIo, "write failed for " + path.string());
}

Checkpoint ReadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), ErrorKind::kConfiguration, "missing checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  Require(in.good() && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
          ErrorKind::kIo, "not a checkpoint file: " + path.string());
  const auto version = Read<std::uint32_t>(in);
  Require(version == kCheckpointVersion, ErrorKind::kIo,
          "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto cfg_len = Read<std::uint64_t>(in);
  Require(cfg_len < (1ULL << 26), ErrorKind::kIo, "implausible config length");
  std::string cfg(cfg_len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  Require(in.good(), ErrorKind::kIo, "truncated checkpoint config");
  try {
    ckpt.config = nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kIo, std::string("bad checkpoint config: ") + e.what());
  }
  const auto count = Read<std::uint64_t>(in);
  Require(count < (1ULL << 20), ErrorKind::kIo, "implausible tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    Tensor t;
    const auto name_len = Read<std::uint32_t>(in);
    Require(name_len < 4096, ErrorKind::kIo, "implausible tensor name length");
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    const auto ndim = Read<std::uint32_t>(in);
    Require(ndim <= 8, ErrorKind::kIo, "implausible tensor rank");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      t.shape.push_back(Read<std::uint64_t>(in));
      n *= t.shape.back();
    }
    Require(n < (1ULL << 32), ErrorKind::kIo, "implausible tensor size");
    t.value.resize(n);
    in.read(reinterpret_cast<char*>(t.value.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    Require(in.good(), ErrorKind::kIo, "truncated tensor " + t.name);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

void AppendTensors(const ParamStore& store, Checkpoint& ckpt) {
  for (const auto& t : store.tensors()) {
    ckpt.tensors.push_back({t.name, t.shape, t.value, {}});
  }
}

void LoadTensors(const Checkpoint& ckpt, ParamStore& store) {
  for (auto& t : store.tensors()) {
    const Tensor* src = nullptr;
    for (const auto& c : ckpt.tensors) {
      if (c.name == t.name) {
        src = &c;
        break;
      }
    }
    Require(src != nullptr, ErrorKind::kConfiguration,
            "checkpoint lacks tensor " + t.name);
    Require(src->shape == t.shape, ErrorKind::kConfiguration,
            "shape mismatch for tensor " + t.name);
    t.value = src->value;
  }
  store.CheckFinite();
}

}  // namespace bpnp
