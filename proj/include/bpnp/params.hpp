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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bpnp {

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
};

// Ordered collection of named tensors with gradient buffers. Layers refer
// to their tensors by the index returned from Add().
class ParamStore {
 public:
  std::size_t Add(std::string name, std::vector<std::size_t> shape,
                  std::vector<double> init);

  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  std::size_t size() const { return tensors_.size(); }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::vector<Tensor>& tensors() { return tensors_; }

  // Index of a tensor by name, or size() when absent.
  std::size_t Find(const std::string& name) const;
  std::size_t NumValues() const;

  void ZeroGrad();
  // Throws kNumericFailure when a value is non-finite.
  void CheckFinite() const;

  bool SameValues(const ParamStore& other) const;

 private:
  std::vector<Tensor> tensors_;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update using the store's gradient buffers. Lazily
// sizes `state` on the first call; throws kNumericFailure on non-finite
// gradients (before touching any value) and kInvalidInput on a state whose
// shapes do not match.
void AdamStep(ParamStore& params, AdamState& state, const AdamOptions& opt);

// Versioned binary container of named tensors plus the JSON config that
// built them:
//   "BPNPCKPT" u32 version u64 config_len config_json u64 count
//   per tensor: u32 name_len name u32 ndim u64 dims[ndim] f64 values
struct Checkpoint {
  nlohmann::json config;
  std::vector<Tensor> tensors;  // grad left empty
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void WriteCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint ReadCheckpoint(const std::filesystem::path& path);

// Copies every tensor of `store` into `ckpt` (values only).
void AppendTensors(const ParamStore& store, Checkpoint& ckpt);
// Loads tensors by name; every store tensor must be present with an
// identical shape (kConfiguration otherwise).
void LoadTensors(const Checkpoint& ckpt, ParamStore& store);

}  // namespace bpnp
