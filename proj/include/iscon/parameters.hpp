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

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "iscon/tensor.hpp"

namespace iscon {

using ParamId = std::size_t;

// Named, owned collection of trainable tensors. Models hold one of these
// and refer to their tensors through ParamId handles.
class ParameterSet {
 public:
  ParamId add(std::string name, Tensor init);

  Tensor& value(ParamId id) { return values_.at(id); }
  const Tensor& value(ParamId id) const { return values_.at(id); }
  const std::string& name(ParamId id) const { return names_.at(id); }

  // Throws std::out_of_range for unknown names.
  ParamId find(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return values_.size(); }
  std::size_t total_elements() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

// Gradient buffers shaped like a ParameterSet. Embedding tables are dense
// in memory, but the rows actually written are tracked so callers can
// treat them sparsely.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  Tensor& operator[](ParamId id) { return grads_.at(id); }
  const Tensor& operator[](ParamId id) const { return grads_.at(id); }
  std::size_t size() const { return grads_.size(); }

  void mark_row(ParamId id, std::size_t row);
  const std::vector<std::size_t>& touched_rows(ParamId id) const { return touched_.at(id); }

  void zero();
  // this += other (shapes must agree).
  void accumulate(const Gradients& other);
  void scale(double factor);
  double global_norm() const;
  // Rescales so the global L2 norm is at most max_norm; returns the norm before clipping.
  double clip_global_norm(double max_norm);

 private:
  std::vector<Tensor> grads_;
  std::vector<std::vector<std::size_t>> touched_;
  std::vector<std::vector<char>> touched_mask_;
};

}  // namespace iscon
