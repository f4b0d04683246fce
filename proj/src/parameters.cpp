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

#include "iscon/parameters.hpp"

#include <cmath>
#include <stdexcept>

namespace iscon {

ParamId ParameterSet::add(std::string name, Tensor init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (init.size() != shape_size(init.shape)) {
    throw std::invalid_argument("parameter " + name + ": data does not match shape");
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

ParamId ParameterSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

bool ParameterSet::contains(std::string_view name) const {
  for (const auto& n : names_) {
    if (n == name) return true;
  }
  return false;
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Gradients::Gradients(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (ParamId i = 0; i < params.size(); ++i) {
    grads_.emplace_back(params.value(i).shape, 0.0);
  }
  touched_.resize(params.size());
  touched_mask_.resize(params.size());
}

void Gradients::mark_row(ParamId id, std::size_t row) {
  auto& mask = touched_mask_.at(id);
  if (mask.empty()) mask.assign(grads_[id].rows(), 0);
  if (!mask[row]) {
    mask[row] = 1;
    touched_[id].push_back(row);
  }
}

void Gradients::zero() {
  for (auto& g : grads_) g.fill(0.0);
  for (std::size_t i = 0; i < touched_.size(); ++i) {
    for (std::size_t r : touched_[i]) touched_mask_[i][r] = 0;
    touched_[i].clear();
  }
}

void Gradients::accumulate(const Gradients& other) {
  if (other.size() != size()) throw std::invalid_argument("gradient set size mismatch");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (!grads_[i].same_shape(other.grads_[i])) {
      throw std::invalid_argument("gradient shape mismatch at " + std::to_string(i));
    }
    auto& dst = grads_[i].data;
    const auto& src = other.grads_[i].data;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    for (std::size_t r : other.touched_[i]) mark_row(i, r);
  }
}

void Gradients::scale(double factor) {
  for (auto& g : grads_) {
    for (double& x : g.data) x *= factor;
  }
}

double Gradients::global_norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) {
    for (double x : g.data) sq += x * x;
  }
  return std::sqrt(sq);
}

double Gradients::clip_global_norm(double max_norm) {
  const double norm = global_norm();
  if (max_norm > 0.0 && norm > max_norm) scale(max_norm / norm);
  return norm;
}

}  // namespace iscon
