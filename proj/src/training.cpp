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

#include "iscon/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>

namespace iscon {

std::vector<PrefixExample> build_prefix_examples(const SplitCorpus& corpus, Split which,
                                                 std::size_t max_prefix) {
  std::vector<PrefixExample> out;
  for (std::size_t k = 0; k < corpus.interactions.size(); ++k) {
    if (corpus.split[k] != which) continue;
    const Session& s = corpus.sessions[corpus.session_of[k]];
    const std::size_t pos = corpus.position_of[k];
    const std::size_t begin = pos > max_prefix ? pos - max_prefix : 0;
    PrefixExample e;
    e.interaction = k;
    e.user = corpus.interactions[k].user;
    e.session = s.id;
    e.prefix.assign(s.items.begin() + static_cast<std::ptrdiff_t>(begin),
                    s.items.begin() + static_cast<std::ptrdiff_t>(pos));
    e.target_item = corpus.interactions[k].item;
    out.push_back(std::move(e));
  }
  return out;
}

double batch_gradient(const ParameterSet& params, std::span<const std::size_t> examples,
                      const BatchLoss& batch_loss, std::size_t threads, Gradients& out) {
  if (examples.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, examples.size());
  out.zero();
  double total = 0.0;
  if (workers == 1) {
    Tape tape(params);
    const Var loss = batch_loss(tape, examples);
    tape.backward(loss, out);
    total = tape.scalar(loss);
  } else {
    std::vector<Gradients> partial(workers, Gradients(params));
    std::vector<double> losses(workers, 0.0);
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    const std::size_t chunk = (examples.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(examples.size(), w * chunk);
      const std::size_t end = std::min(examples.size(), begin + chunk);
      pool.emplace_back([&, w, begin, end] {
        if (begin == end) return;
        try {
          Tape tape(params);
          const Var loss = batch_loss(tape, examples.subspan(begin, end - begin));
          tape.backward(loss, partial[w]);
          losses[w] = tape.scalar(loss);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (std::size_t w = 0; w < workers; ++w) {
      out.accumulate(partial[w]);
      total += losses[w];
    }
  }
  const double inv = 1.0 / static_cast<double>(examples.size());
  out.scale(inv);
  return total * inv;
}

TrainHistory fit(ParameterSet& params, AdamState& adam, std::size_t num_examples,
                 const BatchLoss& batch_loss, const ValidationScore& validation,
                 const TrainOptions& options) {
  if (num_examples == 0) throw std::invalid_argument("fit: empty training set");
  TrainHistory history;
  Rng rng(options.seed);
  std::vector<std::size_t> order(num_examples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Gradients grads(params);
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

  double best = -std::numeric_limits<double>::infinity();
  std::optional<ParameterSet> best_params;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < num_examples; start += batch) {
      const std::size_t end = std::min(num_examples, start + batch);
      const std::span<const std::size_t> selection(order.data() + start, end - start);
      epoch_loss += batch_gradient(params, selection, batch_loss, options.threads, grads) *
                    static_cast<double>(end - start);
      grads.clip_global_norm(options.clip_norm);
      adam_step(adam, params, grads);
    }
    history.train_loss.push_back(epoch_loss / static_cast<double>(num_examples));
    history.epochs_run = epoch + 1;
    if (!validation) continue;

    const double score = validation(params);
    history.validation.push_back(score);
    if (score > best) {
      best = score;
      best_params = params;
      history.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= options.patience) {
      break;
    }
  }
  if (best_params) {
    params = std::move(*best_params);
  } else {
    history.best_epoch = history.epochs_run == 0 ? 0 : history.epochs_run - 1;
  }
  return history;
}

}  // namespace iscon
