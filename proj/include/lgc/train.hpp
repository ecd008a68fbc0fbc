// SPDX-License-Identifier: Apache-2.0
/**
 * @file   train.hpp
 * @brief  Mini-batch training, evaluation and run history.
 */
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lgc/checkpoint.hpp"
#include "lgc/data.hpp"
#include "lgc/model.hpp"
#include "lgc/optim.hpp"

namespace lgc {

struct TrainConfig {
  int batch_size = 128;
  int epochs = 180;
  LrSchedule schedule = cifar_schedule();
  std::uint64_t seed = 0;
  Augmentation augmentation = Augmentation::Cifar;
  std::string checkpoint; // empty: no checkpoints
  bool evaluate_each_epoch = true;

  void validate() const {
    if (batch_size < 1)
      throw Error("batch size must be >= 1");
    if (epochs < 1)
      throw Error("epochs must be >= 1");
    schedule.validate();
    if (schedule.total_epochs() < epochs)
      throw ScheduleExhaustedError("schedule covers " +
                                   std::to_string(schedule.total_epochs()) +
                                   " epochs but " + std::to_string(epochs) +
                                   " were requested");
  }
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  std::optional<double> test_accuracy;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::optional<double> best_accuracy;
  int best_epoch = 0;

  std::optional<double> final_accuracy() const {
    return epochs.empty() ? std::nullopt : epochs.back().test_accuracy;
  }

  /// epoch,lr,train_loss,test_acc
  std::string to_csv() const {
    std::ostringstream os;
    os.precision(9);
    os << "epoch,lr,train_loss,test_acc\n";
    for (const auto &r : epochs) {
      os << r.epoch << ',' << r.lr << ',' << r.train_loss << ',';
      if (r.test_accuracy)
        os << *r.test_accuracy;
      os << '\n';
    }
    return os.str();
  }
};

struct EvalResult {
  double accuracy = 0;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<std::size_t>> confusion; // [true][predicted]
  std::size_t total = 0;
};

/// Top-1 metrics from predicted and true labels.
inline EvalResult evaluate_predictions(std::span<const int> predicted,
                                       std::span<const int> truth,
                                       int num_classes) {
  if (truth.empty())
    throw DataError("cannot evaluate on an empty dataset");
  if (predicted.size() != truth.size())
    throw DataError("prediction count differs from label count");
  EvalResult r;
  r.total = truth.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 ||
        predicted[i] >= num_classes)
      throw DataError("label outside [0, " + std::to_string(num_classes) + ")");
    ++r.confusion[truth[i]][predicted[i]];
    correct += predicted[i] == truth[i];
  }
  r.accuracy = double(correct) / double(truth.size());
  for (int c = 0; c < num_classes; ++c) {
    const std::size_t n = std::accumulate(r.confusion[c].begin(),
                                          r.confusion[c].end(), std::size_t{0});
    r.per_class_accuracy.push_back(n ? double(r.confusion[c][c]) / double(n)
                                     : 0.0);
  }
  return r;
}

/// Arg-max class per row of (N, K, 1, 1) logits; first maximum wins.
inline std::vector<int> argmax_classes(const Tensor &logits) {
  const std::size_t N = logits.shape().n, K = logits.shape().c;
  std::vector<int> out(N);
  for (std::size_t n = 0; n < N; ++n) {
    const float *z = logits.data() + n * K;
    out[n] = int(std::max_element(z, z + K) - z);
  }
  return out;
}

/// Accuracy of `model` on unaltered images of `ds`.
inline EvalResult evaluate(Model<float> &model, const Dataset &ds,
                           std::size_t batch_size = 256) {
  if (ds.empty())
    throw DataError("cannot evaluate on an empty dataset");
  std::vector<int> predicted, truth;
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 unused(0);
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t end = std::min(ds.size(), start + batch_size);
    auto [x, labels] = make_batch(
        ds, std::span<const std::size_t>(idx.data() + start, end - start),
        Augmentation::None, unused);
    const auto p = argmax_classes(model.predict_logits(x));
    predicted.insert(predicted.end(), p.begin(), p.end());
    truth.insert(truth.end(), labels.begin(), labels.end());
  }
  return evaluate_predictions(predicted, truth, model.spec().num_classes);
}

/// One optimizer step on a fixed batch; returns the loss before the update.
inline float train_step(Model<float> &model, AdamState<float> &adam,
                        const Tensor &x, const std::vector<int> &labels,
                        double lr) {
  Tape<float> tape;
  Var loss = model.loss(tape, tape.constant(x, "input"), labels);
  model.params().zero_grad();
  tape.backward(loss);
  adam_step(model.params(), adam, lr);
  return tape.value(loss)[0];
}

/// Repeats train_step on one batch until the loss drops below `stop_below`
/// or `max_steps` is reached. Returns the loss curve.
inline std::vector<float> fit_batch(Model<float> &model, const Tensor &x,
                                    const std::vector<int> &labels,
                                    int max_steps, double lr,
                                    float stop_below = 0.0f) {
  AdamState<float> adam;
  std::vector<float> losses;
  for (int s = 0; s < max_steps; ++s) {
    losses.push_back(train_step(model, adam, x, labels, lr));
    if (losses.back() < stop_below)
      break;
  }
  return losses;
}

/// Seeded permutation for one epoch.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                            int epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32),
                    std::uint32_t(epoch), 0x5u};
  std::mt19937_64 rng(seq);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

/// Callback invoked after each epoch; used for progress output.
using EpochCallback = std::function<void(const EpochRecord &)>;

/// Trains `model` on `train`; batch contents depend only on
/// (seed, epoch, batch index). `test` may be null. Checkpoints go to
/// config.checkpoint after every epoch and to "<checkpoint>.best" on a new
/// best accuracy. A numeric failure propagates and leaves the last good
/// checkpoint on disk.
inline TrainHistory train(Model<float> &model, const Dataset &train,
                          const Dataset *test, const TrainConfig &config,
                          const EpochCallback &on_epoch = {}) {
  config.validate();
  if (train.empty())
    throw DataError("training set is empty");
  AdamState<float> adam;
  TrainHistory history;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.schedule.rate(epoch);
    const auto order = epoch_order(train.size(), config.seed, epoch);
    double loss_sum = 0;
    std::size_t seen = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size, ++batch_index) {
      const std::size_t end =
          std::min(order.size(), start + std::size_t(config.batch_size));
      std::seed_seq seq{std::uint32_t(config.seed),
                        std::uint32_t(config.seed >> 32), std::uint32_t(epoch),
                        std::uint32_t(batch_index)};
      std::mt19937_64 aug_rng(seq);
      auto [x, labels] = make_batch(
          train, std::span<const std::size_t>(order.data() + start, end - start),
          config.augmentation, aug_rng);
      try {
        loss_sum += double(train_step(model, adam, x, labels, lr)) *
                    double(end - start);
      } catch (const NumericError &e) {
        throw NumericError(std::string(e.what()) + " (epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ")" +
                           (config.checkpoint.empty()
                                ? ""
                                : "; last good checkpoint: " +
                                      config.checkpoint));
      }
      seen += end - start;
    }
    EpochRecord rec{epoch, lr, loss_sum / double(seen), {}};
    if (test && config.evaluate_each_epoch)
      rec.test_accuracy = evaluate(model, *test).accuracy;
    if (!config.checkpoint.empty())
      save_checkpoint(model.params(), config.checkpoint);
    if (rec.test_accuracy &&
        (!history.best_accuracy || *rec.test_accuracy > *history.best_accuracy)) {
      history.best_accuracy = rec.test_accuracy;
      history.best_epoch = epoch;
      if (!config.checkpoint.empty())
        save_checkpoint(model.params(), config.checkpoint + ".best");
    }
    history.epochs.push_back(rec);
    if (on_epoch)
      on_epoch(rec);
  }
  return history;
}

} // namespace lgc
