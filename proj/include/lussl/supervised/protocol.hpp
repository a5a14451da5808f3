#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/core/random.hpp"
#include "lussl/core/schedule.hpp"
#include "lussl/data/dataset.hpp"
#include "lussl/nnet/adam.hpp"
#include "lussl/nnet/bundle.hpp"

namespace lussl::supervised {

using nn::Matrix;
using nn::Vector;

/// LC: frozen extractor + linear head. FT: extractor and linear head trained.
/// NC: frozen extractor + one-hidden-layer head.
enum class Protocol { LC, FT, NC };

inline std::string_view protocol_name(Protocol p) {
  switch (p) {
    case Protocol::LC: return "LC";
    case Protocol::FT: return "FT";
    case Protocol::NC: return "NC";
  }
  return "?";
}

inline Protocol parse_protocol(std::string_view s) {
  if (s == "LC" || s == "lc") return Protocol::LC;
  if (s == "FT" || s == "ft") return Protocol::FT;
  if (s == "NC" || s == "nc") return Protocol::NC;
  throw ConfigError("protocol", "unknown protocol '" + std::string(s) + "' (expected LC|FT|NC)");
}

inline bool freezes_extractor(Protocol p) { return p != Protocol::FT; }
inline nn::HeadKind head_kind_for(Protocol p) { return p == Protocol::NC ? nn::HeadKind::mlp32 : nn::HeadKind::linear; }

struct ProtocolConfig {
  Protocol protocol = Protocol::LC;
  Task task = Task::view;
  double extractor_lr = 1e-5;
  double head_lr = 1e-4;
  int epochs = 10;
  int batch_size = 128;
  std::uint64_t seed = 0;
  double label_fraction = 1.0;

  void validate() const {
    if (!(extractor_lr > 0.0)) throw ConfigError("protocol.extractor_lr", "must be positive");
    if (!(head_lr > 0.0)) throw ConfigError("protocol.head_lr", "must be positive");
    if (epochs < 0) throw ConfigError("protocol.epochs", "must be non-negative");
    if (batch_size < 1) throw ConfigError("protocol.batch_size", "must be positive");
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) throw ConfigError("protocol.label_fraction", "must lie in (0,1]");
  }
};

/// Mean binary cross-entropy on logits, in the overflow-free form
/// max(l,0) - l y + log(1 + exp(-|l|)).
template <typename T>
T bce(const Vector<T>& logits, const std::vector<int>& labels, Vector<T>* grad = nullptr) {
  if (static_cast<std::size_t>(logits.size()) != labels.size()) throw ShapeError("bce: logits and labels differ in length");
  if (logits.size() == 0) return T(0);
  const auto n = static_cast<double>(logits.size());
  double total = 0.0;
  if (grad) grad->resize(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double l = logits(i);
    const double y = labels[static_cast<std::size_t>(i)];
    total += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
    if (grad) {
      const double p = l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
      (*grad)(i) = static_cast<T>((p - y) / n);
    }
  }
  return static_cast<T>(total / n);
}

inline double sigmoid(double l) { return l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l)); }

/// 1-indexed epoch with the lowest validation loss; ties go to the earliest.
/// Returns 0 for an empty history (the initial weights are kept).
inline int select_epoch(const std::vector<double>& val_losses) {
  int best = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < val_losses.size(); ++i)
    if (val_losses[i] < best_loss) {
      best_loss = val_losses[i];
      best = static_cast<int>(i) + 1;
    }
  return best;
}

struct TrainEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double extractor_lr = 0.0;
  double head_lr = 0.0;
  double seconds = 0.0;
};

struct TrainRun {
  ProtocolConfig config;
  std::vector<TrainEpoch> history;
  int selected_epoch = 0;  ///< 0 means the initial weights were kept
  nn::ModelBundle<float> bundle;  ///< weights of the selected epoch
  std::map<std::string, std::string> provenance;
  std::size_t n_train = 0;
  std::size_t n_val = 0;

  std::vector<double> val_losses() const {
    std::vector<double> v;
    for (const auto& e : history) v.push_back(e.val_loss);
    return v;
  }
};

/// Evaluation-mode features of every record, computed in chunks.
inline Matrix<float> extract_features(const nn::FeatureExtractor<float>& extractor, const Dataset& data,
                                      std::size_t chunk = 64) {
  Matrix<float> out(static_cast<Eigen::Index>(data.size()), extractor.feature_dim());
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    std::vector<const Image*> imgs;
    for (std::size_t i = start; i < end; ++i) imgs.push_back(data[i].pixels.get());
    const auto batch = nn::make_batch<float>(std::span<const Image* const>(imgs));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = extractor.forward(batch);
  }
  return out;
}

inline std::vector<int> task_labels(const Dataset& data, Task task) {
  std::vector<int> y;
  y.reserve(data.size());
  for (const auto& r : data) y.push_back(r.label(task).value());
  return y;
}

using TrainEpochCallback = std::function<void(const TrainEpoch&)>;

/// Runs one supervised protocol. The bundle is copied; a fresh head of the
/// protocol's kind replaces any existing head for the task. For LC and NC
/// the extractor is never written.
inline TrainRun train_protocol(const nn::ModelBundle<float>& initial, const Dataset& train, const Dataset& val,
                               const ProtocolConfig& cfg, const TrainEpochCallback& on_epoch = {}) {
  cfg.validate();
  Dataset train_set = train.labelled(cfg.task);
  if (train_set.empty())
    throw DataError("train_protocol: no labelled training data for task " + std::string(task_name(cfg.task)));
  if (cfg.label_fraction < 1.0) train_set = subsample_labels(train_set, cfg.label_fraction, cfg.task, cfg.seed);
  const Dataset val_set = val.labelled(cfg.task);
  if (val_set.empty())
    throw DataError("train_protocol: no labelled validation data for task " + std::string(task_name(cfg.task)));

  TrainRun run;
  run.config = cfg;
  run.n_train = train_set.size();
  run.n_val = val_set.size();
  run.provenance = {{"pretraining", initial.metadata.method},
                    {"protocol", std::string(protocol_name(cfg.protocol))},
                    {"task", std::string(task_name(cfg.task))},
                    {"label_fraction", std::to_string(cfg.label_fraction)},
                    {"seed", std::to_string(cfg.seed)}};

  nn::ModelBundle<float> model = initial;
  model.reset_head(cfg.task, head_kind_for(cfg.protocol), cfg.seed);
  model.metadata.extra["protocol"] = std::string(protocol_name(cfg.protocol));
  model.metadata.extra["task"] = std::string(task_name(cfg.task));
  run.bundle = model;

  const bool frozen = freezes_extractor(cfg.protocol);
  const auto y_train = task_labels(train_set, cfg.task);
  const auto y_val = task_labels(val_set, cfg.task);
  Matrix<float> train_features, val_features;
  if (frozen) {
    train_features = extract_features(model.extractor, train_set);
    val_features = extract_features(model.extractor, val_set);
  }

  auto& head = model.head(cfg.task);
  std::vector<std::vector<nn::Param<float>*>> groups;
  if (!frozen) groups.push_back(model.extractor.params());
  groups.push_back(head.params());
  nn::Adam<float> opt(groups);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainEpoch rec;
    rec.epoch = epoch + 1;
    rec.head_lr = lr_at(cfg.head_lr, epoch);
    rec.extractor_lr = frozen ? 0.0 : lr_at(cfg.extractor_lr, epoch);
    Rng shuffler(derive_seed(cfg.seed, 0x7a, static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffler);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto b = static_cast<Eigen::Index>(end - start);
      std::vector<int> yb;
      for (std::size_t k = start; k < end; ++k) yb.push_back(y_train[order[k]]);

      model.zero_grad();
      typename nn::Head<float>::Trace htrace;
      Vector<float> dlogits;
      float loss = 0;
      if (frozen) {
        Matrix<float> xb(b, train_features.cols());
        for (Eigen::Index k = 0; k < b; ++k) xb.row(k) = train_features.row(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(k)]));
        const auto logits = head.forward(xb, htrace);
        loss = bce<float>(logits, yb, &dlogits);
        head.backward(htrace, dlogits);
        opt.step({rec.head_lr});
      } else {
        std::vector<const Image*> imgs;
        for (std::size_t k = start; k < end; ++k) imgs.push_back(train_set[order[k]].pixels.get());
        const auto batch = nn::make_batch<float>(std::span<const Image* const>(imgs));
        typename nn::FeatureExtractor<float>::Trace ftrace;
        const auto features = model.extractor.forward(batch, ftrace);
        const auto logits = head.forward(features, htrace);
        loss = bce<float>(logits, yb, &dlogits);
        const auto dfeatures = head.backward(htrace, dlogits);
        model.extractor.backward(ftrace, dfeatures);
        opt.step({rec.extractor_lr, rec.head_lr});
      }
      if (!std::isfinite(loss))
        throw NumericError("train_protocol: non-finite loss at epoch " + std::to_string(epoch + 1));
      loss_sum += static_cast<double>(loss) * static_cast<double>(b);
      seen += static_cast<std::size_t>(b);
    }
    rec.train_loss = loss_sum / static_cast<double>(seen);

    const Matrix<float> vf = frozen ? val_features : extract_features(model.extractor, val_set);
    rec.val_loss = bce<float>(head.forward(vf), y_val);
    if (!std::isfinite(rec.val_loss))
      throw NumericError("train_protocol: non-finite validation loss at epoch " + std::to_string(epoch + 1));
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.history.push_back(rec);
    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      run.selected_epoch = rec.epoch;
      run.bundle = model;
      run.bundle.metadata.extra["selected_epoch"] = std::to_string(rec.epoch);
    }
    if (on_epoch) on_epoch(rec);
  }
  return run;
}

/// Sigmoid probabilities of one head over a dataset.
inline std::vector<double> predict_probabilities(const nn::ModelBundle<float>& bundle, Task task, const Dataset& data) {
  std::vector<double> out;
  if (data.empty()) return out;
  const auto logits = bundle.head(task).forward(extract_features(bundle.extractor, data));
  for (Eigen::Index i = 0; i < logits.size(); ++i) out.push_back(sigmoid(logits(i)));
  return out;
}

}  // namespace lussl::supervised
