#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "lussl/augment/augment.hpp"
#include "lussl/core/error.hpp"
#include "lussl/core/random.hpp"
#include "lussl/core/schedule.hpp"
#include "lussl/data/dataset.hpp"
#include "lussl/nnet/adam.hpp"
#include "lussl/nnet/bundle.hpp"
#include "lussl/ssl/losses.hpp"

namespace lussl::ssl {

enum class Method { simclr, barlow_twins, vicreg };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::simclr: return "simclr";
    case Method::barlow_twins: return "barlow_twins";
    case Method::vicreg: return "vicreg";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "simclr") return Method::simclr;
  if (s == "barlow_twins") return Method::barlow_twins;
  if (s == "vicreg") return Method::vicreg;
  throw ConfigError("ssl.method", "unknown method '" + std::string(s) + "' (expected simclr|barlow_twins|vicreg)");
}

struct SSLConfig {
  Method method = Method::simclr;
  double temperature = 0.1;
  double bt_offdiag_weight = 0.005;
  VicregWeights vicreg_weights{};
  int epochs = 15;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  AugmentationPolicy augmentation{};

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("ssl.temperature", "must be positive");
    if (!(bt_offdiag_weight >= 0.0)) throw ConfigError("ssl.bt_offdiag_weight", "must be non-negative");
    if (vicreg_weights.invariance < 0 || vicreg_weights.variance < 0 || vicreg_weights.covariance < 0)
      throw ConfigError("ssl.vicreg_weights", "must be non-negative");
    if (epochs < 0) throw ConfigError("ssl.epochs", "must be non-negative");
    if (batch_size < 2) throw ConfigError("ssl.batch_size", "must be at least 2");
    if (!(lr > 0.0)) throw ConfigError("ssl.lr", "must be positive");
    augmentation.validate();
  }
};

template <typename T>
PairLoss<T> pair_loss(const SSLConfig& cfg, const Matrix<T>& za, const Matrix<T>& zb) {
  switch (cfg.method) {
    case Method::simclr: return nt_xent(za, zb, cfg.temperature);
    case Method::barlow_twins: return barlow_twins(za, zb, cfg.bt_offdiag_weight);
    case Method::vicreg: return vicreg(za, zb, cfg.vicreg_weights);
  }
  throw ConfigError("ssl.method", "unhandled method");
}

struct EpochRecord {
  int epoch = 0;  ///< 1-indexed
  double mean_loss = 0.0;
  double seconds = 0.0;
  double lr = 0.0;
};

struct PretrainHistory {
  std::vector<EpochRecord> epochs;
};

/// Called after every epoch with the record and the current weights.
using EpochCallback = std::function<void(const EpochRecord&, const nn::ModelBundle<float>&)>;

/// Joint-embedding pretraining of extractor + projector. Every sample's
/// augmentation stream is derived from (seed, epoch, position), so results
/// do not depend on how batch assembly is scheduled.
inline PretrainHistory pretrain(const Dataset& data, nn::ModelBundle<float>& bundle, const SSLConfig& cfg,
                                const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw DataError("pretrain: dataset is empty");
  if (!bundle.projector) throw ShapeError("pretrain: bundle has no projector");

  std::vector<nn::Param<float>*> params = bundle.extractor.params();
  for (auto* p : bundle.projector->params()) params.push_back(p);
  nn::Adam<float> opt({params});

  PretrainHistory history;
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffler(derive_seed(cfg.seed, 0x55, static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffler);
    const double lr = lr_at(cfg.lr, epoch);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto b = static_cast<int>(end - start);
      if (b < 2) break;

      std::vector<Image> views(static_cast<std::size_t>(2 * b));
      for (int k = 0; k < b; ++k) {
        Rng rng(derive_seed(cfg.seed, 0xa06, static_cast<std::uint64_t>(epoch), start + static_cast<std::size_t>(k)));
        auto [va, vb] = make_pair(cfg.augmentation, *data[order[start + static_cast<std::size_t>(k)]].pixels, rng);
        views[static_cast<std::size_t>(k)] = std::move(va);
        views[static_cast<std::size_t>(b + k)] = std::move(vb);
      }
      const auto batch = nn::make_batch<float>(std::span<const Image>(views));

      typename nn::FeatureExtractor<float>::Trace ftrace;
      typename nn::Mlp<float>::Trace ptrace;
      const auto features = bundle.extractor.forward(batch, ftrace);
      const auto z = bundle.projector->forward(features, ptrace);
      const auto loss = pair_loss<float>(cfg, z.topRows(b), z.bottomRows(b));
      if (!std::isfinite(loss.value))
        throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(n_batches));

      bundle.zero_grad();
      nn::Matrix<float> dz(2 * b, z.cols());
      dz.topRows(b) = loss.grad_a;
      dz.bottomRows(b) = loss.grad_b;
      const auto dfeatures = bundle.projector->backward(ptrace, dz);
      bundle.extractor.backward(ftrace, dfeatures);
      opt.step({lr});

      loss_sum += loss.value;
      ++n_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.mean_loss = n_batches ? loss_sum / static_cast<double>(n_batches) : 0.0;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.lr = lr;
    bundle.metadata.method = std::string(method_name(cfg.method));
    bundle.metadata.epoch = rec.epoch;
    bundle.metadata.seed = cfg.seed;
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec, bundle);
  }
  return history;
}

}  // namespace lussl::ssl
