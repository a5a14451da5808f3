#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/core/random.hpp"
#include "lussl/data/dataset.hpp"
#include "lussl/nnet/extractor.hpp"
#include "lussl/nnet/mlp.hpp"

namespace lussl::nn {

struct ArchitectureConfig {
  ExtractorConfig extractor;
  bool with_projector = true;
  int projector_hidden = 128;
  int embedding_dim = 64;
  std::map<Task, HeadKind> heads;

  void validate() const {
    extractor.validate();
    if (with_projector && (projector_hidden < 1 || embedding_dim < 1))
      throw ConfigError("architecture.projector", "projector widths must be positive");
  }

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

/// Provenance carried with every bundle and checkpoint.
struct BundleMetadata {
  std::string method = "none";  ///< pretraining method, or "none"
  std::uint64_t seed = 0;
  int epoch = 0;
  std::map<std::string, std::string> extra;

  friend bool operator==(const BundleMetadata&, const BundleMetadata&) = default;
};

/// Feature extractor f, optional projector g and task heads h_i.
template <typename T>
struct ModelBundle {
  FeatureExtractor<T> extractor;
  std::optional<Mlp<T>> projector;
  std::map<Task, Head<T>> heads;
  BundleMetadata metadata;

  ArchitectureConfig architecture() const {
    ArchitectureConfig a;
    a.extractor = extractor.config();
    a.with_projector = projector.has_value();
    if (projector) {
      a.projector_hidden = projector->params()[0]->value.rows();
      a.embedding_dim = projector->out_features();
    }
    for (const auto& [task, head] : heads) a.heads[task] = head.kind();
    return a;
  }

  int feature_dim() const { return extractor.feature_dim(); }

  /// Replaces (or adds) the head for `task` with a freshly initialised one.
  Head<T>& reset_head(Task task, HeadKind kind, std::uint64_t seed) {
    Head<T> h("head." + std::string(task_name(task)), kind, feature_dim());
    Rng rng(derive_seed(seed, 0x4ead, task_index(task)));
    h.init(rng);
    heads.insert_or_assign(task, std::move(h));
    return heads.at(task);
  }

  const Head<T>& head(Task task) const {
    const auto it = heads.find(task);
    if (it == heads.end()) throw ShapeError("bundle has no head for task " + std::string(task_name(task)));
    return it->second;
  }
  Head<T>& head(Task task) {
    const auto it = heads.find(task);
    if (it == heads.end()) throw ShapeError("bundle has no head for task " + std::string(task_name(task)));
    return it->second;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out = extractor.params();
    if (projector)
      for (auto* p : projector->params()) out.push_back(p);
    for (auto& [task, head] : heads)
      for (auto* p : head.params()) out.push_back(p);
    return out;
  }
  std::vector<const Param<T>*> params() const {
    std::vector<const Param<T>*> out = extractor.params();
    if (projector)
      for (auto* p : projector->params()) out.push_back(p);
    for (const auto& [task, head] : heads)
      for (auto* p : head.params()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }
};

/// Builds a bundle with seeded fan-in-uniform weights. Each component draws
/// from its own derived stream, so adding a head never perturbs the
/// extractor's initial weights.
template <typename T = float>
ModelBundle<T> init_bundle(const ArchitectureConfig& arch, std::uint64_t seed) {
  arch.validate();
  ModelBundle<T> b;
  b.extractor = FeatureExtractor<T>(arch.extractor);
  Rng erng(derive_seed(seed, 0xe7));
  b.extractor.init(erng);
  if (arch.with_projector) {
    b.projector = Mlp<T>("projector", arch.extractor.feature_dim(), arch.projector_hidden, arch.embedding_dim);
    Rng prng(derive_seed(seed, 0x9e));
    b.projector->init(prng);
  }
  for (const auto& [task, kind] : arch.heads) b.reset_head(task, kind, seed);
  b.metadata.seed = seed;
  for (const auto& [task, head] : b.heads)
    if (head.in_features() != b.feature_dim()) throw ShapeError("head input width does not match extractor feature_dim");
  return b;
}

}  // namespace lussl::nn
