#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/data/dataset.hpp"
#include "lussl/nnet/bundle.hpp"
#include "lussl/nnet/flops.hpp"
#include "lussl/supervised/protocol.hpp"

namespace lussl::inference {

/// serial_cnns: one end-to-end CNN per tree node, run one after another.
/// shared_backbone: one extractor pass whose features feed every head.
enum class Mode { serial_cnns, shared_backbone };

inline std::string_view mode_name(Mode m) { return m == Mode::serial_cnns ? "serial_cnns" : "shared_backbone"; }

inline Mode parse_mode(std::string_view s) {
  if (s == "serial_cnns" || s == "serial") return Mode::serial_cnns;
  if (s == "shared_backbone" || s == "shared") return Mode::shared_backbone;
  throw ConfigError("bench.mode", "unknown mode '" + std::string(s) + "' (expected serial_cnns|shared_backbone)");
}

/// Root is the view task; parenchymal (below threshold) routes to the AB
/// head, pleural routes to the PE head.
struct TreeSpec {
  double threshold = 0.5;

  Task route(double view_probability) const { return view_probability < threshold ? Task::ab : Task::pe; }
};

/// Models for both execution modes. `shared` holds one extractor and the
/// view/ab/pe heads; `serial` holds one full network per task, each with a
/// head for that task.
struct InferencePipeline {
  std::optional<nn::ModelBundle<float>> shared;
  std::map<Task, nn::ModelBundle<float>> serial;
  TreeSpec spec;
};

struct StageTimings {
  double view_seconds = 0.0;
  double leaf_seconds = 0.0;
};

struct TreeOutcome {
  double view_probability = 0.0;
  Task routed_task = Task::ab;
  double leaf_probability = 0.0;
  Mode mode = Mode::shared_backbone;
  StageTimings timings;
};

/// Call counters filled in by `infer_tree` when supplied.
struct InferenceProbe {
  std::size_t extractor_calls = 0;
  std::array<std::size_t, 3> head_calls{};
};

namespace detail {

inline double logit_of(const nn::Head<float>& head, const nn::Matrix<float>& features, Task task, InferenceProbe* probe) {
  if (probe) ++probe->head_calls[task_index(task)];
  return head.forward(features)(0);
}

inline nn::Matrix<float> features_of(const nn::FeatureExtractor<float>& extractor, const Image& image,
                                     InferenceProbe* probe) {
  if (probe) ++probe->extractor_calls;
  const Image* ptr = &image;
  return extractor.forward(nn::make_batch<float>(std::span<const Image* const>(&ptr, 1)));
}

inline const nn::ModelBundle<float>& serial_model(const InferencePipeline& p, Task t) {
  const auto it = p.serial.find(t);
  if (it == p.serial.end())
    throw Error("serial pipeline has no model for task " + std::string(task_name(t)));
  return it->second;
}

inline const nn::ModelBundle<float>& shared_model(const InferencePipeline& p) {
  if (!p.shared) throw Error("pipeline has no shared-backbone model");
  return *p.shared;
}

}  // namespace detail

/// Classifies one frame by descending the task tree. Exactly one leaf head
/// is evaluated.
inline TreeOutcome infer_tree(const Image& image, const InferencePipeline& pipeline, Mode mode,
                              InferenceProbe* probe = nullptr) {
  using clock = std::chrono::steady_clock;
  TreeOutcome out;
  out.mode = mode;
  const auto t0 = clock::now();
  if (mode == Mode::shared_backbone) {
    const auto& m = detail::shared_model(pipeline);
    const auto features = detail::features_of(m.extractor, image, probe);
    out.view_probability = supervised::sigmoid(detail::logit_of(m.head(Task::view), features, Task::view, probe));
    const auto t1 = clock::now();
    out.routed_task = pipeline.spec.route(out.view_probability);
    out.leaf_probability =
        supervised::sigmoid(detail::logit_of(m.head(out.routed_task), features, out.routed_task, probe));
    out.timings = {std::chrono::duration<double>(t1 - t0).count(), std::chrono::duration<double>(clock::now() - t1).count()};
  } else {
    const auto& view = detail::serial_model(pipeline, Task::view);
    const auto vf = detail::features_of(view.extractor, image, probe);
    out.view_probability = supervised::sigmoid(detail::logit_of(view.head(Task::view), vf, Task::view, probe));
    const auto t1 = clock::now();
    out.routed_task = pipeline.spec.route(out.view_probability);
    const auto& leaf = detail::serial_model(pipeline, out.routed_task);
    const auto lf = detail::features_of(leaf.extractor, image, probe);
    out.leaf_probability = supervised::sigmoid(detail::logit_of(leaf.head(out.routed_task), lf, out.routed_task, probe));
    out.timings = {std::chrono::duration<double>(t1 - t0).count(), std::chrono::duration<double>(clock::now() - t1).count()};
  }
  return out;
}

/// Scores of one task paired with ground truth, for AUC evaluation.
struct TaskScores {
  std::vector<double> scores;
  std::vector<int> labels;
};

struct BatchInference {
  std::vector<TreeOutcome> outcomes;  ///< dataset order
  std::array<TaskScores, 3> per_task;
  /// Frames whose true leaf task differs from the routed one; they carry no leaf score.
  std::size_t misrouted = 0;
};

/// Runs the tree over every record. View scores cover every view-labelled
/// frame; a leaf score is recorded only when that leaf was evaluated and
/// the frame carries its label.
inline BatchInference infer_batch(const Dataset& data, const InferencePipeline& pipeline, Mode mode) {
  BatchInference out;
  out.outcomes.reserve(data.size());
  for (const auto& r : data) {
    const auto o = infer_tree(*r.pixels, pipeline, mode);
    if (const auto& v = r.label(Task::view)) {
      out.per_task[task_index(Task::view)].scores.push_back(o.view_probability);
      out.per_task[task_index(Task::view)].labels.push_back(*v);
    }
    for (Task leaf : {Task::ab, Task::pe}) {
      const auto& l = r.label(leaf);
      if (!l) continue;
      if (o.routed_task == leaf) {
        out.per_task[task_index(leaf)].scores.push_back(o.leaf_probability);
        out.per_task[task_index(leaf)].labels.push_back(*l);
      } else {
        ++out.misrouted;
      }
    }
    out.outcomes.push_back(o);
  }
  return out;
}

/// Worst-case operations for one prediction: the view stage plus the more
/// expensive of the two leaf stages.
inline nn::FlopCount prediction_flops(const InferencePipeline& pipeline, Mode mode) {
  nn::FlopCount total;
  if (mode == Mode::shared_backbone) {
    const auto& m = detail::shared_model(pipeline);
    total += m.extractor.flops();
    total += m.head(Task::view).flops("head.view");
    const auto ab = m.head(Task::ab).flops("head.ab");
    const auto pe = m.head(Task::pe).flops("head.pe");
    total += ab.total >= pe.total ? ab : pe;
  } else {
    auto full = [&](Task t) {
      const auto& m = detail::serial_model(pipeline, t);
      nn::FlopCount f;
      for (auto [name, ops] : m.extractor.flops().breakdown) f.add(std::string(task_name(t)) + "." + name, ops);
      f += m.head(t).flops(std::string(task_name(t)) + ".head");
      return f;
    };
    total += full(Task::view);
    const auto ab = full(Task::ab);
    const auto pe = full(Task::pe);
    total += ab.total >= pe.total ? ab : pe;
  }
  return total;
}

/// Untrained pipelines with the given architecture: serial mode gets three
/// independently seeded extractor + linear-head networks, shared mode one
/// extractor with three one-hidden-layer heads.
inline InferencePipeline make_pipeline(const nn::ExtractorConfig& extractor, std::uint64_t seed) {
  InferencePipeline p;
  nn::ArchitectureConfig shared;
  shared.extractor = extractor;
  shared.with_projector = false;
  for (Task t : kAllTasks) shared.heads[t] = nn::HeadKind::mlp32;
  p.shared = nn::init_bundle<float>(shared, seed);
  for (Task t : kAllTasks) {
    nn::ArchitectureConfig a;
    a.extractor = extractor;
    a.with_projector = false;
    a.heads[t] = nn::HeadKind::linear;
    p.serial.emplace(t, nn::init_bundle<float>(a, derive_seed(seed, 0x5e1, task_index(t))));
  }
  return p;
}

}  // namespace lussl::inference
