#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/core/random.hpp"
#include "lussl/data/image.hpp"

namespace lussl {

/// The three binary tasks, arranged as a tree rooted at `view`.
enum class Task { view = 0, ab = 1, pe = 2 };

inline constexpr std::array<Task, 3> kAllTasks{Task::view, Task::ab, Task::pe};

/// Label encodings.
inline constexpr int kParenchymal = 0;
inline constexpr int kPleural = 1;
inline constexpr int kALines = 0;
inline constexpr int kBLines = 1;
inline constexpr int kNoEffusion = 0;
inline constexpr int kEffusion = 1;

inline std::string_view task_name(Task t) {
  switch (t) {
    case Task::view: return "view";
    case Task::ab: return "ab";
    case Task::pe: return "pe";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "view") return Task::view;
  if (s == "ab") return Task::ab;
  if (s == "pe") return Task::pe;
  throw ConfigError("task", "unknown task '" + std::string(s) + "' (expected view|ab|pe)");
}

inline std::size_t task_index(Task t) { return static_cast<std::size_t>(t); }

struct ImageRecord {
  std::string image_id;
  std::string patient_id;
  std::string video_id;
  int frame_index = 0;
  std::shared_ptr<const Image> pixels;
  std::array<std::optional<int>, 3> labels{};

  const std::optional<int>& label(Task t) const { return labels[task_index(t)]; }
  std::optional<int>& label(Task t) { return labels[task_index(t)]; }
  bool has_any_label() const { return labels[0] || labels[1] || labels[2]; }
};

/// Throws DataError if the record breaks a per-record invariant.
inline void validate_record(const ImageRecord& r) {
  const std::string where = "record '" + r.image_id + "'";
  if (!r.pixels || !r.pixels->is_frame()) throw DataError(where + ": pixel array must be 128x128");
  for (float v : r.pixels->pixels)
    if (!(v >= 0.0f && v <= 1.0f)) throw DataError(where + ": pixel value outside [0,1]");
  if (r.frame_index < 0) throw DataError(where + ": negative frame_index");
  for (Task t : kAllTasks) {
    const auto& l = r.label(t);
    if (l && *l != 0 && *l != 1) throw DataError(where + ": label for " + std::string(task_name(t)) + " must be 0 or 1");
  }
  if (r.label(Task::ab) && r.label(Task::view) != kParenchymal)
    throw DataError(where + ": ab_label requires view_label=parenchymal (0)");
  if (r.label(Task::pe) && r.label(Task::view) != kPleural)
    throw DataError(where + ": pe_label requires view_label=pleural (1)");
}

/// Ordered, immutable-after-construction collection of frames.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, std::vector<ImageRecord> records) : name_(std::move(name)), records_(std::move(records)) {
    validate();
  }

  const std::string& name() const { return name_; }
  const std::vector<ImageRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const ImageRecord& operator[](std::size_t i) const { return records_[i]; }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  std::set<std::string> patient_ids() const {
    std::set<std::string> out;
    for (const auto& r : records_) out.insert(r.patient_id);
    return out;
  }

  std::size_t count_labelled(Task t) const {
    std::size_t n = 0;
    for (const auto& r : records_) n += r.label(t).has_value();
    return n;
  }

  /// Records carrying a label for `t`, in dataset order.
  Dataset labelled(Task t) const {
    std::vector<ImageRecord> out;
    for (const auto& r : records_)
      if (r.label(t)) out.push_back(r);
    return Dataset(name_ + "/" + std::string(task_name(t)), std::move(out));
  }

  /// Records of patients with no labels at all.
  Dataset unlabelled_patients() const {
    std::set<std::string> labelled;
    for (const auto& r : records_)
      if (r.has_any_label()) labelled.insert(r.patient_id);
    std::vector<ImageRecord> out;
    for (const auto& r : records_)
      if (!labelled.contains(r.patient_id)) out.push_back(r);
    return Dataset(name_ + "/unlabelled", std::move(out));
  }

  Dataset labelled_patients() const {
    std::set<std::string> labelled;
    for (const auto& r : records_)
      if (r.has_any_label()) labelled.insert(r.patient_id);
    std::vector<ImageRecord> out;
    for (const auto& r : records_)
      if (labelled.contains(r.patient_id)) out.push_back(r);
    return Dataset(name_ + "/labelled", std::move(out));
  }

  static Dataset concat(std::string name, const Dataset& a, const Dataset& b) {
    std::vector<ImageRecord> out = a.records_;
    out.insert(out.end(), b.records_.begin(), b.records_.end());
    return Dataset(std::move(name), std::move(out));
  }

 private:
  void validate() const {
    std::set<std::tuple<std::string, std::string, int>> keys;
    std::map<std::string, std::string> video_owner;
    for (const auto& r : records_) {
      validate_record(r);
      if (!keys.emplace(r.patient_id, r.video_id, r.frame_index).second)
        throw DataError("duplicate (patient_id, video_id, frame_index) for record '" + r.image_id + "'");
      auto [it, inserted] = video_owner.emplace(r.video_id, r.patient_id);
      if (!inserted && it->second != r.patient_id)
        throw DataError("video '" + r.video_id + "' belongs to more than one patient");
    }
  }

  std::string name_;
  std::vector<ImageRecord> records_;
};

struct SplitSpec {
  std::array<double, 3> ratios{0.70, 0.15, 0.15};
  std::uint64_t seed = 0;

  void validate() const {
    double sum = 0.0;
    for (double r : ratios) {
      if (!(r > 0.0 && r < 1.0)) throw ConfigError("split.ratios", "each ratio must lie in (0,1)");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split.ratios", "ratios must sum to 1");
  }
};

struct Split {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Patient counts per split under the floor/floor/remainder cut rule.
inline std::array<std::size_t, 3> split_counts(std::size_t n_patients, const std::array<double, 3>& ratios) {
  // 1e-9 absorbs representation error such as 0.7 * 10 = 6.9999...
  const auto n = static_cast<double>(n_patients);
  const auto train = static_cast<std::size_t>(std::floor(ratios[0] * n + 1e-9));
  const auto train_val = static_cast<std::size_t>(std::floor((ratios[0] + ratios[1]) * n + 1e-9));
  return {train, train_val - train, n_patients - train_val};
}

/// Partitions records by patient. Patient ids are sorted, shuffled with the
/// seed and cut at cumulative ratio boundaries.
inline Split split_by_patient(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  if (dataset.empty()) throw DataError("split_by_patient: dataset is empty");
  for (const auto& r : dataset)
    if (r.patient_id.empty()) throw DataError("split_by_patient: record '" + r.image_id + "' has no patient_id");
  const auto ids = dataset.patient_ids();
  if (ids.size() < 3) throw DataError("split_by_patient: need at least 3 patients, got " + std::to_string(ids.size()));

  std::vector<std::string> order(ids.begin(), ids.end());
  Rng rng(derive_seed(spec.seed, 0x5711));
  shuffle(order, rng);
  const auto counts = split_counts(order.size(), spec.ratios);

  std::map<std::string, int> assignment;
  for (std::size_t i = 0; i < order.size(); ++i)
    assignment[order[i]] = i < counts[0] ? 0 : (i < counts[0] + counts[1] ? 1 : 2);

  std::array<std::vector<ImageRecord>, 3> parts;
  for (const auto& r : dataset) parts[static_cast<std::size_t>(assignment.at(r.patient_id))].push_back(r);
  return Split{Dataset(dataset.name() + "/train", std::move(parts[0])),
               Dataset(dataset.name() + "/val", std::move(parts[1])),
               Dataset(dataset.name() + "/test", std::move(parts[2]))};
}

/// A video's share of the labelled pool for one task.
struct VideoGroup {
  std::string video_id;
  int majority_class = 0;
  std::size_t n_images = 0;
};

/// Seeded, class-stratified visiting order of labelled videos: each class
/// list is shuffled independently, then the two lists are interleaved
/// starting with the larger class.
inline std::vector<VideoGroup> video_selection_order(const Dataset& train, Task task, std::uint64_t seed) {
  std::map<std::string, std::array<std::size_t, 2>> per_video;
  for (const auto& r : train)
    if (const auto& l = r.label(task)) ++per_video[r.video_id][static_cast<std::size_t>(*l)];
  if (per_video.empty())
    throw DataError("subsample_labels: no labelled data for task " + std::string(task_name(task)));

  std::array<std::vector<VideoGroup>, 2> by_class;
  for (const auto& [video, counts] : per_video) {
    const int majority = counts[1] > counts[0] ? 1 : 0;
    by_class[static_cast<std::size_t>(majority)].push_back({video, majority, counts[0] + counts[1]});
  }
  Rng rng(derive_seed(seed, 0x5b5a, task_index(task)));
  shuffle(by_class[0], rng);
  shuffle(by_class[1], rng);

  const std::size_t first = by_class[1].size() > by_class[0].size() ? 1 : 0;
  const auto& a = by_class[first];
  const auto& b = by_class[1 - first];
  std::vector<VideoGroup> order;
  order.reserve(a.size() + b.size());
  for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
    if (i < a.size()) order.push_back(a[i]);
    if (i < b.size()) order.push_back(b[i]);
  }
  return order;
}

/// Keeps whole videos, in `video_selection_order`, until the labelled image
/// count first reaches fraction x total. When the target is at least two
/// images and both classes exist, selection also continues until both
/// classes are represented.
inline Dataset subsample_labels(const Dataset& train, double fraction, Task task, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("label_fraction", "must lie in (0,1]");
  const auto order = video_selection_order(train, task, seed);
  std::size_t total = 0;
  bool classes_present[2] = {false, false};
  for (const auto& v : order) {
    total += v.n_images;
    classes_present[v.majority_class] = true;
  }
  const double target = fraction * static_cast<double>(total);
  const bool need_both = target >= 2.0 && classes_present[0] && classes_present[1];

  std::set<std::string> chosen;
  std::size_t count = 0;
  bool seen[2] = {false, false};
  for (const auto& v : order) {
    if (static_cast<double>(count) >= target - 1e-9 && (!need_both || (seen[0] && seen[1]))) break;
    chosen.insert(v.video_id);
    count += v.n_images;
    seen[v.majority_class] = true;
  }

  std::vector<ImageRecord> out;
  for (const auto& r : train)
    if (r.label(task) && chosen.contains(r.video_id)) out.push_back(r);
  return Dataset(train.name() + "/subsample", std::move(out));
}

}  // namespace lussl
