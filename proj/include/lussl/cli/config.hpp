#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "lussl/augment/augment.hpp"
#include "lussl/core/error.hpp"
#include "lussl/data/dataset.hpp"
#include "lussl/data/synthetic.hpp"
#include "lussl/eval/projection.hpp"
#include "lussl/inference/benchmark.hpp"
#include "lussl/nnet/bundle.hpp"
#include "lussl/ssl/pretrain.hpp"
#include "lussl/supervised/protocol.hpp"
#include "lussl/supervised/sweep.hpp"

namespace lussl::cli {

using nlohmann::json;

/// One trained checkpoint evaluated into report cells labelled
/// (pretraining, protocol); every head the bundle carries yields a cell.
struct EvalRunSpec {
  std::filesystem::path checkpoint;
  std::string pretraining;
  std::string protocol;
};

struct EvalSettings {
  std::optional<std::filesystem::path> fixture;
  std::vector<EvalRunSpec> runs;
  std::string dataset = "local";
  bool export_features = false;
  std::optional<eval::ProjectionMethod> projection;
};

/// Model files for tree inference. `shared` supplies the extractor (and any
/// heads it carries); `heads` graft per-task heads trained on that same
/// extractor; `serial` holds one end-to-end network per task.
struct PipelineSources {
  std::optional<std::filesystem::path> shared;
  std::map<Task, std::filesystem::path> heads;
  std::map<Task, std::filesystem::path> serial;

  bool empty() const { return !shared && heads.empty() && serial.empty(); }
};

/// Fully parsed run configuration. `raw` keeps the merged JSON document that
/// is snapshotted into every run directory.
struct RunConfig {
  json raw = json::object();
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";
  std::optional<std::filesystem::path> manifest;
  std::optional<SyntheticConfig> synthetic;
  SplitSpec split{};
  AugmentationPolicy augmentation{};
  nn::ArchitectureConfig architecture{};
  ssl::SSLConfig ssl{};
  supervised::ProtocolConfig protocol{};
  supervised::SweepConfig sweep{};
  std::optional<std::filesystem::path> train_checkpoint;
  EvalSettings eval{};
  std::optional<std::filesystem::path> sweep_checkpoint;
  inference::BenchmarkOptions bench{};
  std::vector<inference::Mode> bench_modes{inference::Mode::serial_cnns, inference::Mode::shared_backbone};
  PipelineSources bench_models{};
  inference::Mode infer_mode = inference::Mode::shared_backbone;
  PipelineSources infer_models{};
};

namespace detail {

/// Reads `key` from `obj` into `out` if present; type errors name the field.
template <typename U>
void read(const json& obj, const std::string& prefix, const char* key, U& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<U>();
  } catch (const json::exception& e) {
    throw ConfigError(prefix + key, std::string("wrong type: ") + e.what());
  }
}

inline void reject_unknown(const json& obj, const std::string& prefix, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix.substr(0, prefix.size() - 1), "must be an object");
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError(prefix + k, "unknown key");
  }
}

inline Range read_range(const json& obj, const std::string& prefix, const char* key, Range def) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(prefix + key, "must be a [low, high] pair");
  return {v[0].get<double>(), v[1].get<double>()};
}

inline std::filesystem::path existing_path(const std::filesystem::path& base, const json& obj, const std::string& field,
                                           const char* key) {
  std::string v;
  read(obj, field.substr(0, field.size() - std::string(key).size()), key, v);
  auto p = base / v;
  if (v.empty() || !std::filesystem::exists(p)) throw ConfigError(field, "file '" + p.string() + "' not found");
  return p;
}

template <typename F>
auto renamed(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(field, e.reason());
  }
}

inline PipelineSources parse_sources(const json& j, const std::string& prefix, const std::filesystem::path& base) {
  PipelineSources out;
  if (j.contains("shared_checkpoint")) out.shared = existing_path(base, j, prefix + "shared_checkpoint", "shared_checkpoint");
  for (const char* group : {"head_checkpoints", "serial_checkpoints"}) {
    if (!j.contains(group)) continue;
    const auto& g = j.at(group);
    const std::string gp = prefix + group + ".";
    if (!g.is_object()) throw ConfigError(prefix + group, "must map task names to checkpoint paths");
    for (const auto& [k, v] : g.items()) {
      const Task t = renamed(gp + k, [&] { return parse_task(k); });
      auto path = existing_path(base, g, gp + k, k.c_str());
      (std::string(group) == "head_checkpoints" ? out.heads : out.serial)[t] = path;
    }
  }
  return out;
}

inline const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  return root.contains(key) ? root.at(key) : empty;
}

}  // namespace detail

inline AugmentationPolicy parse_augmentation(const json& j) {
  const std::string p = "augmentation.";
  detail::reject_unknown(j, p, {"crop_prob", "crop_area", "flip_prob", "noise_prob", "noise_sigma", "brightness_prob",
                                "brightness", "contrast_prob", "contrast", "contrast_first_prob"});
  AugmentationPolicy a;
  detail::read(j, p, "crop_prob", a.crop_prob);
  a.crop_area = detail::read_range(j, p, "crop_area", a.crop_area);
  detail::read(j, p, "flip_prob", a.flip_prob);
  detail::read(j, p, "noise_prob", a.noise_prob);
  a.noise_sigma = detail::read_range(j, p, "noise_sigma", a.noise_sigma);
  detail::read(j, p, "brightness_prob", a.brightness_prob);
  a.brightness = detail::read_range(j, p, "brightness", a.brightness);
  detail::read(j, p, "contrast_prob", a.contrast_prob);
  a.contrast = detail::read_range(j, p, "contrast", a.contrast);
  detail::read(j, p, "contrast_first_prob", a.contrast_first_prob);
  a.validate();
  return a;
}

inline json to_json(const AugmentationPolicy& a) {
  return {{"crop_prob", a.crop_prob},
          {"crop_area", {a.crop_area.lo, a.crop_area.hi}},
          {"flip_prob", a.flip_prob},
          {"noise_prob", a.noise_prob},
          {"noise_sigma", {a.noise_sigma.lo, a.noise_sigma.hi}},
          {"brightness_prob", a.brightness_prob},
          {"brightness", {a.brightness.lo, a.brightness.hi}},
          {"contrast_prob", a.contrast_prob},
          {"contrast", {a.contrast.lo, a.contrast.hi}},
          {"contrast_first_prob", a.contrast_first_prob}};
}

inline SyntheticConfig parse_synthetic(const json& j, std::uint64_t default_seed) {
  const std::string p = "data.synthetic.";
  detail::reject_unknown(j, p, {"n_patients", "videos_per_patient", "frames_per_video", "pleural_prior", "blines_prior",
                                "effusion_prior", "unlabelled_fraction", "noise_level", "seed"});
  SyntheticConfig s;
  s.seed = default_seed;
  detail::read(j, p, "n_patients", s.n_patients);
  detail::read(j, p, "videos_per_patient", s.videos_per_patient);
  detail::read(j, p, "frames_per_video", s.frames_per_video);
  detail::read(j, p, "pleural_prior", s.pleural_prior);
  detail::read(j, p, "blines_prior", s.blines_prior);
  detail::read(j, p, "effusion_prior", s.effusion_prior);
  detail::read(j, p, "unlabelled_fraction", s.unlabelled_fraction);
  detail::read(j, p, "noise_level", s.noise_level);
  detail::read(j, p, "seed", s.seed);
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("data." + e.field(), e.reason());
  }
  return s;
}

inline std::vector<Task> parse_tasks(const json& j, const std::string& field) {
  std::vector<Task> out;
  if (!j.is_array()) throw ConfigError(field, "must be a list of task names");
  for (const auto& t : j) {
    if (!t.is_string()) throw ConfigError(field, "must be a list of task names");
    try {
      out.push_back(parse_task(t.get<std::string>()));
    } catch (const ConfigError& e) {
      throw ConfigError(field, e.reason());
    }
  }
  return out;
}

/// Parses and validates a configuration document. Relative paths are
/// resolved against `base_dir`.
inline RunConfig parse_config(const json& root, const std::filesystem::path& base_dir = {}) {
  detail::reject_unknown(root, "", {"seed", "output_dir", "data", "split", "augmentation", "architecture", "ssl",
                                    "protocol", "train", "eval", "sweep", "bench", "infer"});
  RunConfig c;
  c.raw = root;
  detail::read(root, "", "seed", c.seed);
  std::string out_dir = "runs";
  detail::read(root, "", "output_dir", out_dir);
  c.output_dir = base_dir / out_dir;

  if (root.contains("data")) {
    const auto& d = root.at("data");
    detail::reject_unknown(d, "data.", {"manifest", "synthetic"});
    const bool has_manifest = d.contains("manifest"), has_synth = d.contains("synthetic");
    if (has_manifest == has_synth) throw ConfigError("data", "specify exactly one of 'manifest' or 'synthetic'");
    if (has_manifest) {
      std::string m;
      detail::read(d, "data.", "manifest", m);
      c.manifest = base_dir / m;
      if (!std::filesystem::exists(*c.manifest)) throw ConfigError("data.manifest", "file '" + c.manifest->string() + "' not found");
    } else {
      c.synthetic = parse_synthetic(d.at("synthetic"), c.seed);
    }
  }

  const auto& sp = detail::section(root, "split");
  detail::reject_unknown(sp, "split.", {"ratios", "seed"});
  c.split.seed = c.seed;
  if (sp.contains("ratios")) {
    std::vector<double> r;
    detail::read(sp, "split.", "ratios", r);
    if (r.size() != 3) throw ConfigError("split.ratios", "must hold three fractions");
    c.split.ratios = {r[0], r[1], r[2]};
  }
  detail::read(sp, "split.", "seed", c.split.seed);
  c.split.validate();

  try {
    c.augmentation = parse_augmentation(detail::section(root, "augmentation"));
  } catch (const ConfigError& e) {
    if (e.field().rfind("augmentation.", 0) == 0) throw;
    throw ConfigError("augmentation." + e.field(), e.reason());
  }

  const auto& a = detail::section(root, "architecture");
  detail::reject_unknown(a, "architecture.", {"widths", "kernel", "stride", "projector_hidden", "embedding_dim"});
  detail::read(a, "architecture.", "widths", c.architecture.extractor.widths);
  detail::read(a, "architecture.", "kernel", c.architecture.extractor.kernel);
  detail::read(a, "architecture.", "stride", c.architecture.extractor.stride);
  detail::read(a, "architecture.", "projector_hidden", c.architecture.projector_hidden);
  detail::read(a, "architecture.", "embedding_dim", c.architecture.embedding_dim);
  c.architecture.validate();

  const auto& s = detail::section(root, "ssl");
  detail::reject_unknown(s, "ssl.", {"method", "temperature", "bt_offdiag_weight", "vicreg_weights", "epochs",
                                     "batch_size", "lr", "seed"});
  if (s.contains("method")) {
    std::string m;
    detail::read(s, "ssl.", "method", m);
    c.ssl.method = ssl::parse_method(m);
  }
  c.ssl.seed = c.seed;
  detail::read(s, "ssl.", "temperature", c.ssl.temperature);
  detail::read(s, "ssl.", "bt_offdiag_weight", c.ssl.bt_offdiag_weight);
  if (s.contains("vicreg_weights")) {
    const auto& w = s.at("vicreg_weights");
    detail::reject_unknown(w, "ssl.vicreg_weights.", {"invariance", "variance", "covariance"});
    detail::read(w, "ssl.vicreg_weights.", "invariance", c.ssl.vicreg_weights.invariance);
    detail::read(w, "ssl.vicreg_weights.", "variance", c.ssl.vicreg_weights.variance);
    detail::read(w, "ssl.vicreg_weights.", "covariance", c.ssl.vicreg_weights.covariance);
  }
  detail::read(s, "ssl.", "epochs", c.ssl.epochs);
  detail::read(s, "ssl.", "batch_size", c.ssl.batch_size);
  detail::read(s, "ssl.", "lr", c.ssl.lr);
  detail::read(s, "ssl.", "seed", c.ssl.seed);
  c.ssl.augmentation = c.augmentation;
  c.ssl.validate();

  const auto& p = detail::section(root, "protocol");
  detail::reject_unknown(p, "protocol.", {"protocol", "task", "extractor_lr", "head_lr", "epochs", "batch_size", "seed",
                                          "label_fraction"});
  if (p.contains("protocol")) {
    std::string v;
    detail::read(p, "protocol.", "protocol", v);
    try {
      c.protocol.protocol = supervised::parse_protocol(v);
    } catch (const ConfigError& e) {
      throw ConfigError("protocol.protocol", e.reason());
    }
  }
  if (p.contains("task")) {
    std::string v;
    detail::read(p, "protocol.", "task", v);
    try {
      c.protocol.task = parse_task(v);
    } catch (const ConfigError& e) {
      throw ConfigError("protocol.task", e.reason());
    }
  }
  c.protocol.seed = c.seed;
  detail::read(p, "protocol.", "extractor_lr", c.protocol.extractor_lr);
  detail::read(p, "protocol.", "head_lr", c.protocol.head_lr);
  detail::read(p, "protocol.", "epochs", c.protocol.epochs);
  detail::read(p, "protocol.", "batch_size", c.protocol.batch_size);
  detail::read(p, "protocol.", "seed", c.protocol.seed);
  detail::read(p, "protocol.", "label_fraction", c.protocol.label_fraction);
  c.protocol.validate();

  const auto& sw = detail::section(root, "sweep");
  detail::reject_unknown(sw, "sweep.", {"fractions", "tasks", "protocols", "seeds", "pretrained_checkpoint"});
  detail::read(sw, "sweep.", "fractions", c.sweep.fractions);
  for (double f : c.sweep.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("sweep.fractions", "each fraction must lie in (0,1]");
  if (sw.contains("tasks")) c.sweep.tasks = parse_tasks(sw.at("tasks"), "sweep.tasks");
  if (sw.contains("protocols")) {
    std::vector<std::string> names;
    detail::read(sw, "sweep.", "protocols", names);
    c.sweep.protocols.clear();
    for (const auto& n : names) {
      try {
        c.sweep.protocols.push_back(supervised::parse_protocol(n));
      } catch (const ConfigError& e) {
        throw ConfigError("sweep.protocols", e.reason());
      }
    }
  }
  c.sweep.seeds = {c.seed};
  detail::read(sw, "sweep.", "seeds", c.sweep.seeds);
  c.sweep.base = c.protocol;

  const auto& b = detail::section(root, "bench");
  detail::reject_unknown(b, "bench.", {"modes", "n", "warmup", "shared_checkpoint", "head_checkpoints", "serial_checkpoints"});
  if (b.contains("modes")) {
    std::vector<std::string> names;
    detail::read(b, "bench.", "modes", names);
    c.bench_modes.clear();
    for (const auto& n : names) c.bench_modes.push_back(detail::renamed("bench.modes", [&] { return inference::parse_mode(n); }));
    if (c.bench_modes.empty()) throw ConfigError("bench.modes", "must name at least one mode");
  }
  c.bench_models = detail::parse_sources(b, "bench.", base_dir);
  detail::read(b, "bench.", "n", c.bench.n);
  detail::read(b, "bench.", "warmup", c.bench.warmup);
  if (c.bench.n < 1) throw ConfigError("bench.n", "must be at least 1");
  if (c.bench.warmup < 0) throw ConfigError("bench.warmup", "must be non-negative");

  const auto& inf = detail::section(root, "infer");
  detail::reject_unknown(inf, "infer.", {"mode", "shared_checkpoint", "head_checkpoints", "serial_checkpoints"});
  if (inf.contains("mode")) {
    std::string m;
    detail::read(inf, "infer.", "mode", m);
    c.infer_mode = detail::renamed("infer.mode", [&] { return inference::parse_mode(m); });
  }
  c.infer_models = detail::parse_sources(inf, "infer.", base_dir);

  const auto& tr = detail::section(root, "train");
  detail::reject_unknown(tr, "train.", {"checkpoint"});
  if (tr.contains("checkpoint")) c.train_checkpoint = detail::existing_path(base_dir, tr, "train.checkpoint", "checkpoint");

  if (sw.contains("pretrained_checkpoint"))
    c.sweep_checkpoint = detail::existing_path(base_dir, sw, "sweep.pretrained_checkpoint", "pretrained_checkpoint");

  const auto& ev = detail::section(root, "eval");
  detail::reject_unknown(ev, "eval.", {"fixture", "runs", "dataset", "export_features", "projection"});
  if (ev.contains("fixture")) c.eval.fixture = detail::existing_path(base_dir, ev, "eval.fixture", "fixture");
  detail::read(ev, "eval.", "dataset", c.eval.dataset);
  detail::read(ev, "eval.", "export_features", c.eval.export_features);
  if (ev.contains("projection")) {
    std::string m;
    detail::read(ev, "eval.", "projection", m);
    if (m != "none") c.eval.projection = detail::renamed("eval.projection", [&] { return eval::parse_projection(m); });
  }
  if (ev.contains("runs")) {
    const auto& runs = ev.at("runs");
    if (!runs.is_array()) throw ConfigError("eval.runs", "must be a list");
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::string rp = "eval.runs[" + std::to_string(i) + "].";
      detail::reject_unknown(runs[i], rp, {"checkpoint", "pretraining", "protocol"});
      EvalRunSpec r;
      r.checkpoint = detail::existing_path(base_dir, runs[i], rp + "checkpoint", "checkpoint");
      detail::read(runs[i], rp, "pretraining", r.pretraining);
      detail::read(runs[i], rp, "protocol", r.protocol);
      if (r.pretraining.empty()) throw ConfigError(rp + "pretraining", "required");
      if (r.protocol.empty()) throw ConfigError(rp + "protocol", "required");
      c.eval.runs.push_back(std::move(r));
    }
  }
  if (c.eval.fixture && !c.eval.runs.empty()) throw ConfigError("eval", "specify either 'fixture' or 'runs', not both");
  return c;
}

/// Makes the path-valued entries of a config document absolute against
/// `base`, so later overrides can stay relative to the working directory.
inline void rebase_paths(json& root, const std::filesystem::path& base) {
  if (base.empty() || !root.is_object()) return;
  auto fix = [&](json& node, const char* key) {
    if (!node.is_object() || !node.contains(key) || !node[key].is_string()) return;
    const std::filesystem::path p = node[key].get<std::string>();
    if (p.is_relative()) node[key] = (base / p).lexically_normal().string();
  };
  auto fix_map = [&](json& node, const char* key) {
    if (!node.is_object() || !node.contains(key) || !node[key].is_object()) return;
    for (auto& [k, v] : node[key].items()) fix(node[key], k.c_str());
  };
  fix(root, "output_dir");
  if (root.contains("data")) fix(root["data"], "manifest");
  if (root.contains("train")) fix(root["train"], "checkpoint");
  if (root.contains("sweep")) fix(root["sweep"], "pretrained_checkpoint");
  if (root.contains("eval")) {
    auto& ev = root["eval"];
    fix(ev, "fixture");
    if (ev.is_object() && ev.contains("runs") && ev["runs"].is_array())
      for (auto& r : ev["runs"]) fix(r, "checkpoint");
  }
  for (const char* block : {"bench", "infer"})
    if (root.contains(block)) {
      fix(root[block], "shared_checkpoint");
      fix_map(root[block], "head_checkpoints");
      fix_map(root[block], "serial_checkpoints");
    }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path.string() + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  rebase_paths(root, path.parent_path());
  return parse_config(root);
}

/// Applies `a.b.c=value` to a JSON document; `value` is parsed as JSON when
/// possible and taken as a string otherwise. A null value removes the key.
inline void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set", "expected key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("--set", "empty key in '" + path + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      if (value.is_null())
        node->erase(key);
      else
        (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace lussl::cli
