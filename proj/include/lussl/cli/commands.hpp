#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "lussl/cli/config.hpp"
#include "lussl/data/manifest.hpp"
#include "lussl/eval/features.hpp"
#include "lussl/eval/metrics.hpp"
#include "lussl/eval/projection.hpp"
#include "lussl/eval/report.hpp"
#include "lussl/inference/benchmark.hpp"
#include "lussl/inference/tree.hpp"
#include "lussl/nnet/checkpoint.hpp"
#include "lussl/ssl/pretrain.hpp"
#include "lussl/supervised/protocol.hpp"
#include "lussl/supervised/sweep.hpp"

namespace lussl::cli {

namespace fs = std::filesystem;

/// Directory that receives everything one command invocation produces:
/// config.json, seeds.json, checkpoints/, logs/, reports/.
struct RunDir {
  fs::path root;

  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path logs() const { return root / "logs"; }
  fs::path reports() const { return root / "reports"; }
};

/// Streams for human-readable output; results also land in the run directory.
struct Console {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

inline std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// The merged configuration with every path made absolute and every seed
/// spelled out, so it re-executes from any working directory.
inline json snapshot(const RunConfig& c) {
  json s = c.raw;
  auto abs = [](const fs::path& p) { return fs::absolute(p).lexically_normal().string(); };
  s["seed"] = c.seed;
  s["output_dir"] = abs(c.output_dir);
  if (c.manifest) s["data"]["manifest"] = abs(*c.manifest);
  if (c.synthetic) s["data"]["synthetic"]["seed"] = c.synthetic->seed;
  s["split"]["seed"] = c.split.seed;
  s["ssl"]["seed"] = c.ssl.seed;
  s["protocol"]["seed"] = c.protocol.seed;
  s["sweep"]["seeds"] = c.sweep.seeds;
  if (c.train_checkpoint) s["train"]["checkpoint"] = abs(*c.train_checkpoint);
  if (c.sweep_checkpoint) s["sweep"]["pretrained_checkpoint"] = abs(*c.sweep_checkpoint);
  if (c.eval.fixture) s["eval"]["fixture"] = abs(*c.eval.fixture);
  for (std::size_t i = 0; i < c.eval.runs.size(); ++i) s["eval"]["runs"][i]["checkpoint"] = abs(c.eval.runs[i].checkpoint);
  auto sources = [&](const char* block, const PipelineSources& p) {
    if (p.shared) s[block]["shared_checkpoint"] = abs(*p.shared);
    for (const auto& [t, path] : p.heads) s[block]["head_checkpoints"][std::string(task_name(t))] = abs(path);
    for (const auto& [t, path] : p.serial) s[block]["serial_checkpoints"][std::string(task_name(t))] = abs(path);
  };
  sources("bench", c.bench_models);
  sources("infer", c.infer_models);
  return s;
}

inline json seeds_record(const RunConfig& c) {
  json j = {{"seed", c.seed},
            {"split", c.split.seed},
            {"ssl", c.ssl.seed},
            {"protocol", c.protocol.seed},
            {"sweep", c.sweep.seeds}};
  if (c.synthetic) j["synthetic"] = c.synthetic->seed;
  return j;
}

/// Creates the run directory (timestamped under output_dir unless given)
/// and writes the config snapshot and seeds.
inline RunDir open_run_dir(const RunConfig& c, const std::string& command, const std::optional<fs::path>& explicit_dir) {
  RunDir d;
  if (explicit_dir) {
    d.root = *explicit_dir;
  } else {
    const std::string base = command + "-" + timestamp();
    d.root = c.output_dir / base;
    for (int k = 1; fs::exists(d.root); ++k) d.root = c.output_dir / (base + "-" + std::to_string(k));
  }
  fs::create_directories(d.checkpoints());
  fs::create_directories(d.logs());
  fs::create_directories(d.reports());
  write_json(d.root / "config.json", snapshot(c));
  json seeds = seeds_record(c);
  seeds["command"] = command;
  write_json(d.root / "seeds.json", seeds);
  return d;
}

inline Dataset load_data(const RunConfig& c) {
  if (c.manifest) return load_manifest(*c.manifest);
  if (c.synthetic) return generate_synthetic(*c.synthetic);
  throw ConfigError("data", "a data source ('manifest' or 'synthetic') is required for this command");
}

/// Patient split of the labelled patients; patients without any label are
/// kept aside for pretraining only.
struct PreparedData {
  Split split;
  Dataset unlabelled;
};

inline PreparedData prepare(const RunConfig& c, const RunDir& dir) {
  const Dataset all = load_data(c);
  PreparedData p;
  p.unlabelled = all.unlabelled_patients();
  p.split = split_by_patient(all.labelled_patients(), c.split);
  json ids;
  for (const auto& [name, part] : {std::pair<const char*, const Dataset*>{"train", &p.split.train},
                                   {"val", &p.split.val},
                                   {"test", &p.split.test},
                                   {"unlabelled", &p.unlabelled}}) {
    const auto pids = part->patient_ids();
    ids[name] = std::vector<std::string>(pids.begin(), pids.end());
  }
  write_json(dir.logs() / "split.json", ids);
  return p;
}

inline std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline int cmd_synth(const RunConfig& c, const RunDir& dir, Console con) {
  if (!c.synthetic) throw ConfigError("data.synthetic", "synth requires a synthetic data configuration");
  const Dataset data = generate_synthetic(*c.synthetic);
  const auto manifest = export_dataset(data, dir.root / "dataset");
  con.out << "wrote " << data.size() << " images to " << manifest.string() << "\n";
  return 0;
}

inline int cmd_pretrain(const RunConfig& c, const RunDir& dir, Console con) {
  const auto prepared = prepare(c, dir);
  const Dataset pool = Dataset::concat("pretrain", prepared.split.train, prepared.unlabelled);
  nn::ArchitectureConfig arch = c.architecture;
  arch.with_projector = true;
  arch.heads.clear();
  auto bundle = nn::init_bundle<float>(arch, c.ssl.seed);
  std::ofstream log(dir.logs() / "pretrain_loss.csv", std::ios::trunc);
  log << "epoch,mean_loss,lr,seconds\n";
  con.err << "pretraining " << ssl::method_name(c.ssl.method) << " on " << pool.size() << " images\n";
  const auto history = ssl::pretrain(pool, bundle, c.ssl, [&](const ssl::EpochRecord& r, const nn::ModelBundle<float>& b) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.ckpt", r.epoch);
    nn::save_checkpoint(b, dir.checkpoints() / name);
    log << r.epoch << "," << fmt(r.mean_loss, "%.9g") << "," << fmt(r.lr, "%.9g") << "," << fmt(r.seconds, "%.3f") << "\n";
    log.flush();
    con.err << "epoch " << r.epoch << " loss " << fmt(r.mean_loss) << " (" << fmt(r.seconds, "%.1f") << " s)\n";
  });
  nn::save_checkpoint(bundle, dir.checkpoints() / "final.ckpt");
  const double final_loss = history.epochs.empty() ? 0.0 : history.epochs.back().mean_loss;
  write_json(dir.reports() / "pretrain.json",
             {{"method", ssl::method_name(c.ssl.method)},
              {"epochs", history.epochs.size()},
              {"final_loss", final_loss},
              {"n_images", pool.size()}});
  con.out << "final_loss " << fmt(final_loss, "%.9g") << "\n" << "checkpoint " << (dir.checkpoints() / "final.ckpt").string() << "\n";
  return 0;
}

/// Checkpoint named by the config, or freshly initialised weights. An
/// explicit architecture block must agree with the checkpoint's extractor.
inline nn::ModelBundle<float> initial_bundle(const RunConfig& c, const std::optional<fs::path>& checkpoint,
                                             std::uint64_t seed) {
  if (!checkpoint) {
    nn::ArchitectureConfig arch = c.architecture;
    arch.with_projector = false;
    arch.heads.clear();
    return nn::init_bundle<float>(arch, seed);
  }
  auto b = nn::load_checkpoint(*checkpoint);
  if (c.raw.contains("architecture") && !(b.architecture().extractor == c.architecture.extractor))
    throw ShapeError("checkpoint '" + checkpoint->string() + "' extractor " + nn::to_json(b.architecture()).dump() +
                     " does not match the configured architecture");
  return b;
}

inline json to_json(const eval::CellMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"auc", m.auc}, {"precision", opt(m.precision)}, {"recall", opt(m.recall)}, {"specificity", opt(m.specificity)}, {"n", m.n}};
}

inline int cmd_train(const RunConfig& c, const RunDir& dir, Console con) {
  const auto prepared = prepare(c, dir);
  const auto initial = initial_bundle(c, c.train_checkpoint, c.protocol.seed);
  std::ofstream log(dir.logs() / "train_history.csv", std::ios::trunc);
  log << "epoch,train_loss,val_loss,extractor_lr,head_lr,seconds\n";
  const auto run = supervised::train_protocol(initial, prepared.split.train, prepared.split.val, c.protocol,
                                              [&](const supervised::TrainEpoch& e) {
                                                log << e.epoch << "," << fmt(e.train_loss, "%.9g") << ","
                                                    << fmt(e.val_loss, "%.9g") << "," << fmt(e.extractor_lr, "%.9g")
                                                    << "," << fmt(e.head_lr, "%.9g") << "," << fmt(e.seconds, "%.3f")
                                                    << "\n";
                                                log.flush();
                                                con.err << "epoch " << e.epoch << " train " << fmt(e.train_loss)
                                                        << " val " << fmt(e.val_loss) << "\n";
                                              });
  nn::save_checkpoint(run.bundle, dir.checkpoints() / "best.ckpt");
  std::optional<eval::CellMetrics> test;
  std::string test_error;
  try {
    test = eval::evaluate_cell(run.bundle, c.protocol.task, prepared.split.test);
  } catch (const DataError& e) {
    test_error = e.what();
    con.err << "warning: test metrics unavailable: " << test_error << "\n";
  }
  json report = {{"task", task_name(c.protocol.task)},
                 {"protocol", supervised::protocol_name(c.protocol.protocol)},
                 {"pretraining", initial.metadata.method},
                 {"label_fraction", c.protocol.label_fraction},
                 {"selected_epoch", run.selected_epoch},
                 {"n_train", run.n_train},
                 {"n_val", run.n_val},
                 {"test", test ? to_json(*test) : json(nullptr)},
                 {"provenance", run.provenance}};
  if (!test) report["test_error"] = test_error;
  write_json(dir.reports() / "train.json", report);
  con.out << "selected_epoch " << run.selected_epoch << "\n"
          << "test_auc " << (test ? fmt(test->auc) : std::string("n/a")) << "\n"
          << "checkpoint " << (dir.checkpoints() / "best.ckpt").string() << "\n";
  return 0;
}

inline void write_report(const eval::EvalReport& report, const RunDir& dir, Console con) {
  write_json(dir.reports() / "report.json", eval::to_json(report));
  const auto table = eval::render_table(report);
  write_text(dir.reports() / "report.txt", table);
  con.out << table;
}

inline int cmd_eval(const RunConfig& c, const RunDir& dir, Console con) {
  if (c.eval.fixture) {
    std::ifstream in(*c.eval.fixture);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw DataError("fixture '" + c.eval.fixture->string() + "' is not valid JSON: " + e.what());
    }
    const auto report = eval::build_report(eval::cells_from_json(j), eval::layout_from_json(j));
    write_report(report, dir, con);
    if (j.contains("reference_means")) {
      json check = json::array();
      double worst = 0.0;
      for (const auto& m : j.at("reference_means")) {
        const eval::MeanKey key{m.at("pretraining").get<std::string>(), m.at("protocol").get<std::string>(),
                                m.value("dataset", std::string("local"))};
        const auto it = report.means.find(key);
        if (it == report.means.end())
          throw DataError("reference mean " + key.pretraining + "/" + key.protocol + "/" + key.dataset + " has no computed counterpart");
        const double reference = m.at("mean").get<double>();
        worst = std::max(worst, std::abs(it->second - reference));
        check.push_back({{"pretraining", key.pretraining},
                         {"protocol", key.protocol},
                         {"dataset", key.dataset},
                         {"reference", reference},
                         {"computed", it->second},
                         {"abs_diff", std::abs(it->second - reference)}});
      }
      write_json(dir.reports() / "mean_check.json", {{"entries", check}, {"max_abs_diff", worst}});
      con.out << "reference means checked: " << check.size() << ", max |diff| " << fmt(worst, "%.6f") << "\n";
    }
    return 0;
  }
  if (c.eval.runs.empty()) throw ConfigError("eval", "requires either 'fixture' or 'runs'");

  const Dataset test = [&] {
    if (c.eval.dataset != "local") return load_data(c);
    return prepare(c, dir).split.test;
  }();
  std::map<eval::CellKey, eval::CellMetrics> cells;
  eval::ReportLayout layout;
  layout.tasks.clear();
  layout.protocols.clear();
  layout.datasets = {c.eval.dataset};
  auto add = [](auto& v, const auto& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (std::size_t i = 0; i < c.eval.runs.size(); ++i) {
    const auto& spec = c.eval.runs[i];
    const auto bundle = nn::load_checkpoint(spec.checkpoint);
    if (bundle.heads.empty()) throw ShapeError("checkpoint '" + spec.checkpoint.string() + "' has no classification head");
    add(layout.pretrainings, spec.pretraining);
    add(layout.protocols, spec.protocol);
    for (const auto& [task, head] : bundle.heads) {
      add(layout.tasks, task);
      const eval::CellKey key{task, spec.pretraining, spec.protocol, c.eval.dataset};
      if (!cells.emplace(key, eval::evaluate_cell(bundle, task, test)).second)
        throw ConfigError("eval.runs", "cell " + eval::describe(key) + " is produced by more than one run");
    }
    if (c.eval.export_features || c.eval.projection) {
      const auto stem = "run" + std::to_string(i);
      if (c.eval.export_features) eval::export_features(bundle.extractor, test, dir.reports() / (stem + "_features.csv"));
      if (c.eval.projection) {
        const nn::Matrix<double> f = supervised::extract_features(bundle.extractor, test).cast<double>();
        const auto xy = eval::project_2d(f, *c.eval.projection, eval::TsneOptions{.seed = c.seed});
        std::string csv = "image_id,x,y\n";
        for (std::size_t r = 0; r < test.size(); ++r)
          csv += test[r].image_id + "," + fmt(xy(r, 0), "%.9g") + "," + fmt(xy(r, 1), "%.9g") + "\n";
        write_text(dir.reports() / (stem + "_projection.csv"), csv);
      }
    }
  }
  std::sort(layout.tasks.begin(), layout.tasks.end());
  auto report = eval::build_report(cells, layout);
  report.provenance["dataset"] = c.eval.dataset;
  report.provenance["n_test_images"] = std::to_string(test.size());
  write_report(report, dir, con);
  return 0;
}

inline int cmd_sweep(const RunConfig& c, const RunDir& dir, Console con) {
  if (!c.sweep_checkpoint) throw ConfigError("sweep.pretrained_checkpoint", "required");
  const auto prepared = prepare(c, dir);
  std::map<std::string, nn::ModelBundle<float>> sources;
  auto pretrained = nn::load_checkpoint(*c.sweep_checkpoint);
  nn::ArchitectureConfig scratch_arch = pretrained.architecture();
  scratch_arch.heads.clear();
  sources.emplace("scratch", nn::init_bundle<float>(scratch_arch, derive_seed(c.seed, 0x5c7a)));
  sources.emplace("pretrained", std::move(pretrained));
  std::ofstream log(dir.logs() / "sweep_cells.csv", std::ios::trunc);
  log << "source,protocol,task,fraction,seed,selected_epoch,n_train,test_auc\n";
  const auto grid = supervised::run_label_efficiency_sweep(
      sources, prepared.split.train, prepared.split.val, prepared.split.test, c.sweep, [&](const supervised::SweepCell& cell) {
        log << cell.source << "," << supervised::protocol_name(cell.protocol) << "," << task_name(cell.task) << ","
            << cell.fraction << "," << cell.seed << "," << cell.run.selected_epoch << "," << cell.run.n_train << ","
            << fmt(cell.test.auc, "%.9g") << "\n";
        log.flush();
        con.err << cell.source << " " << supervised::protocol_name(cell.protocol) << " " << task_name(cell.task)
                << " fraction " << cell.fraction << " seed " << cell.seed << " auc " << fmt(cell.test.auc) << "\n";
      });
  json means = json::array();
  std::string table = "protocol task fraction scratch pretrained delta\n";
  for (auto p : c.sweep.protocols)
    for (Task t : c.sweep.tasks)
      for (double f : c.sweep.fractions) {
        const double s = grid.mean_auc("scratch", p, t, f), q = grid.mean_auc("pretrained", p, t, f);
        means.push_back({{"protocol", supervised::protocol_name(p)},
                         {"task", task_name(t)},
                         {"fraction", f},
                         {"scratch_auc", s},
                         {"pretrained_auc", q},
                         {"delta", q - s}});
        table += std::string(supervised::protocol_name(p)) + " " + std::string(task_name(t)) + " " + fmt(f, "%g") + " " +
                 fmt(s, "%.3f") + " " + fmt(q, "%.3f") + " " + fmt(q - s, "%+.3f") + "\n";
      }
  write_json(dir.reports() / "sweep.json", {{"seeds", c.sweep.seeds}, {"means", means}});
  write_text(dir.reports() / "sweep.txt", table);
  con.out << table;
  return 0;
}

/// Assembles an inference pipeline from checkpoints. Without any model
/// files, randomly initialised networks of the configured architecture are
/// used, which is sufficient for latency and FLOP measurement.
inline inference::InferencePipeline build_pipeline(const RunConfig& c, const PipelineSources& src) {
  if (src.empty()) return inference::make_pipeline(c.architecture.extractor, c.seed);
  inference::InferencePipeline p;
  if (src.shared) {
    auto shared = nn::load_checkpoint(*src.shared);
    for (const auto& [task, path] : src.heads) {
      const auto donor = nn::load_checkpoint(path);
      const auto a = donor.extractor.params();
      const auto b = shared.extractor.params();
      bool same = a.size() == b.size();
      for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i]->value == b[i]->value;
      if (!same)
        throw CheckpointError("head checkpoint '" + path.string() + "' was trained on a different extractor than '" +
                              src.shared->string() + "'");
      shared.heads.insert_or_assign(task, donor.head(task));
    }
    p.shared = std::move(shared);
  } else if (!src.heads.empty()) {
    throw ConfigError("head_checkpoints", "requires shared_checkpoint");
  }
  for (const auto& [task, path] : src.serial) p.serial.emplace(task, nn::load_checkpoint(path));
  return p;
}

/// Every requested mode needs its models when checkpoints are supplied.
inline void require_models(const PipelineSources& src, const std::vector<inference::Mode>& modes, const std::string& block) {
  if (src.empty()) return;
  for (auto mode : modes) {
    if (mode == inference::Mode::shared_backbone && !src.shared)
      throw ConfigError(block + ".shared_checkpoint", "required for mode shared_backbone");
    if (mode == inference::Mode::serial_cnns)
      for (Task t : kAllTasks)
        if (!src.serial.count(t))
          throw ConfigError(block + ".serial_checkpoints." + std::string(task_name(t)), "required for mode serial_cnns");
  }
}

inline json to_json(const inference::BenchmarkResult& r) {
  return {{"mode", inference::mode_name(r.mode)},
          {"n", r.n},
          {"mean_s", r.mean_seconds},
          {"sd_s", r.sd_seconds},
          {"flops_per_prediction", r.flops.total},
          {"flops_breakdown", r.flops.breakdown}};
}

inline int cmd_bench(const RunConfig& c, const RunDir& dir, Console con) {
  require_models(c.bench_models, c.bench_modes, "bench");
  const auto pipeline = build_pipeline(c, c.bench_models);
  std::vector<Image> images;
  if (c.manifest || c.synthetic) {
    for (const auto& r : load_data(c)) images.push_back(*r.pixels);
  } else {
    SyntheticConfig sc;
    sc.n_patients = 4;
    sc.seed = c.seed;
    for (const auto& r : generate_synthetic(sc)) images.push_back(*r.pixels);
  }
  json records = json::array();
  for (auto mode : c.bench_modes) {
    const auto r = inference::benchmark(pipeline, mode, images, c.bench);
    records.push_back(to_json(r));
    con.out << inference::mode_name(mode) << " n=" << r.n << " mean_s=" << fmt(r.mean_seconds, "%.6f")
            << " sd_s=" << fmt(r.sd_seconds, "%.6f") << " flops=" << r.flops.total << "\n";
  }
  write_json(dir.reports() / "bench.json", records);
  return 0;
}

inline int cmd_infer(const RunConfig& c, const RunDir& dir, Console con) {
  if (c.infer_models.empty()) throw ConfigError("infer", "requires model checkpoints");
  require_models(c.infer_models, {c.infer_mode}, "infer");
  const auto pipeline = build_pipeline(c, c.infer_models);
  const Dataset data = load_data(c);
  const auto batch = inference::infer_batch(data, pipeline, c.infer_mode);
  std::string csv = "image_id,view_probability,routed_task,leaf_probability\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& o = batch.outcomes[i];
    csv += data[i].image_id + "," + fmt(o.view_probability, "%.9g") + "," + std::string(task_name(o.routed_task)) + "," +
           fmt(o.leaf_probability, "%.9g") + "\n";
  }
  write_text(dir.reports() / "outcomes.csv", csv);
  json summary = {{"mode", inference::mode_name(c.infer_mode)}, {"n", data.size()}, {"misrouted", batch.misrouted}};
  for (Task t : kAllTasks) {
    const auto& s = batch.per_task[task_index(t)];
    json cell = {{"n", s.labels.size()}};
    const auto pos = std::count(s.labels.begin(), s.labels.end(), 1);
    if (pos > 0 && pos < static_cast<long>(s.labels.size())) cell["auc"] = eval::auc(s.scores, s.labels);
    summary["tasks"][std::string(task_name(t))] = cell;
  }
  write_json(dir.reports() / "infer.json", summary);
  con.out << summary.dump(2) << "\n";
  return 0;
}

}  // namespace lussl::cli
