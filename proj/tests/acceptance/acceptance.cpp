// Acceptance checks; one PASS/FAIL line per criterion.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "gradient_suite.hpp"
#include "lussl/data/synthetic.hpp"
#include "lussl/eval/metrics.hpp"
#include "lussl/eval/report.hpp"
#include "lussl/inference/benchmark.hpp"
#include "lussl/nnet/checkpoint.hpp"
#include "lussl/ssl/pretrain.hpp"
#include "lussl/supervised/protocol.hpp"
#include "oracles.hpp"

using namespace lussl;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;
};

oracle::Rows rows(const nn::Matrix<double>& m) {
  oracle::Rows out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  return out;
}

Verdict loss_oracles() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 7));
    const int e = 1 + static_cast<int>(uniform_index(rng, 16));
    nn::Matrix<double> za(n, e), zb(n, e);
    for (Eigen::Index i = 0; i < za.size(); ++i) {
      za.data()[i] = normal(rng);
      zb.data()[i] = normal(rng);
    }
    const double tau = uniform(rng, 0.05, 1.0), w = uniform(rng, 0.0, 0.5);
    worst = std::max(worst, std::abs(ssl::nt_xent(za, zb, tau).value - oracle::nt_xent(rows(za), rows(zb), tau)));
    worst = std::max(worst, std::abs(ssl::barlow_twins(za, zb, w).value - oracle::barlow_twins(rows(za), rows(zb), w)));
    worst = std::max(worst, std::abs(ssl::vicreg(za, zb, ssl::VicregWeights{}).value -
                                     oracle::vicreg(rows(za), rows(zb), 25, 25, 1)));
  }
  const double secs = since(t0);
  char buf[128];
  std::snprintf(buf, sizeof buf, "max |diff| %.3g over 300 evaluations, %.2f s", worst, secs);
  return {worst <= 1e-6 && secs < 10.0, buf};
}

Verdict gradients() {
  const auto t0 = Clock::now();
  const auto results = gradsuite::run_all(20, 2024);
  const double secs = since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : results)
    if (r.worst >= worst) {
      worst = r.worst;
      worst_name = r.component;
    }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu components, worst rel err %.3g (%s), %.2f s", results.size(), worst,
                worst_name.c_str(), secs);
  return {worst < 1e-3 && secs < 60.0, buf};
}

Verdict auc_oracle() {
  Rng rng(303);
  double worst = 0.0, worst_monotone = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 99));
    std::vector<double> s, t;
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      s.push_back(std::round(uniform01(rng) * 20) / 20);
      t.push_back(std::tanh(2 * s.back()) * 5 + 3);
      y.push_back(i < 2 ? i : (bernoulli(rng, 0.5) ? 1 : 0));
    }
    const double a = eval::auc(s, y);
    worst = std::max(worst, std::abs(a - oracle::auc(s, y)));
    worst_monotone = std::max(worst_monotone, std::abs(eval::auc(t, y) - a));
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "200 instances, max |diff| %.3g, monotone-transform drift %.3g", worst, worst_monotone);
  return {worst <= 1e-12 && worst_monotone <= 1e-12, buf};
}

Verdict reference_means() {
  std::ifstream in(std::string(LUSSL_FIXTURE_DIR) + "/reference_auc.json");
  const auto j = nlohmann::json::parse(in);
  const auto report = eval::build_report(eval::cells_from_json(j), eval::layout_from_json(j));
  double worst = 0.0;
  std::size_t n = 0;
  for (const auto& m : j.at("reference_means")) {
    const eval::MeanKey k{m.at("pretraining"), m.at("protocol"), m.at("dataset")};
    worst = std::max(worst, std::abs(report.means.at(k) - m.at("mean").get<double>()));
    ++n;
  }
  const double example = eval::geometric_mean({0.982, 0.976, 0.925});
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu mean entries, max |diff| %.5f; (0.982, 0.976, 0.925) -> %.3f", n, worst, example);
  return {n > 0 && worst <= 1e-3 && std::abs(example - 0.961) <= 1e-3, buf};
}

struct DeskResults {
  double lc_scratch[3]{}, lc_pretrained[3]{}, ft_scratch[3]{}, ft_pretrained[3]{};
  double seconds = 0.0;
  std::size_t images = 0;
};

double test_auc(const nn::ModelBundle<float>& b, const Split& split, const supervised::ProtocolConfig& pc) {
  const auto run = supervised::train_protocol(b, split.train, split.val, pc);
  const auto test = split.test.labelled(pc.task);
  return eval::auc(supervised::predict_probabilities(run.bundle, pc.task, test), supervised::task_labels(test, pc.task));
}

DeskResults desk_scale() {
  const auto t0 = Clock::now();
  DeskResults r;
  SyntheticConfig sc;
  sc.n_patients = 250;
  sc.videos_per_patient = 2;
  sc.frames_per_video = 4;
  sc.noise_level = 0.3;
  sc.seed = 1;
  const auto data = generate_synthetic(sc);
  r.images = data.size();
  const auto split = split_by_patient(data, SplitSpec{});
  nn::ArchitectureConfig arch;
  arch.extractor.widths = {8, 16, 32, 64};
  const int seeds = 3;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = 100 + static_cast<std::uint64_t>(s);
    const auto scratch = nn::init_bundle<float>(arch, seed);
    auto pretrained = scratch;
    ssl::SSLConfig cfg;
    cfg.method = ssl::Method::simclr;
    cfg.epochs = 15;
    cfg.seed = seed;
    ssl::pretrain(split.train, pretrained, cfg);
    for (Task t : kAllTasks) {
      const auto k = task_index(t);
      supervised::ProtocolConfig pc;
      pc.task = t;
      pc.head_lr = 1e-2;
      pc.extractor_lr = 1e-3;
      pc.seed = seed;
      pc.protocol = supervised::Protocol::LC;
      r.lc_scratch[k] += test_auc(scratch, split, pc) / seeds;
      r.lc_pretrained[k] += test_auc(pretrained, split, pc) / seeds;
      pc.protocol = supervised::Protocol::FT;
      pc.label_fraction = 0.01;
      r.ft_scratch[k] += test_auc(scratch, split, pc) / seeds;
      r.ft_pretrained[k] += test_auc(pretrained, split, pc) / seeds;
    }
  }
  r.seconds = since(t0);
  return r;
}

Verdict pretraining_benefit(const DeskResults& r) {
  bool ok = r.images >= 2000 && r.seconds < 15 * 60;
  std::string detail = std::to_string(r.images) + " images;";
  for (Task t : kAllTasks) {
    const auto k = task_index(t);
    ok = ok && r.lc_pretrained[k] >= r.lc_scratch[k] + 0.05;
    char buf[96];
    std::snprintf(buf, sizeof buf, " %s %.3f->%.3f", std::string(task_name(t)).c_str(), r.lc_scratch[k], r.lc_pretrained[k]);
    detail += buf;
  }
  char buf[48];
  std::snprintf(buf, sizeof buf, "; %.0f s", r.seconds);
  return {ok, detail + buf};
}

Verdict label_efficiency(const DeskResults& r) {
  bool ok = true;
  std::string detail = "fraction 0.01 FT scratch->pretrained:";
  for (Task t : kAllTasks) {
    const auto k = task_index(t);
    ok = ok && r.ft_pretrained[k] >= r.ft_scratch[k];
    char buf[96];
    std::snprintf(buf, sizeof buf, " %s %.3f->%.3f", std::string(task_name(t)).c_str(), r.ft_scratch[k], r.ft_pretrained[k]);
    detail += buf;
  }
  return {ok, detail};
}

Verdict inference_benchmark() {
  const auto pipeline = inference::make_pipeline(nn::ExtractorConfig{}, 7);
  SyntheticConfig sc;
  sc.n_patients = 4;
  sc.seed = 9;
  std::vector<Image> images;
  for (const auto& rec : generate_synthetic(sc)) images.push_back(*rec.pixels);
  const inference::BenchmarkOptions opt{1000, 20};
  const auto serial = inference::benchmark(pipeline, inference::Mode::serial_cnns, images, opt);
  const auto shared = inference::benchmark(pipeline, inference::Mode::shared_backbone, images, opt);
  const double latency = shared.mean_seconds / serial.mean_seconds;
  const double flops = static_cast<double>(shared.flops.total) / static_cast<double>(serial.flops.total);
  const auto& m = *pipeline.shared;
  const double head_ratio = static_cast<double>(m.head(Task::ab).flops("h").total) /
                            static_cast<double>(m.extractor.flops().total);
  char buf[200];
  std::snprintf(buf, sizeof buf, "latency %.4fs vs %.4fs (%.3f), flops %llu vs %llu (%.3f), head/backbone %.5f",
                shared.mean_seconds, serial.mean_seconds, latency, static_cast<unsigned long long>(shared.flops.total),
                static_cast<unsigned long long>(serial.flops.total), flops, head_ratio);
  return {latency <= 0.6 && flops < 0.55 && head_ratio <= 0.01, buf};
}

bool same_extractor(const nn::ModelBundle<float>& a, const nn::ModelBundle<float>& b) {
  const auto pa = a.extractor.params(), pb = b.extractor.params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->value != pb[i]->value) return false;
  return true;
}

struct PipelineOutput {
  std::vector<double> losses;
  std::vector<double> probabilities;
  double auc = 0.0;
};

PipelineOutput full_pipeline(const Dataset& data, std::uint64_t seed) {
  nn::ArchitectureConfig arch;
  arch.extractor.widths = {4, 8};
  arch.projector_hidden = 16;
  arch.embedding_dim = 8;
  const auto split = split_by_patient(data, SplitSpec{{0.5, 0.25, 0.25}, seed});
  auto bundle = nn::init_bundle<float>(arch, seed);
  ssl::SSLConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = seed;
  PipelineOutput out;
  for (const auto& e : ssl::pretrain(split.train, bundle, cfg).epochs) out.losses.push_back(e.mean_loss);
  supervised::ProtocolConfig pc;
  pc.protocol = supervised::Protocol::FT;
  pc.epochs = 2;
  pc.seed = seed;
  pc.head_lr = 1e-2;
  pc.extractor_lr = 1e-3;
  const auto run = supervised::train_protocol(bundle, split.train, split.val, pc);
  for (const auto& e : run.history) out.losses.push_back(e.val_loss);
  const auto test = split.test.labelled(Task::view);
  out.probabilities = supervised::predict_probabilities(run.bundle, Task::view, test);
  out.auc = eval::auc(out.probabilities, supervised::task_labels(test, Task::view));
  return out;
}

Verdict structural_invariants() {
  std::vector<std::string> failures;
  auto check = [&](bool ok, const char* what) {
    if (!ok) failures.push_back(what);
  };

  SyntheticConfig sc;
  sc.n_patients = 20;
  sc.videos_per_patient = 2;
  sc.frames_per_video = 2;
  sc.seed = 5;
  const auto data = generate_synthetic(sc);

  bool disjoint = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = split_by_patient(data, SplitSpec{{0.6, 0.2, 0.2}, seed});
    const auto a = s.train.patient_ids(), b = s.val.patient_ids(), c = s.test.patient_ids();
    for (const auto& id : a) disjoint = disjoint && !b.count(id) && !c.count(id);
    for (const auto& id : b) disjoint = disjoint && !c.count(id);
    disjoint = disjoint && s.train.size() + s.val.size() + s.test.size() == data.size();
  }
  check(disjoint, "patient split");

  nn::ArchitectureConfig arch;
  arch.extractor.widths = {4, 8};
  arch.with_projector = false;
  const auto initial = nn::init_bundle<float>(arch, 3);
  const auto split = split_by_patient(data, SplitSpec{{0.5, 0.25, 0.25}, 1});
  for (auto p : {supervised::Protocol::LC, supervised::Protocol::NC}) {
    supervised::ProtocolConfig pc;
    pc.protocol = p;
    pc.epochs = 2;
    pc.head_lr = 1e-2;
    const auto run = supervised::train_protocol(initial, split.train, split.val, pc);
    check(same_extractor(initial, run.bundle), "extractor freezing");
  }

  const auto pipeline = inference::make_pipeline(arch.extractor, 4);
  bool once = true;
  for (std::size_t i = 0; i < 10; ++i) {
    inference::InferenceProbe probe;
    inference::infer_tree(*data[i].pixels, pipeline, inference::Mode::shared_backbone, &probe);
    once = once && probe.extractor_calls == 1 && probe.head_calls[0] == 1 && probe.head_calls[1] + probe.head_calls[2] == 1;
  }
  check(once, "shared backbone call count");

  auto with_heads = arch;
  with_heads.with_projector = true;
  with_heads.heads = {{Task::view, nn::HeadKind::linear}, {Task::ab, nn::HeadKind::mlp32}};
  const auto bundle = nn::init_bundle<float>(with_heads, 8);
  const auto bytes = nn::serialize_bundle(bundle);
  const auto back = nn::deserialize_bundle(bytes);
  bool exact = nn::serialize_bundle(back) == bytes;
  const auto pa = bundle.params();
  const auto pb = back.params();
  exact = exact && pa.size() == pb.size();
  for (std::size_t i = 0; exact && i < pa.size(); ++i) exact = pa[i]->value == pb[i]->value;
  check(exact, "checkpoint round trip");

  const auto r1 = full_pipeline(data, 11), r2 = full_pipeline(data, 11);
  check(r1.losses == r2.losses && r1.probabilities == r2.probabilities && r1.auc == r2.auc, "seed determinism");

  std::string detail = "split, freezing, call count, checkpoint, determinism";
  if (!failures.empty()) {
    detail = "failed:";
    for (const auto& f : failures) detail += " " + f + ";";
  }
  return {failures.empty(), detail};
}

}  // namespace

int main() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& fn) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("[%s] criterion %d: %s -- %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "loss oracle equivalence", loss_oracles);
  report(2, "gradient checks", gradients);
  report(3, "AUC oracle", auc_oracle);
  report(4, "reference mean reproduction", reference_means);
  std::optional<DeskResults> desk;
  std::string desk_error;
  try {
    desk = desk_scale();
  } catch (const std::exception& e) {
    desk_error = e.what();
  }
  auto need_desk = [&]() -> const DeskResults& {
    if (!desk) throw Error(desk_error);
    return *desk;
  };
  report(5, "pretraining benefit", [&] { return pretraining_benefit(need_desk()); });
  report(6, "label efficiency", [&] { return label_efficiency(need_desk()); });
  report(7, "inference benchmark", inference_benchmark);
  report(8, "structural invariants", structural_invariants);
  std::printf("%d of 8 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
