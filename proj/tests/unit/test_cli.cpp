#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "lussl/cli/app.hpp"
#include "lussl/nnet/checkpoint.hpp"
#include "test_util.hpp"

using namespace lussl;
using namespace lussl::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "lussl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = run_cli(static_cast<int>(argv.size()), argv.data(), Console{out, err});
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> tiny(std::vector<std::string> extra) {
  std::vector<std::string> base{"-s", "data.synthetic.n_patients=6", "-s", "data.synthetic.videos_per_patient=2",
                                "-s", "data.synthetic.frames_per_video=2", "-s", "data.synthetic.unlabelled_fraction=0",
                                "-s", "architecture.widths=[4,8]", "-s", "split.ratios=[0.34,0.33,0.33]"};
  extra.insert(extra.end(), base.begin(), base.end());
  return extra;
}

std::string value_after(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + " ");
  if (pos == std::string::npos) return {};
  const auto end = text.find('\n', pos);
  return text.substr(pos + key.size() + 1, end - pos - key.size() - 1);
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  json root = json::object();
  apply_override(root, "seed=7");
  apply_override(root, "ssl.method=vicreg");
  apply_override(root, "protocol.label_fraction=0.1");
  const auto c = parse_config(root);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.ssl.seed, 7u);
  EXPECT_EQ(c.ssl.method, ssl::Method::vicreg);
  EXPECT_EQ(c.protocol.label_fraction, 0.1);
  EXPECT_THROW(apply_override(root, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(root, "=3"), ConfigError);
}

TEST(Config, RebaseAndNullOverride) {
  json root = {{"data", {{"manifest", "frames/m.csv"}}},
               {"eval", {{"runs", {{{"checkpoint", "a.ckpt"}}}}}},
               {"infer", {{"head_checkpoints", {{"ab", "/abs/x.ckpt"}}}}}};
  rebase_paths(root, "/cfg");
  EXPECT_EQ(root["data"]["manifest"], "/cfg/frames/m.csv");
  EXPECT_EQ(root["eval"]["runs"][0]["checkpoint"], "/cfg/a.ckpt");
  EXPECT_EQ(root["infer"]["head_checkpoints"]["ab"], "/abs/x.ckpt");
  apply_override(root, "data.manifest=null");
  EXPECT_FALSE(root["data"].contains("manifest"));
}

TEST(Config, ErrorsNameTheField) {
  auto field_of = [](const std::string& assignment) {
    json root = json::object();
    apply_override(root, assignment);
    try {
      parse_config(root);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of("ssl.method=foo"), "ssl.method");
  EXPECT_EQ(field_of("ssl.temperature=-1"), "ssl.temperature");
  EXPECT_EQ(field_of("protocol.protocol=XX"), "protocol.protocol");
  EXPECT_EQ(field_of("augmentation.flip_prob=2"), "augmentation.flip_prob");
  EXPECT_EQ(field_of("data.synthetic.n_patients=-2"), "data.synthetic.n_patients");
  EXPECT_NE(field_of("bogus_key=1"), "<none>");
  EXPECT_NE(field_of("ssl.epochs=\"ten\""), "<none>");
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"synth", "--config", "/nonexistent.json"}).code, kExitUsage);
  testutil::TempDir dir;
  const auto bad = run({"pretrain", "--run-dir", (dir.path / "r").string(), "-s", "ssl.method=foo", "-s",
                        "data.synthetic.n_patients=3"});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_NE(bad.err.find("ssl.method"), std::string::npos);
  EXPECT_EQ(run({"train", "--run-dir", (dir.path / "t").string(), "-s", "train.checkpoint=/missing.ckpt"}).code,
            kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
  const auto bench = run({"bench", "--run-dir", (dir.path / "b").string(), "-s",
                          "bench.shared_checkpoint=" + testutil::fixture("reference_auc.json").string()});
  EXPECT_EQ(bench.code, kExitUsage);
  EXPECT_NE(bench.err.find("bench.serial_checkpoints"), std::string::npos);
}

TEST(Cli, RuntimeFailureExitsOne) {
  testutil::TempDir dir;
  const auto r = run({"train", "--run-dir", (dir.path / "t").string(), "-s",
                      "data.manifest=" + testutil::fixture("manifest_empty/manifest.csv").string()});
  EXPECT_EQ(r.code, kExitRuntime) << r.err;
}

TEST(Cli, SynthWritesDeterministicManifest) {
  testutil::TempDir dir;
  const auto a = run(tiny({"synth", "--run-dir", (dir.path / "a").string()}));
  const auto b = run(tiny({"synth", "--run-dir", (dir.path / "b").string()}));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  const auto ma = slurp(dir.path / "a" / "dataset" / "manifest.csv");
  EXPECT_EQ(ma, slurp(dir.path / "b" / "dataset" / "manifest.csv"));
  EXPECT_EQ(std::count(ma.begin(), ma.end(), '\n'), 1 + 6 * 2 * 2);
  EXPECT_TRUE(fs::exists(dir.path / "a" / "config.json"));
  EXPECT_TRUE(fs::exists(dir.path / "a" / "seeds.json"));
}

TEST(Cli, PretrainTrainEvalBench) {
  testutil::TempDir dir;
  const auto pre = dir.path / "pre";
  auto args = tiny({"pretrain", "--run-dir", pre.string(), "-s", "ssl.epochs=15", "-s", "ssl.batch_size=8"});
  const auto p1 = run(args);
  ASSERT_EQ(p1.code, 0) << p1.err;
  int ckpts = 0;
  for (const auto& e : fs::directory_iterator(pre / "checkpoints"))
    ckpts += e.path().filename().string().rfind("epoch_", 0) == 0;
  EXPECT_EQ(ckpts, 15);
  EXPECT_TRUE(fs::exists(pre / "checkpoints" / "final.ckpt"));
  args[2] = (dir.path / "pre2").string();
  const auto p2 = run(args);
  ASSERT_EQ(p2.code, 0) << p2.err;
  EXPECT_FALSE(value_after(p1.out, "final_loss").empty());
  EXPECT_EQ(value_after(p1.out, "final_loss"), value_after(p2.out, "final_loss"));

  const auto final_ckpt = pre / "checkpoints" / "final.ckpt";
  const auto before = slurp(final_ckpt);
  const auto tr = dir.path / "train";
  const auto t = run(tiny({"train", "--run-dir", tr.string(), "-s", "train.checkpoint=" + final_ckpt.string(), "-s",
                           "protocol.protocol=LC", "-s", "protocol.epochs=2", "-s", "protocol.head_lr=0.01"}));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(slurp(final_ckpt), before);
  const auto original = nn::load_checkpoint(final_ckpt);
  const auto trained = nn::load_checkpoint(tr / "checkpoints" / "best.ckpt");
  const auto a = original.extractor.params(), b = trained.extractor.params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
  EXPECT_TRUE(fs::exists(tr / "logs" / "train_history.csv"));

  const auto ev = run({"eval", "--run-dir", (dir.path / "eval").string(), "-s",
                       "eval.fixture=" + testutil::fixture("reference_auc.json").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("reference means checked: 24"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir.path / "eval" / "reports" / "report.json"));

  const auto bench_dir = dir.path / "bench";
  const auto bn = run({"bench", "--run-dir", bench_dir.string(), "-s", "bench.n=3", "-s", "bench.warmup=1", "-s",
                       "architecture.widths=[4,8]"});
  ASSERT_EQ(bn.code, 0) << bn.err;
  const auto j = json::parse(slurp(bench_dir / "reports" / "bench.json"));
  std::vector<int> ns;
  const auto& records = j.is_array() ? j : j.at("results");
  for (const auto& r : records) ns.push_back(r.at("n").get<int>());
  ASSERT_EQ(ns.size(), 2u);
  EXPECT_EQ(ns[0], 3);
  EXPECT_EQ(ns[1], 3);
}

TEST(Cli, EvalDoesNotMutateInputs) {
  testutil::TempDir dir;
  const auto fixture = testutil::fixture("reference_auc.json");
  const auto before = slurp(fixture);
  ASSERT_EQ(run({"eval", "--run-dir", (dir.path / "e").string(), "-s", "eval.fixture=" + fixture.string()}).code, 0);
  EXPECT_EQ(slurp(fixture), before);
}
