#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "miqa/cli.hpp"
#include "miqa/errors.hpp"

namespace fs = std::filesystem;

using miqa::ConfigError;
using miqa::RunConfig;
using miqa::Scenario;
using miqa::TrainMode;

namespace {

struct StreamCapture {
  std::ostringstream out, err;
  std::streambuf* old_out;
  std::streambuf* old_err;
  StreamCapture()
      : old_out(std::cout.rdbuf(out.rdbuf())),
        old_err(std::cerr.rdbuf(err.rdbuf())) {}
  ~StreamCapture() {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
  }
};

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("miqa_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int run_quiet(const std::vector<std::string>& args, std::string* out = nullptr,
              std::string* err = nullptr) {
  StreamCapture cap;
  int code = miqa::run(args);
  if (out) *out = cap.out.str();
  if (err) *err = cap.err.str();
  return code;
}

// Small images and a small net keep command tests quick.
std::string tiny_config(const TempDir& dir, const std::string& extra = "",
                        const std::string& out_name = "run") {
  std::string text;
  text += "dataset.path = " + dir.file("ds.pnsa") + "\n";
  text += "generator.n = 120\n";
  text += "generator.height = 16\n";
  text += "generator.width = 16\n";
  text += "model.extractor_hidden = 16\n";
  text += "model.feature_dim = 8\n";
  text += "model.predictor_hidden = 8\n";
  text += "train.max_epochs = 2\n";
  text += "train.mode = miqa-pns\n";
  text += "out.dir = " + dir.file(out_name) + "\n";
  text += extra;
  return text;
}

size_t printed_count(const std::string& out, const std::string& label) {
  const size_t pos = out.find(label + ": ");
  REQUIRE(pos != std::string::npos);
  return std::stoul(out.substr(pos + label.size() + 2));
}

}  // namespace

TEST_CASE("config parsing applies defaults, comments, and overrides") {
  RunConfig def = miqa::parse_run_config("");
  CHECK(def.generator_n == 2825);
  CHECK(def.generator.height == 32);
  CHECK(def.proportions.good == 0.21);
  CHECK(def.train.mode == TrainMode::Baseline);
  CHECK(def.train.patience == 15);
  CHECK(def.scenario == Scenario::Iid);
  CHECK(def.out_dir == "runs");

  RunConfig cfg = miqa::parse_run_config(
      "# comment line\n"
      "\n"
      "  generator.n = 50\n"
      "train.mode=miqa-pns\n"
      "train.lr =  0.5\n"
      "model.extractor_hidden = 32, 16\n"
      "model.predictor_hidden =\n"
      "split.scenario = poor-holdout\n"
      "dataset.path = some/dir/file.pnsa\n");
  CHECK(cfg.generator_n == 50);
  CHECK(cfg.train.mode == TrainMode::MiqaPns);
  CHECK(cfg.train.lr == 0.5);
  CHECK(cfg.train.dims.extractor_hidden == std::vector<size_t>{32, 16});
  CHECK(cfg.train.dims.predictor_hidden.empty());
  CHECK(cfg.scenario == Scenario::PoorHoldout);
  CHECK(cfg.dataset_path == "some/dir/file.pnsa");
}

TEST_CASE("config parsing rejects malformed input") {
  CHECK_THROWS_AS(miqa::parse_run_config("no.such.key = 1\n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("generator.n = 5\ngenerator.n = 6\n"),
                  ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("just some words\n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("= 5\n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("generator.n = -3\n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("generator.n = 12x\n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("generator.n = \n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("train.lr = fast\n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("train.lr = inf\n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("train.lambda = nan\n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("generator.proportions.good = 1.2\n"),
                  ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("generator.proportions.good = -0.1\n"),
                  ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("train.mode = vgg\n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("split.scenario = ood\n"), ConfigError);
  CHECK_THROWS_AS(miqa::parse_run_config("model.extractor_hidden = 3,,4\n"),
                  ConfigError);

  // Error messages carry the offending key or value.
  try {
    miqa::parse_run_config("no.such.key = 1\n");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("no.such.key") != std::string::npos);
  }
}

TEST_CASE("config serialization round-trips exactly") {
  RunConfig def;
  std::string text = miqa::serialize_run_config(def);
  CHECK(miqa::serialize_run_config(miqa::parse_run_config(text)) == text);

  RunConfig cfg;
  cfg.dataset_path = "x/y.pnsa";
  cfg.generator_n = 321;
  cfg.generator_seed = 11;
  cfg.generator.height = 48;
  cfg.generator.width = 40;
  cfg.proportions = {0.3, 0.3, 0.4};
  cfg.generator.limited_crop_only_prob = 0.25;
  cfg.train.dims.extractor_hidden = {12, 7};
  cfg.train.dims.feature_dim = 5;
  cfg.train.dims.predictor_hidden = {};
  cfg.train.mode = TrainMode::MiqaPns;
  cfg.train.lambda = 0.125;
  cfg.train.lr = 3e-5;
  cfg.train.batch_size = 17;
  cfg.train.max_epochs = 9;
  cfg.train.patience = 4;
  cfg.train.seed = 99;
  cfg.scenario = Scenario::LimitedHoldout;
  cfg.split_seed = 13;
  cfg.compare_n_seeds = 3;
  cfg.compare_base_seed = 21;
  cfg.arm_a_mode = TrainMode::MiqaPns;
  cfg.arm_b_mode = TrainMode::Baseline;
  cfg.eval_checkpoint = "ck.pnsm";
  cfg.out_dir = "out/dir";
  std::string text2 = miqa::serialize_run_config(cfg);
  CHECK(miqa::serialize_run_config(miqa::parse_run_config(text2)) == text2);
  CHECK(text2.find("model.extractor_hidden = 12,7\n") != std::string::npos);
  CHECK(text2.find("model.predictor_hidden = \n") != std::string::npos);
}

TEST_CASE("generate writes a dataset, refuses overwrite, reruns identically") {
  TempDir dir("generate");
  const std::string cfg_path = dir.file("c.cfg");
  write_file(cfg_path, tiny_config(dir));

  std::string out;
  REQUIRE(run_quiet({"generate", "--config", cfg_path}, &out) == 0);
  CHECK(fs::exists(dir.file("ds.pnsa")));
  CHECK(fs::exists(dir.file("ds.pnsa.meta")));
  const size_t good = printed_count(out, "good");
  const size_t limited = printed_count(out, "limited");
  const size_t poor = printed_count(out, "poor");
  CHECK(good + limited + poor == 120);

  std::string err;
  CHECK(run_quiet({"generate", "--config", cfg_path}, nullptr, &err) == 2);
  CHECK(err.find("--force") != std::string::npos);

  const std::string first = read_file(dir.file("ds.pnsa"));
  REQUIRE(run_quiet({"generate", "--config", cfg_path, "--force"}) == 0);
  CHECK(read_file(dir.file("ds.pnsa")) == first);

  // A different seed changes the bytes.
  REQUIRE(run_quiet({"generate", "--config", cfg_path, "--force", "--seed",
                     "123"}) == 0);
  CHECK(read_file(dir.file("ds.pnsa")) != first);
}

TEST_CASE("generate with default proportions lands on the published counts") {
  TempDir dir("generate_default");
  const std::string cfg_path = dir.file("c.cfg");
  write_file(cfg_path, "dataset.path = " + dir.file("big.pnsa") + "\n");

  std::string out;
  REQUIRE(run_quiet({"generate", "--config", cfg_path}, &out) == 0);
  const auto good = static_cast<long>(printed_count(out, "good"));
  const auto limited = static_cast<long>(printed_count(out, "limited"));
  const auto poor = static_cast<long>(printed_count(out, "poor"));
  CHECK(good + limited + poor == 2825);
  CHECK(std::abs(good - 593) <= 1);
  CHECK(std::abs(limited - 1827) <= 1);
  CHECK(std::abs(poor - 405) <= 1);
}

TEST_CASE("generate rejects proportions that do not sum to one") {
  TempDir dir("generate_bad");
  const std::string cfg_path = dir.file("c.cfg");
  write_file(cfg_path, "dataset.path = " + dir.file("x.pnsa") +
                           "\n"
                           "generator.proportions.good = 0.5\n"
                           "generator.proportions.limited = 0.1\n"
                           "generator.proportions.poor = 0.1\n");
  std::string err;
  CHECK(run_quiet({"generate", "--config", cfg_path}, nullptr, &err) == 2);
  CHECK(err.find("0.7") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.file("x.pnsa")));
}

TEST_CASE("train writes checkpoints and a reproducible metrics document") {
  TempDir dir("train");
  const std::string cfg_path = dir.file("c.cfg");
  write_file(cfg_path, tiny_config(dir));
  REQUIRE(run_quiet({"generate", "--config", cfg_path}) == 0);

  REQUIRE(run_quiet({"train", "--config", cfg_path}) == 0);
  const std::string metrics_path = dir.file("run/metrics.txt");
  CHECK(fs::exists(dir.file("run/checkpoint_training.pnsm")));
  CHECK(fs::exists(dir.file("run/checkpoint_inference.pnsm")));
  CHECK(fs::exists(dir.file("run/resolved.cfg")));
  REQUIRE(fs::exists(metrics_path));

  const std::string doc = read_file(metrics_path);
  CHECK(doc.rfind("miqa metrics document v1\n", 0) == 0);
  CHECK(doc.find("[resolved_config]") != std::string::npos);
  CHECK(doc.find("mode: miqa-pns") != std::string::npos);

  // The inference checkpoint is strictly smaller: no complement extractor.
  CHECK(fs::file_size(dir.file("run/checkpoint_inference.pnsm")) <
        fs::file_size(dir.file("run/checkpoint_training.pnsm")));

  // Overwrite protection, then a byte-identical rerun.
  std::string err;
  CHECK(run_quiet({"train", "--config", cfg_path}, nullptr, &err) == 2);
  CHECK(err.find("--force") != std::string::npos);
  REQUIRE(run_quiet({"train", "--config", cfg_path, "--force"}) == 0);
  CHECK(read_file(metrics_path) == doc);

  // The resolved config is itself a loadable config that reproduces the run.
  const std::string resolved = read_file(dir.file("run/resolved.cfg"));
  CHECK(miqa::serialize_run_config(miqa::parse_run_config(resolved)) ==
        resolved);

  // --out redirects every artifact.
  REQUIRE(run_quiet({"train", "--config", cfg_path, "--out",
                     dir.file("elsewhere")}) == 0);
  CHECK(fs::exists(dir.file("elsewhere/metrics.txt")));
}

TEST_CASE("train error paths map to the documented exit codes") {
  TempDir dir("train_err");
  const std::string cfg_path = dir.file("c.cfg");
  write_file(cfg_path, tiny_config(dir));

  // Dataset file missing.
  std::string err;
  CHECK(run_quiet({"train", "--config", cfg_path}, nullptr, &err) == 2);
  CHECK(err.find("ds.pnsa") != std::string::npos);

  REQUIRE(run_quiet({"generate", "--config", cfg_path}) == 0);

  // Unknown mode is a usage error.
  write_file(dir.file("badmode.cfg"), tiny_config(dir, "") + "train.mode2 = x\n");
  CHECK(run_quiet({"train", "--config", dir.file("badmode.cfg")}) == 2);

  // A learning rate large enough to overflow the forward pass.
  write_file(dir.file("blow.cfg"),
             tiny_config(dir, "train.lr = 1e308\n", "blow"));
  CHECK(run_quiet({"train", "--config", dir.file("blow.cfg")}, nullptr,
                  &err) == 3);
  CHECK(err.find("numeric error") != std::string::npos);
  CHECK(err.find("epoch") != std::string::npos);

  // Config file itself missing.
  CHECK(run_quiet({"train", "--config", dir.file("nope.cfg")}) == 2);
}

TEST_CASE("eval reads checkpoints and flags absent pns fields") {
  TempDir dir("eval");
  const std::string cfg_path = dir.file("c.cfg");
  write_file(cfg_path, tiny_config(dir));
  REQUIRE(run_quiet({"generate", "--config", cfg_path}) == 0);
  REQUIRE(run_quiet({"train", "--config", cfg_path}) == 0);

  // Full training checkpoint: pns fields are present.
  write_file(dir.file("ev_full.cfg"),
             tiny_config(dir,
                         "eval.checkpoint = " +
                             dir.file("run/checkpoint_training.pnsm") + "\n",
                         "ev_full"));
  std::string out;
  REQUIRE(run_quiet({"eval", "--config", dir.file("ev_full.cfg")}, &out) == 0);
  CHECK(out.find("pns_proxy: ") != std::string::npos);
  CHECK(out.find("pns_proxy: absent") == std::string::npos);
  CHECK(read_file(dir.file("ev_full/eval.txt")).rfind("miqa eval document v1\n",
                                                      0) == 0);

  // Inference checkpoint: no complement network, pns flagged absent.
  write_file(dir.file("ev_inf.cfg"),
             tiny_config(dir,
                         "eval.checkpoint = " +
                             dir.file("run/checkpoint_inference.pnsm") + "\n",
                         "ev_inf"));
  REQUIRE(run_quiet({"eval", "--config", dir.file("ev_inf.cfg")}, &out) == 0);
  CHECK(out.find("pns_proxy: absent") != std::string::npos);
  CHECK(out.find("mono_violation: absent") != std::string::npos);

  // Both evals agree on the confusion numbers: same weights for E and F.
  const std::string full_doc = read_file(dir.file("ev_full/eval.txt"));
  const std::string inf_doc = read_file(dir.file("ev_inf/eval.txt"));
  auto result_f1 = [](const std::string& doc) {
    const size_t pos = doc.find("f1: ");
    REQUIRE(pos != std::string::npos);
    return doc.substr(pos, doc.find('\n', pos) - pos);
  };
  CHECK(result_f1(full_doc) == result_f1(inf_doc));

  // Missing checkpoint key.
  CHECK(run_quiet({"eval", "--config", cfg_path}) == 2);
  // Checkpoint path that does not exist.
  write_file(dir.file("ev_bad.cfg"),
             tiny_config(dir, "eval.checkpoint = " + dir.file("gone.pnsm") +
                                  "\n"));
  CHECK(run_quiet({"eval", "--config", dir.file("ev_bad.cfg")}) == 2);
}

TEST_CASE("compare writes the csv schema and an embedded config summary") {
  TempDir dir("compare");
  const std::string cfg_path = dir.file("c.cfg");
  write_file(cfg_path, tiny_config(dir, "compare.n_seeds = 2\n", "cmp"));

  std::string out;
  REQUIRE(run_quiet({"compare", "--config", cfg_path}, &out) == 0);
  CHECK(out.find("arm a: baseline") != std::string::npos);
  CHECK(out.find("arm b: miqa-pns") != std::string::npos);

  const std::string csv = read_file(dir.file("cmp/comparison.csv"));
  CHECK(csv.rfind("seed, mode, scenario, precision, recall, f1, "
                  "deficient_accuracy, pns_proxy, mono_violation, "
                  "epochs_trained\n",
                  0) == 0);
  size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 1 + 2 * 2);

  const std::string summary = read_file(dir.file("cmp/summary.txt"));
  CHECK(summary.rfind("miqa comparison summary v1\n", 0) == 0);
  CHECK(summary.find("[resolved_config]") != std::string::npos);
  CHECK(summary.find("compare.n_seeds = 2") != std::string::npos);

  // Seeded rerun into a fresh directory is byte-identical.
  REQUIRE(run_quiet({"compare", "--config", cfg_path, "--out",
                     dir.file("cmp2")}) == 0);
  CHECK(read_file(dir.file("cmp2/comparison.csv")) == csv);
}

TEST_CASE("usage errors and help") {
  std::string out;
  CHECK(run_quiet({}) == 2);
  CHECK(run_quiet({"frobnicate"}) == 2);
  CHECK(run_quiet({"train", "--bogus-flag"}) == 2);
  CHECK(run_quiet({"--help"}, &out) == 0);
  CHECK(out.find("generate") != std::string::npos);
  CHECK(out.find("compare") != std::string::npos);
  CHECK(run_quiet({"generate", "--seed", "notanumber"}) == 2);
}
