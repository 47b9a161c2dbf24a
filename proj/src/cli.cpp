#include "miqa/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "miqa/checkpoint.hpp"
#include "miqa/dataset_io.hpp"
#include "miqa/errors.hpp"

namespace fs = std::filesystem;

namespace miqa {
namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  const size_t b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  const std::string bad =
      key + ": expected a non-negative integer, got '" + value + "'";
  if (value.empty() || value[0] == '-' || value[0] == '+') {
    throw ConfigError(bad);
  }
  size_t idx = 0;
  uint64_t v = 0;
  try {
    v = std::stoull(value, &idx, 10);
  } catch (const std::exception&) {
    throw ConfigError(bad);
  }
  if (idx != value.size()) throw ConfigError(bad);
  return v;
}

size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<size_t>(parse_u64(key, value));
}

double parse_finite(const std::string& key, const std::string& value) {
  const std::string bad = key + ": expected a finite number, got '" + value + "'";
  if (value.empty()) throw ConfigError(bad);
  size_t idx = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &idx);
  } catch (const std::exception&) {
    throw ConfigError(bad);
  }
  if (idx != value.size() || !std::isfinite(v)) throw ConfigError(bad);
  return v;
}

double parse_unit_interval(const std::string& key, const std::string& value) {
  const double v = parse_finite(key, value);
  if (v < 0.0 || v > 1.0) {
    throw ConfigError(key + ": must be in [0, 1], got " + value);
  }
  return v;
}

std::vector<size_t> parse_size_list(const std::string& key,
                                    const std::string& value) {
  std::vector<size_t> out;
  if (trim(value).empty()) return out;
  size_t pos = 0;
  while (true) {
    const size_t comma = value.find(',', pos);
    const std::string piece = trim(value.substr(pos, comma - pos));
    if (piece.empty()) {
      throw ConfigError(key + ": empty element in list '" + value + "'");
    }
    out.push_back(parse_size(key, piece));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_sizes(const std::vector<size_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

void apply_key(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "dataset.path") {
    c.dataset_path = value;
  } else if (key == "generator.n") {
    c.generator_n = parse_size(key, value);
  } else if (key == "generator.seed") {
    c.generator_seed = parse_u64(key, value);
  } else if (key == "generator.height") {
    c.generator.height = parse_size(key, value);
  } else if (key == "generator.width") {
    c.generator.width = parse_size(key, value);
  } else if (key == "generator.proportions.good") {
    c.proportions.good = parse_unit_interval(key, value);
  } else if (key == "generator.proportions.limited") {
    c.proportions.limited = parse_unit_interval(key, value);
  } else if (key == "generator.proportions.poor") {
    c.proportions.poor = parse_unit_interval(key, value);
  } else if (key == "generator.limited_crop_only_prob") {
    c.generator.limited_crop_only_prob = parse_unit_interval(key, value);
  } else if (key == "model.extractor_hidden") {
    c.train.dims.extractor_hidden = parse_size_list(key, value);
  } else if (key == "model.feature_dim") {
    c.train.dims.feature_dim = parse_size(key, value);
  } else if (key == "model.predictor_hidden") {
    c.train.dims.predictor_hidden = parse_size_list(key, value);
  } else if (key == "train.mode") {
    c.train.mode = mode_from_string(value);
  } else if (key == "train.lambda") {
    c.train.lambda = parse_finite(key, value);
  } else if (key == "train.lr") {
    c.train.lr = parse_finite(key, value);
  } else if (key == "train.batch_size") {
    c.train.batch_size = parse_size(key, value);
  } else if (key == "train.max_epochs") {
    c.train.max_epochs = parse_size(key, value);
  } else if (key == "train.patience") {
    c.train.patience = parse_size(key, value);
  } else if (key == "train.seed") {
    c.train.seed = parse_u64(key, value);
  } else if (key == "split.scenario") {
    c.scenario = scenario_from_string(value);
  } else if (key == "split.seed") {
    c.split_seed = parse_u64(key, value);
  } else if (key == "compare.n_seeds") {
    c.compare_n_seeds = parse_size(key, value);
  } else if (key == "compare.base_seed") {
    c.compare_base_seed = parse_u64(key, value);
  } else if (key == "compare.arm_a_mode") {
    c.arm_a_mode = mode_from_string(value);
  } else if (key == "compare.arm_b_mode") {
    c.arm_b_mode = mode_from_string(value);
  } else if (key == "eval.checkpoint") {
    c.eval_checkpoint = value;
  } else if (key == "out.dir") {
    c.out_dir = value;
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void refuse_existing(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) {
    throw ConfigError("refusing to overwrite " + p.string() +
                      " (pass --force)");
  }
}

void write_text_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << content;
  out.flush();
  if (!out) throw ConfigError("write failed: " + p.string());
}

void make_parent_dirs(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

int cmd_generate(const RunConfig& cfg, bool force) {
  if (cfg.dataset_path.empty()) throw ConfigError("dataset.path is empty");
  refuse_existing(cfg.dataset_path, force);
  refuse_existing(cfg.dataset_path + ".meta", force);

  Dataset ds = generate_dataset(cfg.generator_n, cfg.proportions,
                                cfg.generator_seed, cfg.generator);
  DatasetMeta meta;
  meta.seed = cfg.generator_seed;
  meta.count = cfg.generator_n;
  meta.proportions = cfg.proportions;
  meta.limited_crop_only_prob = cfg.generator.limited_crop_only_prob;
  meta.generator_version = kGeneratorVersion;

  make_parent_dirs(cfg.dataset_path);
  save_dataset(ds, meta, cfg.dataset_path);

  size_t counts[3] = {0, 0, 0};
  for (const auto& img : ds.images) {
    ++counts[static_cast<size_t>(img.grade)];
  }
  std::cout << "wrote " << cfg.dataset_path << " (" << ds.images.size()
            << " images, " << ds.height << "x" << ds.width << ")\n";
  std::cout << "good: " << counts[0] << "\n";
  std::cout << "limited: " << counts[1] << "\n";
  std::cout << "poor: " << counts[2] << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, bool force) {
  const fs::path out_dir(cfg.out_dir);
  const fs::path ckpt_training = out_dir / "checkpoint_training.pnsm";
  const fs::path ckpt_inference = out_dir / "checkpoint_inference.pnsm";
  const fs::path metrics_path = out_dir / "metrics.txt";
  const fs::path config_path = out_dir / "resolved.cfg";
  for (const auto& p : {ckpt_training, ckpt_inference, metrics_path, config_path}) {
    refuse_existing(p, force);
  }

  Dataset ds = load_dataset(cfg.dataset_path);
  TrainConfig tc = cfg.train;
  tc.dims.input_dim = ds.height * ds.width;
  Split split = make_split(ds, cfg.scenario, cfg.split_seed);

  TrainResult tr = train(tc, ds, split.train, split.val);
  EvalResult ev = evaluate(tr.model, ds, split.test);

  fs::create_directories(out_dir);
  save_checkpoint(tr.model, ckpt_training.string());
  ModelTriple inference = tr.model;
  inference.complement_extractor.reset();
  save_checkpoint(inference, ckpt_inference.string());

  RunProvenance prov;
  prov.dataset_path = cfg.dataset_path;
  prov.dataset_n = ds.images.size();
  prov.height = ds.height;
  prov.width = ds.width;
  prov.scenario = cfg.scenario;
  prov.split_seed = cfg.split_seed;
  std::string doc = metrics_document(prov, tc, tr, ev);
  doc += "\n[resolved_config]\n" + serialize_run_config(cfg);
  write_text_file(metrics_path, doc);
  write_text_file(config_path, serialize_run_config(cfg));

  std::cout << "trained " << mode_name(tc.mode) << " on "
            << scenario_name(cfg.scenario) << " split: " << tr.epochs_trained
            << " epochs, best " << tr.best_epoch << "\n";
  std::cout << "test f1: " << fmt(ev.confusion.f1)
            << "  deficient_accuracy: " << fmt(ev.confusion.deficient_accuracy)
            << "\n";
  if (ev.has_pns) {
    std::cout << "pns_proxy: " << fmt(ev.pns_proxy)
              << "  mono_violation: " << fmt(ev.mono_violation) << "\n";
  }
  std::cout << "wrote " << metrics_path.string() << "\n";
  std::cout << "wrote " << ckpt_training.string() << "\n";
  std::cout << "wrote " << ckpt_inference.string() << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, bool force) {
  if (cfg.eval_checkpoint.empty()) {
    throw ConfigError("eval.checkpoint is not set");
  }
  const fs::path out_dir(cfg.out_dir);
  const fs::path report_path = out_dir / "eval.txt";
  refuse_existing(report_path, force);

  ModelTriple model = load_checkpoint(cfg.eval_checkpoint, LoadMode::Full);
  Dataset ds = load_dataset(cfg.dataset_path);
  Split split = make_split(ds, cfg.scenario, cfg.split_seed);
  EvalResult ev = evaluate(model, ds, split.test);

  std::ostringstream doc;
  doc << "miqa eval document v1\n\n";
  doc << "[config]\n";
  doc << "checkpoint: " << cfg.eval_checkpoint << "\n";
  doc << "dataset: " << cfg.dataset_path << "\n";
  doc << "scenario: " << scenario_name(cfg.scenario) << "\n";
  doc << "split_seed: " << cfg.split_seed << "\n\n";
  doc << "[result]\n";
  doc << "n_test: " << ev.n_test << "\n";
  const auto& c = ev.confusion;
  doc << "tp: " << c.tp << "\nfp: " << c.fp << "\ntn: " << c.tn
      << "\nfn: " << c.fn << "\n";
  doc << "precision: " << fmt(c.precision) << "\n";
  doc << "recall: " << fmt(c.recall) << "\n";
  doc << "f1: " << fmt(c.f1) << "\n";
  doc << "deficient_accuracy: " << fmt(c.deficient_accuracy) << "\n";
  if (ev.has_pns) {
    doc << "pns_proxy: " << fmt(ev.pns_proxy) << "\n";
    doc << "mono_violation: " << fmt(ev.mono_violation) << "\n";
  } else {
    doc << "pns_proxy: absent\n";
    doc << "mono_violation: absent\n";
  }

  fs::create_directories(out_dir);
  write_text_file(report_path, doc.str());
  std::cout << doc.str();
  std::cout << "wrote " << report_path.string() << "\n";
  return 0;
}

int cmd_compare(const RunConfig& cfg, bool force) {
  const fs::path out_dir(cfg.out_dir);
  const fs::path csv_path = out_dir / "comparison.csv";
  const fs::path summary_path = out_dir / "summary.txt";
  const fs::path config_path = out_dir / "resolved.cfg";
  for (const auto& p : {csv_path, summary_path, config_path}) {
    refuse_existing(p, force);
  }

  CompareConfig cc;
  cc.n_seeds = cfg.compare_n_seeds;
  cc.base_seed = cfg.compare_base_seed;
  cc.scenario = cfg.scenario;
  cc.dataset_n = cfg.generator_n;
  cc.proportions = cfg.proportions;
  cc.generator = cfg.generator;
  cc.arm_a = cfg.train;
  cc.arm_a.mode = cfg.arm_a_mode;
  cc.arm_b = cfg.train;
  cc.arm_b.mode = cfg.arm_b_mode;
  cc.arm_a.dims.input_dim = cfg.generator.height * cfg.generator.width;
  cc.arm_b.dims.input_dim = cc.arm_a.dims.input_dim;

  CompareResult result = compare(cc);
  const std::string csv = comparison_csv(result);
  const std::string summary = comparison_summary(result);

  fs::create_directories(out_dir);
  write_text_file(csv_path, csv);
  write_text_file(summary_path, "miqa comparison summary v1\n\n[resolved_config]\n" +
                                    serialize_run_config(cfg) + "\n" + summary);
  write_text_file(config_path, serialize_run_config(cfg));

  std::cout << summary;
  std::cout << "wrote " << csv_path.string() << "\n";
  std::cout << "wrote " << summary_path.string() << "\n";
  return 0;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        " has no '=': " + stripped);
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        " has an empty key");
    }
    if (!seen.insert(key).second) {
      throw ConfigError("duplicate config key: " + key);
    }
    apply_key(cfg, key, value);
  }
  return cfg;
}

std::string serialize_run_config(const RunConfig& c) {
  std::ostringstream out;
  out << "dataset.path = " << c.dataset_path << "\n";
  out << "generator.n = " << c.generator_n << "\n";
  out << "generator.seed = " << c.generator_seed << "\n";
  out << "generator.height = " << c.generator.height << "\n";
  out << "generator.width = " << c.generator.width << "\n";
  out << "generator.proportions.good = " << fmt(c.proportions.good) << "\n";
  out << "generator.proportions.limited = " << fmt(c.proportions.limited)
      << "\n";
  out << "generator.proportions.poor = " << fmt(c.proportions.poor) << "\n";
  out << "generator.limited_crop_only_prob = "
      << fmt(c.generator.limited_crop_only_prob) << "\n";
  out << "model.extractor_hidden = " << join_sizes(c.train.dims.extractor_hidden)
      << "\n";
  out << "model.feature_dim = " << c.train.dims.feature_dim << "\n";
  out << "model.predictor_hidden = " << join_sizes(c.train.dims.predictor_hidden)
      << "\n";
  out << "train.mode = " << mode_name(c.train.mode) << "\n";
  out << "train.lambda = " << fmt(c.train.lambda) << "\n";
  out << "train.lr = " << fmt(c.train.lr) << "\n";
  out << "train.batch_size = " << c.train.batch_size << "\n";
  out << "train.max_epochs = " << c.train.max_epochs << "\n";
  out << "train.patience = " << c.train.patience << "\n";
  out << "train.seed = " << c.train.seed << "\n";
  out << "split.scenario = " << scenario_name(c.scenario) << "\n";
  out << "split.seed = " << c.split_seed << "\n";
  out << "compare.n_seeds = " << c.compare_n_seeds << "\n";
  out << "compare.base_seed = " << c.compare_base_seed << "\n";
  out << "compare.arm_a_mode = " << mode_name(c.arm_a_mode) << "\n";
  out << "compare.arm_b_mode = " << mode_name(c.arm_b_mode) << "\n";
  out << "eval.checkpoint = " << c.eval_checkpoint << "\n";
  out << "out.dir = " << c.out_dir << "\n";
  return out.str();
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"synthetic image-quality benchmark with PNS-regularized training"};
  app.name("miqa");
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed_value = 0;
  bool have_seed = false;
  std::string out_value;
  bool have_out = false;
  bool force = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "config file with key = value lines");
    sub->add_option_function<uint64_t>(
        "--seed",
        [&](const uint64_t& v) {
          seed_value = v;
          have_seed = true;
        },
        "override generator.seed, train.seed, and compare.base_seed");
    sub->add_option_function<std::string>(
        "--out",
        [&](const std::string& v) {
          out_value = v;
          have_out = true;
        },
        "override out.dir");
    sub->add_flag("--force", force, "overwrite existing output files");
  };

  CLI::App* c_generate =
      app.add_subcommand("generate", "render a synthetic dataset file");
  CLI::App* c_train =
      app.add_subcommand("train", "train a model and write checkpoints");
  CLI::App* c_eval =
      app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  CLI::App* c_compare =
      app.add_subcommand("compare", "train both arms across seeds and report");
  for (CLI::App* sub : {c_generate, c_train, c_eval, c_compare}) {
    add_common(sub);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      cfg = parse_run_config(read_text_file(config_path));
    }
    if (have_seed) {
      cfg.generator_seed = seed_value;
      cfg.train.seed = seed_value;
      cfg.compare_base_seed = seed_value;
    }
    if (have_out) cfg.out_dir = out_value;

    if (c_generate->parsed()) return cmd_generate(cfg, force);
    if (c_train->parsed()) return cmd_train(cfg, force);
    if (c_eval->parsed()) return cmd_eval(cfg, force);
    return cmd_compare(cfg, force);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace miqa
