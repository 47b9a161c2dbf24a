#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "miqa/errors.hpp"
#include "miqa/rng.hpp"
#include "miqa/train_eval.hpp"

using miqa::ClassProportions;
using miqa::CompareConfig;
using miqa::CompareResult;
using miqa::ConfigError;
using miqa::Dataset;
using miqa::EarlyStopper;
using miqa::EvalResult;
using miqa::Grade;
using miqa::GeneratorOptions;
using miqa::ModelTriple;
using miqa::NumericError;
using miqa::QualityLabel;
using miqa::Rng;
using miqa::Scenario;
using miqa::TrainConfig;
using miqa::TrainMode;
using miqa::TrainResult;

namespace {

GeneratorOptions tiny_gen() {
  GeneratorOptions g;
  g.height = 16;
  g.width = 16;
  return g;
}

TrainConfig tiny_config(TrainMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.lambda = 1.0;
  c.lr = 1e-3;
  c.batch_size = 16;
  c.max_epochs = 3;
  c.patience = 2;
  c.seed = 9;
  c.dims.input_dim = 16 * 16;
  c.dims.extractor_hidden = {16};
  c.dims.feature_dim = 8;
  c.dims.predictor_hidden = {8};
  return c;
}

std::vector<double> flatten(const ModelTriple& t) {
  std::vector<double> out;
  auto push = [&](const miqa::Mlp& mlp) {
    for (const auto& layer : mlp.layers) {
      out.insert(out.end(), layer.weight.begin(), layer.weight.end());
      out.insert(out.end(), layer.bias.begin(), layer.bias.end());
    }
  };
  push(t.extractor);
  if (t.complement_extractor) push(*t.complement_extractor);
  push(t.predictor);
  return out;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> flatten_mlp(const miqa::Mlp& mlp) {
  std::vector<double> out;
  for (const auto& layer : mlp.layers) {
    out.insert(out.end(), layer.weight.begin(), layer.weight.end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

}  // namespace

TEST_CASE("early stopper patience semantics") {
  // Loss 1.0 at epoch 1 and never better: stop after epoch 1 + 15.
  EarlyStopper s(15);
  CHECK_FALSE(s.record(1, 1.0));
  for (size_t e = 2; e <= 15; ++e) {
    CHECK_FALSE(s.record(e, 1.0 + 0.01 * static_cast<double>(e)));
  }
  CHECK(s.record(16, 1.2));
  CHECK(s.best_epoch() == 1);
  CHECK(s.best_loss() == 1.0);

  // Improvements push the stop point out.
  EarlyStopper s2(3);
  CHECK_FALSE(s2.record(1, 5.0));
  CHECK_FALSE(s2.record(2, 4.0));
  CHECK_FALSE(s2.record(3, 4.5));
  CHECK_FALSE(s2.record(4, 3.9));
  CHECK_FALSE(s2.record(5, 4.2));
  CHECK_FALSE(s2.record(6, 4.2));
  CHECK(s2.record(7, 4.2));
  CHECK(s2.best_epoch() == 4);

  // A tie is not an improvement.
  EarlyStopper s3(2);
  CHECK_FALSE(s3.record(1, 2.0));
  CHECK_FALSE(s3.record(2, 2.0));
  CHECK(s3.record(3, 2.0));
  CHECK(s3.best_epoch() == 1);

  // Strictly decreasing never stops.
  EarlyStopper s4(1);
  for (size_t e = 1; e <= 100; ++e) {
    CHECK_FALSE(s4.record(e, 100.0 - static_cast<double>(e)));
  }

  CHECK_THROWS_AS(EarlyStopper(0), ConfigError);
}

TEST_CASE("confusion metrics against an independent recount") {
  using miqa::compute_metrics;
  constexpr QualityLabel G = QualityLabel::Good;
  constexpr QualityLabel D = QualityLabel::Deficient;

  // TP=3, FP=1, FN=1, TN=1.
  auto m = compute_metrics({G, G, G, G, D, D}, {G, G, G, D, G, D});
  CHECK(m.tp == 3);
  CHECK(m.fp == 1);
  CHECK(m.fn == 1);
  CHECK(m.tn == 1);
  CHECK(m.precision == 0.75);
  CHECK(m.recall == 0.75);
  CHECK(m.f1 == 0.75);
  CHECK(m.deficient_accuracy == 0.5);

  // The published precision/recall pair is internally consistent with its F1.
  const double f1 = 2.0 * 0.838 * 0.876 / (0.838 + 0.876);
  CHECK(std::round(f1 * 1000.0) / 1000.0 == 0.857);

  // Every actual Deficient predicted Deficient.
  auto all_caught = compute_metrics({G, D, D}, {G, D, D});
  CHECK(all_caught.deficient_accuracy == 1.0);

  // Degenerate denominators.
  auto no_good_pred = compute_metrics({D, D}, {G, D});
  CHECK(no_good_pred.precision == 0.0);
  CHECK(no_good_pred.f1 == 0.0);
  auto no_deficient = compute_metrics({G, G}, {G, G});
  CHECK(no_deficient.deficient_accuracy == 1.0);

  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t n = 1 + rng.index(40);
    std::vector<QualityLabel> pred(n), actual(n);
    for (size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform() < 0.5 ? G : D;
      actual[i] = rng.uniform() < 0.5 ? G : D;
    }
    auto got = compute_metrics(pred, actual);
    size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (size_t i = 0; i < n; ++i) {
      tp += pred[i] == G && actual[i] == G;
      fp += pred[i] == G && actual[i] == D;
      fn += pred[i] == D && actual[i] == G;
      tn += pred[i] == D && actual[i] == D;
    }
    REQUIRE(got.tp == tp);
    REQUIRE(got.fp == fp);
    REQUIRE(got.tn == tn);
    REQUIRE(got.fn == fn);
    const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double r = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    REQUIRE(got.precision == p);
    REQUIRE(got.recall == r);
    REQUIRE(got.f1 == (p + r > 0 ? 2 * p * r / (p + r) : 0.0));
    REQUIRE(got.deficient_accuracy ==
            (tn + fp ? double(tn) / double(tn + fp) : 1.0));
  }

  CHECK_THROWS_AS(compute_metrics({}, {}), ConfigError);
  CHECK_THROWS_AS(compute_metrics({G}, {G, D}), ConfigError);
}

TEST_CASE("training is deterministic and restores the best epoch") {
  Dataset ds = miqa::generate_dataset(90, ClassProportions{}, 77, tiny_gen());
  miqa::Split split = miqa::make_split(ds, Scenario::Iid, 4);

  TrainConfig cfg = tiny_config(TrainMode::MiqaPns);
  TrainResult a = miqa::train(cfg, ds, split.train, split.val);
  TrainResult b = miqa::train(cfg, ds, split.train, split.val);

  CHECK(bit_equal(flatten(a.model), flatten(b.model)));
  REQUIRE(a.history.size() == b.history.size());
  REQUIRE(a.history.size() == a.epochs_trained + 1);
  CHECK(a.epochs_trained <= cfg.max_epochs);
  CHECK(a.best_epoch >= 1);
  CHECK(a.best_epoch <= a.epochs_trained);
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].epoch == i);
    CHECK(std::memcmp(&a.history[i].val_pred, &b.history[i].val_pred,
                      sizeof(double)) == 0);
    // The objective never dips below its prediction component.
    CHECK(a.history[i].train_total >= a.history[i].train_pred);
    CHECK(a.history[i].has_pns);
  }

  // best_epoch is the argmin of the validation curve.
  double min_val = a.history[1].val_pred;
  for (size_t e = 2; e < a.history.size(); ++e) {
    min_val = std::min(min_val, a.history[e].val_pred);
  }
  CHECK(a.history[a.best_epoch].val_pred == min_val);

  // Returned weights really are the best-epoch weights: a run truncated at
  // exactly best_epoch walks the same batches and must end on the same bits.
  TrainConfig trunc_cfg = cfg;
  trunc_cfg.max_epochs = a.best_epoch;
  TrainResult trunc = miqa::train(trunc_cfg, ds, split.train, split.val);
  CHECK(trunc.best_epoch == a.best_epoch);
  CHECK(bit_equal(flatten(trunc.model), flatten(a.model)));

  // A different seed changes the run.
  TrainConfig other = cfg;
  other.seed = 10;
  TrainResult c = miqa::train(other, ds, split.train, split.val);
  CHECK_FALSE(bit_equal(flatten(a.model), flatten(c.model)));
}

TEST_CASE("baseline training leaves the complement extractor at init") {
  Dataset ds = miqa::generate_dataset(80, ClassProportions{}, 12, tiny_gen());
  miqa::Split split = miqa::make_split(ds, Scenario::Iid, 2);

  TrainConfig cfg = tiny_config(TrainMode::Baseline);
  ModelTriple init = miqa::init_model_triple(cfg.dims, cfg.seed);
  TrainResult r = miqa::train(cfg, ds, split.train, split.val);

  REQUIRE(r.model.complement_extractor.has_value());
  CHECK(bit_equal(flatten_mlp(*r.model.complement_extractor),
                  flatten_mlp(*init.complement_extractor)));
  // While E itself moved.
  CHECK_FALSE(bit_equal(flatten_mlp(r.model.extractor),
                        flatten_mlp(init.extractor)));
}

TEST_CASE("gating makes the two modes identical without Good samples") {
  Dataset ds = miqa::generate_dataset(100, ClassProportions{}, 41, tiny_gen());
  std::vector<size_t> deficient;
  for (size_t i = 0; i < ds.images.size(); ++i) {
    if (ds.images[i].grade != Grade::Good) deficient.push_back(i);
  }
  REQUIRE(deficient.size() >= 40);
  std::vector<size_t> train_idx(deficient.begin(), deficient.begin() + 30);
  std::vector<size_t> val_idx(deficient.begin() + 30, deficient.begin() + 40);

  TrainConfig base = tiny_config(TrainMode::Baseline);
  TrainConfig pns = tiny_config(TrainMode::MiqaPns);
  TrainResult rb = miqa::train(base, ds, train_idx, val_idx);
  TrainResult rp = miqa::train(pns, ds, train_idx, val_idx);

  CHECK(rb.epochs_trained == rp.epochs_trained);
  CHECK(bit_equal(flatten_mlp(rb.model.extractor),
                  flatten_mlp(rp.model.extractor)));
  CHECK(bit_equal(flatten_mlp(rb.model.predictor),
                  flatten_mlp(rp.model.predictor)));
  // And the complement never moved despite being on the optimizer.
  ModelTriple init = miqa::init_model_triple(pns.dims, pns.seed);
  CHECK(bit_equal(flatten_mlp(*rp.model.complement_extractor),
                  flatten_mlp(*init.complement_extractor)));
  for (size_t e = 0; e < rb.history.size(); ++e) {
    CHECK(std::memcmp(&rb.history[e].val_pred, &rp.history[e].val_pred,
                      sizeof(double)) == 0);
    CHECK(rp.history[e].train_complement == 0.0);
    CHECK(rp.history[e].train_mono == 0.0);
  }
}

TEST_CASE("training rejects bad inputs and reports numeric blowups") {
  Dataset ds = miqa::generate_dataset(60, ClassProportions{}, 3, tiny_gen());
  miqa::Split split = miqa::make_split(ds, Scenario::Iid, 1);
  TrainConfig cfg = tiny_config(TrainMode::Baseline);

  CHECK_THROWS_AS(miqa::train(cfg, ds, {}, split.val), ConfigError);
  CHECK_THROWS_AS(miqa::train(cfg, ds, split.train, {}), ConfigError);

  TrainConfig wrong = cfg;
  wrong.dims.input_dim = 99;
  CHECK_THROWS_AS(miqa::train(wrong, ds, split.train, split.val), ConfigError);

  TrainConfig blow = cfg;
  blow.lr = 1e308;
  blow.max_epochs = 4;
  try {
    miqa::train(blow, ds, split.train, split.val);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("pred=") != std::string::npos);
  }
}

TEST_CASE("evaluate ties go to Good and pns needs the complement") {
  Dataset ds = miqa::generate_dataset(50, ClassProportions{}, 21, tiny_gen());
  std::vector<size_t> all(ds.images.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;

  miqa::ModelDims dims;
  dims.input_dim = 256;
  dims.extractor_hidden = {8};
  dims.feature_dim = 4;
  dims.predictor_hidden = {4};
  ModelTriple zero = miqa::init_model_triple(dims, 1);
  auto zero_out = [](miqa::Mlp& mlp) {
    for (auto& layer : mlp.layers) {
      for (auto& w : layer.weight) w = 0.0;
    }
  };
  zero_out(zero.extractor);
  zero_out(*zero.complement_extractor);
  zero_out(zero.predictor);

  EvalResult ev = miqa::evaluate(zero, ds, all);
  size_t n_good = 0;
  for (const auto& img : ds.images) {
    n_good += img.grade == Grade::Good;
  }
  // Zero logits everywhere: ties, so everything is called Good.
  CHECK(ev.n_test == 50);
  CHECK(ev.confusion.tp == n_good);
  CHECK(ev.confusion.fp == 50 - n_good);
  CHECK(ev.confusion.recall == 1.0);
  CHECK(ev.confusion.deficient_accuracy == 0.0);
  REQUIRE(ev.has_pns);
  CHECK(ev.pns_proxy == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ev.mono_violation == doctest::Approx(0.25).epsilon(1e-12));

  // Without the complement network the PNS fields are flagged absent.
  ModelTriple pair = zero;
  pair.complement_extractor.reset();
  EvalResult ev2 = miqa::evaluate(pair, ds, all);
  CHECK_FALSE(ev2.has_pns);
  CHECK(ev2.confusion.recall == 1.0);

  // Or with a test set that has no Good images.
  std::vector<size_t> deficient_only;
  for (size_t i = 0; i < ds.images.size(); ++i) {
    if (ds.images[i].grade != Grade::Good) deficient_only.push_back(i);
  }
  EvalResult ev3 = miqa::evaluate(zero, ds, deficient_only);
  CHECK_FALSE(ev3.has_pns);

  CHECK_THROWS_AS(miqa::evaluate(zero, ds, {}), ConfigError);
}

TEST_CASE("compare pairs arms on identical data") {
  CompareConfig cc;
  cc.n_seeds = 2;
  cc.base_seed = 30;
  cc.scenario = Scenario::Iid;
  cc.dataset_n = 70;
  cc.generator = tiny_gen();
  cc.arm_a = tiny_config(TrainMode::Baseline);
  cc.arm_b = tiny_config(TrainMode::Baseline);
  cc.arm_a.max_epochs = 2;
  cc.arm_b.max_epochs = 2;

  CompareResult same = miqa::compare(cc);
  REQUIRE(same.cells.size() == 4);
  for (size_t s = 0; s < 2; ++s) {
    const auto& a = same.cells[2 * s];
    const auto& b = same.cells[2 * s + 1];
    CHECK(a.seed == b.seed);
    CHECK(a.arm == 0);
    CHECK(b.arm == 1);
    // Identical configs on identical data: every metric matches exactly.
    CHECK(a.eval.confusion.f1 == b.eval.confusion.f1);
    CHECK(a.eval.pns_proxy == b.eval.pns_proxy);
    CHECK(a.epochs_trained == b.epochs_trained);
  }

  std::string csv = miqa::comparison_csv(same);
  CHECK(csv.rfind("seed, mode, scenario, precision, recall, f1, "
                  "deficient_accuracy, pns_proxy, mono_violation, "
                  "epochs_trained\n",
                  0) == 0);
  size_t rows = 0;
  for (char ch : csv) rows += ch == '\n';
  CHECK(rows == 5);

  std::string summary = miqa::comparison_summary(same);
  CHECK(summary.find("scenario: iid") != std::string::npos);
  // Identical arms: every delta prints as exactly zero.
  size_t pos = 0;
  int deltas = 0;
  while ((pos = summary.find("delta=", pos)) != std::string::npos) {
    pos += 6;
    size_t end = summary.find('\n', pos);
    CHECK(std::stod(summary.substr(pos, end - pos)) == 0.0);
    ++deltas;
  }
  CHECK(deltas == 7);

  // Summary means agree with means recomputed from the CSV rows.
  std::vector<double> f1s;
  size_t line_start = csv.find('\n') + 1;
  while (line_start < csv.size()) {
    size_t line_end = csv.find('\n', line_start);
    std::string line = csv.substr(line_start, line_end - line_start);
    std::vector<std::string> cols;
    size_t cpos = 0;
    while (true) {
      size_t comma = line.find(", ", cpos);
      cols.push_back(line.substr(cpos, comma - cpos));
      if (comma == std::string::npos) break;
      cpos = comma + 2;
    }
    REQUIRE(cols.size() == 10);
    f1s.push_back(std::stod(cols[5]));
    line_start = line_end + 1;
  }
  double mean_a = (f1s[0] + f1s[2]) / 2.0;
  size_t f1_line = summary.find("\nf1: ");
  REQUIRE(f1_line != std::string::npos);
  size_t amean_pos = summary.find("a_mean=", f1_line) + 7;
  size_t amean_end = summary.find(' ', amean_pos);
  CHECK(std::stod(summary.substr(amean_pos, amean_end - amean_pos)) ==
        doctest::Approx(mean_a).epsilon(1e-15));
}

TEST_CASE("metrics document is deterministic and self-describing") {
  Dataset ds = miqa::generate_dataset(60, ClassProportions{}, 19, tiny_gen());
  miqa::Split split = miqa::make_split(ds, Scenario::Iid, 6);
  TrainConfig cfg = tiny_config(TrainMode::MiqaPns);
  cfg.max_epochs = 2;

  TrainResult r1 = miqa::train(cfg, ds, split.train, split.val);
  TrainResult r2 = miqa::train(cfg, ds, split.train, split.val);
  EvalResult e1 = miqa::evaluate(r1.model, ds, split.test);
  EvalResult e2 = miqa::evaluate(r2.model, ds, split.test);

  miqa::RunProvenance prov;
  prov.dataset_path = "data.pnsa";
  prov.dataset_n = ds.images.size();
  prov.height = ds.height;
  prov.width = ds.width;
  prov.scenario = Scenario::Iid;
  prov.split_seed = 6;

  std::string d1 = miqa::metrics_document(prov, cfg, r1, e1);
  std::string d2 = miqa::metrics_document(prov, cfg, r2, e2);
  CHECK(d1 == d2);
  CHECK(d1.find("mode: miqa-pns") != std::string::npos);
  CHECK(d1.find("[history]") != std::string::npos);
  CHECK(d1.find("scenario: iid") != std::string::npos);
  CHECK(d1.find("precision: ") != std::string::npos);

  // History has one line per epoch plus the init row and the header.
  size_t hist = d1.find("[history]");
  size_t lines = 0;
  for (size_t i = hist; i < d1.size(); ++i) {
    lines += d1[i] == '\n';
  }
  CHECK(lines == r1.epochs_trained + 3);
}
