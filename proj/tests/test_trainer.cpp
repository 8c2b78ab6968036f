#include <doctest.h>

#include <cmath>
#include <map>

#include "support.hpp"
#include "tham/error.hpp"
#include "tham/trainer.hpp"

using namespace tham;
using ad::Mat;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Invalid;
}

SplitConfig split_of(std::size_t train, std::size_t valid, std::size_t test) {
  SplitConfig s;
  s.counts = SplitCounts{train, valid, test};
  s.seed = 1;
  return s;
}

std::map<std::string, Mat> snapshot(const ThamModel& m) {
  std::map<std::string, Mat> out;
  for (const auto& e : m.params().entries()) out[e.name] = e.tensor.value();
  return out;
}

}  // namespace

TEST_CASE("forward: probabilities in (0, 1), one per code") {
  const SynthData s = generate(test::small_synth(30, 1));
  test::Built b = test::build(s, test::tiny_config());
  const Mat p = predict_probabilities(*b.model, b.data.split.train);
  CHECK(p.rows() == static_cast<ad::Index>(b.data.split.train.size()));
  CHECK(p.cols() == static_cast<ad::Index>(b.model->codes().size()));
  CHECK(p.minCoeff() > 0.0);
  CHECK(p.maxCoeff() < 1.0);
  b.model->params().get("head.W").mutable_value().setZero();
  const Mat half = predict_probabilities(*b.model, b.data.split.train);
  CHECK(half.isApproxToConstant(0.5, 1e-15));
}

TEST_CASE("forward: heart-failure head has one output") {
  const SynthData s = generate(test::small_synth(30, 2));
  test::Built b = test::build(s, test::tiny_config(Task::HeartFailure));
  CHECK(b.model->output_dim() == 1);
  const Mat p = predict_probabilities(*b.model, b.data.split.valid);
  CHECK(p.cols() == 1);
}

TEST_CASE("fit: keeps the best validation loss and restores those parameters") {
  const SynthData s = generate(test::small_synth(40, 3));
  ModelConfig cfg = test::tiny_config();
  cfg.epochs = 5;
  cfg.lr_milestones = {{1, 0.05}, {3, 1e-3}};
  test::Built b = test::build(s, cfg, split_of(24, 8, 8));
  std::vector<double> lrs;
  const FitResult r = fit(*b.model, b.data.split.train, b.data.split.valid,
                          [&](const EpochLog& log) { lrs.push_back(log.lr); });
  REQUIRE(r.epochs.size() == 5);
  CHECK(lrs == std::vector<double>{0.05, 0.05, 1e-3, 1e-3, 1e-3});
  double best = INFINITY;
  for (const EpochLog& e : r.epochs) {
    CHECK(e.best_valid_loss <= best);
    CHECK(e.improved == (e.valid_loss < best));
    best = std::min(best, e.valid_loss);
    CHECK(e.best_valid_loss == best);
  }
  CHECK(r.best_valid_loss == best);
  CHECK(evaluate_loss(*b.model, b.data.split.valid) == doctest::Approx(best).epsilon(1e-12));
  CHECK(r.epochs[static_cast<std::size_t>(r.best_epoch - 1)].valid_loss == best);
}

TEST_CASE("fit: same seed, same parameters") {
  const SynthData s = generate(test::small_synth(30, 4));
  ModelConfig cfg = test::tiny_config();
  cfg.dropout = 0.2;
  test::Built a = test::build(s, cfg, split_of(20, 5, 5));
  test::Built b = test::build(s, cfg, split_of(20, 5, 5));
  fit(*a.model, a.data.split.train, a.data.split.valid);
  fit(*b.model, b.data.split.train, b.data.split.valid);
  CHECK(snapshot(*a.model) == snapshot(*b.model));
  cfg.seed = 6;
  test::Built c = test::build(s, cfg, split_of(20, 5, 5));
  fit(*c.model, c.data.split.train, c.data.split.valid);
  CHECK(snapshot(*c.model) != snapshot(*a.model));
}

TEST_CASE("fit: falls back to the training loss without validation data") {
  const SynthData s = generate(test::small_synth(20, 5));
  test::Built b = test::build(s, test::tiny_config(), split_of(20, 0, 0));
  const FitResult r = fit(*b.model, b.data.split.train, {});
  double best = INFINITY;
  for (const EpochLog& e : r.epochs) best = std::min(best, e.train_loss);
  CHECK(r.best_valid_loss == best);
}

TEST_CASE("fit: non-finite loss is a numeric error") {
  const SynthData s = generate(test::small_synth(20, 6));
  test::Built b = test::build(s, test::tiny_config(), split_of(12, 4, 4));
  b.model->params().get("head.b").mutable_value()(0, 0) = NAN;
  CHECK(kind_of([&] { fit(*b.model, b.data.split.train, b.data.split.valid); }) == ErrorKind::Numeric);
  CHECK(kind_of([&] { fit(*b.model, {}, b.data.split.valid); }) == ErrorKind::Invalid);
}

TEST_CASE("top_k_indices: descending with index tie-break") {
  Mat row(1, 5);
  row << 0.2, 0.9, 0.2, 0.5, 0.9;
  CHECK(top_k_indices(row, 3) == std::vector<std::size_t>{1, 4, 3});
  CHECK(top_k_indices(row, 5) == std::vector<std::size_t>{1, 4, 3, 0, 2});
  CHECK(top_k_indices(row, 50).size() == 5);
}

TEST_CASE("predict_top_k: ordering, clamping and repeatability") {
  const SynthData s = generate(test::small_synth(30, 7));
  test::Built b = test::build(s, test::tiny_config());
  const Example& ex = b.data.split.test.front();
  const auto top = predict_top_k(*b.model, ex.history, ex.intervals, 10);
  REQUIRE(top.size() == 10);
  for (std::size_t i = 1; i < top.size(); ++i) CHECK(top[i - 1].second >= top[i].second);
  CHECK(predict_top_k(*b.model, ex.history, ex.intervals, 10) == top);
  const auto all = predict_top_k(*b.model, ex.history, ex.intervals, 1000);
  CHECK(all.size() == b.model->codes().size());
  const std::vector<Example> one{ex};
  const Mat p = predict_probabilities(*b.model, one);
  CHECK(p(0, top[0].first) == top[0].second);
  CHECK(kind_of([&] { predict_top_k(*b.model, {}, {}, 3); }) == ErrorKind::Invalid);
}

TEST_CASE("ablations: attention trace and gradient routing") {
  const SynthData s = generate(test::small_synth(20, 8));
  ModelConfig cfg = test::tiny_config();
  cfg.ablation = AblationFlags::parse("no_time_and_comp");
  test::Built b = test::build(s, cfg);
  ThamModel& m = *b.model;
  const Example& ex = b.data.split.train.front();
  AttentionTrace trace;
  const auto feats = m.graph_features(ad::Mode::Eval).codes;
  m.forward_patient(ex.history, ex.intervals, feats, ad::Mode::Eval, &trace);
  CHECK(trace.beta.size() == 0);
  CHECK(trace.delta.size() == 0);
  CHECK(trace.eta == trace.alpha);
  m.params().zero_grad();
  m.loss(b.data.split.train, ad::Mode::Train).backward();
  for (const auto& e : m.params().entries()) {
    if (e.name.rfind("visit.", 0) == 0 || e.name.rfind("comp.", 0) == 0 || e.name.rfind("merge.", 0) == 0) {
      INFO(e.name);
      CHECK(e.tensor.grad().norm() == 0.0);
    }
  }
  CHECK(m.params().get("prelim.P").grad().norm() > 0.0);

  test::Built full = test::build(s, test::tiny_config());
  AttentionTrace t2;
  const auto f2 = full.model->graph_features(ad::Mode::Eval).codes;
  full.model->forward_patient(ex.history, ex.intervals, f2, ad::Mode::Eval, &t2);
  CHECK(t2.beta.cols() == t2.alpha.cols());
  CHECK(t2.delta.sum() == doctest::Approx(1.0));
  CHECK(t2.eta.sum() == doctest::Approx(1.0));
}

TEST_CASE("checkpoint: round trip and validation") {
  const SynthData s = generate(test::small_synth(30, 9));
  ModelConfig cfg = test::tiny_config();
  cfg.epochs = 2;
  const SplitConfig split = split_of(20, 5, 5);
  test::Built b = test::build(s, cfg, split);
  const FitResult r = fit(*b.model, b.data.split.train, b.data.split.valid);
  const auto dir = test::temp_dir("ckpt");
  CheckpointMeta meta{r.best_valid_loss, r.best_epoch, split};
  save_checkpoint(*b.model, meta, dir / "m.tham");
  const LoadedModel l = load_checkpoint(dir / "m.tham");
  CHECK(l.model->config() == b.model->config());
  CHECK(l.meta.best_epoch == r.best_epoch);
  CHECK(l.meta.best_valid_loss == r.best_valid_loss);
  CHECK(l.meta.split.counts->train == 20);
  CHECK(l.model->codes() == b.model->codes());
  CHECK(snapshot(*l.model) == snapshot(*b.model));
  CHECK(predict_probabilities(*l.model, b.data.split.test) ==
        predict_probabilities(*b.model, b.data.split.test));
  save_checkpoint(*l.model, l.meta, dir / "again.tham");
  CHECK(test::read_text(dir / "again.tham") == test::read_text(dir / "m.tham"));

  const std::string bytes = test::read_text(dir / "m.tham");
  test::write_text(dir / "short.tham", bytes.substr(0, bytes.size() / 2));
  CHECK(kind_of([&] { load_checkpoint(dir / "short.tham"); }) == ErrorKind::Parse);
  test::write_text(dir / "magic.tham", "NOPE" + bytes.substr(4));
  CHECK(kind_of([&] { load_checkpoint(dir / "magic.tham"); }) == ErrorKind::Parse);
  CHECK(kind_of([&] { load_checkpoint(dir / "none.tham"); }) == ErrorKind::Io);
  CHECK(model_config_from_json(model_config_json(cfg)) == cfg);
}

TEST_CASE("training recovers the planted next-visit code") {
  SynthConfig sc = test::small_synth(240, 10);
  const SynthData s = generate(sc);
  ModelConfig cfg = test::tiny_config();
  cfg.epochs = 25;
  cfg.batch_size = 16;
  cfg.lr_milestones = {{1, 1e-2}};
  test::Built b = test::build(s, cfg, split_of(200, 20, 20));
  fit(*b.model, b.data.split.train, b.data.split.valid);
  std::map<std::string, std::string> expected(s.truth.most_likely_next.begin(), s.truth.most_likely_next.end());
  std::size_t hits = 0, total = 0;
  for (const auto* part : {&b.data.split.valid, &b.data.split.test}) {
    for (const Example& ex : *part) {
      const auto top = predict_top_k(*b.model, ex.history, ex.intervals, 1);
      const std::string& id = s.cohort.patients[ex.patient].id;
      hits += b.model->codes().id(top[0].first) == expected.at(id);
      ++total;
    }
  }
  const double rate = static_cast<double>(hits) / static_cast<double>(total);
  INFO("top-1 agreement " << rate);
  CHECK(rate >= 0.8);
}
