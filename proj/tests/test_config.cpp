#include <doctest.h>

#include "support.hpp"
#include "tham/config.hpp"
#include "tham/error.hpp"

using namespace tham;

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

}  // namespace

TEST_CASE("lr_at: milestones apply from their epoch onward") {
  const std::vector<LrMilestone> m{{1, 0.1}, {10, 0.01}, {100, 0.001}};
  CHECK(lr_at(m, 1) == 0.1);
  CHECK(lr_at(m, 9) == 0.1);
  CHECK(lr_at(m, 10) == 0.01);
  CHECK(lr_at(m, 99) == 0.01);
  CHECK(lr_at(m, 100) == 0.001);
  CHECK(lr_at(m, 5000) == 0.001);
  CHECK_THROWS_AS(lr_at({}, 1), Error);
}

TEST_CASE("defaults: diagnosis table") {
  const ModelConfig c = ModelConfig::defaults(Task::Diagnosis);
  CHECK(c.m_c == 48);
  CHECK(c.m_d == 64);
  CHECK(c.code_dims == std::vector<std::size_t>{64, 192});
  CHECK(c.drug_dims == std::vector<std::size_t>{64, 64});
  CHECK(c.a == 64);
  CHECK(c.q == 64);
  CHECK(c.b == 32);
  CHECK(c.tree_depth == 4);
  CHECK(c.lambda == 0.01);
  CHECK(c.epochs == 200);
  CHECK(c.lr_milestones == std::vector<LrMilestone>{{1, 0.1}, {10, 0.01}, {100, 1e-3}, {200, 1e-4}});
  CHECK(c.visit_dim() == 192);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("defaults: heart failure tables") {
  const ModelConfig m3 = ModelConfig::defaults(Task::HeartFailure, Dataset::Mimic3);
  CHECK(m3.m_c == 7);
  CHECK(m3.code_dims == std::vector<std::size_t>{10, 28});
  CHECK(m3.m_d == 16);
  CHECK(m3.drug_dims == std::vector<std::size_t>{16, 16});
  CHECK(m3.a == 16);
  CHECK(m3.q == 16);
  CHECK(m3.b == 32);
  CHECK(m3.epochs == 100);
  CHECK(m3.lr_milestones == std::vector<LrMilestone>{{1, 1e-2}, {2, 1e-3}, {3, 1e-4}, {20, 1e-5}});
  const ModelConfig m4 = ModelConfig::defaults(Task::HeartFailure, Dataset::Mimic4);
  CHECK(m4.m_c == 5);
  CHECK(m4.code_dims == std::vector<std::size_t>{10, 20});
  CHECK_NOTHROW(m3.validate());
  CHECK_NOTHROW(m4.validate());
}

TEST_CASE("validate: rejects inconsistent settings") {
  auto bad = [](auto edit) {
    ModelConfig c = ModelConfig::defaults(Task::Diagnosis);
    edit(c);
    return kind_of([&] { c.validate(); });
  };
  CHECK(bad([](ModelConfig& c) { c.drug_dims = {64}; }) == ErrorKind::Config);
  CHECK(bad([](ModelConfig& c) { c.lambda = 1.5; }) == ErrorKind::Config);
  CHECK(bad([](ModelConfig& c) { c.code_dims = {64, 191}; }) == ErrorKind::Config);  // odd m
  CHECK(bad([](ModelConfig& c) { c.heads = 5; }) == ErrorKind::Config);
  CHECK(bad([](ModelConfig& c) { c.lr_milestones = {{10, 0.1}, {5, 0.01}}; }) == ErrorKind::Config);
  CHECK(bad([](ModelConfig& c) { c.lr_milestones = {}; }) == ErrorKind::Config);
  CHECK(bad([](ModelConfig& c) { c.batch_size = 0; }) == ErrorKind::Config);
  CHECK(bad([](ModelConfig& c) { c.dropout = 1.0; }) == ErrorKind::Config);
}

TEST_CASE("ablation flags parse and print") {
  CHECK(AblationFlags::parse("none") == AblationFlags{});
  const auto both = AblationFlags::parse("no_time_and_comp");
  CHECK(both.no_time_embed);
  CHECK(both.no_comprehensive);
  CHECK_FALSE(both.no_hierarchy);
  CHECK(both.to_string() == "no_time_and_comp");
  const auto h = AblationFlags::parse("no_hierarchy,no_time_embed");
  CHECK(h.to_string() == "no_hierarchy,no_time_embed");
  CHECK(AblationFlags::parse(h.to_string()) == h);
  CHECK(AblationFlags{}.to_string() == "none");
  CHECK(kind_of([] { AblationFlags::parse("no_attention"); }) == ErrorKind::Config);
}

TEST_CASE("RunConfig: parsing, comments and overrides") {
  RunConfig c = RunConfig::from_string(
      "# a comment\n"
      "task = heart_failure\n"
      "epochs = 7   # trailing comment\n"
      "\n"
      "lr_milestones = 1:0.5,3:0.05\n"
      "code_dims = 12,24\n"
      "drug_dims = 8,8\n");
  c.set("seed", "11");
  const ModelConfig m = c.model();
  CHECK(m.task == Task::HeartFailure);
  CHECK(m.epochs == 7);
  CHECK(m.seed == 11);
  CHECK(m.code_dims == std::vector<std::size_t>{12, 24});
  CHECK(m.lr_milestones == std::vector<LrMilestone>{{1, 0.5}, {3, 0.05}});
  CHECK(m.m_c == 7);  // from the heart-failure table
}

TEST_CASE("RunConfig: errors name the key or line") {
  try {
    RunConfig::from_string("epochs = 3\nbogus_key = 1\n", "run.cfg");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    const std::string msg = e.what();
    CHECK(msg.find("run.cfg:2") != std::string::npos);
    CHECK(msg.find("bogus_key") != std::string::npos);
  }
  CHECK(kind_of([] { RunConfig::from_string("just words\n"); }) == ErrorKind::Config);
  CHECK(kind_of([] { RunConfig::from_string("epochs = many\n").model(); }) == ErrorKind::Config);
  CHECK(kind_of([] { RunConfig::from_string("dataset = mimic2\n").model(); }) == ErrorKind::Config);
  CHECK(kind_of([] { RunConfig::from_string("split = 1,2\n").split(); }) == ErrorKind::Config);
  CHECK(kind_of([] { RunConfig::from_file("/nonexistent/run.cfg"); }) == ErrorKind::Config);
}

TEST_CASE("RunConfig: resolved text reproduces the run") {
  RunConfig c = RunConfig::from_string(
      "task = diagnosis\nlambda = 0.05\nsplit = 50,10,10\nsplit_seed = 4\n"
      "n_patients = 70\ninterval_profiles = 20:5,90:30\nablation = no_hierarchy\n");
  const std::string text = c.resolved_text();
  const RunConfig again = RunConfig::from_string(text);
  CHECK(again.model() == c.model());
  CHECK(again.synth().n_patients == 70);
  CHECK(again.synth().interval_profiles.size() == 2);
  CHECK(again.split().counts->train == 50);
  CHECK(again.split().seed == 4);
  CHECK(again.resolved_text() == text);
  for (const auto& k : RunConfig::known_keys()) {
    INFO(k.key);
    const bool path_key = k.key == "data" || k.key == "ontology";
    CHECK((text.find(k.key + " = ") != std::string::npos) != path_key);
  }
  c.set("data", "cohort.jsonl");
  CHECK(c.resolved_text().find("data = cohort.jsonl") != std::string::npos);
  const auto dir = test::temp_dir("config");
  c.write_resolved(dir / "resolved.cfg");
  CHECK(RunConfig::from_file(dir / "resolved.cfg").model() == c.model());
}

TEST_CASE("format_double: shortest round-trip text") {
  CHECK(format_double(180.0) == "180");
  CHECK(format_double(1e-5) == "1e-05");
  CHECK(format_double(0.01) == "0.01");
  const double x = 0.1 + 0.2;
  CHECK(std::stod(format_double(x)) == x);
}
