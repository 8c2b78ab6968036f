#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// stdout is captured; stderr goes to a side file so messages can be checked.
Run run(const std::string& args, const fs::path& err_file = {}) {
  std::string cmd = std::string(THAM_CLI_PATH) + " " + args;
  cmd += err_file.empty() ? " 2>/dev/null" : " 2>" + err_file.string();
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) {
    if (!l.empty()) out.push_back(l);
  }
  return out;
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("tham_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "run.cfg") << "# small run\n"
                                      "n_patients = 60\nn_codes = 24\nn_drugs = 8\ntree_depth = 3\n"
                                      "branching = 3\nn_clusters = 4\nmax_visits = 4\nsynth_seed = 2\n"
                                      "m_c = 3\nm_d = 4\ncode_dims = 6,8\ndrug_dims = 5,5\n"
                                      "a = 4\nq = 4\nb = 3\nheads = 2\nffn_size = 6\n"
                                      "epochs = 3\nbatch_size = 8\nlr_milestones = 1:0.01\n";
  }
  std::string p(const std::string& rel) const { return (dir / rel).string(); }
};

const Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("cli: help and keys") {
  const Run help = run("--help");
  CHECK(help.code == 0);
  for (const char* cmd : {"generate", "train", "evaluate", "predict", "export-embeddings", "build-graphs", "ablate"}) {
    CHECK(help.out.find(cmd) != std::string::npos);
  }
  const Run keys = run("keys");
  CHECK(keys.code == 0);
  CHECK(keys.out.find("lr_milestones") != std::string::npos);
  CHECK(run("no-such-command").code == 2);
}

TEST_CASE("cli: generate writes the file contract deterministically") {
  const auto& w = ws();
  REQUIRE(run("generate --config " + w.p("run.cfg") + " --out " + w.p("data")).code == 0);
  for (const char* f : {"cohort.jsonl", "ontology.tsv", "truth.json", "resolved.cfg"}) {
    CHECK(fs::exists(w.dir / "data" / f));
  }
  CHECK(lines_of(read_text(w.dir / "data" / "cohort.jsonl")).size() == 60);
  REQUIRE(run("generate --config " + w.p("run.cfg") + " --out " + w.p("data2")).code == 0);
  for (const char* f : {"cohort.jsonl", "ontology.tsv", "truth.json", "resolved.cfg"}) {
    CHECK(read_text(w.dir / "data" / f) == read_text(w.dir / "data2" / f));
  }
  const Run missing = run("generate --config " + w.p("absent.cfg") + " --out " + w.p("x"), w.dir / "err.txt");
  CHECK(missing.code == 2);
  CHECK(read_text(w.dir / "err.txt").find("absent.cfg") != std::string::npos);
  CHECK(run("generate --config " + w.p("run.cfg") + " --set bogus=1 --out " + w.p("x")).code == 2);
}

TEST_CASE("cli: train, evaluate, predict, export") {
  const auto& w = ws();
  if (!fs::exists(w.dir / "data" / "cohort.jsonl")) {
    REQUIRE(run("generate --config " + w.p("run.cfg") + " --out " + w.p("data")).code == 0);
  }
  const std::string data = " --data " + w.p("data/cohort.jsonl") + " --ontology " + w.p("data/ontology.tsv");
  REQUIRE(run("train" + data + " --config " + w.p("run.cfg") + " --quiet --out " + w.p("run1")).code == 0);
  for (const char* f : {"model.tham", "train_log.jsonl", "resolved.cfg"}) CHECK(fs::exists(w.dir / "run1" / f));
  const auto log = lines_of(read_text(w.dir / "run1" / "train_log.jsonl"));
  REQUIRE(log.size() == 3);
  for (const char* key : {"epoch", "train_loss", "valid_loss", "lr"}) CHECK(json::parse(log[0]).contains(key));

  // resolved.cfg alone reproduces the run
  REQUIRE(run("train" + data + " --config " + w.p("run1/resolved.cfg") + " --quiet --out " + w.p("run2")).code == 0);
  CHECK(read_text(w.dir / "run1" / "model.tham") == read_text(w.dir / "run2" / "model.tham"));

  const Run eval = run("evaluate --checkpoint " + w.p("run1/model.tham") + " --data " + w.p("data/cohort.jsonl") +
                       " --split test --k 10,20,40");
  REQUIRE(eval.code == 0);
  const json report = json::parse(eval.out);
  CHECK(report["metrics"].contains("w_f1"));
  for (const char* group : {"r_at", "occurred_r_at", "emerging_r_at"}) {
    for (const char* k : {"10", "20", "40"}) CHECK(report["metrics"][group].contains(k));
  }
  CHECK(run("evaluate --checkpoint " + w.p("run1/model.tham") + " --data " + w.p("data/cohort.jsonl") +
            " --task heart_failure").code == 2);
  CHECK(run("evaluate --checkpoint " + w.p("nothing.tham") + " --data " + w.p("data/cohort.jsonl")).code == 4);

  const std::string first = lines_of(read_text(w.dir / "data" / "cohort.jsonl")).front();
  std::ofstream(w.dir / "patient.jsonl") << first << "\n";
  const Run pred = run("predict --checkpoint " + w.p("run1/model.tham") + " --patient @" + w.p("patient.jsonl") + " --k 10");
  REQUIRE(pred.code == 0);
  const json p = json::parse(pred.out);
  REQUIRE(p["predictions"].size() == 10);
  for (std::size_t i = 1; i < 10; ++i) {
    CHECK(p["predictions"][i - 1]["probability"].get<double>() >= p["predictions"][i]["probability"].get<double>());
  }

  REQUIRE(run("export-embeddings --checkpoint " + w.p("run1/model.tham") + " --out " + w.p("emb")).code == 0);
  CHECK(lines_of(read_text(w.dir / "emb" / "code_embeddings.tsv")).size() >= 20);
  CHECK(lines_of(read_text(w.dir / "emb" / "drug_embeddings.tsv")).size() == 8);

  REQUIRE(run("build-graphs --data " + w.p("data/cohort.jsonl") + " --config " + w.p("run.cfg") + " --out " + w.p("graphs")).code == 0);
  CHECK(fs::exists(w.dir / "graphs" / "A_CC.coo"));
  CHECK(lines_of(read_text(w.dir / "graphs" / "code_vocab.tsv")).size() ==
        lines_of(read_text(w.dir / "emb" / "code_embeddings.tsv")).size());
}
