// Command-line front end over the C interface.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tham/tham.h"

namespace {

namespace fs = std::filesystem;

// Exit codes: 0 ok, 2 config/schema, 3 numeric failure, 4 I/O, 1 other.
int exit_code(tham_status s) {
  switch (s) {
    case THAM_OK: return 0;
    case THAM_ERR_CONFIG:
    case THAM_ERR_PARSE:
    case THAM_ERR_SHAPE:
    case THAM_ERR_INVALID: return 2;
    case THAM_ERR_NUMERIC: return 3;
    case THAM_ERR_IO: return 4;
    default: return 1;
  }
}

struct Failure {
  int code;
};

void check(tham_status s, const std::string& context) {
  if (s == THAM_OK) return;
  std::cerr << "tham " << context << ": " << tham_last_error() << "\n";
  throw Failure{exit_code(s)};
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&& other) noexcept : ptr(other.ptr) { other.ptr = nullptr; }
  ~Handle() {
    if (ptr) Free(ptr);
  }
};

using Config = Handle<tham_config, tham_config_free>;
using CohortHandle = Handle<tham_cohort, tham_cohort_free>;
using Model = Handle<tham_model, tham_model_free>;

std::string take(char* s) {
  std::string out = s ? s : "";
  tham_string_free(s);
  return out;
}

struct DataOptions {
  std::string jsonl;
  std::string admissions;
  std::string diagnoses;
  std::string prescriptions;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", jsonl, "cohort JSONL file");
    cmd->add_option("--admissions", admissions, "MIMIC-style admissions CSV (instead of --data)");
    cmd->add_option("--diagnoses", diagnoses, "MIMIC-style diagnoses CSV");
    cmd->add_option("--prescriptions", prescriptions, "MIMIC-style prescriptions CSV (optional)");
  }

  CohortHandle load() const {
    CohortHandle c;
    if (!jsonl.empty()) {
      check(tham_cohort_load_jsonl(jsonl.c_str(), &c.ptr), "loading " + jsonl);
    } else if (!admissions.empty() && !diagnoses.empty()) {
      check(tham_cohort_load_mimic(admissions.c_str(), diagnoses.c_str(),
                                   prescriptions.empty() ? nullptr : prescriptions.c_str(), &c.ptr),
            "loading MIMIC tables");
    } else {
      std::cerr << "tham: give --data, or --admissions with --diagnoses\n";
      throw Failure{2};
    }
    const std::string warnings = take([&] {
      char* s = nullptr;
      tham_cohort_warnings(c.ptr, &s);
      return s;
    }());
    if (!warnings.empty()) std::cerr << warnings;
    return c;
  }

  std::string path_key() const { return jsonl.empty() ? admissions : jsonl; }
};

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Config cfg;
  if (path.empty()) {
    check(tham_config_new(&cfg.ptr), "config");
  } else {
    check(tham_config_load(path.c_str(), &cfg.ptr), "config");
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "tham: --set expects key=value, got '" << kv << "'\n";
      throw Failure{2};
    }
    check(tham_config_set(cfg.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()),
          "config");
  }
  return cfg;
}

void set_key(Config& cfg, const char* key, const std::string& value) {
  if (!value.empty()) check(tham_config_set(cfg.ptr, key, value.c_str()), "config");
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string piece;
  while (std::getline(in, piece, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(piece, &used);
      if (used != piece.size() || v < 1) throw std::invalid_argument(piece);
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      std::cerr << "tham: bad --k entry '" << piece << "'\n";
      throw Failure{2};
    }
  }
  return ks;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) {
    std::cerr << "tham: cannot write " << path << "\n";
    throw Failure{4};
  }
}

void print_epoch(const char* line, void*) { std::cerr << line << "\n"; }

std::string config_help() {
  char* s = nullptr;
  tham_config_help(&s);
  return "Configuration keys (flat `key = value` lines, `#` comments):\n" + take(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"THAM health-event prediction: generate, train, evaluate, predict"};
  app.require_subcommand(1);
  app.footer(config_help());

  std::string config_path, out_dir, ontology, seed, ablation, split = "test", ks = "10,20,40",
                                                                   task, patient, report_out,
                                                                   seeds = "1,2,3";
  std::vector<std::string> overrides, checkpoints, variants;
  std::size_t top_k = 10;
  bool quiet = false;
  DataOptions data;

  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--set", overrides, "override a config key (key=value), repeatable");
  };

  auto* generate = app.add_subcommand("generate", "write a synthetic cohort, ontology and ground truth");
  generate->add_option("--config", config_path, "config file");
  generate->add_option("--out", out_dir, "output directory")->required();
  add_overrides(generate);

  auto* train = app.add_subcommand("train", "train a model on the configured split");
  data.attach(train);
  train->add_option("--ontology", ontology, "ontology edge list (child<TAB>parent)");
  train->add_option("--config", config_path, "config file");
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--seed", seed, "model seed");
  train->add_option("--ablation", ablation, "none, no_hierarchy, no_time_embed, no_comprehensive, no_time_and_comp");
  train->add_flag("--quiet", quiet, "do not echo the per-epoch log");
  add_overrides(train);

  auto* evaluate = app.add_subcommand("evaluate", "report metrics of one or more checkpoints");
  evaluate->add_option("--checkpoint", checkpoints, "checkpoint file, repeat for several seeds")->required();
  data.attach(evaluate);
  evaluate->add_option("--split", split, "train, valid, test or all")->capture_default_str();
  evaluate->add_option("--k", ks, "recall cut-offs, comma-separated")->capture_default_str();
  evaluate->add_option("--task", task, "expected task; a mismatch exits with code 2");
  evaluate->add_option("--out", report_out, "also write the report to this file");

  auto* predict = app.add_subcommand("predict", "predict the next visit of one patient");
  predict->add_option("--checkpoint", checkpoints, "checkpoint file")->required()->expected(1);
  predict->add_option("--patient", patient, "one JSONL patient line, or @file")->required();
  predict->add_option("--k", top_k, "number of codes to return")->capture_default_str();

  auto* export_cmd = app.add_subcommand("export-embeddings", "write final code and drug features as TSV");
  export_cmd->add_option("--checkpoint", checkpoints, "checkpoint file")->required()->expected(1);
  export_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* graphs = app.add_subcommand("build-graphs", "dump the co-occurrence matrices of the training split");
  data.attach(graphs);
  graphs->add_option("--config", config_path, "config file");
  graphs->add_option("--out", out_dir, "output directory")->required();
  add_overrides(graphs);

  auto* ablate = app.add_subcommand("ablate", "train and evaluate every ablation variant over several seeds");
  data.attach(ablate);
  ablate->add_option("--ontology", ontology, "ontology edge list");
  ablate->add_option("--config", config_path, "config file");
  ablate->add_option("--out", out_dir, "output directory")->required();
  ablate->add_option("--seeds", seeds, "comma-separated seeds")->capture_default_str();
  ablate->add_option("--variants", variants, "variants to run (default: all five)");
  ablate->add_option("--k", ks, "recall cut-offs")->capture_default_str();
  add_overrides(ablate);

  auto* keys = app.add_subcommand("keys", "list every configuration key");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*keys) {
      std::cout << config_help();
    } else if (*generate) {
      Config cfg = load_config(config_path, overrides);
      check(tham_generate(cfg.ptr, out_dir.c_str()), "generate");
    } else if (*train) {
      Config cfg = load_config(config_path, overrides);
      set_key(cfg, "seed", seed);
      set_key(cfg, "ablation", ablation);
      set_key(cfg, "data", data.path_key());
      set_key(cfg, "ontology", ontology);
      CohortHandle cohort = data.load();
      check(tham_train(cfg.ptr, cohort.ptr, ontology.empty() ? nullptr : ontology.c_str(),
                       out_dir.c_str(), quiet ? nullptr : print_epoch, nullptr, nullptr),
            "train");
    } else if (*evaluate) {
      std::vector<Model> models;
      std::vector<tham_model*> raw;
      for (const auto& path : checkpoints) {
        Model m;
        check(tham_model_load(path.c_str(), &m.ptr), "loading " + path);
        raw.push_back(m.ptr);
        models.push_back(std::move(m));
      }
      if (!task.empty() && task != tham_model_task(raw.front())) {
        // Checked before touching the data so the guard needs no cohort.
        std::cerr << "tham evaluate: task mismatch: checkpoint was trained for "
                  << tham_model_task(raw.front()) << ", evaluation asked for " << task << "\n";
        return 2;
      }
      CohortHandle cohort = data.load();
      const auto k_list = parse_ks(ks);
      char* json = nullptr;
      check(tham_evaluate(raw.data(), raw.size(), cohort.ptr, split.c_str(), k_list.data(),
                          k_list.size(), task.empty() ? nullptr : task.c_str(), &json),
            "evaluate");
      const std::string report = take(json);
      std::cout << report;
      if (!report_out.empty()) write_file(report_out, report);
    } else if (*predict) {
      Model m;
      check(tham_model_load(checkpoints.front().c_str(), &m.ptr), "loading " + checkpoints.front());
      std::string line = patient;
      if (!line.empty() && line.front() == '@') {
        std::ifstream in(line.substr(1));
        if (!in) {
          std::cerr << "tham predict: cannot read " << line.substr(1) << "\n";
          return 4;
        }
        std::getline(in, line);
      }
      char* json = nullptr;
      check(tham_predict_json(m.ptr, line.c_str(), top_k, &json), "predict");
      std::cout << take(json) << "\n";
    } else if (*export_cmd) {
      Model m;
      check(tham_model_load(checkpoints.front().c_str(), &m.ptr), "loading " + checkpoints.front());
      check(tham_export_embeddings(m.ptr, out_dir.c_str()), "export-embeddings");
    } else if (*graphs) {
      Config cfg = load_config(config_path, overrides);
      CohortHandle cohort = data.load();
      check(tham_build_graphs(cfg.ptr, cohort.ptr, out_dir.c_str()), "build-graphs");
    } else if (*ablate) {
      if (variants.empty()) {
        variants = {"none", "no_hierarchy", "no_time_embed", "no_comprehensive", "no_time_and_comp"};
      }
      std::vector<std::string> seed_list;
      {
        std::stringstream in(seeds);
        std::string piece;
        while (std::getline(in, piece, ',')) seed_list.push_back(piece);
      }
      CohortHandle cohort = data.load();
      const auto k_list = parse_ks(ks);
      std::string summary = "{\n";
      for (std::size_t v = 0; v < variants.size(); ++v) {
        std::vector<Model> models;
        std::vector<tham_model*> raw;
        for (const auto& s : seed_list) {
          Config cfg = load_config(config_path, overrides);
          set_key(cfg, "seed", s);
          set_key(cfg, "ablation", variants[v]);
          set_key(cfg, "data", data.path_key());
          set_key(cfg, "ontology", ontology);
          const fs::path run = fs::path(out_dir) / variants[v] / ("seed" + s);
          Model m;
          std::cerr << "ablate: " << variants[v] << " seed " << s << "\n";
          check(tham_train(cfg.ptr, cohort.ptr, ontology.empty() ? nullptr : ontology.c_str(),
                           run.string().c_str(), nullptr, nullptr, &m.ptr),
                "train");
          raw.push_back(m.ptr);
          models.push_back(std::move(m));
        }
        char* json = nullptr;
        check(tham_evaluate(raw.data(), raw.size(), cohort.ptr, "test", k_list.data(),
                            k_list.size(), nullptr, &json),
              "evaluate");
        std::string report = take(json);
        while (!report.empty() && report.back() == '\n') report.pop_back();
        summary += "  \"" + variants[v] + "\": " + report + (v + 1 < variants.size() ? ",\n" : "\n");
      }
      summary += "}\n";
      write_file(fs::path(out_dir) / "ablation.json", summary);
      std::cout << summary;
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
