#include "tham/tham.h"

#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <nlohmann/json.hpp>
#include <string>

#include "tham/error.hpp"
#include "tham/pipeline.hpp"
#include "tham/synthgen.hpp"

struct tham_config {
  tham::RunConfig config;
};

struct tham_cohort {
  tham::Cohort cohort;
  std::vector<std::string> warnings;
};

struct tham_model {
  std::unique_ptr<tham::ThamModel> model;
  tham::CheckpointMeta meta;
};

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string& last_error_slot() {
  thread_local std::string message;
  return message;
}

tham_status record(tham_status status, const std::string& message) {
  last_error_slot() = message;
  return status;
}

template <class F>
tham_status guarded(F&& body) {
  try {
    body();
    last_error_slot().clear();
    return THAM_OK;
  } catch (const tham::Error& e) {
    return record(static_cast<tham_status>(e.kind()), e.what());
  } catch (const fs::filesystem_error& e) {
    return record(THAM_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return record(THAM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return record(THAM_ERR_INTERNAL, e.what());
  } catch (...) {
    return record(THAM_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) tham::fail(tham::ErrorKind::Invalid, std::string(what) + " must not be NULL");
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) tham::fail(tham::ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) tham::fail(tham::ErrorKind::Io, "failed writing " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) tham::fail(tham::ErrorKind::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_rows(const fs::path& path, const tham::Vocab& ids, const tham::ad::Mat& values) {
  std::string text;
  for (tham::ad::Index r = 0; r < values.rows(); ++r) {
    text += ids.id(static_cast<tham::CodeId>(r));
    for (tham::ad::Index c = 0; c < values.cols(); ++c) text += '\t' + format_value(values(r, c));
    text += '\n';
  }
  write_text(path, text);
}

}  // namespace

extern "C" {

const char* tham_version(void) { return "1.0.0"; }

const char* tham_last_error(void) { return last_error_slot().c_str(); }

void tham_string_free(char* s) { std::free(s); }

tham_status tham_config_new(tham_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new tham_config{};
  });
}

tham_status tham_config_load(const char* path, tham_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto cfg = std::make_unique<tham_config>();
    cfg->config = tham::RunConfig::from_file(path);
    *out = cfg.release();
  });
}

tham_status tham_config_set(tham_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    cfg->config.set(key, value);
  });
}

tham_status tham_config_resolved(const tham_config* cfg, char** text_out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(text_out, "text_out");
    *text_out = duplicate(cfg->config.resolved_text());
  });
}

tham_status tham_config_write(const tham_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "cfg");
    require(path, "path");
    cfg->config.write_resolved(path);
  });
}

tham_status tham_config_help(char** text_out) {
  return guarded([&] {
    require(text_out, "text_out");
    std::string text;
    for (const auto& k : tham::RunConfig::known_keys()) {
      text += k.key;
      text.append(k.key.size() < 18 ? 18 - k.key.size() : 1, ' ');
      text += k.help + "\n";
    }
    *text_out = duplicate(text);
  });
}

void tham_config_free(tham_config* cfg) { delete cfg; }

tham_status tham_generate(const tham_config* cfg, const char* out_dir) {
  return guarded([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    const tham::SynthData data = tham::generate(cfg->config.synth());
    const std::string resolved = cfg->config.resolved_text();
    const fs::path dir(out_dir);
    make_dir(dir);
    tham::write_jsonl(data.cohort, dir / "cohort.jsonl");
    tham::write_edge_list(data.ontology, dir / "ontology.tsv");
    write_text(dir / "truth.json", data.truth.to_json());
    write_text(dir / "resolved.cfg", resolved);
  });
}

tham_status tham_cohort_load_jsonl(const char* path, tham_cohort** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<tham_cohort>();
    c->cohort = tham::load_jsonl(path, &c->warnings);
    *out = c.release();
  });
}

tham_status tham_cohort_load_mimic(const char* admissions, const char* diagnoses,
                                   const char* prescriptions, tham_cohort** out) {
  return guarded([&] {
    require(admissions, "admissions");
    require(diagnoses, "diagnoses");
    require(out, "out");
    *out = nullptr;
    auto c = std::make_unique<tham_cohort>();
    std::optional<fs::path> presc;
    if (prescriptions != nullptr) presc = prescriptions;
    c->cohort = tham::load_mimic_csv(admissions, diagnoses, presc, &c->warnings);
    *out = c.release();
  });
}

size_t tham_cohort_patient_count(const tham_cohort* cohort) {
  return cohort == nullptr ? 0 : cohort->cohort.patients.size();
}

tham_status tham_cohort_warnings(const tham_cohort* cohort, char** text_out) {
  return guarded([&] {
    require(cohort, "cohort");
    require(text_out, "text_out");
    std::string text;
    for (const auto& w : cohort->warnings) text += w + "\n";
    *text_out = duplicate(text);
  });
}

void tham_cohort_free(tham_cohort* cohort) { delete cohort; }

tham_status tham_build_graphs(const tham_config* cfg, const tham_cohort* cohort,
                              const char* out_dir) {
  return guarded([&] {
    require(cfg, "cfg");
    require(cohort, "cohort");
    require(out_dir, "out_dir");
    const tham::ModelConfig model = cfg->config.model();
    const tham::PreparedData data =
        tham::prepare(cohort->cohort, nullptr, model, cfg->config.split());
    const fs::path dir(out_dir);
    make_dir(dir);
    tham::write_coo(data.graphs.bdc, dir / "B_DC.coo");
    tham::write_coo(data.graphs.acc, dir / "A_CC.coo");
    std::string codes, drugs;
    for (const auto& id : data.train_cohort.codes.ids()) codes += id + "\n";
    for (const auto& id : data.train_cohort.drugs.ids()) drugs += id + "\n";
    write_text(dir / "code_vocab.tsv", codes);
    write_text(dir / "drug_vocab.tsv", drugs);
  });
}

tham_status tham_train(const tham_config* cfg, const tham_cohort* cohort, const char* ontology_path,
                       const char* out_dir, tham_epoch_callback callback, void* user,
                       tham_model** out) {
  return guarded([&] {
    require(cfg, "cfg");
    require(cohort, "cohort");
    if (out != nullptr) *out = nullptr;
    const tham::ModelConfig model = cfg->config.model();
    const tham::SplitConfig split = cfg->config.split();
    const std::string resolved = cfg->config.resolved_text();

    std::vector<tham::Edge> edges;
    if (ontology_path != nullptr) edges = tham::read_edge_list(ontology_path);
    const tham::PreparedData data =
        tham::prepare(cohort->cohort, ontology_path ? &edges : nullptr, model, split);

    std::ofstream log;
    fs::path dir;
    if (out_dir != nullptr) {
      dir = out_dir;
      make_dir(dir);
      write_text(dir / "resolved.cfg", resolved);
      log.open(dir / "train_log.jsonl", std::ios::binary);
      if (!log) tham::fail(tham::ErrorKind::Io, "cannot write " + (dir / "train_log.jsonl").string());
    }
    auto on_epoch = [&](const tham::EpochLog& e) {
      json line;
      line["epoch"] = e.epoch;
      line["lr"] = e.lr;
      line["train_loss"] = e.train_loss;
      line["valid_loss"] = e.valid_loss;
      line["best_valid_loss"] = e.best_valid_loss;
      line["improved"] = e.improved;
      const std::string text = line.dump();
      if (log.is_open()) log << text << '\n' << std::flush;
      if (callback != nullptr) callback(text.c_str(), user);
    };
    tham::TrainOutcome outcome = tham::train(data, model, split, on_epoch);
    if (out_dir != nullptr) tham::save_checkpoint(*outcome.model, outcome.meta, dir / "model.tham");
    if (out != nullptr) *out = new tham_model{std::move(outcome.model), outcome.meta};
  });
}

tham_status tham_model_load(const char* path, tham_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    tham::LoadedModel loaded = tham::load_checkpoint(path);
    *out = new tham_model{std::move(loaded.model), loaded.meta};
  });
}

tham_status tham_model_save(const tham_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    tham::save_checkpoint(*model->model, model->meta, path);
  });
}

const char* tham_model_task(const tham_model* model) {
  if (model == nullptr) return "";
  return model->model->config().task == tham::Task::Diagnosis ? "diagnosis" : "heart_failure";
}

void tham_model_free(tham_model* model) { delete model; }

tham_status tham_evaluate(tham_model* const* models, size_t n_models, const tham_cohort* cohort,
                          const char* split, const size_t* ks, size_t n_ks,
                          const char* expected_task, char** json_out) {
  return guarded([&] {
    require(models, "models");
    require(cohort, "cohort");
    require(json_out, "json_out");
    if (n_models == 0) tham::fail(tham::ErrorKind::Invalid, "no models to evaluate");
    if (n_ks > 0) require(ks, "ks");
    const std::string which = split ? split : "test";
    std::vector<std::size_t> k_list(ks, ks + n_ks);
    if (k_list.empty()) k_list = {10, 20};

    tham::EvalReport report;
    report.split = which;
    for (size_t i = 0; i < n_models; ++i) {
      require(models[i], "models[i]");
      tham::ThamModel& m = *models[i]->model;
      const tham::Task task = m.config().task;
      if (expected_task != nullptr && tham::parse_task(expected_task) != task) {
        tham::fail(tham::ErrorKind::Config,
                   "task mismatch: checkpoint was trained for " +
                       std::string(tham::task_name(task)) + ", evaluation asked for " +
                       std::string(tham::task_name(tham::parse_task(expected_task))));
      }
      if (i == 0) {
        report.task = task;
      } else if (report.task != task) {
        tham::fail(tham::ErrorKind::Config, "checkpoints were trained for different tasks");
      }
      const auto examples = tham::partition_for(m, models[i]->meta.split, cohort->cohort, which);
      report.examples = examples.size();
      report.add(m.config().seed, tham::evaluate_metrics(m, examples, k_list));
    }
    *json_out = duplicate(report.to_json());
  });
}

tham_status tham_predict_json(tham_model* model, const char* patient_json, size_t k,
                              char** json_out) {
  return guarded([&] {
    require(model, "model");
    require(patient_json, "patient_json");
    require(json_out, "json_out");
    tham::ThamModel& m = *model->model;
    tham::Vocab codes = m.codes();
    tham::Vocab drugs = m.drugs();
    std::vector<std::string> unknown;
    tham::Patient p = tham::parse_patient_json(patient_json, codes, drugs, false, &unknown);
    if (p.visits.empty()) tham::fail(tham::ErrorKind::Invalid, "patient has no visits");
    tham::normalize_visits(p);

    json doc;
    doc["patient_id"] = p.id;
    doc["task"] = std::string(tham::task_name(m.config().task));
    if (m.config().task == tham::Task::Diagnosis) {
      auto& preds = doc["predictions"] = json::array();
      for (const auto& [code, prob] : tham::predict_top_k(m, p.visits, p.intervals, k)) {
        preds.push_back({{"code", m.codes().id(code)}, {"probability", prob}});
      }
    } else {
      const auto top = tham::predict_top_k(m, p.visits, p.intervals, 1);
      doc["probability"] = top.front().second;
    }
    auto& warnings = doc["warnings"] = json::array();
    for (const auto& code : unknown) warnings.push_back("unknown code " + code + " mapped to UNK");
    *json_out = duplicate(doc.dump());
  });
}

tham_status tham_export_embeddings(tham_model* model, const char* out_dir) {
  return guarded([&] {
    require(model, "model");
    require(out_dir, "out_dir");
    tham::ThamModel& m = *model->model;
    tham::NodeFeatures features;
    {
      tham::ad::NoGradGuard guard;
      tham::ad::FlushDenormalsGuard flush;
      features = m.graph_features(tham::ad::Mode::Eval);
    }
    const fs::path dir(out_dir);
    make_dir(dir);
    write_rows(dir / "code_embeddings.tsv", m.codes(), features.codes.value());
    write_rows(dir / "drug_embeddings.tsv", m.drugs(), features.drugs.value());
  });
}

}  // extern "C"
