#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tham/config.hpp"
#include "tham/model.hpp"
#include "tham/pipeline.hpp"
#include "tham/synthgen.hpp"

namespace tham::test {

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("tham_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Small synthetic cohort for quick model tests.
inline SynthConfig small_synth(std::size_t patients, std::uint64_t seed) {
  SynthConfig s;
  s.n_patients = patients;
  s.n_codes = 24;
  s.n_drugs = 8;
  s.tree_depth = 3;
  s.branching = 3;
  s.n_clusters = 4;
  s.min_visits = 2;
  s.max_visits = 4;
  s.seed = seed;
  return s;
}

/// Narrow model so gradient checks and short fits stay fast.
inline ModelConfig tiny_config(Task task = Task::Diagnosis) {
  ModelConfig c;
  c.task = task;
  c.m_c = 3;
  c.m_d = 4;
  c.code_dims = {6, 8};
  c.drug_dims = {5, 5};
  c.a = 4;
  c.q = 4;
  c.b = 3;
  c.tree_depth = 3;
  c.heads = 2;
  c.ffn_size = 6;
  c.epochs = 3;
  c.batch_size = 4;
  c.lr_milestones = {{1, 1e-2}};
  c.seed = 5;
  return c;
}

struct Built {
  PreparedData data;
  std::unique_ptr<ThamModel> model;
};

inline Built build(const SynthData& synth, const ModelConfig& config, SplitConfig split = {}) {
  Built b;
  b.data = prepare(synth.cohort, &synth.ontology, config, split);
  b.model = std::make_unique<ThamModel>(config, b.data.tree, b.data.train_cohort.codes,
                                        b.data.train_cohort.drugs, b.data.graphs);
  return b;
}

inline ad::Mat random_mat(ad::Index r, ad::Index c, std::mt19937_64& gen, double lo = -1.0,
                          double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ad::Mat m(r, c);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = u(gen);
  return m;
}

}  // namespace tham::test
