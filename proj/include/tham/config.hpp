#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tham/cohort.hpp"
#include "tham/synthgen.hpp"

namespace tham {

struct AblationFlags {
  bool no_hierarchy = false;      // unstructured code embedding matrix
  bool no_time_embed = false;     // visit vectors skip the interval gate
  bool no_comprehensive = false;  // final weights are the preliminary ones

  bool any() const { return no_hierarchy || no_time_embed || no_comprehensive; }
  std::string to_string() const;
  static AblationFlags parse(std::string_view text);
  bool operator==(const AblationFlags&) const = default;
};

struct LrMilestone {
  int epoch = 1;  // inclusive: this rate applies from `epoch` onward
  double lr = 0.1;
  bool operator==(const LrMilestone&) const = default;
};

/// Learning rate in effect at a 1-based epoch.
double lr_at(const std::vector<LrMilestone>& milestones, int epoch);

enum class Dataset { Mimic3, Mimic4 };

struct ModelConfig {
  Task task = Task::Diagnosis;
  std::size_t m_c = 48;                          // per-level code embedding size
  std::size_t m_d = 64;                          // drug embedding size
  std::vector<std::size_t> code_dims{64, 192};   // code feature size after each GNN layer
  std::vector<std::size_t> drug_dims{64, 64};    // drug feature size after each GNN layer
  std::size_t a = 64;                            // interval gate width
  std::size_t q = 64;                            // query/key width
  std::size_t b = 32;                            // local attention width
  std::size_t tree_depth = 4;                    // H
  double lambda = 0.01;
  std::size_t heads = 4;
  std::size_t encoder_layers = 1;
  std::size_t ffn_size = 1024;
  std::size_t head_layers = 1;
  int epochs = 200;
  std::vector<LrMilestone> lr_milestones{{1, 1e-1}, {10, 1e-2}, {100, 1e-3}, {200, 1e-4}};
  std::uint64_t seed = 0;
  AblationFlags ablation;
  std::size_t batch_size = 32;
  double dropout = 0.0;
  double leaky_slope = 0.01;
  double time_scale = 180.0;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  bool gnn_per_sample = false;

  /// Visit embedding size m (the last code feature size).
  std::size_t visit_dim() const;
  std::size_t gnn_layers() const { return code_dims.size(); }
  void validate() const;

  /// Hyperparameters reported for the MIMIC-III / MIMIC-IV experiments.
  static ModelConfig defaults(Task task, Dataset dataset = Dataset::Mimic3);
  bool operator==(const ModelConfig&) const = default;
};

struct SplitConfig {
  std::optional<SplitCounts> counts;  // nullopt: 80/10/10
  std::uint64_t seed = 0;
};

/// Flat `key = value` configuration merged from a file and overrides, with
/// unknown keys rejected. Resolution applies task/dataset defaults first.
class RunConfig {
 public:
  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_string(std::string_view text, const std::string& origin = "<string>");

  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  ModelConfig model() const;
  SynthConfig synth() const;
  SplitConfig split() const;

  /// Every known key with its resolved value; reloading it reproduces the run.
  std::string resolved_text() const;
  void write_resolved(const std::filesystem::path& path) const;

  struct KeyInfo {
    std::string key;
    std::string help;
  };
  static const std::vector<KeyInfo>& known_keys();

 private:
  std::map<std::string, std::string> values_;
};

std::string format_double(double v);

}  // namespace tham
