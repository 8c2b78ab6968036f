#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tham/admerge.hpp"
#include "tham/autodiff.hpp"
#include "tham/cograph.hpp"
#include "tham/cohort.hpp"
#include "tham/config.hpp"
#include "tham/hgnn.hpp"
#include "tham/ontology.hpp"
#include "tham/optim.hpp"
#include "tham/tempattn.hpp"
#include "tham/visitenc.hpp"

namespace tham {

/// Per-patient attention weights of one forward pass.
struct AttentionTrace {
  ad::Mat alpha;                        // 1 x T
  ad::Mat beta;                         // 1 x T, empty when the comprehensive phase is off
  ad::Mat delta;                        // 1 x 2, empty when the comprehensive phase is off
  ad::Mat eta;                          // 1 x T
  std::vector<ad::Mat> self_attention;  // per encoder layer and head, T x T
};

/// The full network: hierarchy, graph stack, visit encoder, both attention
/// phases, merge gate and output head, over one frozen vocabulary.
class ThamModel {
 public:
  ThamModel(const ModelConfig& config, OntologyTree tree, Vocab codes, Vocab drugs,
            const CoGraphs& graphs);

  ThamModel(const ThamModel&) = delete;
  ThamModel& operator=(const ThamModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ad::ParamStore& params() { return store_; }
  const ad::ParamStore& params() const { return store_; }
  const Vocab& codes() const { return codes_; }
  const Vocab& drugs() const { return drugs_; }
  const OntologyTree& tree() const { return tree_; }
  std::size_t output_dim() const;

  NodeFeatures graph_features(ad::Mode mode);

  /// Probabilities (1 x output_dim) for one history.
  ad::Tensor forward_patient(std::span<const Visit> history, std::span<const std::int64_t> intervals,
                             const ad::Tensor& code_features, ad::Mode mode,
                             AttentionTrace* trace = nullptr);
  /// Pre-sigmoid head output for one history.
  ad::Tensor forward_logits(std::span<const Visit> history, std::span<const std::int64_t> intervals,
                            const ad::Tensor& code_features, ad::Mode mode,
                            AttentionTrace* trace = nullptr);

  /// 1 x output_dim label row.
  ad::Mat target(const Example& example) const;

  /// Mean BCE over the examples. Graph features are computed once, or per
  /// example when gnn_per_sample is set.
  ad::Tensor loss(std::span<const Example* const> examples, ad::Mode mode);
  ad::Tensor loss(std::span<const Example> examples, ad::Mode mode);

  // Components, exposed for inspection and tests.
  const HierEmbedding& hierarchy() const { return hierarchy_; }
  const Hgnn& gnn() const { return gnn_; }
  const IntervalGate& time_gate() const { return time_gate_; }
  const TimeAwareEncoder& encoder() const { return encoder_; }
  const PreliminaryAttention& preliminary() const { return preliminary_; }
  const ComprehensiveAttention& comprehensive() const { return comprehensive_; }
  const MergeGate& merge_gate() const { return merge_gate_; }

 private:
  ModelConfig config_;
  OntologyTree tree_;
  Vocab codes_;
  Vocab drugs_;
  ad::ParamStore store_;
  ad::Tensor bdc_;
  ad::Tensor acc_;
  HierEmbedding hierarchy_;
  Hgnn gnn_;
  IntervalGate time_gate_;
  TimeAwareEncoder encoder_;
  PreliminaryAttention preliminary_;
  ComprehensiveAttention comprehensive_;
  MergeGate merge_gate_;
  std::vector<ad::Tensor> head_weights_;
  std::vector<ad::Tensor> head_biases_;
  Rng dropout_rng_;
};

struct CheckpointMeta {
  double best_valid_loss = 0.0;
  int best_epoch = 0;
  SplitConfig split;
};

void save_checkpoint(const ThamModel& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path);

struct LoadedModel {
  std::unique_ptr<ThamModel> model;
  CheckpointMeta meta;
};

LoadedModel load_checkpoint(const std::filesystem::path& path);

std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace tham
