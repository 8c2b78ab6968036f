#include "tham/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "tham/error.hpp"

namespace tham {
namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'T', 'H', 'A', 'M'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint64_t kDropoutStream = 0x9e3779b97f4a7c15ULL;

ad::Index dim(std::size_t v) { return static_cast<ad::Index>(v); }

}  // namespace

ThamModel::ThamModel(const ModelConfig& config, OntologyTree tree, Vocab codes, Vocab drugs,
                     const CoGraphs& graphs)
    : config_(config),
      tree_(std::move(tree)),
      codes_(std::move(codes)),
      drugs_(std::move(drugs)),
      dropout_rng_(config.seed ^ kDropoutStream) {
  config_.validate();
  if (tree_.depth != config_.tree_depth) {
    fail(ErrorKind::Config, "ontology depth " + std::to_string(tree_.depth) +
                                " does not match tree_depth " + std::to_string(config_.tree_depth));
  }
  if (tree_.code_count() != codes_.size()) {
    fail(ErrorKind::Config, "ontology covers " + std::to_string(tree_.code_count()) +
                                " codes but the vocabulary has " + std::to_string(codes_.size()));
  }
  if (graphs.bdc.rows() != dim(drugs_.size()) || graphs.bdc.cols() != dim(codes_.size()) ||
      graphs.acc.rows() != dim(codes_.size()) || graphs.acc.cols() != dim(codes_.size())) {
    fail(ErrorKind::Shape, "co-occurrence graphs do not match the vocabulary sizes");
  }

  Rng rng(config_.seed);
  const std::size_t m = config_.visit_dim();
  bdc_ = store_.add("graph.B_DC", graphs.bdc, false);
  acc_ = store_.add("graph.A_CC", graphs.acc, false);
  hierarchy_ = HierEmbedding(store_, tree_, config_.m_c, rng, config_.ablation.no_hierarchy);

  HgnnOptions gnn;
  gnn.n_drugs = drugs_.size();
  gnn.code_in = hierarchy_.width();
  gnn.drug_in = config_.m_d;
  gnn.code_dims = config_.code_dims;
  gnn.drug_dims = config_.drug_dims;
  gnn.leaky_slope = config_.leaky_slope;
  gnn.bn_momentum = config_.bn_momentum;
  gnn.bn_eps = config_.bn_eps;
  gnn_ = Hgnn(store_, gnn, rng);

  time_gate_ = IntervalGate(store_, {"visit.W_e", "visit.b_e", "visit.W_f", "visit.b_f"}, config_.a,
                            m, config_.time_scale, rng);

  EncoderOptions enc;
  enc.dim = m;
  enc.heads = config_.heads;
  enc.layers = config_.encoder_layers;
  enc.ffn = config_.ffn_size;
  enc.dropout = config_.dropout;
  encoder_ = TimeAwareEncoder(store_, enc, rng);

  preliminary_ = PreliminaryAttention(store_, m, config_.b, rng);
  comprehensive_ = ComprehensiveAttention(store_, m, config_.q, config_.a, config_.time_scale,
                                          config_.leaky_slope, rng);
  merge_gate_ = MergeGate(store_, config_.q, rng);

  for (std::size_t l = 0; l + 1 < config_.head_layers; ++l) {
    const std::string p = "head.l" + std::to_string(l);
    head_weights_.push_back(store_.add(p + ".W", ad::xavier_uniform(dim(m), dim(m), rng)));
    head_biases_.push_back(store_.add(p + ".b", ad::Mat::Zero(1, dim(m))));
  }
  head_weights_.push_back(store_.add("head.W", ad::xavier_uniform(dim(m), dim(output_dim()), rng)));
  head_biases_.push_back(store_.add("head.b", ad::Mat::Zero(1, dim(output_dim()))));
}

std::size_t ThamModel::output_dim() const {
  return config_.task == Task::Diagnosis ? codes_.size() : 1;
}

NodeFeatures ThamModel::graph_features(ad::Mode mode) {
  return gnn_.forward(hierarchy_.assemble(), bdc_, acc_, mode);
}

ad::Tensor ThamModel::forward_patient(std::span<const Visit> history,
                                      std::span<const std::int64_t> intervals,
                                      const ad::Tensor& code_features, ad::Mode mode,
                                      AttentionTrace* trace) {
  return ad::sigmoid(forward_logits(history, intervals, code_features, mode, trace));
}

ad::Tensor ThamModel::forward_logits(std::span<const Visit> history,
                                     std::span<const std::int64_t> intervals,
                                     const ad::Tensor& code_features, ad::Mode mode,
                                     AttentionTrace* trace) {
  if (history.empty()) fail(ErrorKind::Invalid, "forward_patient: empty history");
  const bool use_gate = !config_.ablation.no_time_embed;
  const ad::Tensor sequence =
      encode_sequence(history, intervals, code_features, use_gate ? &time_gate_ : nullptr);
  const ad::Tensor hidden = encoder_.forward(sequence, mode, dropout_rng_,
                                             trace ? &trace->self_attention : nullptr);
  const ad::Tensor alpha = preliminary_.forward(hidden);
  ad::Tensor eta = alpha;
  if (!config_.ablation.no_comprehensive) {
    const auto comp = comprehensive_.forward(hidden, intervals);
    const ad::Tensor delta = merge_gate_.forward(comp.query);
    eta = merge(alpha, comp.beta, delta);
    if (trace) {
      trace->beta = comp.beta.value();
      trace->delta = delta.value();
    }
  }
  if (trace) {
    trace->alpha = alpha.value();
    trace->eta = eta.value();
  }
  ad::Tensor x = pool(hidden, eta);
  for (std::size_t l = 0; l + 1 < head_weights_.size(); ++l) {
    x = ad::leaky_relu(ad::add(ad::matmul(x, head_weights_[l]), head_biases_[l]),
                       config_.leaky_slope);
  }
  return ad::add(ad::matmul(x, head_weights_.back()), head_biases_.back());
}

ad::Mat ThamModel::target(const Example& example) const {
  ad::Mat y = ad::Mat::Zero(1, dim(output_dim()));
  if (config_.task == Task::HeartFailure) {
    y(0, 0) = example.heart_failure;
    return y;
  }
  for (CodeId c : example.target_codes) {
    if (c >= 0 && static_cast<std::size_t>(c) < codes_.size()) y(0, c) = 1.0;
  }
  return y;
}

ad::Tensor ThamModel::loss(std::span<const Example* const> examples, ad::Mode mode) {
  if (examples.empty()) fail(ErrorKind::Invalid, "loss: no examples");
  ad::Mat targets(dim(examples.size()), dim(output_dim()));
  std::vector<ad::Tensor> rows;
  rows.reserve(examples.size());
  NodeFeatures features;
  if (!config_.gnn_per_sample) features = graph_features(mode);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& ex = *examples[i];
    if (config_.gnn_per_sample) features = graph_features(mode);
    rows.push_back(forward_logits(ex.history, ex.intervals, features.codes, mode));
    targets.row(dim(i)) = target(ex);
  }
  const ad::Tensor logits = rows.size() == 1 ? rows[0] : ad::concat_rows(rows);
  return ad::sigmoid_bce_loss(logits, targets);
}

ad::Tensor ThamModel::loss(std::span<const Example> examples, ad::Mode mode) {
  std::vector<const Example*> ptrs;
  ptrs.reserve(examples.size());
  for (const Example& ex : examples) ptrs.push_back(&ex);
  return loss(std::span<const Example* const>(ptrs), mode);
}

// ---------------------------------------------------------------------------
// Configuration serialization

std::string model_config_json(const ModelConfig& c) {
  json j;
  j["task"] = std::string(task_name(c.task));
  j["m_c"] = c.m_c;
  j["m_d"] = c.m_d;
  j["code_dims"] = c.code_dims;
  j["drug_dims"] = c.drug_dims;
  j["a"] = c.a;
  j["q"] = c.q;
  j["b"] = c.b;
  j["tree_depth"] = c.tree_depth;
  j["lambda"] = c.lambda;
  j["heads"] = c.heads;
  j["encoder_layers"] = c.encoder_layers;
  j["ffn_size"] = c.ffn_size;
  j["head_layers"] = c.head_layers;
  j["epochs"] = c.epochs;
  auto& lr = j["lr_milestones"] = json::array();
  for (const auto& m : c.lr_milestones) lr.push_back({m.epoch, m.lr});
  j["seed"] = c.seed;
  j["ablation"] = c.ablation.to_string();
  j["batch_size"] = c.batch_size;
  j["dropout"] = c.dropout;
  j["leaky_slope"] = c.leaky_slope;
  j["time_scale"] = c.time_scale;
  j["bn_momentum"] = c.bn_momentum;
  j["bn_eps"] = c.bn_eps;
  j["gnn_per_sample"] = c.gnn_per_sample;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelConfig c;
    c.task = parse_task(j.at("task").get<std::string>());
    c.m_c = j.at("m_c").get<std::size_t>();
    c.m_d = j.at("m_d").get<std::size_t>();
    c.code_dims = j.at("code_dims").get<std::vector<std::size_t>>();
    c.drug_dims = j.at("drug_dims").get<std::vector<std::size_t>>();
    c.a = j.at("a").get<std::size_t>();
    c.q = j.at("q").get<std::size_t>();
    c.b = j.at("b").get<std::size_t>();
    c.tree_depth = j.at("tree_depth").get<std::size_t>();
    c.lambda = j.at("lambda").get<double>();
    c.heads = j.at("heads").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    c.ffn_size = j.at("ffn_size").get<std::size_t>();
    c.head_layers = j.at("head_layers").get<std::size_t>();
    c.epochs = j.at("epochs").get<int>();
    c.lr_milestones.clear();
    for (const auto& m : j.at("lr_milestones")) {
      c.lr_milestones.push_back({m.at(0).get<int>(), m.at(1).get<double>()});
    }
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ablation = AblationFlags::parse(j.at("ablation").get<std::string>());
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.time_scale = j.at("time_scale").get<double>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.bn_eps = j.at("bn_eps").get<double>();
    c.gnn_per_sample = j.at("gnn_per_sample").get<bool>();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("model config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoint file

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void bytes(const void* data, std::size_t n) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string origin) : data_(data), origin_(std::move(origin)) {}
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) fail(ErrorKind::Parse, origin_ + ": checkpoint truncated");
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<unsigned char>(data_[pos_ + i])} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<unsigned char>(data_[pos_ + i])} << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void save_checkpoint(const ThamModel& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
  Writer w(out);
  w.bytes(kMagic, 4);
  w.u32(kFormatVersion);
  const auto entries = model.params().entries();
  w.u64(entries.size());
  for (const auto& e : entries) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    const ad::Mat& v = e.tensor.value();
    w.u32(2);
    w.u64(static_cast<std::uint64_t>(v.rows()));
    w.u64(static_cast<std::uint64_t>(v.cols()));
    for (ad::Index i = 0; i < v.size(); ++i) w.f64(v.data()[i]);
  }

  json trailer;
  trailer["config"] = json::parse(model_config_json(model.config()));
  trailer["codes"] = model.codes().ids();
  trailer["drugs"] = model.drugs().ids();
  trailer["ontology"] = {{"depth", model.tree().depth},
                         {"level_nodes", model.tree().level_nodes},
                         {"leaf_paths", model.tree().leaf_paths}};
  trailer["trainable"] = json::array();
  for (const auto& e : entries) {
    if (e.trainable) trailer["trainable"].push_back(e.name);
  }
  trailer["best_valid_loss"] = finite_or_null(meta.best_valid_loss);
  trailer["best_epoch"] = meta.best_epoch;
  json split;
  if (meta.split.counts) {
    split["counts"] = {meta.split.counts->train, meta.split.counts->valid, meta.split.counts->test};
  } else {
    split["counts"] = nullptr;
  }
  split["seed"] = meta.split.seed;
  trailer["split"] = split;
  const std::string text = trailer.dump();
  w.u64(text.size());
  w.bytes(text.data(), text.size());
  if (!out) fail(ErrorKind::Io, "failed writing checkpoint " + path.string());
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(data, path.string());
  if (r.bytes(4) != std::string(kMagic, 4)) fail(ErrorKind::Parse, path.string() + ": not a THAM checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    fail(ErrorKind::Parse, path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t count = r.u64();
  std::map<std::string, ad::Mat> arrays;
  std::vector<std::string> order;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t ndim = r.u32();
    if (ndim != 2) fail(ErrorKind::Parse, path.string() + ": entry " + name + " is not 2-D");
    const auto rows = static_cast<ad::Index>(r.u64());
    const auto cols = static_cast<ad::Index>(r.u64());
    r.need(static_cast<std::size_t>(rows * cols) * 8);
    ad::Mat v(rows, cols);
    for (ad::Index k = 0; k < v.size(); ++k) v.data()[k] = r.f64();
    if (!arrays.emplace(name, std::move(v)).second) {
      fail(ErrorKind::Parse, path.string() + ": duplicate entry " + name);
    }
    order.push_back(name);
  }
  const std::string text = r.bytes(r.u64());
  if (!r.done()) fail(ErrorKind::Parse, path.string() + ": trailing bytes after trailer");

  LoadedModel out;
  try {
    const json trailer = json::parse(text);
    const ModelConfig config = model_config_from_json(trailer.at("config").dump());
    Vocab codes, drugs;
    for (const auto& id : trailer.at("codes")) codes.add(id.get<std::string>());
    for (const auto& id : trailer.at("drugs")) drugs.add(id.get<std::string>());
    OntologyTree tree;
    tree.depth = trailer.at("ontology").at("depth").get<std::size_t>();
    tree.level_nodes = trailer.at("ontology").at("level_nodes").get<std::vector<std::vector<std::string>>>();
    tree.leaf_paths = trailer.at("ontology").at("leaf_paths").get<std::vector<std::vector<std::int32_t>>>();
    const auto& bl = trailer.at("best_valid_loss");
    out.meta.best_valid_loss = bl.is_null() ? std::nan("") : bl.get<double>();
    out.meta.best_epoch = trailer.at("best_epoch").get<int>();
    const auto& split = trailer.at("split");
    if (!split.at("counts").is_null()) {
      const auto c = split.at("counts").get<std::vector<std::size_t>>();
      if (c.size() != 3) fail(ErrorKind::Parse, path.string() + ": bad split counts");
      out.meta.split.counts = SplitCounts{c[0], c[1], c[2]};
    }
    out.meta.split.seed = split.at("seed").get<std::uint64_t>();

    CoGraphs graphs;
    graphs.threshold = config.lambda;
    auto bdc = arrays.find("graph.B_DC");
    auto acc = arrays.find("graph.A_CC");
    if (bdc == arrays.end() || acc == arrays.end()) {
      fail(ErrorKind::Parse, path.string() + ": graph matrices missing");
    }
    graphs.bdc = bdc->second;
    graphs.acc = acc->second;
    out.model = std::make_unique<ThamModel>(config, std::move(tree), std::move(codes),
                                            std::move(drugs), graphs);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": bad checkpoint trailer: " + e.what());
  }

  auto entries = out.model->params().entries();
  if (entries.size() != arrays.size()) {
    fail(ErrorKind::Parse, path.string() + ": checkpoint has " + std::to_string(arrays.size()) +
                               " entries, model expects " + std::to_string(entries.size()));
  }
  for (const auto& e : entries) {
    auto it = arrays.find(e.name);
    if (it == arrays.end()) fail(ErrorKind::Parse, path.string() + ": missing entry " + e.name);
    ad::Tensor t = e.tensor;
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) {
      fail(ErrorKind::Parse, path.string() + ": entry " + e.name + " has shape " +
                                 std::to_string(it->second.rows()) + "x" +
                                 std::to_string(it->second.cols()) + ", expected " +
                                 std::to_string(t.rows()) + "x" + std::to_string(t.cols()));
    }
    t.mutable_value() = it->second;
  }
  return out;
}

}  // namespace tham
