#include "tham/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tham/error.hpp"

namespace tham {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(sep, start);
    const auto piece = trim(s.substr(start, pos == std::string_view::npos ? s.size() - start : pos - start));
    if (!piece.empty()) out.push_back(piece);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  fail(ErrorKind::Config, "config key '" + key + "': cannot parse '" + value + "' as " + want);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a nonnegative integer");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& piece : split_list(v)) out.push_back(to_size(key, piece));
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

Dataset parse_dataset(const std::string& v) {
  if (v == "mimic3") return Dataset::Mimic3;
  if (v == "mimic4") return Dataset::Mimic4;
  fail(ErrorKind::Config, "config key 'dataset': expected mimic3 or mimic4, got '" + v + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------

std::string AblationFlags::to_string() const {
  if (no_time_embed && no_comprehensive && !no_hierarchy) return "no_time_and_comp";
  std::vector<std::string> parts;
  if (no_hierarchy) parts.emplace_back("no_hierarchy");
  if (no_time_embed) parts.emplace_back("no_time_embed");
  if (no_comprehensive) parts.emplace_back("no_comprehensive");
  if (parts.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

AblationFlags AblationFlags::parse(std::string_view text) {
  AblationFlags f;
  for (const auto& name : split_list(text)) {
    if (name == "none") continue;
    if (name == "no_hierarchy") {
      f.no_hierarchy = true;
    } else if (name == "no_time_embed") {
      f.no_time_embed = true;
    } else if (name == "no_comprehensive") {
      f.no_comprehensive = true;
    } else if (name == "no_time_and_comp") {
      f.no_time_embed = true;
      f.no_comprehensive = true;
    } else {
      fail(ErrorKind::Config, "unknown ablation '" + name +
                                  "' (expected none, no_hierarchy, no_time_embed, "
                                  "no_comprehensive or no_time_and_comp)");
    }
  }
  return f;
}

double lr_at(const std::vector<LrMilestone>& milestones, int epoch) {
  if (milestones.empty()) fail(ErrorKind::Config, "lr_milestones must not be empty");
  double lr = milestones.front().lr;
  for (const auto& m : milestones) {
    if (m.epoch <= epoch) lr = m.lr;
  }
  return lr;
}

std::size_t ModelConfig::visit_dim() const {
  return code_dims.empty() ? tree_depth * m_c : code_dims.back();
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::Config, "model config: " + what);
  };
  need(m_c > 0 && m_d > 0, "m_c and m_d must be positive");
  need(code_dims.size() == drug_dims.size(), "code_dims and drug_dims need one entry per GNN layer");
  for (auto d : code_dims) need(d > 0, "code_dims entries must be positive");
  for (auto d : drug_dims) need(d > 0, "drug_dims entries must be positive");
  need(a > 0 && q > 0 && b > 0, "a, q and b must be positive");
  need(tree_depth > 0, "tree_depth must be positive");
  need(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
  need(heads > 0, "heads must be positive");
  need(visit_dim() % 2 == 0, "visit dimension m = " + std::to_string(visit_dim()) +
                                 " must be even for the sinusoidal encoding");
  need(visit_dim() % heads == 0, "visit dimension m = " + std::to_string(visit_dim()) +
                                     " must be divisible by heads = " + std::to_string(heads));
  need(ffn_size > 0, "ffn_size must be positive");
  need(head_layers >= 1, "head_layers must be at least 1");
  need(epochs >= 0, "epochs must be nonnegative");
  need(!lr_milestones.empty(), "lr_milestones must not be empty");
  for (std::size_t i = 1; i < lr_milestones.size(); ++i) {
    need(lr_milestones[i - 1].epoch < lr_milestones[i].epoch, "lr_milestones must be epoch-sorted");
  }
  for (const auto& m : lr_milestones) need(m.lr > 0.0, "learning rates must be positive");
  need(batch_size >= 1, "batch_size must be at least 1");
  need(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  need(time_scale > 0.0, "time_scale must be positive");
  need(bn_momentum > 0.0 && bn_momentum <= 1.0, "bn_momentum must lie in (0, 1]");
  need(bn_eps > 0.0, "bn_eps must be positive");
}

ModelConfig ModelConfig::defaults(Task task, Dataset dataset) {
  ModelConfig c;
  c.task = task;
  if (task == Task::Diagnosis) {
    if (dataset == Dataset::Mimic4) {
      c.m_c = 64;
      c.m_d = 64;
      c.code_dims = {64, 256};
    }
    return c;
  }
  c.m_d = 16;
  c.a = 16;
  c.q = 16;
  c.b = 32;
  if (dataset == Dataset::Mimic3) {
    c.m_c = 7;
    c.code_dims = {10, 28};
  } else {
    c.m_c = 5;
    c.code_dims = {10, 20};
  }
  c.drug_dims = {16, 16};
  c.epochs = 100;
  c.lr_milestones = {{1, 1e-2}, {2, 1e-3}, {3, 1e-4}, {20, 1e-5}};
  return c;
}

// ---------------------------------------------------------------------------

const std::vector<RunConfig::KeyInfo>& RunConfig::known_keys() {
  static const std::vector<KeyInfo> keys = {
      {"task", "diagnosis | heart_failure; selects the default hyperparameter table"},
      {"dataset", "mimic3 | mimic4; which reported hyperparameter table seeds the defaults"},
      {"m_c", "per-level code embedding size"},
      {"m_d", "drug embedding size"},
      {"code_dims", "code feature size after each GNN layer, comma-separated"},
      {"drug_dims", "drug feature size after each GNN layer, comma-separated"},
      {"a", "width of the interval gates"},
      {"q", "query/key width of the comprehensive attention"},
      {"b", "width of the local attention projection"},
      {"tree_depth", "ontology depth H (also the synthetic tree depth)"},
      {"lambda", "co-occurrence threshold in [0, 1]"},
      {"heads", "self-attention heads"},
      {"encoder_layers", "transformer encoder layers"},
      {"ffn_size", "encoder feed-forward inner size"},
      {"head_layers", "layers of the output MLP (1 = affine + sigmoid)"},
      {"epochs", "training epochs"},
      {"lr_milestones", "epoch:lr pairs, e.g. 1:0.1,10:0.01 (inclusive)"},
      {"seed", "model initialization and shuffling seed"},
      {"ablation", "none | no_hierarchy | no_time_embed | no_comprehensive | no_time_and_comp"},
      {"batch_size", "examples per optimizer step"},
      {"dropout", "dropout rate inside the encoder"},
      {"leaky_slope", "LeakyReLU negative slope"},
      {"time_scale", "interval divisor in days"},
      {"bn_momentum", "BatchNorm running-statistics momentum"},
      {"bn_eps", "BatchNorm epsilon"},
      {"gnn_per_sample", "recompute graph features for every example instead of every batch"},
      {"split", "auto (80/10/10) or train,valid,test example counts"},
      {"split_seed", "seed of the train/valid/test shuffle"},
      {"n_patients", "synthetic: patients"},
      {"n_codes", "synthetic: diagnosis codes"},
      {"n_drugs", "synthetic: drugs"},
      {"branching", "synthetic: ontology branching factor"},
      {"n_clusters", "synthetic: latent patient clusters"},
      {"min_visits", "synthetic: minimum visits per patient (>= 2)"},
      {"max_visits", "synthetic: maximum visits per patient"},
      {"interval_profiles", "synthetic: mean:jitter day pairs cycled over clusters"},
      {"cooccur_rate", "synthetic: planted pair co-occurrence probability"},
      {"synth_seed", "synthetic: generator seed"},
      {"data", "cohort JSONL path"},
      {"ontology", "ontology edge-list path"},
  };
  return keys;
}

RunConfig RunConfig::from_string(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Config, origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorKind::Config, origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_string(buffer.str(), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::none_of(keys.begin(), keys.end(), [&](const KeyInfo& k) { return k.key == key; })) {
    fail(ErrorKind::Config, "unknown config key '" + key + "'");
  }
  values_[key] = value;
}

std::optional<std::string> RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

ModelConfig RunConfig::model() const {
  const Task task = has("task") ? parse_task(*get("task")) : Task::Diagnosis;
  const Dataset dataset = has("dataset") ? parse_dataset(*get("dataset")) : Dataset::Mimic3;
  ModelConfig c = ModelConfig::defaults(task, dataset);
  for (const auto& [key, v] : values_) {
    if (key == "m_c") c.m_c = to_size(key, v);
    else if (key == "m_d") c.m_d = to_size(key, v);
    else if (key == "code_dims") c.code_dims = to_sizes(key, v);
    else if (key == "drug_dims") c.drug_dims = to_sizes(key, v);
    else if (key == "a") c.a = to_size(key, v);
    else if (key == "q") c.q = to_size(key, v);
    else if (key == "b") c.b = to_size(key, v);
    else if (key == "tree_depth") c.tree_depth = to_size(key, v);
    else if (key == "lambda") c.lambda = to_double(key, v);
    else if (key == "heads") c.heads = to_size(key, v);
    else if (key == "encoder_layers") c.encoder_layers = to_size(key, v);
    else if (key == "ffn_size") c.ffn_size = to_size(key, v);
    else if (key == "head_layers") c.head_layers = to_size(key, v);
    else if (key == "epochs") c.epochs = to_int(key, v);
    else if (key == "seed") c.seed = to_u64(key, v);
    else if (key == "ablation") c.ablation = AblationFlags::parse(v);
    else if (key == "batch_size") c.batch_size = to_size(key, v);
    else if (key == "dropout") c.dropout = to_double(key, v);
    else if (key == "leaky_slope") c.leaky_slope = to_double(key, v);
    else if (key == "time_scale") c.time_scale = to_double(key, v);
    else if (key == "bn_momentum") c.bn_momentum = to_double(key, v);
    else if (key == "bn_eps") c.bn_eps = to_double(key, v);
    else if (key == "gnn_per_sample") c.gnn_per_sample = to_bool(key, v);
    else if (key == "lr_milestones") {
      c.lr_milestones.clear();
      for (const auto& piece : split_list(v)) {
        const auto colon = piece.find(':');
        if (colon == std::string::npos) bad_value(key, v, "epoch:lr pairs");
        c.lr_milestones.push_back({to_int(key, trim(piece.substr(0, colon))),
                                   to_double(key, trim(piece.substr(colon + 1)))});
      }
    }
  }
  c.validate();
  return c;
}

SynthConfig RunConfig::synth() const {
  SynthConfig s;
  for (const auto& [key, v] : values_) {
    if (key == "n_patients") s.n_patients = to_size(key, v);
    else if (key == "n_codes") s.n_codes = to_size(key, v);
    else if (key == "n_drugs") s.n_drugs = to_size(key, v);
    else if (key == "tree_depth") s.tree_depth = to_size(key, v);
    else if (key == "branching") s.branching = to_size(key, v);
    else if (key == "n_clusters") s.n_clusters = to_size(key, v);
    else if (key == "min_visits") s.min_visits = to_size(key, v);
    else if (key == "max_visits") s.max_visits = to_size(key, v);
    else if (key == "cooccur_rate") s.cooccur_rate = to_double(key, v);
    else if (key == "synth_seed") s.seed = to_u64(key, v);
    else if (key == "interval_profiles") {
      s.interval_profiles.clear();
      for (const auto& piece : split_list(v)) {
        const auto colon = piece.find(':');
        if (colon == std::string::npos) bad_value(key, v, "mean:jitter pairs");
        s.interval_profiles.push_back({to_double(key, trim(piece.substr(0, colon))),
                                       to_double(key, trim(piece.substr(colon + 1)))});
      }
    }
  }
  s.validate();
  return s;
}

SplitConfig RunConfig::split() const {
  SplitConfig s;
  if (auto v = get("split"); v && *v != "auto") {
    const auto parts = to_sizes("split", *v);
    if (parts.size() != 3) bad_value("split", *v, "auto or three counts train,valid,test");
    s.counts = SplitCounts{parts[0], parts[1], parts[2]};
  }
  if (auto v = get("split_seed")) s.seed = to_u64("split_seed", *v);
  return s;
}

std::string RunConfig::resolved_text() const {
  const ModelConfig m = model();
  const SynthConfig s = synth();
  const SplitConfig sp = split();
  std::map<std::string, std::string> out;
  out["task"] = std::string(task_name(m.task));
  out["dataset"] = get("dataset").value_or("mimic3");
  out["m_c"] = std::to_string(m.m_c);
  out["m_d"] = std::to_string(m.m_d);
  out["code_dims"] = join_sizes(m.code_dims);
  out["drug_dims"] = join_sizes(m.drug_dims);
  out["a"] = std::to_string(m.a);
  out["q"] = std::to_string(m.q);
  out["b"] = std::to_string(m.b);
  out["tree_depth"] = std::to_string(m.tree_depth);
  out["lambda"] = format_double(m.lambda);
  out["heads"] = std::to_string(m.heads);
  out["encoder_layers"] = std::to_string(m.encoder_layers);
  out["ffn_size"] = std::to_string(m.ffn_size);
  out["head_layers"] = std::to_string(m.head_layers);
  out["epochs"] = std::to_string(m.epochs);
  std::string lr;
  for (std::size_t i = 0; i < m.lr_milestones.size(); ++i) {
    lr += (i ? "," : "") + std::to_string(m.lr_milestones[i].epoch) + ":" +
          format_double(m.lr_milestones[i].lr);
  }
  out["lr_milestones"] = lr;
  out["seed"] = std::to_string(m.seed);
  out["ablation"] = m.ablation.to_string();
  out["batch_size"] = std::to_string(m.batch_size);
  out["dropout"] = format_double(m.dropout);
  out["leaky_slope"] = format_double(m.leaky_slope);
  out["time_scale"] = format_double(m.time_scale);
  out["bn_momentum"] = format_double(m.bn_momentum);
  out["bn_eps"] = format_double(m.bn_eps);
  out["gnn_per_sample"] = m.gnn_per_sample ? "true" : "false";
  out["split"] = sp.counts ? std::to_string(sp.counts->train) + "," + std::to_string(sp.counts->valid) +
                                 "," + std::to_string(sp.counts->test)
                           : "auto";
  out["split_seed"] = std::to_string(sp.seed);
  out["n_patients"] = std::to_string(s.n_patients);
  out["n_codes"] = std::to_string(s.n_codes);
  out["n_drugs"] = std::to_string(s.n_drugs);
  out["branching"] = std::to_string(s.branching);
  out["n_clusters"] = std::to_string(s.n_clusters);
  out["min_visits"] = std::to_string(s.min_visits);
  out["max_visits"] = std::to_string(s.max_visits);
  std::string profiles;
  for (std::size_t i = 0; i < s.interval_profiles.size(); ++i) {
    profiles += (i ? "," : "") + format_double(s.interval_profiles[i].mean_days) + ":" +
                format_double(s.interval_profiles[i].jitter_days);
  }
  out["interval_profiles"] = profiles;
  out["cooccur_rate"] = format_double(s.cooccur_rate);
  out["synth_seed"] = std::to_string(s.seed);
  if (auto v = get("data")) out["data"] = *v;
  if (auto v = get("ontology")) out["ontology"] = *v;

  std::string text;
  for (const auto& info : known_keys()) {
    auto it = out.find(info.key);
    if (it != out.end()) text += info.key + " = " + it->second + "\n";
  }
  return text;
}

void RunConfig::write_resolved(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << resolved_text();
}

}  // namespace tham
