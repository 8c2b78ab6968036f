#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tham/autodiff.hpp"
#include "tham/cohort.hpp"
#include "tham/optim.hpp"

namespace tham {

/// child -> parent; roots carry the parent token "ROOT".
using Edge = std::pair<std::string, std::string>;

inline constexpr const char* kRootToken = "ROOT";

/// Code hierarchy padded to a uniform depth. Only nodes on the root-to-leaf
/// path of some vocabulary code are materialized.
struct OntologyTree {
  std::size_t depth = 0;                             // H
  std::vector<std::vector<std::string>> level_nodes;  // names per level; size of each is m_h
  std::vector<std::vector<std::int32_t>> leaf_paths;  // per vocabulary code, H row indices

  std::size_t level_size(std::size_t level) const { return level_nodes.at(level).size(); }
  std::size_t code_count() const { return leaf_paths.size(); }
};

std::vector<Edge> read_edge_list(const std::filesystem::path& path);
void write_edge_list(const std::vector<Edge>& edges, const std::filesystem::path& path);

/// Codes shallower than `depth` get a private chain of virtual descendants
/// ("<code>#v<level>"). Throws on cycles, multiple parents, codes missing
/// from the tree, or codes deeper than `depth`.
OntologyTree build_ontology(const std::vector<Edge>& edges, const Vocab& codes, std::size_t depth);
OntologyTree load_ontology(const std::filesystem::path& path, const Vocab& codes, std::size_t depth);

/// Per-level embedding tables and their assembly into the |C| x H*m_c code
/// matrix. With `flat` set the matrix is one unstructured parameter.
class HierEmbedding {
 public:
  HierEmbedding() = default;
  HierEmbedding(ad::ParamStore& store, const OntologyTree& tree, std::size_t embed_dim, Rng& rng,
                bool flat);

  /// Row i is the concatenation of the level rows on code i's path.
  ad::Tensor assemble() const;

  std::size_t width() const { return depth_ * embed_dim_; }
  const std::vector<ad::Tensor>& levels() const { return levels_; }

 private:
  std::size_t depth_ = 0;
  std::size_t embed_dim_ = 0;
  bool flat_ = false;
  std::vector<ad::Tensor> levels_;
  ad::Tensor flat_matrix_;
  std::vector<std::vector<std::int32_t>> level_rows_;  // per level, one row index per code
};

}  // namespace tham
