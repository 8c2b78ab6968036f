#include "tham/ontology.hpp"

#include <fstream>
#include <unordered_map>

#include "tham/error.hpp"

namespace tham {

std::vector<Edge> read_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open ontology file " + path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
      fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) +
                                 ": expected 'child<TAB>parent'");
    }
    edges.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return edges;
}

void write_edge_list(const std::vector<Edge>& edges, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& [child, parent] : edges) out << child << '\t' << parent << '\n';
}

OntologyTree build_ontology(const std::vector<Edge>& edges, const Vocab& codes, std::size_t depth) {
  if (depth == 0) fail(ErrorKind::Config, "ontology depth must be positive");
  std::unordered_map<std::string, std::string> parent_of;
  for (const auto& [child, parent] : edges) {
    auto [it, inserted] = parent_of.emplace(child, parent);
    if (!inserted && it->second != parent) {
      fail(ErrorKind::Parse, "ontology node '" + child + "' has more than one parent ('" +
                                 it->second + "' and '" + parent + "')");
    }
  }

  OntologyTree tree;
  tree.depth = depth;
  tree.level_nodes.resize(depth);
  std::vector<std::unordered_map<std::string, std::int32_t>> level_index(depth);
  auto intern = [&](std::size_t level, const std::string& name) {
    auto [it, inserted] =
        level_index[level].emplace(name, static_cast<std::int32_t>(tree.level_nodes[level].size()));
    if (inserted) tree.level_nodes[level].push_back(name);
    return it->second;
  };

  tree.leaf_paths.reserve(codes.size());
  for (const std::string& code : codes.ids()) {
    if (!parent_of.count(code)) fail(ErrorKind::Parse, "code '" + code + "' missing from ontology");
    std::vector<std::string> chain{code};
    std::string cursor = code;
    while (true) {
      auto it = parent_of.find(cursor);
      if (it == parent_of.end()) {
        fail(ErrorKind::Parse, "ontology node '" + cursor + "' has no parent line");
      }
      if (it->second == kRootToken) break;
      cursor = it->second;
      chain.push_back(cursor);
      if (chain.size() > parent_of.size()) {
        fail(ErrorKind::Parse, "cycle in ontology through '" + code + "'");
      }
    }
    if (chain.size() > depth) {
      fail(ErrorKind::Config, "code '" + code + "' sits at depth " + std::to_string(chain.size()) +
                                  ", deeper than configured depth " + std::to_string(depth));
    }
    std::vector<std::int32_t> path(depth);
    const std::size_t real = chain.size();
    for (std::size_t level = 0; level < real; ++level) {
      path[level] = intern(level, chain[real - 1 - level]);
    }
    for (std::size_t level = real; level < depth; ++level) {
      path[level] = intern(level, code + "#v" + std::to_string(level + 1));
    }
    tree.leaf_paths.push_back(std::move(path));
  }
  return tree;
}

OntologyTree load_ontology(const std::filesystem::path& path, const Vocab& codes, std::size_t depth) {
  return build_ontology(read_edge_list(path), codes, depth);
}

HierEmbedding::HierEmbedding(ad::ParamStore& store, const OntologyTree& tree, std::size_t embed_dim,
                             Rng& rng, bool flat)
    : depth_(tree.depth), embed_dim_(embed_dim), flat_(flat) {
  const auto n_codes = static_cast<ad::Index>(tree.code_count());
  if (flat_) {
    flat_matrix_ = store.add("hier.flat",
                             ad::xavier_uniform(n_codes, static_cast<ad::Index>(width()), rng));
    return;
  }
  level_rows_.assign(depth_, std::vector<std::int32_t>(tree.code_count()));
  for (std::size_t c = 0; c < tree.code_count(); ++c) {
    for (std::size_t h = 0; h < depth_; ++h) level_rows_[h][c] = tree.leaf_paths[c][h];
  }
  for (std::size_t h = 0; h < depth_; ++h) {
    levels_.push_back(store.add(
        "hier.level" + std::to_string(h + 1),
        ad::xavier_uniform(static_cast<ad::Index>(tree.level_size(h)),
                           static_cast<ad::Index>(embed_dim_), rng)));
  }
}

ad::Tensor HierEmbedding::assemble() const {
  if (flat_) return flat_matrix_;
  std::vector<ad::Tensor> blocks;
  blocks.reserve(depth_);
  for (std::size_t h = 0; h < depth_; ++h) blocks.push_back(ad::gather_rows(levels_[h], level_rows_[h]));
  if (blocks.size() == 1) return blocks[0];
  return ad::concat_cols(blocks);
}

}  // namespace tham
