#include <doctest.h>

#include <map>

#include "support.hpp"
#include "tham/error.hpp"
#include "tham/ontology.hpp"

using namespace tham;

namespace {

Vocab vocab(std::initializer_list<const char*> ids) {
  Vocab v;
  for (const char* id : ids) v.add(id);
  return v;
}

// A   -> A1 -> {A11, A12}, A -> A2 (code at depth 2), B (code at depth 1)
std::vector<Edge> small_edges() {
  return {{"A", "ROOT"}, {"A1", "A"}, {"A11", "A1"}, {"A12", "A1"}, {"A2", "A"}, {"B", "ROOT"}};
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::Invalid;
}

}  // namespace

TEST_CASE("build_ontology: shallow codes are padded with virtual nodes") {
  const OntologyTree t = build_ontology(small_edges(), vocab({"A11", "A12", "A2", "B"}), 4);
  CHECK(t.depth == 4);
  REQUIRE(t.leaf_paths.size() == 4);
  for (const auto& p : t.leaf_paths) CHECK(p.size() == 4);
  const auto& a2 = t.leaf_paths[2];
  CHECK(t.level_nodes[1][a2[1]] == "A2");
  CHECK(t.level_nodes[2][a2[2]] == "A2#v3");
  CHECK(t.level_nodes[3][a2[3]] == "A2#v4");
  const auto& b = t.leaf_paths[3];
  CHECK(t.level_nodes[0][b[0]] == "B");
  CHECK(t.level_nodes[1][b[1]] == "B#v2");
  // the real leaf A11 is padded by one virtual node
  CHECK(t.level_nodes[3][t.leaf_paths[0][3]] == "A11#v4");
}

TEST_CASE("build_ontology: siblings differ only at the last level") {
  const OntologyTree t = build_ontology(small_edges(), vocab({"A11", "A12", "A2", "B"}), 3);
  const auto& p = t.leaf_paths[0];
  const auto& q = t.leaf_paths[1];
  CHECK(p[0] == q[0]);
  CHECK(p[1] == q[1]);
  CHECK(p[2] != q[2]);
  // only nodes on some code path are materialized
  CHECK(t.level_size(0) == 2);
  CHECK(t.level_size(1) == 3);  // A1, A2, B#v2
}

TEST_CASE("build_ontology: depth one keeps each code's own node") {
  const std::vector<Edge> flat{{"x", "ROOT"}, {"y", "ROOT"}};
  const OntologyTree t = build_ontology(flat, vocab({"x", "y"}), 1);
  CHECK(t.leaf_paths == std::vector<std::vector<std::int32_t>>{{0}, {1}});
  CHECK(t.level_nodes[0] == std::vector<std::string>{"x", "y"});
}

TEST_CASE("build_ontology: errors") {
  const auto codes = vocab({"A11"});
  CHECK(kind_of([&] { build_ontology(small_edges(), codes, 2); }) == ErrorKind::Config);
  CHECK(kind_of([&] { build_ontology(small_edges(), vocab({"Z"}), 3); }) == ErrorKind::Parse);
  const std::vector<Edge> cyc{{"a", "b"}, {"b", "c"}, {"c", "a"}};
  CHECK(kind_of([&] { build_ontology(cyc, vocab({"a"}), 5); }) == ErrorKind::Parse);
  const std::vector<Edge> two{{"a", "ROOT"}, {"a", "b"}, {"b", "ROOT"}};
  CHECK(kind_of([&] { build_ontology(two, vocab({"a"}), 3); }) == ErrorKind::Parse);
  const std::vector<Edge> orphan{{"a", "b"}};
  CHECK(kind_of([&] { build_ontology(orphan, vocab({"a"}), 3); }) == ErrorKind::Parse);
}

TEST_CASE("edge list files round-trip") {
  const auto dir = test::temp_dir("onto");
  write_edge_list(small_edges(), dir / "o.tsv");
  CHECK(read_edge_list(dir / "o.tsv") == small_edges());
  test::write_text(dir / "bad.tsv", "A\tROOT\nno tab here\n");
  try {
    read_edge_list(dir / "bad.tsv");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK(kind_of([&] { read_edge_list(dir / "none.tsv"); }) == ErrorKind::Io);
}

TEST_CASE("assemble: rows concatenate the path's level rows") {
  const std::vector<Edge> chain{{"r", "ROOT"}, {"m", "r"}, {"leaf", "m"}, {"leaf2", "m"}};
  const OntologyTree t = build_ontology(chain, vocab({"leaf", "leaf2"}), 3);
  ad::ParamStore store;
  Rng rng(1);
  HierEmbedding h(store, t, 2, rng, false);
  REQUIRE(h.levels().size() == 3);
  store.get("hier.level1").mutable_value().row(0) << 1, 0;
  store.get("hier.level2").mutable_value().row(0) << 0, 1;
  store.get("hier.level3").mutable_value().row(t.leaf_paths[0][2]) << 2, 2;
  const ad::Mat L = h.assemble().value();
  CHECK(L.cols() == 6);
  ad::Mat expected(1, 6);
  expected << 1, 0, 0, 1, 2, 2;
  CHECK(L.row(0) == expected.row(0));
  // siblings agree on the first (H-1)*m_c components
  CHECK(L.row(0).head(4) == L.row(1).head(4));
  CHECK(L.row(0).tail(2) != L.row(1).tail(2));
}

TEST_CASE("assemble: shared leading blocks equal the common-ancestor depth") {
  SynthConfig cfg = test::small_synth(5, 17);
  cfg.n_codes = 27;
  const SynthData s = generate(cfg);
  const OntologyTree t = build_ontology(s.ontology, s.cohort.codes, 4);  // one virtual level
  ad::ParamStore store;
  Rng rng(3);
  const std::size_t mc = 2;
  HierEmbedding h(store, t, mc, rng, false);
  const ad::Mat L = h.assemble().value();

  std::map<std::string, std::string> parent;
  for (const auto& [c, p] : s.ontology) parent[c] = p;
  auto ancestors = [&](const std::string& code) {
    std::vector<std::string> chain;
    for (std::string n = code; n != kRootToken; n = parent[n]) chain.insert(chain.begin(), n);
    return chain;
  };
  for (std::size_t i = 0; i < t.code_count(); ++i) {
    for (std::size_t j = 0; j < t.code_count(); ++j) {
      const auto a = ancestors(s.cohort.codes.id(static_cast<CodeId>(i)));
      const auto b = ancestors(s.cohort.codes.id(static_cast<CodeId>(j)));
      std::size_t lca = 0;
      while (lca < a.size() && lca < b.size() && a[lca] == b[lca]) ++lca;
      if (i == j) lca = t.depth;  // virtual padding is shared with itself
      std::size_t blocks = 0;
      while (blocks < t.depth &&
             L.row(static_cast<ad::Index>(i)).segment(static_cast<ad::Index>(blocks * mc), mc) ==
                 L.row(static_cast<ad::Index>(j)).segment(static_cast<ad::Index>(blocks * mc), mc)) {
        ++blocks;
      }
      CHECK(blocks == lca);
    }
  }
}

TEST_CASE("assemble: perturbing an ancestor row moves exactly its descendants") {
  const OntologyTree t = build_ontology(small_edges(), vocab({"A11", "A12", "A2", "B"}), 3);
  ad::ParamStore store;
  Rng rng(2);
  HierEmbedding h(store, t, 3, rng, false);
  const ad::Mat before = h.assemble().value();
  const std::int32_t a1 = t.leaf_paths[0][1];  // "A1" at level 2
  store.get("hier.level2").mutable_value()(a1, 1) += 0.5;
  const ad::Mat after = h.assemble().value();
  CHECK(after.row(0) != before.row(0));
  CHECK(after.row(1) != before.row(1));
  CHECK(after.row(2) == before.row(2));
  CHECK(after.row(3) == before.row(3));
}

TEST_CASE("assemble: gradients reach every selected level row") {
  const OntologyTree t = build_ontology(small_edges(), vocab({"A11", "A12", "A2", "B"}), 3);
  ad::ParamStore store;
  Rng rng(4);
  HierEmbedding h(store, t, 2, rng, false);
  ad::sum(h.assemble()).backward();
  // level 1 row "A" is used by three codes, "B" by one
  const ad::Mat g0 = h.levels()[0].grad();
  const auto a = t.leaf_paths[0][0];
  const auto b = t.leaf_paths[3][0];
  CHECK(g0(a, 0) == 3.0);
  CHECK(g0(b, 1) == 1.0);
  const ad::Mat g2 = h.levels()[2].grad();
  CHECK((g2.array() == 1.0).all());
}

TEST_CASE("flat embedding: one unstructured matrix without sharing") {
  const OntologyTree t = build_ontology(small_edges(), vocab({"A11", "A12", "A2", "B"}), 3);
  ad::ParamStore store;
  Rng rng(5);
  HierEmbedding h(store, t, 2, rng, true);
  CHECK(h.levels().empty());
  CHECK(store.contains("hier.flat"));
  const ad::Mat L = h.assemble().value();
  CHECK(L.rows() == 4);
  CHECK(L.cols() == 6);
  CHECK(L.row(0).head(4) != L.row(1).head(4));
  const double bound = std::sqrt(6.0 / (4 + 6));
  CHECK(L.cwiseAbs().maxCoeff() <= bound);
}
