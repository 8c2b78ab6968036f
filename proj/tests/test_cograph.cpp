#include <doctest.h>

#include <random>
#include <set>

#include "support.hpp"
#include "tham/cograph.hpp"
#include "tham/error.hpp"

using namespace tham;

namespace {

Cohort cohort_of(std::size_t n_codes, std::size_t n_drugs,
                 const std::vector<std::pair<std::vector<CodeId>, std::vector<CodeId>>>& visits) {
  Cohort c;
  for (std::size_t i = 0; i < n_codes; ++i) c.codes.add("c" + std::to_string(i));
  for (std::size_t i = 0; i < n_drugs; ++i) c.drugs.add("d" + std::to_string(i));
  Patient p;
  p.id = "p";
  std::int64_t day = 0;
  for (const auto& [codes, drugs] : visits) {
    Visit v;
    v.admit_day = day++;
    v.codes = codes;
    v.drugs = drugs;
    p.visits.push_back(v);
    p.intervals.push_back(p.intervals.empty() ? 0 : 1);
  }
  c.patients.push_back(p);
  return c;
}

// Pair counts straight from the definition, then threshold and renormalize.
ad::Mat oracle_acc(const Cohort& c, double lambda) {
  const std::size_t n = c.codes.size();
  std::vector<std::vector<double>> e(n, std::vector<double>(n, 0.0));
  for (const Patient& p : c.patients) {
    for (const Visit& v : p.visits) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          bool hi = false, hj = false;
          for (CodeId x : v.codes) {
            hi |= x == static_cast<CodeId>(i);
            hj |= x == static_cast<CodeId>(j);
          }
          if (hi && hj) e[i][j] += 1;
        }
      }
    }
  }
  ad::Mat a = ad::Mat::Zero(static_cast<ad::Index>(n), static_cast<ad::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < n; ++j) total += e[i][j];
    if (total == 0) continue;
    std::vector<bool> in_k(n, false);
    double k_total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && e[i][j] > 0 && e[i][j] / total >= lambda) {
        in_k[j] = true;
        k_total += e[i][j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (in_k[j]) a(static_cast<ad::Index>(i), static_cast<ad::Index>(j)) = e[i][j] / k_total;
    }
  }
  return a;
}

}  // namespace

TEST_CASE("bdc: counts per visit, then row-normalizes") {
  const Cohort c = cohort_of(3, 2, {{{0, 1}, {0}}, {{0, 1}, {0}}});
  const ad::Mat b = build_bdc(c);
  CHECK(b(0, 0) == 0.5);
  CHECK(b(0, 1) == 0.5);
  CHECK(b(0, 2) == 0.0);
  CHECK(b.row(1).isZero());  // unused drug keeps a zero row
  const ad::Mat single = build_bdc(cohort_of(1, 1, {{{0}, {0}}}));
  CHECK(single(0, 0) == 1.0);
}

TEST_CASE("acc: hand examples from the threshold rule") {
  // e12 = 3, e13 = 1 (0-based: codes 0, 1, 2)
  const Cohort c = cohort_of(3, 0, {{{0, 1}, {}}, {{0, 1}, {}}, {{0, 1}, {}}, {{0, 2}, {}}});
  const ad::Mat a02 = build_acc(c, 0.2);
  CHECK(a02(0, 1) == 0.75);
  CHECK(a02(0, 2) == 0.25);
  const ad::Mat a03 = build_acc(c, 0.3);
  CHECK(a03(0, 1) == 1.0);
  CHECK(a03(0, 2) == 0.0);
  // asymmetry: row 1 only sees code 0
  CHECK(a02(1, 0) == 1.0);
  CHECK(a02(0, 1) == 0.75);
  for (ad::Index i = 0; i < 3; ++i) CHECK(a02(i, i) == 0.0);
}

TEST_CASE("acc: threshold outside [0, 1] is a config error") {
  const ad::Mat e = ad::Mat::Zero(2, 2);
  CHECK_THROWS_AS(build_acc(e, 1.5), Error);
  CHECK_THROWS_AS(build_acc(e, -0.1), Error);
}

TEST_CASE("acc: brute-force oracle, row sums and monotonicity on random cohorts") {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_codes = 1 + gen() % 10;
    const std::size_t n_drugs = 1 + gen() % 5;
    std::vector<std::pair<std::vector<CodeId>, std::vector<CodeId>>> visits;
    const std::size_t n_visits = 1 + gen() % 12;
    for (std::size_t v = 0; v < n_visits; ++v) {
      std::vector<CodeId> codes, drugs;
      for (std::size_t i = 0; i < n_codes; ++i) {
        if (gen() % 3 == 0) codes.push_back(static_cast<CodeId>(i));
      }
      if (codes.empty()) codes.push_back(static_cast<CodeId>(gen() % n_codes));
      for (std::size_t d = 0; d < n_drugs; ++d) {
        if (gen() % 3 == 0) drugs.push_back(static_cast<CodeId>(d));
      }
      visits.emplace_back(codes, drugs);
    }
    const Cohort c = cohort_of(n_codes, n_drugs, visits);
    const double lambda = std::uniform_real_distribution<double>(0.0, 0.6)(gen);
    const ad::Mat a = build_acc(c, lambda);
    CHECK(a == oracle_acc(c, lambda));
    for (ad::Index i = 0; i < a.rows(); ++i) {
      CHECK(a(i, i) == 0.0);
      const double s = a.row(i).sum();
      CHECK((s == 0.0 || std::abs(s - 1.0) <= 1e-12));
    }
    const ad::Mat higher = build_acc(c, std::min(1.0, lambda + 0.2));
    for (ad::Index i = 0; i < a.size(); ++i) {
      if (higher.data()[i] != 0.0) CHECK(a.data()[i] != 0.0);
    }
  }
}

TEST_CASE("graphs: built from the training split only") {
  const SynthData s = generate(test::small_synth(60, 12));
  ModelConfig cfg = test::tiny_config();
  SplitConfig split;
  split.counts = SplitCounts{40, 10, 10};
  split.seed = 3;
  const PreparedData a = prepare(s.cohort, &s.ontology, cfg, split);

  // Rewrite every non-training patient; the training graphs must not move.
  Cohort altered = s.cohort;
  std::set<std::size_t> train_ids;
  for (const Example& ex : a.split.train) train_ids.insert(ex.patient);
  for (std::size_t i = 0; i < altered.patients.size(); ++i) {
    if (train_ids.count(i)) continue;
    for (Visit& v : altered.patients[i].visits) {
      v.codes = {0, 1, 2, 3};
      v.drugs = {0};
    }
  }
  const PreparedData b = prepare(altered, &s.ontology, cfg, split);
  CHECK(a.graphs.bdc == b.graphs.bdc);
  CHECK(a.graphs.acc == b.graphs.acc);
  CHECK(a.train_cohort.codes == b.train_cohort.codes);
}

TEST_CASE("write_coo: one line per nonzero") {
  ad::Mat m = ad::Mat::Zero(2, 3);
  m(0, 2) = 0.25;
  m(1, 0) = 1.0;
  const auto dir = test::temp_dir("coo");
  write_coo(m, dir / "m.coo");
  CHECK(test::read_text(dir / "m.coo") == "0 2 0.25\n1 0 1\n");
}
