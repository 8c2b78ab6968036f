#include "tham/cograph.hpp"

#include <cstdio>
#include <fstream>

#include "tham/error.hpp"

namespace tham {

ad::Mat build_bdc(const Cohort& train) {
  ad::Mat b = ad::Mat::Zero(static_cast<ad::Index>(train.drugs.size()),
                            static_cast<ad::Index>(train.codes.size()));
  for (const Patient& p : train.patients) {
    for (const Visit& v : p.visits) {
      for (CodeId d : v.drugs) {
        if (d == Vocab::kUnk) continue;
        for (CodeId c : v.codes) {
          if (c != Vocab::kUnk) b(d, c) += 1.0;
        }
      }
    }
  }
  for (ad::Index r = 0; r < b.rows(); ++r) {
    const double total = b.row(r).sum();
    if (total > 0) b.row(r) /= total;
  }
  return b;
}

ad::Mat count_code_pairs(const Cohort& train) {
  const auto n = static_cast<ad::Index>(train.codes.size());
  ad::Mat e = ad::Mat::Zero(n, n);
  for (const Patient& p : train.patients) {
    for (const Visit& v : p.visits) {
      for (CodeId i : v.codes) {
        if (i == Vocab::kUnk) continue;
        for (CodeId j : v.codes) {
          if (j != Vocab::kUnk && i != j) e(i, j) += 1.0;
        }
      }
    }
  }
  return e;
}

ad::Mat build_acc(const ad::Mat& pair_counts, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) {
    fail(ErrorKind::Config, "co-occurrence threshold must lie in [0, 1]");
  }
  const ad::Index n = pair_counts.rows();
  ad::Mat a = ad::Mat::Zero(n, n);
  for (ad::Index i = 0; i < n; ++i) {
    double row_total = 0.0;
    for (ad::Index j = 0; j < n; ++j) {
      if (j != i) row_total += pair_counts(i, j);
    }
    if (row_total <= 0.0) continue;
    double kept_total = 0.0;
    for (ad::Index j = 0; j < n; ++j) {
      if (j != i && pair_counts(i, j) > 0.0 && pair_counts(i, j) / row_total >= threshold) {
        kept_total += pair_counts(i, j);
      }
    }
    if (kept_total <= 0.0) continue;
    for (ad::Index j = 0; j < n; ++j) {
      if (j != i && pair_counts(i, j) > 0.0 && pair_counts(i, j) / row_total >= threshold) {
        a(i, j) = pair_counts(i, j) / kept_total;
      }
    }
  }
  return a;
}

ad::Mat build_acc(const Cohort& train, double threshold) {
  return build_acc(count_code_pairs(train), threshold);
}

CoGraphs build_graphs(const Cohort& train, double threshold) {
  CoGraphs g;
  g.threshold = threshold;
  g.bdc = build_bdc(train);
  g.pair_counts = count_code_pairs(train);
  g.acc = build_acc(g.pair_counts, threshold);
  return g;
}

void write_coo(const ad::Mat& matrix, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  char buf[64];
  for (ad::Index r = 0; r < matrix.rows(); ++r) {
    for (ad::Index c = 0; c < matrix.cols(); ++c) {
      if (matrix(r, c) == 0.0) continue;
      std::snprintf(buf, sizeof buf, "%.17g", matrix(r, c));
      out << r << ' ' << c << ' ' << buf << '\n';
    }
  }
}

}  // namespace tham
