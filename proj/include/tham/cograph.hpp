#pragma once

#include <filesystem>

#include "tham/autodiff.hpp"
#include "tham/cohort.hpp"

namespace tham {

/// Drug-disease and disease-disease co-occurrence matrices, counted per visit
/// over the training patients only.
struct CoGraphs {
  ad::Mat bdc;          // |D| x |C|, nonzero rows sum to 1
  ad::Mat acc;          // |C| x |C|, zero diagonal, nonzero rows sum to 1
  ad::Mat pair_counts;  // |C| x |C| raw visit co-occurrence counts e_ij
  double threshold = 0.01;
};

/// Raw drug-code visit counts, each nonzero row divided by its sum.
ad::Mat build_bdc(const Cohort& train);

/// e_ij for i != j: visits in which both c_i and c_j appear.
ad::Mat count_code_pairs(const Cohort& train);

/// Keeps, per row, the neighbours whose share of the row's co-occurrences is
/// at least `threshold` and renormalizes over them.
ad::Mat build_acc(const ad::Mat& pair_counts, double threshold);
ad::Mat build_acc(const Cohort& train, double threshold);

CoGraphs build_graphs(const Cohort& train, double threshold);

/// `row col value` per nonzero entry.
void write_coo(const ad::Mat& matrix, const std::filesystem::path& path);

}  // namespace tham
