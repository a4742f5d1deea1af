#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "itr/common.hpp"

namespace itr {

// Observational sample: covariates X (n x p), binary treatment A and outcome Y.
struct Dataset {
  Matrix covariates;
  BinaryVector treatment;
  Vector outcome;
  std::vector<std::string> names;

  Index n() const { return covariates.rows(); }
  Index p() const { return covariates.cols(); }
  Index treated() const { return treatment.sum(); }

  // Throws InputError when any type invariant is broken (NaNs, non-binary
  // treatment, a missing arm, duplicate names, shape mismatch).
  void validate() const;

  // Rows in `rows`, in that order.
  Dataset subset(const std::vector<Index>& rows) const;

  // Position of a covariate by name, or -1.
  Index column(const std::string& name) const;
};

struct TableOptions {
  std::string outcome = "y";
  std::string treatment = "a";
  std::vector<std::string> exclude;  // columns dropped entirely
  char delimiter = ',';
};

// Reads a delimited text file with a header row. All columns other than the
// outcome, treatment and `exclude` become covariates in file order. Empty
// cells, "NA" and "NaN" are rejected: missing data must be handled upstream.
Dataset load_table(const std::string& path, const TableOptions& options);

// Same as load_table but for in-memory text, mostly for tests.
Dataset parse_table(const std::string& text, const TableOptions& options,
                    const std::string& source = "<memory>");

struct NormalizedDataset {
  Dataset base;
  Vector column_means;
  Vector column_sds;
  Matrix design;  // [1 | standardized covariates]

  // Standardizes raw covariates with the stored means and sds, and prepends
  // the intercept column.
  Matrix design_for(const Matrix& raw_covariates) const;
};

// Column-wise centering and scaling with the sample sd (n - 1 denominator).
// A constant column is an error naming that column.
NormalizedDataset normalize(const Dataset& data);

struct FoldAssignment {
  std::vector<int> fold_index;
  int folds = 0;
  std::uint64_t seed = 0;

  std::vector<Index> test_rows(int fold) const;
  std::vector<Index> train_rows(int fold) const;
};

// K folds stratified by treatment arm: within each arm the fold sizes differ
// by at most one. Deterministic for a given (treatment, folds, seed).
FoldAssignment kfold_split(const BinaryVector& treatment, int folds,
                           std::uint64_t seed);

}  // namespace itr
