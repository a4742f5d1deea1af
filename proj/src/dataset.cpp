#include "itr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace itr {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == delimiter && !quoted) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

bool is_missing_token(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" ||
         cell == "NULL";
}

double parse_cell(const std::string& cell, const std::string& column,
                  std::size_t line_no, const std::string& source) {
  if (is_missing_token(cell)) {
    throw InputError(source + ":" + std::to_string(line_no) +
                     ": missing value in column '" + column +
                     "' (impute or drop rows before fitting)");
  }
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw InputError(source + ":" + std::to_string(line_no) +
                     ": non-numeric value '" + cell + "' in column '" + column +
                     "'");
  }
  return value;
}

}  // namespace

void Dataset::validate() const {
  const Index rows = covariates.rows();
  require(rows > 0, "dataset is empty");
  require(treatment.size() == rows && outcome.size() == rows,
          "treatment/outcome length does not match covariate rows");
  require(static_cast<Index>(names.size()) == covariates.cols(),
          "number of covariate names does not match covariate columns");
  require(covariates.allFinite(), "covariates contain missing or non-finite values");
  require(outcome.allFinite(), "outcome contains missing or non-finite values");
  for (Index i = 0; i < rows; ++i) {
    require(treatment[i] == 0 || treatment[i] == 1,
            "invalid treatment value " + std::to_string(treatment[i]) +
                " at row " + std::to_string(i));
  }
  const Index n1 = treatment.sum();
  require(n1 > 0 && n1 < rows, "both treatment arms must be present");
  std::set<std::string> seen;
  for (const auto& name : names) {
    require(seen.insert(name).second, "duplicate covariate name '" + name + "'");
  }
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.covariates = covariates(rows, Eigen::all);
  out.treatment = treatment(rows);
  out.outcome = outcome(rows);
  out.names = names;
  return out;
}

Index Dataset::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<Index>(it - names.begin());
}

Dataset parse_table(const std::string& text, const TableOptions& options,
                    const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_line(line, options.delimiter);
      break;
    }
  }
  require(!header.empty(), source + ": no header row");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) {
    header[0] = header[0].substr(3);
  }

  auto find_column = [&](const std::string& name) -> long {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<long>(it - header.begin());
  };
  const long outcome_col = find_column(options.outcome);
  const long treatment_col = find_column(options.treatment);
  require(outcome_col >= 0, source + ": outcome column '" + options.outcome + "' not found");
  require(treatment_col >= 0,
          source + ": treatment column '" + options.treatment + "' not found");
  for (const auto& name : options.exclude) {
    require(find_column(name) >= 0, source + ": excluded column '" + name + "' not found");
  }

  std::vector<std::size_t> covariate_cols;
  Dataset data;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const auto& name = header[j];
    if (static_cast<long>(j) == outcome_col || static_cast<long>(j) == treatment_col) continue;
    if (std::find(options.exclude.begin(), options.exclude.end(), name) !=
        options.exclude.end()) {
      continue;
    }
    covariate_cols.push_back(j);
    data.names.push_back(name);
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> treatment;
  std::vector<double> outcome;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line, options.delimiter);
    if (cells.size() != header.size()) {
      throw InputError(source + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    }
    const double a = parse_cell(cells[treatment_col], options.treatment, line_no, source);
    if (a != 0.0 && a != 1.0) {
      throw InputError(source + ":" + std::to_string(line_no) + ": invalid treatment value '" +
                       cells[treatment_col] + "' (must be 0 or 1)");
    }
    treatment.push_back(static_cast<int>(a));
    outcome.push_back(parse_cell(cells[outcome_col], options.outcome, line_no, source));
    std::vector<double> row;
    row.reserve(covariate_cols.size());
    for (auto j : covariate_cols) row.push_back(parse_cell(cells[j], header[j], line_no, source));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), source + ": no data rows");

  const Index n = static_cast<Index>(rows.size());
  const Index p = static_cast<Index>(covariate_cols.size());
  data.covariates.resize(n, p);
  data.treatment.resize(n);
  data.outcome.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) data.covariates(i, j) = rows[i][j];
    data.treatment[i] = treatment[i];
    data.outcome[i] = outcome[i];
  }
  data.validate();
  return data;
}

Dataset load_table(const std::string& path, const TableOptions& options) {
  std::ifstream file(path);
  if (!file) throw InputError("cannot open data file '" + path + "'");
  std::stringstream buffer;
  buffer << file.rdbuf();
  return parse_table(buffer.str(), options, path);
}

Matrix NormalizedDataset::design_for(const Matrix& raw) const {
  require(raw.cols() == column_means.size(),
          "covariate matrix has " + std::to_string(raw.cols()) + " columns, expected " +
              std::to_string(column_means.size()));
  Matrix out(raw.rows(), raw.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(raw.cols()) =
      (raw.rowwise() - column_means.transpose()).array().rowwise() /
      column_sds.transpose().array();
  return out;
}

NormalizedDataset normalize(const Dataset& data) {
  data.validate();
  const Index n = data.n();
  require(n >= 2, "need at least two rows to normalize");
  NormalizedDataset out;
  out.base = data;
  out.column_means = data.covariates.colwise().mean().transpose();
  out.column_sds.resize(data.p());
  for (Index j = 0; j < data.p(); ++j) {
    const double ss =
        (data.covariates.col(j).array() - out.column_means[j]).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(out.column_means[j])))) {
      throw InputError("constant column '" + data.names[j] + "' cannot be standardized");
    }
    out.column_sds[j] = sd;
  }
  out.design = out.design_for(data.covariates);
  return out;
}

std::vector<Index> FoldAssignment::test_rows(int fold) const {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < fold_index.size(); ++i) {
    if (fold_index[i] == fold) rows.push_back(static_cast<Index>(i));
  }
  return rows;
}

std::vector<Index> FoldAssignment::train_rows(int fold) const {
  std::vector<Index> rows;
  for (std::size_t i = 0; i < fold_index.size(); ++i) {
    if (fold_index[i] != fold) rows.push_back(static_cast<Index>(i));
  }
  return rows;
}

FoldAssignment kfold_split(const BinaryVector& treatment, int folds, std::uint64_t seed) {
  require(folds >= 2, "need at least 2 folds, got " + std::to_string(folds));
  std::vector<Index> arms[2];
  for (Index i = 0; i < treatment.size(); ++i) {
    require(treatment[i] == 0 || treatment[i] == 1, "treatment must be binary");
    arms[treatment[i]].push_back(i);
  }
  for (int a = 0; a < 2; ++a) {
    require(static_cast<int>(arms[a].size()) >= folds,
            "treatment arm " + std::to_string(a) + " has " + std::to_string(arms[a].size()) +
                " units, fewer than the " + std::to_string(folds) + " folds requested");
  }

  FoldAssignment out;
  out.folds = folds;
  out.seed = seed;
  out.fold_index.assign(treatment.size(), -1);
  std::mt19937_64 rng(seed);
  // Round-robin continues across arms so that overall fold sizes also stay
  // within one of each other.
  std::size_t next = 0;
  for (auto& arm : arms) {
    std::shuffle(arm.begin(), arm.end(), rng);
    for (Index row : arm) {
      out.fold_index[row] = static_cast<int>(next % folds);
      ++next;
    }
  }
  return out;
}

}  // namespace itr
