#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "itr/dataset.hpp"

using namespace itr;

namespace {

TableOptions opts() { return TableOptions{}; }

BinaryVector arms(int treated, int control, std::uint64_t seed) {
  BinaryVector a(treated + control);
  a.head(treated).setOnes();
  a.tail(control).setZero();
  std::mt19937_64 rng(seed);
  std::shuffle(a.data(), a.data() + a.size(), rng);
  return a;
}

}  // namespace

TEST_CASE("three-row table loads") {
  const Dataset d = parse_table("x1,a,y\n0.5,1,2\n1.5,0,3\n-1,1,4\n", opts());
  CHECK(d.n() == 3);
  CHECK(d.p() == 1);
  CHECK(d.names == std::vector<std::string>{"x1"});
  CHECK(d.treatment == (BinaryVector(3) << 1, 0, 1).finished());
  CHECK(d.outcome[2] == 4.0);
  CHECK(d.covariates(1, 0) == 1.5);
}

TEST_CASE("covariates keep file order and honor exclusions") {
  TableOptions o;
  o.outcome = "response";
  o.treatment = "arm";
  o.exclude = {"id"};
  const Dataset d =
      parse_table("id,z,arm,b,response,c\n1,0.1,0,5,1,7\n2,0.2,1,6,2,9\n", o);
  CHECK(d.names == std::vector<std::string>{"z", "b", "c"});
  CHECK(d.covariates(1, 2) == 9.0);
}

TEST_CASE("invalid treatment is rejected") {
  CHECK_THROWS_WITH_AS(parse_table("x1,a,y\n1,2,3\n2,0,1\n", opts()),
                       doctest::Contains("invalid treatment"), InputError);
}

TEST_CASE("missing values are rejected") {
  for (const char* cell : {"", "NA", "NaN"}) {
    const std::string text = std::string("x1,a,y\n1,0,3\n") + cell + ",1,2\n";
    CHECK_THROWS_WITH_AS(parse_table(text, opts()), doctest::Contains("missing value"), InputError);
  }
}

TEST_CASE("non-numeric cells and missing columns are rejected") {
  CHECK_THROWS_AS(parse_table("x1,a,y\nabc,0,3\n1,1,2\n", opts()), InputError);
  CHECK_THROWS_WITH_AS(parse_table("x1,a,outcome\n1,0,3\n", opts()),
                       doctest::Contains("'y'"), InputError);
  CHECK_THROWS_AS(parse_table("x1,a,y\n1,0\n", opts()), InputError);
}

TEST_CASE("missing file is an input error") {
  CHECK_THROWS_AS(load_table("/nonexistent/data.csv", opts()), InputError);
}

TEST_CASE("load_table reads from disk with a custom delimiter") {
  const auto path = std::filesystem::temp_directory_path() / "itr_dataset_test.tsv";
  {
    std::ofstream f(path);
    f << "x1\tx2\ta\ty\n1\t2\t0\t1\n3\t4\t1\t0\n";
  }
  TableOptions o;
  o.delimiter = '\t';
  const Dataset d = load_table(path.string(), o);
  CHECK(d.p() == 2);
  CHECK(d.covariates(1, 1) == 4.0);
  std::filesystem::remove(path);
}

TEST_CASE("dataset validation") {
  Dataset d = parse_table("x1,a,y\n1,0,3\n2,1,2\n", opts());
  CHECK_NOTHROW(d.validate());
  Dataset one_arm = d;
  one_arm.treatment.setOnes();
  CHECK_THROWS_AS(one_arm.validate(), InputError);
  Dataset dup = d;
  dup.covariates.conservativeResize(2, 2);
  dup.covariates.col(1) = d.covariates.col(0);
  dup.names = {"x1", "x1"};
  CHECK_THROWS_AS(dup.validate(), InputError);
  Dataset nan = d;
  nan.covariates(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nan.validate(), InputError);
}

TEST_CASE("normalize a symmetric triple") {
  const Dataset d = parse_table("x1,a,y\n1,0,0\n2,1,0\n3,0,0\n", opts());
  const NormalizedDataset nd = normalize(d);
  CHECK(nd.column_means[0] == doctest::Approx(2.0));
  CHECK(nd.column_sds[0] == doctest::Approx(1.0));
  CHECK(nd.design(0, 1) == doctest::Approx(-1.0));
  CHECK(nd.design(1, 1) == doctest::Approx(0.0));
  CHECK(nd.design(2, 1) == doctest::Approx(1.0));
  CHECK((nd.design.col(0).array() == 1.0).all());
}

TEST_CASE("constant column is named in the error") {
  const Dataset d = parse_table("x1,c,a,y\n1,5,0,0\n2,5,1,0\n3,5,0,0\n", opts());
  CHECK_THROWS_WITH_AS(normalize(d), doctest::Contains("constant column 'c'"), InputError);
}

TEST_CASE("standardized columns have mean 0 and sd 1, and normalize is idempotent") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(4.0, 3.0);
  Dataset d;
  d.covariates.resize(200, 5);
  for (Index i = 0; i < 200; ++i)
    for (Index j = 0; j < 5; ++j) d.covariates(i, j) = normal(rng) * (j + 1);
  d.treatment = arms(100, 100, 1);
  d.outcome = Vector::Zero(200);
  d.names = {"a1", "a2", "a3", "a4", "a5"};
  const NormalizedDataset nd = normalize(d);
  for (Index j = 1; j <= 5; ++j) {
    const auto col = nd.design.col(j);
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / 199.0);
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(sd - 1.0) < 1e-10);
  }
  Dataset again = d;
  again.covariates = nd.design.rightCols(5);
  const NormalizedDataset nd2 = normalize(again);
  CHECK((nd2.design - nd.design).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((nd.design_for(d.covariates) - nd.design).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("divisible folds are exactly balanced") {
  const BinaryVector a = arms(5, 5, 2);
  const FoldAssignment f = kfold_split(a, 5, 42);
  std::vector<int> sizes(5, 0);
  for (int k : f.fold_index) ++sizes[k];
  for (int s : sizes) CHECK(s == 2);
}

TEST_CASE("remainder folds have sizes two or three") {
  const BinaryVector a = arms(6, 5, 2);
  const FoldAssignment f = kfold_split(a, 5, 42);
  std::vector<int> sizes(5, 0);
  for (int k : f.fold_index) ++sizes[k];
  for (int s : sizes) CHECK((s == 2 || s == 3));
}

TEST_CASE("folds are deterministic given the seed") {
  const BinaryVector a = arms(40, 33, 9);
  CHECK(kfold_split(a, 5, 7).fold_index == kfold_split(a, 5, 7).fold_index);
  CHECK(kfold_split(a, 5, 7).fold_index != kfold_split(a, 5, 8).fold_index);
}

TEST_CASE("folds partition the rows and are stratified") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int n1 = 10 + static_cast<int>(seed) * 3;
    const int n0 = 25 + static_cast<int>(seed) * 2;
    const BinaryVector a = arms(n1, n0, seed);
    const int k = 2 + static_cast<int>(seed % 6);
    const FoldAssignment f = kfold_split(a, k, seed);
    std::set<Index> seen;
    for (int fold = 0; fold < k; ++fold) {
      const auto test = f.test_rows(fold);
      const auto train = f.train_rows(fold);
      CHECK(test.size() + train.size() == static_cast<std::size_t>(a.size()));
      int treated = 0;
      for (Index i : test) {
        CHECK(seen.insert(i).second);
        treated += a[i];
      }
      CHECK(std::abs(treated - static_cast<double>(n1) / k) <= 1.0);
    }
    CHECK(seen.size() == static_cast<std::size_t>(a.size()));
  }
}

TEST_CASE("fold preconditions") {
  CHECK_THROWS_AS(kfold_split(arms(5, 5, 1), 1, 0), InputError);
  CHECK_THROWS_AS(kfold_split(arms(3, 10, 1), 5, 0), InputError);
}

TEST_CASE("subset and column lookup") {
  const Dataset d = parse_table("x1,x2,a,y\n1,2,0,3\n4,5,1,6\n7,8,0,9\n", opts());
  const Dataset s = d.subset({2, 0});
  CHECK(s.n() == 2);
  CHECK(s.covariates(0, 1) == 8.0);
  CHECK(s.outcome[1] == 3.0);
  CHECK(d.column("x2") == 1);
  CHECK(d.column("nope") == -1);
}
