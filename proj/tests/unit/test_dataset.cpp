#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include <samint/dataset.hpp>

#include "../support/temp_dir.hpp"

using namespace samint;

namespace {

const char* kSmallCsv =
    "id,y,x1,x2,note\n"
    "r1,1.0,0.5,10,a\n"
    "r2,2.0,,20,b\n"
    "r3,,0.7,30,c\n"
    "r4,4.0,0.9,NA,d\n"
    "r5,5.0,1.1,50,e\n";

}  // namespace

TEST_CASE("csv loading drops missing responses and imputes covariates",
          "[dataset]") {
  testsupport::TempDir tmp;
  std::string path = tmp.write("small.csv", kSmallCsv);
  LoadReport report;
  Dataset d = load_csv(path, "y", {"id", "note"}, &report);

  REQUIRE(d.n() == 4);  // r3 dropped: missing response
  REQUIRE(d.p() == 2);
  REQUIRE(d.feature_names == std::vector<std::string>{"x1", "x2"});
  REQUIRE(report.rows_total == 5);
  REQUIRE(report.rows_kept == 4);
  REQUIRE(report.rows_dropped_missing_response == 1);
  REQUIRE(report.cells_imputed == 2);
  REQUIRE(report.excluded_columns == std::vector<std::string>{"id", "note"});

  // x1 mean over present cells of kept rows: (0.5 + 0.9 + 1.1) / 3.
  double x1_mean = (0.5 + 0.9 + 1.1) / 3.0;
  REQUIRE(d.X(1, 0) == Catch::Approx(x1_mean).margin(1e-15));
  // x2 mean over present cells of kept rows: (10 + 20 + 50) / 3.
  double x2_mean = (10.0 + 20.0 + 50.0) / 3.0;
  REQUIRE(d.X(2, 1) == Catch::Approx(x2_mean).margin(1e-15));
  REQUIRE(d.y[0] == 1.0);
  REQUIRE(d.y[3] == 5.0);
}

TEST_CASE("csv loading reports malformed numbers with location", "[dataset]") {
  testsupport::TempDir tmp;
  std::string path = tmp.write("bad.csv", "y,x1\n1.0,oops\n");
  REQUIRE_THROWS_AS(load_csv(path, "y", {}), DataError);
  std::string path2 = tmp.write("inf.csv", "y,x1\n1.0,inf\n");
  REQUIRE_THROWS_AS(load_csv(path2, "y", {}), DataError);
  REQUIRE_THROWS_AS(load_csv(tmp.file("absent.csv"), "y", {}), DataError);
  std::string path3 = tmp.write("nohead.csv", "");
  REQUIRE_THROWS_AS(load_csv(path3, "y", {}), DataError);
  std::string path4 = tmp.write("nocol.csv", "y,x1\n1.0,2.0\n");
  REQUIRE_THROWS_AS(load_csv(path4, "z", {}), DataError);
}

TEST_CASE("standardizer produces unit-scale columns and round-trips",
          "[dataset]") {
  Dataset d;
  d.X.resize(4, 2);
  d.X << 1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0;
  d.y.resize(4);
  d.y << 1.0, 2.0, 3.0, 4.0;
  d.feature_names = {"a", "b"};
  d.row_ids = {"1", "2", "3", "4"};

  auto [std_ctx, out] = standardize(d);
  for (int j = 0; j < 2; ++j) {
    double m = out.X.col(j).mean();
    double sd = std::sqrt((out.X.col(j).array() - m).square().sum() / 3.0);
    REQUIRE(m == Catch::Approx(0.0).margin(1e-14));
    REQUIRE(sd == Catch::Approx(1.0).margin(1e-12));
  }
  REQUIRE(std_ctx.means[0] == Catch::Approx(2.5).margin(1e-15));
  REQUIRE(std_ctx.means[1] == Catch::Approx(25.0).margin(1e-15));

  // Applying the saved transform to the original data reproduces out.X.
  Eigen::MatrixXd again = std_ctx.apply(d.X);
  REQUIRE(again.isApprox(out.X, 1e-14));
}

TEST_CASE("split is deterministic, disjoint, and exhaustive", "[dataset]") {
  Dataset d;
  const int n = 103;
  d.X.resize(n, 1);
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = i;
    d.y[i] = 2 * i;
    d.row_ids.push_back(std::to_string(i));
  }
  d.feature_names = {"x"};

  auto parts = split(d, {0.6, 0.2, 0.2}, 7);
  auto parts2 = split(d, {0.6, 0.2, 0.2}, 7);
  auto parts3 = split(d, {0.6, 0.2, 0.2}, 8);

  REQUIRE(parts[0].n() + parts[1].n() + parts[2].n() == n);
  for (int s = 0; s < 3; ++s) {
    REQUIRE(parts[s].n() > 0);
    REQUIRE(parts[s].row_ids == parts2[s].row_ids);  // same seed, same split
  }
  REQUIRE(parts[0].row_ids != parts3[0].row_ids);  // different seed

  std::set<std::string> seen;
  for (const auto& part : parts)
    for (const auto& id : part.row_ids) REQUIRE(seen.insert(id).second);
  REQUIRE(seen.size() == static_cast<std::size_t>(n));

  // Rows keep their own response: X and y stay aligned through the shuffle.
  for (const auto& part : parts)
    for (Eigen::Index i = 0; i < part.n(); ++i)
      REQUIRE(part.y[i] == 2.0 * part.X(i, 0));

  REQUIRE_THROWS_AS(split(d, {0.5, 0.4, 0.2}, 1), UsageError);
}

TEST_CASE("prediction frames align columns by name and fill gaps", "[dataset]") {
  testsupport::TempDir tmp;
  // Model expects features (x2, x1) in that order; file has extra columns
  // and a different ordering.
  std::string path = tmp.write("pred.csv",
                               "x1,extra,x2,y\n"
                               "0.5,9,10,1.0\n"
                               ",8,20,2.0\n"
                               "0.9,7,,\n");
  std::vector<std::string> names = {"x2", "x1"};
  Eigen::VectorXd fill(2);
  fill << 111.0, 222.0;

  PredictionFrame frame = load_prediction_frame(path, names, fill);
  REQUIRE(frame.X.rows() == 3);
  REQUIRE(frame.X.cols() == 2);
  REQUIRE(frame.X(0, 0) == 10.0);  // x2 first
  REQUIRE(frame.X(0, 1) == 0.5);   // then x1
  REQUIRE(frame.X(1, 1) == 222.0);  // missing x1 -> fill for x1's slot
  REQUIRE(frame.X(2, 0) == 111.0);  // missing x2 -> fill for x2's slot
  REQUIRE(frame.cells_imputed == 2);
  REQUIRE(frame.y.size() == 0);
  REQUIRE(frame.row_ids == std::vector<std::string>{"1", "2", "3"});

  // With a response column, rows missing the response are dropped.
  PredictionFrame scored = load_prediction_frame(path, names, fill, "y");
  REQUIRE(scored.X.rows() == 2);
  REQUIRE(scored.y.size() == 2);
  REQUIRE(scored.rows_dropped_missing_response == 1);

  // A feature the model needs but the file lacks is an error.
  REQUIRE_THROWS_AS(
      load_prediction_frame(path, {"x1", "zz"}, fill, ""),
      DataError);
}
