#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include <samint/evaluation.hpp>
#include <samint/hierarchy.hpp>
#include <samint/model_io.hpp>

#include "../support/temp_dir.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = SAMINT_CLI_PATH;
const std::string kData = std::string(SAMINT_TEST_DATA_DIR) + "/synthetic_small.csv";

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const testsupport::TempDir& tmp, const std::string& args,
                  const std::string& tag) {
  std::string out_file = tmp.file("stdout_" + tag);
  std::string err_file = tmp.file("stderr_" + tag);
  std::string cmd = "SOURCE_DATE_EPOCH=1700000000 " + kCli + " " + args + " >" +
                    out_file + " 2>" + err_file;
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = testsupport::slurp(out_file);
  r.err = testsupport::slurp(err_file);
  return r;
}

std::string fit_args(const std::string& out_dir, const std::string& extra = "") {
  return "fit --data " + kData +
         " --response y --seed 3 --degree 2 --knots-main 4"
         " --knots-interaction 2 --grid-l1 4 --grid-l2 4 --lambda1-min 1e-3"
         " --lambda1-max 0.5 --out " +
         out_dir + (extra.empty() ? "" : " " + extra);
}

}  // namespace

TEST_CASE("fit produces the full artifact set", "[cli]") {
  testsupport::TempDir tmp;
  std::string out_dir = tmp.file("run1");
  RunResult r = run_cli(tmp, fit_args(out_dir), "fit");
  INFO(r.err);
  REQUIRE(r.exit_code == 0);

  for (const char* name : {"config.json", "load_report.txt", "path_summary.csv",
                           "model.samint", "selection.csv"})
    REQUIRE(fs::exists(fs::path(out_dir) / name));

  // The archive loads and predicts on the training file.
  samint::ModelArchive archive =
      samint::load_model((fs::path(out_dir) / "model.samint").string());
  REQUIRE(archive.provenance.command == "fit");
  REQUIRE(archive.provenance.response_column == "y");
  REQUIRE_FALSE(archive.provenance.data_hash.empty());
  REQUIRE(archive.model.context != nullptr);

  std::string selection =
      testsupport::slurp((fs::path(out_dir) / "selection.csv").string());
  REQUIRE(selection.rfind("field,value\n", 0) == 0);
  REQUIRE(selection.find("lambda1,") != std::string::npos);
  REQUIRE(selection.find("val_rmse,") != std::string::npos);
}

TEST_CASE("identical seeded runs are byte identical", "[cli]") {
  testsupport::TempDir tmp;
  std::string dir_a = tmp.file("a");
  std::string dir_b = tmp.file("b");
  REQUIRE(run_cli(tmp, fit_args(dir_a), "a").exit_code == 0);
  REQUIRE(run_cli(tmp, fit_args(dir_b), "b").exit_code == 0);

  for (const char* name : {"config.json", "load_report.txt", "path_summary.csv",
                           "model.samint", "selection.csv"}) {
    std::string a = testsupport::slurp((fs::path(dir_a) / name).string());
    std::string b = testsupport::slurp((fs::path(dir_b) / name).string());
    INFO(name);
    REQUIRE(a == b);
  }
}

TEST_CASE("predict scores a file with the archived model", "[cli]") {
  testsupport::TempDir tmp;
  std::string out_dir = tmp.file("fit");
  REQUIRE(run_cli(tmp, fit_args(out_dir), "fit").exit_code == 0);
  std::string model = (fs::path(out_dir) / "model.samint").string();

  std::string pred_csv = tmp.file("pred.csv");
  RunResult r = run_cli(tmp, "predict --model " + model + " --data " + kData +
                                 " --out " + pred_csv,
                        "pred");
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  std::string pred = testsupport::slurp(pred_csv);
  REQUIRE(pred.rfind("row_id,prediction\n", 0) == 0);
  // One row per data row (200 rows incl. the missing-response row).
  REQUIRE(std::count(pred.begin(), pred.end(), '\n') == 201);

  // Reruns are byte identical.
  std::string pred2_csv = tmp.file("pred2.csv");
  REQUIRE(run_cli(tmp, "predict --model " + model + " --data " + kData +
                           " --out " + pred2_csv,
                  "pred2")
              .exit_code == 0);
  REQUIRE(testsupport::slurp(pred2_csv) == pred);
}

TEST_CASE("report writes metrics, confusion, sparsity and curves", "[cli]") {
  testsupport::TempDir tmp;
  std::string out_dir = tmp.file("fit");
  REQUIRE(run_cli(tmp, fit_args(out_dir), "fit").exit_code == 0);
  std::string model = (fs::path(out_dir) / "model.samint").string();

  std::string rep_dir = tmp.file("report");
  RunResult r = run_cli(tmp, "report --model " + model + " --data " + kData +
                                 " --pd-grid 12 --out " + rep_dir,
                        "rep");
  INFO(r.err);
  REQUIRE(r.exit_code == 0);

  for (const char* name :
       {"metrics.csv", "quintiles_counts.csv", "quintiles_fractions.csv",
        "sparsity_dense.csv", "sparsity_coords.csv", "support_ordering.csv"})
    REQUIRE(fs::exists(fs::path(rep_dir) / name));

  // Quintile counts sum to the number of scored rows (199 kept rows).
  std::string counts =
      testsupport::slurp((fs::path(rep_dir) / "quintiles_counts.csv").string());
  long total = 0;
  std::istringstream in(counts);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');  // row label
    while (std::getline(cells, cell, ',')) total += std::strtol(cell.c_str(), nullptr, 10);
  }
  REQUIRE(total == 199);

  // Partial-dependence curves exist for every selected block.
  samint::ModelArchive archive = samint::load_model(model);
  for (const auto& [idx, coef] : archive.model.coefficients) {
    fs::path expect =
        idx.is_interaction()
            ? fs::path(rep_dir) / ("pd_int_" + std::to_string(idx.j) + "_" +
                                   std::to_string(idx.k) + ".csv")
            : fs::path(rep_dir) / ("pd_main_" + std::to_string(idx.j) + ".csv");
    INFO(expect.string());
    REQUIRE(fs::exists(expect));
  }
}

TEST_CASE("hierarchy flag emits a hierarchical sibling model", "[cli]") {
  testsupport::TempDir tmp;
  std::string out_dir = tmp.file("fit");
  RunResult r = run_cli(
      tmp, fit_args(out_dir, "--hierarchy --tau-grid 0.2,0.5,0.8"), "fit");
  INFO(r.err);
  REQUIRE(r.exit_code == 0);

  for (const char* name : {"model_hierarchy.samint", "hierarchy_report.csv",
                           "hierarchy_selection.csv"})
    REQUIRE(fs::exists(fs::path(out_dir) / name));

  samint::ModelArchive archive = samint::load_model(
      (fs::path(out_dir) / "model_hierarchy.samint").string());
  REQUIRE(samint::check_strong_hierarchy(archive.model));
}

TEST_CASE("usage and data errors map to distinct exit codes", "[cli]") {
  testsupport::TempDir tmp;
  // Unknown flag: usage error.
  REQUIRE(run_cli(tmp, "fit --no-such-flag", "e1").exit_code == 1);
  // Missing data file: data error.
  RunResult missing = run_cli(
      tmp, "fit --data /nonexistent/x.csv --response y --out " + tmp.file("x"),
      "e2");
  REQUIRE(missing.exit_code == 2);
  REQUIRE(missing.err.find("data error") != std::string::npos);
  // Invalid penalty range: usage error with message.
  RunResult bad = run_cli(tmp,
                          "fit --data " + kData +
                              " --response y --lambda1-min 5 --lambda1-max 1"
                              " --out " +
                              tmp.file("y"),
                          "e3");
  REQUIRE(bad.exit_code == 1);
  REQUIRE(bad.err.find("usage error") != std::string::npos);
  // Unreadable model: data error.
  REQUIRE(run_cli(tmp, "predict --model /nonexistent.samint --data " + kData +
                           " --out " + tmp.file("p.csv"),
                  "e4")
              .exit_code == 2);
}
