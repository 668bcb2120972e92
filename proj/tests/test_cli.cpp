#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("dtc_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(DTC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Cli, ZZScanFindsIdlePoint) {
  auto d = scratch("zz");
  const std::string dev = std::string(DTC_SOURCE_DIR) + "/configs/device_reference.json";
  auto cfg = write(d / "c.json", json{{"device", dev}, {"zz-scan", {{"flux_lo", 0.29}, {"flux_hi", 0.33}, {"points", 9}}}}.dump());
  ASSERT_EQ(run("zz-scan --config " + cfg.string() + " --out " + (d / "o").string()), 0);
  std::ifstream in(d / "o" / "zz_curve.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "phi_ex_over_2pi,zeta_over_2pi_mhz");
  double best_flux = 0, best = 1e9;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto c = line.find(',');
    const double f = std::stod(line.substr(0, c)), z = std::stod(line.substr(c + 1));
    if (std::abs(z) < best) best = std::abs(z), best_flux = f;
    ++rows;
  }
  EXPECT_EQ(rows, 9);
  EXPECT_NEAR(best_flux, 0.309, 0.005);
  auto summary = json::parse(slurp(d / "o" / "zz_summary.json"));
  EXPECT_NEAR(summary["idle_point"].get<double>(), best_flux, 1e-12);
  auto manifest = json::parse(slurp(d / "o" / "manifest_zz-scan.json"));
  EXPECT_EQ(manifest["resolved_inputs"]["device"]["critical_currents"][4].get<double>(), 10.32);
}

TEST(Cli, RBSimIsReproducible) {
  auto d = scratch("rb");
  auto cfg = write(d / "c.json", R"({"rb-sim": {"m_values": [1, 10, 50, 100, 200, 400, 700], "sequences": 5, "shots": 1000}})");
  ASSERT_EQ(run("rb-sim --config " + cfg.string() + " --out " + (d / "a").string() + " --seed 7"), 0);
  ASSERT_EQ(run("rb-sim --config " + cfg.string() + " --out " + (d / "b").string() + " --seed 7 --threads 2"), 0);
  ASSERT_EQ(run("rb-sim --config " + cfg.string() + " --out " + (d / "c").string() + " --seed 8"), 0);
  const auto a = slurp(d / "a" / "rb_dataset.csv");
  EXPECT_EQ(a, slurp(d / "b" / "rb_dataset.csv"));
  EXPECT_NE(a, slurp(d / "c" / "rb_dataset.csv"));
  auto ma = json::parse(slurp(d / "a" / "manifest_rb-sim.json"));
  auto mb = json::parse(slurp(d / "b" / "manifest_rb-sim.json"));
  EXPECT_EQ(ma["inputs_hash"], mb["inputs_hash"]);
  EXPECT_EQ(ma["seed"].get<int>(), 7);
  EXPECT_EQ(ma["outputs"][0], "rb_dataset.csv");
  // 2 variants x 7 lengths x 5 sequences plus the header
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 71);

  // the dataset feeds lrb-fit
  auto fit = write(d / "f.json", json{{"lrb-fit", {{"dataset", (d / "a" / "rb_dataset.csv").string()}}}}.dump());
  ASSERT_EQ(run("lrb-fit --config " + fit.string() + " --out " + (d / "fit").string()), 0);
  auto m = json::parse(slurp(d / "fit" / "cz_metrics.json"));
  EXPECT_NEAR(m["r_cz"].get<double>(), 9e-4, 6e-4);
}

TEST(Cli, CZMetricsHeadline) {
  auto d = scratch("czm");
  ASSERT_EQ(run("cz-metrics --out " + d.string()), 0);
  auto m = json::parse(slurp(d / "cz_metrics.json"));
  EXPECT_NEAR(m["f_bar"].get<double>(), 0.99903, 5e-6);
  EXPECT_NEAR(m["l1_cz"].get<double>(), 0.00027, 1e-15);
}

TEST(Cli, ConfigErrorsExitTwo) {
  auto d = scratch("bad");
  auto typo = write(d / "typo.json", R"({"cz-metrics": {"r_zc": 0.001}})");
  EXPECT_EQ(run("cz-metrics --config " + typo.string() + " --out " + d.string()), 2);
  auto top = write(d / "top.json", R"({"zz_scan": {}})");
  EXPECT_EQ(run("zz-scan --config " + top.string() + " --out " + d.string()), 2);
  auto range = write(d / "range.json", R"({"rb-sim": {"clifford_error": {"l1": 1.5}}})");
  EXPECT_EQ(run("rb-sim --config " + range.string() + " --out " + d.string()), 2);
  EXPECT_EQ(run("bogus-command"), 2);
  EXPECT_EQ(run("cz-metrics --config " + (d / "missing.json").string()), 2);
  EXPECT_FALSE(fs::exists(d / "cz_metrics.json"));
}

TEST(Cli, UnfittableDatasetExitsThree) {
  auto d = scratch("flat");
  std::string csv = "variant,m,seq_index,p_id,p_x1\n";
  for (int m : {1, 2, 5, 10, 20, 50})
    for (int s = 0; s < 3; ++s) csv += "SRB," + std::to_string(m) + "," + std::to_string(s) + ",1,1\n";
  write(d / "flat.csv", csv);
  auto cfg = write(d / "c.json", R"({"lrb-fit": {"dataset": "flat.csv"}})");
  EXPECT_EQ(run("lrb-fit --config " + cfg.string() + " --out " + (d / "o").string()), 3);
}
