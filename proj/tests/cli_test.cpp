#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cubelora/errmodel.hpp"
#include "cubelora/orbit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(CUBELORA_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int st = pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("cubelora_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string catalogs = std::string(" --catalog ") + CUBELORA_DATA_DIR + "/catalogs/ttn.csv --catalog " + CUBELORA_DATA_DIR +
                             "/catalogs/tinygs.csv --catalog " + CUBELORA_DATA_DIR + "/catalogs/satnogs.csv";

}  // namespace

TEST(Cli, SimulatePassSlotsAndCleanTraces) {
  const auto d = scratch("clean");
  const auto r = run("--json simulate-pass --seed 4 --snr-db inf --doppler off --min-elevation-deg 5 --no-iq --out-dir " + d.string());
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_GE(j["packets"].get<int>(), 19);
  EXPECT_LE(j["packets"].get<int>(), 21);
  EXPECT_EQ(j["symbol_errors"].get<int>(), 0);
  std::ifstream in(d / "packet_000.trace.csv");
  const auto t = cubelora::errmodel::read_trace_csv(in);
  EXPECT_EQ(t.symbols.size(), 256u);
  EXPECT_EQ(t.errors(), 0u);
}

TEST(Cli, SimulatePassIsByteIdenticalUnderSeed) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  const std::string args = "simulate-pass --seed 9 --payload-bytes 16 --calibration-trials 200 --out-dir ";
  ASSERT_EQ(run(args + a.string()).code, 0);
  ASSERT_EQ(run(args + b.string()).code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    const auto name = e.path().filename();
    if (name == "pass.json") continue;  // records the output directory
    EXPECT_EQ(slurp(e.path()), slurp(b / name)) << name;
  }
  EXPECT_GT(files, 60u);  // iq + sidecar + trace per packet
  auto ja = json::parse(slurp(a / "pass.json")), jb = json::parse(slurp(b / "pass.json"));
  ja.erase("out_dir");
  jb.erase("out_dir");
  EXPECT_EQ(ja, jb);
}

TEST(Cli, ClosedLoopTrajectory) {
  const auto d = scratch("loop");
  ASSERT_EQ(run("simulate-pass --seed 2 --max-elevation-deg 60 --no-iq --out-dir " + d.string()).code, 0);
  std::ifstream in(d / "doppler.csv");
  EXPECT_GE(cubelora::orbit::read_doppler_csv(in).size(), 15u);
  const auto r = run("--json estimate-trajectory --doppler-csv " + (d / "doppler.csv").string() + " --out " + (d / "est.json").string());
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j["theta_max_deg"].get<double>(), 60.0, 0.25);
  EXPECT_NEAR(j["phi_deg"].get<double>(), 97.52, 0.5);
  EXPECT_EQ(json::parse(slurp(d / "est.json")), j);
}

TEST(Cli, DetectSweep) {
  const auto empty = run("detect-sweep --seed 1 --doppler-min-hz 10 --doppler-max-hz 0");
  ASSERT_EQ(empty.code, 0);
  EXPECT_EQ(empty.out, "doppler_hz,narrow_rate,narrow_snr_db,wide_rate,wide_snr_db\n");

  const auto r = run("--json detect-sweep --seed 1 --snr-db 0 --doppler-max-hz 130000 --doppler-step-hz 10000 --trials 10 --calibration-trials 200");
  ASSERT_EQ(r.code, 0);
  double narrow_limit = 0.0, wide_limit = 0.0;
  const auto rows = json::parse(r.out)["rows"];
  for (const auto& row : rows) {
    const double f = row["doppler_hz"].get<double>();
    if (row["narrow_rate"].get<double>() >= 0.5) narrow_limit = std::max(narrow_limit, f);
    if (row["wide_rate"].get<double>() >= 0.5) wide_limit = std::max(wide_limit, f);
  }
  EXPECT_GE(wide_limit, 4.0 * narrow_limit);
  EXPECT_GT(narrow_limit, 0.0);
}

TEST(Cli, LatencyOrderingAndOutputs) {
  const auto d = scratch("lat");
  const auto r = run("--json latency" + catalogs + " --out-dir " + d.string());
  ASSERT_EQ(r.code, 0);
  const auto c = json::parse(r.out)["catalogs"];
  ASSERT_EQ(c.size(), 3u);
  EXPECT_GT(c[0]["coverage"].get<double>(), c[1]["coverage"].get<double>());
  EXPECT_GT(c[1]["coverage"].get<double>(), c[2]["coverage"].get<double>());
  EXPECT_EQ(json::parse(slurp(d / "latency.json"))["catalogs"], c);
  std::ifstream csv(d / "ttn_latency.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "t_s,latency_s");
}

TEST(Cli, ExportMasks) {
  const auto d = scratch("masks");
  ASSERT_EQ(run("simulate-pass --seed 5 --cadence-s 10 --no-iq --out-dir " + d.string()).code, 0);
  const auto out = d / "masks.bin";
  const auto r = run("--json export-masks --traces " + d.string() + " --count 10000 --payload-bytes 256 --seed 3 --out " + out.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(json::parse(r.out)["bits_per_mask"].get<int>(), 2048);
  EXPECT_EQ(fs::file_size(out), 10000u * 256u);
  const auto masks = cubelora::errmodel::read_mask_file(out);
  ASSERT_EQ(masks.size(), 10000u);
  EXPECT_EQ(masks[0].size(), 2048u);
  const auto side = json::parse(slurp(out.string() + ".json"));
  EXPECT_EQ(side["bit_order"], "lsb-first");

  const auto replay = d / "replay.bin";
  EXPECT_EQ(run("export-masks --source replay --traces " + d.string() + " --count 5 --seed 3 --out " + replay.string()).code, 0);
  EXPECT_EQ(cubelora::errmodel::read_mask_file(replay).size(), 5u);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("simulate-pass --out-dir /tmp/x").code, 1);  // missing seed
  EXPECT_EQ(run("simulate-pass --seed 1 --sf 3 --out-dir /tmp/x").code, 1);
  EXPECT_EQ(run("detect-sweep --seed 1 --snr-db loud").code, 1);
  EXPECT_EQ(run("estimate-trajectory --doppler-csv /nonexistent/curve.csv").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}
