// End-to-end tests of the biphoton binary: exit codes, file outputs and
// reproducibility contracts.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "biphoton/scenarios.hpp"
#include "biphoton/tag_stream.hpp"
#include "gtest/gtest.h"

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return BIPHOTON_CLI_PATH; }

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli.log";
  const std::string cmd =
      std::string(cli_path()) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult res;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream buf;
  buf << in.rdbuf();
  res.output = buf.str();
  return res;
}

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("biphoton_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  fs::path write_file(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    std::ofstream out(p);
    out << content;
    return p;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  fs::path dir_;
};

const char* kDoublePassIdler = R"([scenario]
type = double_pass
rate_scale = 1000

[coherence]
l_coh = 100

[sweep]
coordinate = idler_mirror
start = -1
stop = 1
points = 501
)";

const char* kHom = R"([scenario]
type = hom
rate_scale = 1000

[coherence]
l_coh = 100

[sweep]
coordinate = delta_L_prime
start = -500
stop = 500
points = 1001
)";

const char* kTags = R"([tags]
pair_rate = 1e4
duration = 10
)";

}  // namespace

TEST_F(CliTest, SweepDoublePassSinglesEqualCoincidences) {
  const auto cfg = write_file("dp.cfg", kDoublePassIdler);
  const auto out = dir_ / "trace.csv";
  const auto res = run_cli("sweep " + cfg.string() + " -o " + out.string(), dir_);
  ASSERT_EQ(res.exit_code, 0) << res.output;

  std::ifstream in(out);
  const auto trace = biphoton::read_trace_csv(in);
  ASSERT_EQ(trace.size(), 501u);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_EQ(trace.r_a[i], trace.r_ab[i]);
    EXPECT_EQ(trace.r_b[i], trace.r_ab[i]);
  }
  EXPECT_TRUE(fs::exists(dir_ / "trace.csv.manifest.json"));
}

TEST_F(CliTest, SweepHomHasNullAtBalancedPosition) {
  const auto cfg = write_file("hom.cfg", kHom);
  const auto out = dir_ / "hom.csv";
  const auto res = run_cli("sweep " + cfg.string() + " -o " + out.string(), dir_);
  ASSERT_EQ(res.exit_code, 0) << res.output;
  std::ifstream in(out);
  const auto trace = biphoton::read_trace_csv(in);
  double min_rab = 1e300;
  std::size_t argmin = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace.r_ab[i] < min_rab) {
      min_rab = trace.r_ab[i];
      argmin = i;
    }
  }
  EXPECT_NEAR(trace.coordinate[argmin], 0.0, 1e-12);
  EXPECT_NEAR(min_rab, 0.0, 1e-9);
}

TEST_F(CliTest, MissingRequiredKeyExitsTwoAndNamesIt) {
  const auto cfg = write_file("bad.cfg",
                              "[scenario]\ntype = hom\n[sweep]\ncoordinate = "
                              "delta_L_prime\nstart = -500\nstop = 500\npoints = 101\n");
  const auto res = run_cli("sweep " + cfg.string() + " -o " + (dir_ / "x.csv").string(), dir_);
  EXPECT_EQ(res.exit_code, 2);
  EXPECT_NE(res.output.find("l_coh"), std::string::npos) << res.output;
}

TEST_F(CliTest, SetOverrideChangesResolvedConfig) {
  const auto cfg = write_file("hom.cfg", kHom);
  const auto out = dir_ / "hom.csv";
  const auto res = run_cli(
      "sweep " + cfg.string() + " -o " + out.string() + " --set coherence.l_coh=200", dir_);
  ASSERT_EQ(res.exit_code, 0) << res.output;
  const std::string manifest = slurp(dir_ / "hom.csv.manifest.json");
  EXPECT_NE(manifest.find("\"coherence.l_coh\": \"200\""), std::string::npos) << manifest;
}

TEST_F(CliTest, TagsDeterministicAcrossRuns) {
  const auto cfg = write_file("tags.cfg", kTags);
  const auto d1 = dir_ / "run1";
  const auto d2 = dir_ / "run2";
  ASSERT_EQ(run_cli("tags " + cfg.string() + " --seed 42 -o " + d1.string(), dir_).exit_code, 0);
  ASSERT_EQ(run_cli("tags " + cfg.string() + " --seed 42 -o " + d2.string(), dir_).exit_code, 0);
  EXPECT_EQ(slurp(d1 / "tags_a.btag"), slurp(d2 / "tags_a.btag"));
  EXPECT_EQ(slurp(d1 / "tags_b.btag"), slurp(d2 / "tags_b.btag"));

  const auto d3 = dir_ / "run3";
  ASSERT_EQ(run_cli("tags " + cfg.string() + " --seed 43 -o " + d3.string(), dir_).exit_code, 0);
  EXPECT_NE(slurp(d1 / "tags_a.btag"), slurp(d3 / "tags_a.btag"));
}

TEST_F(CliTest, TagsZeroDurationWritesHeaderOnlyFiles) {
  const auto cfg = write_file("tags.cfg", kTags);
  const auto d = dir_ / "empty";
  const auto res =
      run_cli("tags " + cfg.string() + " --duration 0 --seed 1 -o " + d.string(), dir_);
  ASSERT_EQ(res.exit_code, 0) << res.output;
  EXPECT_EQ(fs::file_size(d / "tags_a.btag"), 16u);
  EXPECT_EQ(fs::file_size(d / "tags_b.btag"), 16u);
}

TEST_F(CliTest, TagsCountMatchesPoissonExpectation) {
  const auto cfg = write_file("tags.cfg", kTags);
  const auto d = dir_ / "counts";
  ASSERT_EQ(run_cli("tags " + cfg.string() + " --seed 7 -o " + d.string(), dir_).exit_code, 0);
  // 16-byte header + 8 bytes per tag; 1e5 expected tags within 4 sigma.
  const auto n = double(fs::file_size(d / "tags_a.btag") - 16) / 8.0;
  EXPECT_NEAR(n, 1e5, 4.0 * std::sqrt(1e5));
}

TEST_F(CliTest, CorrelateIdenticalAndDisjointStreams) {
  const auto cfg = write_file("tags.cfg", kTags);
  const auto d = dir_ / "tags";
  ASSERT_EQ(run_cli("tags " + cfg.string() + " --seed 11 -o " + d.string(), dir_).exit_code, 0);

  const auto out = dir_ / "coinc.csv";
  const auto res = run_cli("correlate " + (d / "tags_a.btag").string() + " " +
                               (d / "tags_b.btag").string() + " -w 1ns -o " + out.string(),
                           dir_);
  ASSERT_EQ(res.exit_code, 0) << res.output;
  const std::string csv = slurp(out);
  // Perfect efficiency, no jitter: every tag coincides, N == singles.
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  const auto first_comma = row.find(',');
  const auto second_comma = row.find(',', first_comma + 1);
  EXPECT_EQ(row.substr(0, first_comma),
            row.substr(first_comma + 1, second_comma - first_comma - 1));
}

TEST_F(CliTest, CorrelateRejectsCorruptStream) {
  const auto bad = write_file("bad.btag", "not a stream at all");
  const auto res = run_cli(
      "correlate " + bad.string() + " " + bad.string() + " -o " + (dir_ / "x.csv").string(),
      dir_);
  EXPECT_EQ(res.exit_code, 3);
}

TEST_F(CliTest, FitRecoversHomDipParameters) {
  const auto cfg = write_file("hom.cfg", kHom);
  const auto trace = dir_ / "hom.csv";
  ASSERT_EQ(run_cli("sweep " + cfg.string() + " -o " + trace.string(), dir_).exit_code, 0);

  const auto out = dir_ / "fit.csv";
  const auto res = run_cli(
      "fit " + trace.string() + " --column R_AB --model dip -o " + out.string(), dir_);
  ASSERT_EQ(res.exit_code, 0) << res.output;
  // sigma = l_coh = 100 um, V = -1 at the full HOM null.
  EXPECT_NE(res.output.find("converged"), std::string::npos);

  std::ifstream fit_csv(out);
  std::string header, row;
  std::getline(fit_csv, header);
  std::getline(fit_csv, row);
  std::vector<double> cells;
  std::istringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
  ASSERT_GE(cells.size(), 16u);
  EXPECT_EQ(cells[0], 1.0);                 // converged
  EXPECT_NEAR(cells[4], -1.0, 1e-4);        // V
  EXPECT_NEAR(cells[6], 100.0, 0.1);        // sigma_um
  EXPECT_NEAR(cells[15], 1.0, 1e-4);        // dip visibility
}

TEST_F(CliTest, FitConstantTraceIsDegenerate) {
  std::string csv = "coordinate_um,delta_L_um,delta_L_prime_um,R_AB,R_A,R_B\n";
  for (int i = 0; i < 64; ++i)
    csv += std::to_string(i) + ",0,0,500,500,500\n";
  const auto trace = write_file("flat.csv", csv);
  const auto res =
      run_cli("fit " + trace.string() + " --model dip -o " + (dir_ / "f.csv").string(), dir_);
  EXPECT_EQ(res.exit_code, 3);
  EXPECT_NE(res.output.find("unidentifiable"), std::string::npos) << res.output;
}

TEST_F(CliTest, RerunReproducesSweepBitIdentically) {
  const auto cfg = write_file("hom.cfg", kHom);
  const auto out = dir_ / "hom.csv";
  ASSERT_EQ(run_cli("sweep " + cfg.string() + " -o " + out.string(), dir_).exit_code, 0);

  const auto rerun_dir = dir_ / "rerun";
  fs::create_directories(rerun_dir);
  const auto res = run_cli("rerun " + (dir_ / "hom.csv.manifest.json").string() + " -o " +
                               rerun_dir.string(),
                           dir_);
  ASSERT_EQ(res.exit_code, 0) << res.output;
  EXPECT_EQ(slurp(out), slurp(rerun_dir / "hom.csv"));
}

TEST_F(CliTest, RerunReproducesSeededTags) {
  const auto cfg = write_file("tags.cfg", kTags);
  const auto d = dir_ / "tags";
  ASSERT_EQ(run_cli("tags " + cfg.string() + " --seed 99 -o " + d.string(), dir_).exit_code, 0);
  const auto rerun_dir = dir_ / "tags_rerun";
  const auto res =
      run_cli("rerun " + (d / "tags.manifest.json").string() + " -o " + rerun_dir.string(), dir_);
  ASSERT_EQ(res.exit_code, 0) << res.output;
  EXPECT_EQ(slurp(d / "tags_a.btag"), slurp(rerun_dir / "tags_a.btag"));
}

TEST_F(CliTest, NoisySweepNeedsSeedAndIsReproducible) {
  const std::string noisy = std::string(kHom) + "\n[noise]\ndwell_time = 0.2\n";
  const auto cfg = write_file("noisy.cfg", noisy);
  const auto out = dir_ / "noisy.csv";
  EXPECT_EQ(run_cli("sweep " + cfg.string() + " -o " + out.string(), dir_).exit_code, 2);

  ASSERT_EQ(
      run_cli("sweep " + cfg.string() + " -o " + out.string() + " --seed 5", dir_).exit_code, 0);
  const auto out2 = dir_ / "noisy2.csv";
  ASSERT_EQ(
      run_cli("sweep " + cfg.string() + " -o " + out2.string() + " --seed 5", dir_).exit_code,
      0);
  EXPECT_EQ(slurp(out), slurp(out2));
}

TEST_F(CliTest, UnknownConfigKeyExitsTwoWithLine) {
  const auto cfg = write_file("typo.cfg", std::string(kHom) + "\n[coherence]\nlcoh = 3\n");
  const auto res = run_cli("sweep " + cfg.string() + " -o " + (dir_ / "x.csv").string(), dir_);
  EXPECT_EQ(res.exit_code, 2);
  EXPECT_NE(res.output.find("unknown key"), std::string::npos) << res.output;
}
