#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "hoplens/report.hpp"
#include "hoplens/synthetic.hpp"
#include "hoplens/trace_format.hpp"
#include "test_util.hpp"

using namespace hoplens;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::vector<std::string> out;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

int run(const std::string& args) {
  const std::string cmd = std::string(HOPLENS_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("provenance line") {
  RunConfig a;
  a.seed = 7;
  const auto line = provenance_line(a);
  CHECK(line.rfind("# hoplens ", 0) == 0);
  CHECK(line.find("seed=7") != std::string::npos);
  RunConfig b = a;
  b.k = 10;
  CHECK(provenance_line(b) != line);
  CHECK(provenance_line(a) == line);
}

TEST_CASE("config checks") {
  RunConfig c;
  c.k = 1;
  CHECK_THROWS_AS(c.check(), Error);
  c = {};
  c.ridge_lambda = -1;
  CHECK_THROWS_AS(c.check(), Error);
}

TEST_CASE("synth, regress, spearman and curves write their tables") {
  const auto dir = testutil::temp_dir("report_pipeline");
  SynthConfig sc;
  sc.n_prompts = 150;
  sc.seed = 3;
  sc.output = dir / "traces" / "synthetic.drt";
  fs::create_directories(dir / "traces");
  cmd_synth(sc);
  CHECK(fs::exists(dir / "traces" / "synthetic.truth.json"));
  CHECK(fs::exists(dir / "traces" / "categories" / "synthetic.json"));

  // A fictitious twin from another seed exercises the generalisation column.
  auto fn = sc;
  fn.seed = 4;
  fn.output = dir / "traces" / "fn_synthetic.drt";
  cmd_synth(fn);

  RunConfig rc;
  rc.traces_dir = dir / "traces";
  rc.out_dir = dir / "out";
  const auto status = cmd_regress(rc);
  const auto r2 = lines(dir / "out" / "r2" / "synthetic" / "synthetic.csv");
  REQUIRE(r2.size() == 2 + 2 * 12);
  CHECK(r2[0].rfind("# hoplens", 0) == 0);
  CHECK(r2[1] == "layer,predictor_set,mean_r2,stderr,lambda,seed");
  const auto summary = lines(dir / "out" / "r2_summary.csv");
  REQUIRE(summary.size() == 3);
  CHECK(summary[2].find("synthetic,synthetic,") == 0);
  CHECK(summary[2].find("nan") == std::string::npos);
  CHECK(fs::exists(dir / "out" / "r2" / "synthetic" / "fn_synthetic.csv"));

  // Same seed, same bytes.
  const auto before = slurp(dir / "out" / "r2" / "synthetic" / "synthetic.csv");
  cmd_regress(rc);
  CHECK(slurp(dir / "out" / "r2" / "synthetic" / "synthetic.csv") == before);

  cmd_spearman(rc);
  const auto sp = lines(dir / "out" / "spearman" / "synthetic.csv");
  REQUIRE(sp.size() == 4);
  CHECK(sp[2].find("synthetic,1/2,6,") == 0);
  CHECK(sp[3].find(",exact,150") != std::string::npos);

  cmd_curves(rc);
  CHECK(lines(dir / "out" / "curves" / "synthetic.csv").size() == 2 + 30 * 13);
  CHECK(lines(dir / "out" / "curves" / "synthetic_top_pairs.csv").size() == 2 + 10 * 13);

  rc.prompt_id = "missing";
  CHECK_FALSE(cmd_curves(rc).warnings.empty());
}

TEST_CASE("regress warns about missing types and fails with no traces") {
  const auto dir = testutil::temp_dir("report_missing");
  SynthConfig sc;
  sc.n_prompts = 60;
  sc.output = dir / "capital.drt";
  cmd_synth(sc);
  RunConfig rc;
  rc.traces_dir = dir;
  rc.out_dir = dir / "out";
  rc.types = {"capital", "tld"};
  const auto status = cmd_regress(rc);
  REQUIRE(status.warnings.size() >= 1);
  CHECK(status.warnings[0].find("tld") != std::string::npos);
  rc.types = {"tld"};
  CHECK_THROWS_AS(cmd_regress(rc), Error);
}

TEST_CASE("intervene writes the per-layer curve") {
  const auto dir = testutil::temp_dir("report_intervene");
  std::ofstream(dir / "rec.jsonl")
      << "{\"prompt_id\":\"a\",\"layer\":1,\"baseline_prob\":0.5,\"prob\":0.25}\n"
      << "{\"prompt_id\":\"b\",\"layer\":1,\"baseline_prob\":0.5,\"prob\":0.5}\n"
      << "{\"prompt_id\":\"a\",\"layer\":3,\"baseline_prob\":0.4,\"prob\":0.5}\n";
  RunConfig rc;
  rc.out_dir = dir / "out";
  rc.interventions = dir / "rec.jsonl";
  const auto status = cmd_intervene(rc);
  CHECK(status.warnings.size() == 1);  // layer 2 missing
  const auto csv = lines(dir / "out" / "intervention_curve.csv");
  REQUIRE(csv.size() == 4);
  CHECK(csv[2] == "1,0.25,0.1767766953,2");
  CHECK(csv[3] == "3,-0.25,0,1");
}

TEST_CASE("validate reports bad files") {
  const auto dir = testutil::temp_dir("report_validate");
  SynthConfig sc;
  sc.n_prompts = 20;
  sc.output = dir / "ok.drt";
  cmd_synth(sc);
  std::ofstream(dir / "bad.drt") << "garbage";
  RunStatus status;
  CHECK(cmd_validate({dir / "ok.drt"}, status));
  CHECK_FALSE(cmd_validate({dir / "ok.drt", dir / "bad.drt"}, status));
  CHECK(status.summary.back().find("not a trace") != std::string::npos);
}

TEST_CASE("command line interface") {
  const auto dir = testutil::temp_dir("report_cli");
  const auto d = dir.string();
  CHECK(run("--version") == 0);
  CHECK(run("") != 0);
  CHECK(run("synth --prompts 80 --seed 2 -o " + d + "/t/synthetic.drt") == 0);
  CHECK(run("validate " + d + "/t/synthetic.drt") == 0);
  CHECK(run("regress --traces " + d + "/t --out " + d + "/o --k 4 --types synthetic") == 0);
  CHECK(fs::exists(dir / "o" / "r2_summary.csv"));
  CHECK(run("spearman --traces " + d + "/t --out " + d + "/o --exact-p off --layer 7") == 0);
  CHECK(lines(dir / "o" / "spearman" / "synthetic.csv")[2].find(",t-approx,") != std::string::npos);
  CHECK(run("curves --traces " + d + "/t --out " + d + "/o --prompt synthetic-00003") == 0);
  CHECK(run("regress --traces " + d + "/nowhere --out " + d + "/o") != 0);
  CHECK(run("regress --traces " + d + "/t --k 1") != 0);
  CHECK(run("dataset " + d + "/missing.jsonl -o " + d + "/ds") != 0);
  CHECK(run("dataset " + std::string(HOPLENS_FIXTURE_DIR) + "/cc.jsonl -o " + d + "/ds") == 0);
  CHECK(lines(dir / "ds" / "prompts" / "capital.jsonl").size() == 468);
  CHECK(lines(dir / "ds" / "prompts" / "fn_capital.jsonl").size() == 100);
  CHECK(lines(dir / "ds" / "prompts" / "fruit_color.jsonl").size() == 1000);
  CHECK(run("validate " + d + "/ds/prompts/capital.jsonl") == 1);
}
