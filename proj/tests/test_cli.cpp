#include <sys/wait.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "awada/pipeline.hpp"
#include "doctest.h"
#include "export.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace awada;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run_cli(const fs::path& scratch, const std::string& args, const std::string& env = "") {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" AWADA_CLI_PATH "' " + args + " > '" +
                          out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return files;
}

void write_tiny_config(const fs::path& p) {
  std::ofstream(p) << "# small run\n"
                   << "n_source = 6\nn_target = 6\nn_val = 4\n"
                   << "gan_steps = 4\nseg_steps = 5\ndet_steps = 10\neval_seeds = 1,2\n";
}

EvalReport sample_report(const std::string& model, double shift) {
  EvalReport r;
  r.model = model;
  r.placement = "xx--";
  r.attention = "none";
  for (std::uint64_t s = 1; s <= 3; ++s) {
    r.seeds.push_back({s, 0.2 + shift * s, 0.1, 0.5 + shift, {{0.25, 1.0}, {0.5, 0.8}, {1.0, 0.5 + shift}}});
  }
  return r;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
  testutil::TempDir dir("cli-usage");
  const fs::path w = dir.path();
  CHECK(run_cli(w, "").code == 1);
  CHECK(run_cli(w, "frobnicate").code == 1);
  CHECK(run_cli(w, "gen-data --bogus-flag").code == 1);
  const Result bad_key = run_cli(w, "gen-data -w '" + w.string() + "' --set no_such_key=1");
  CHECK(bad_key.code == 1);
  CHECK(bad_key.err.find("no_such_key") != std::string::npos);
  CHECK(run_cli(w, "gen-data -w '" + w.string() + "' --set patch=12").code == 1);
  CHECK(run_cli(w, "ablate -w '" + w.string() + "' --grid nope").code == 1);
  CHECK(run_cli(w, "ablate -w '" + w.string() + "'").code == 1);
  CHECK(run_cli(w, "gen-data -w '" + w.string() + "'", "AWADA_SEED=abc").code == 1);
}

TEST_CASE("help lists every flag with its default") {
  testutil::TempDir dir("cli-help");
  for (const char* cmd : {"gen-data", "train-baseline", "train-detectors", "build-attn", "train-awada", "stylize",
                          "eval", "ablate", "export-plots"}) {
    const Result r = run_cli(dir.path(), std::string(cmd) + " --help");
    CAPTURE(cmd);
    CHECK(r.code == 0);
    for (const char* flag : {"--workdir", "--config", "--set", "--seed", "--force", "--quiet"}) {
      CHECK(r.out.find(flag) != std::string::npos);
    }
    CHECK(r.out.find("[.]") != std::string::npos);
  }
  CHECK(run_cli(dir.path(), "stylize --help").out.find("[source_val]") != std::string::npos);
  CHECK(run_cli(dir.path(), "eval --help").out.find("[awada]") != std::string::npos);
}

TEST_CASE("gen-data is deterministic and honours the seed fallback") {
  testutil::TempDir dir("cli-gen");
  const fs::path w = dir.path();
  const std::string base = "gen-data -q -w '" + w.string() + "' --set n_val=3 --n 8 ";
  REQUIRE(run_cli(w, base + "--out a --seed 1").code == 0);
  REQUIRE(run_cli(w, base + "--out b --seed 1").code == 0);
  REQUIRE(run_cli(w, base + "--out c", "AWADA_SEED=1").code == 0);
  REQUIRE(run_cli(w, base + "--out d --seed 2").code == 0);
  const auto a = tree(w / "a");
  CHECK(a.size() > 20);
  CHECK(a == tree(w / "b"));
  CHECK(a == tree(w / "c"));
  CHECK_FALSE(a == tree(w / "d"));
  const DomainDataset src = read_dataset(w / "a" / "data" / "source");
  CHECK(src.size() == 8);

  const std::string log = slurp(w / "runs.log");
  CHECK(std::count(log.begin(), log.end(), '\n') == 4);
  CHECK(log.find("command=gen-data") != std::string::npos);
  CHECK(log.find("seed=2") != std::string::npos);
  CHECK(log.find("exit=0") != std::string::npos);
}

TEST_CASE("missing prerequisites exit with 2 and name the stage") {
  testutil::TempDir dir("cli-missing");
  const fs::path w = dir.path();
  write_tiny_config(w / "tiny.cfg");
  const std::string common = " -q -w '" + w.string() + "' -c tiny.cfg";
  Result r = run_cli(w, "train-baseline" + common);
  CHECK(r.code == 2);
  CHECK(r.err.find("gen-data") != std::string::npos);
  REQUIRE(run_cli(w, "gen-data" + common).code == 0);
  r = run_cli(w, "train-awada" + common);
  CHECK(r.code == 2);
  CHECK(r.err.find("build-attn") != std::string::npos);
  r = run_cli(w, "build-attn" + common);
  CHECK(r.code == 2);
  CHECK(r.err.find("train-detectors") != std::string::npos);
  r = run_cli(w, "eval" + common);
  CHECK(r.code == 2);
  CHECK(r.err.find("train-awada") != std::string::npos);
  CHECK(slurp(w / "runs.log").find("command=train-awada") != std::string::npos);
}

TEST_CASE("stages run in order and the table3 grid emits six reports") {
  testutil::TempDir dir("cli-stages");
  const fs::path w = dir.path();
  write_tiny_config(w / "tiny.cfg");
  const std::string common = " -q -w '" + w.string() + "' -c tiny.cfg";
  for (const char* cmd : {"gen-data", "train-baseline", "train-detectors", "build-attn", "train-awada"}) {
    CAPTURE(cmd);
    REQUIRE(run_cli(w, cmd + common).code == 0);
  }
  const std::string model = slurp(w / "awada" / "model.awck");
  REQUIRE(run_cli(w, "train-awada" + common).code == 0);
  CHECK(slurp(w / "awada" / "model.awck") == model);

  Result r = run_cli(w, "train-awada" + common + " --set lr_gan=0.001");
  CHECK(r.code == 2);
  CHECK(r.err.find("--force") != std::string::npos);

  REQUIRE(run_cli(w, "eval" + common).code == 0);
  const EvalReport rep = read_report(w / "eval" / "awada.txt");
  CHECK(rep.seeds.size() == 2);
  REQUIRE(run_cli(w, "stylize" + common + " -m baseline").code == 0);
  CHECK(fs::exists(w / "stylized" / "baseline" / "srcval_00000.png"));

  r = run_cli(w, "ablate" + common + " --grid table3");
  REQUIRE(r.code == 0);
  std::vector<std::string> texts;
  for (const char* row : {"----", "x---", "-x--", "xx--", "xxx-", "xxxx"}) {
    const fs::path p = w / "ablate" / "table3" / (std::string(row) + ".txt");
    REQUIRE(fs::exists(p));
    CHECK(read_report(p).placement == row);
    texts.push_back(slurp(p));
  }
  std::sort(texts.begin(), texts.end());
  CHECK(std::unique(texts.begin(), texts.end()) == texts.end());
}

TEST_CASE("export-plots") {
  testutil::TempDir dir("cli-export");
  const fs::path w = dir.path();

  const Result empty = run_cli(w, "export-plots -w '" + w.string() + "'");
  CHECK(empty.code == 0);
  CHECK(empty.err.find("warning") != std::string::npos);
  CHECK_FALSE(fs::exists(w / "plots"));

  write_report(sample_report("baseline", 0.0), w / "reports", "baseline");
  write_report(sample_report("awada, weighted", 0.05), w / "reports", "awada");
  const std::string args = "export-plots -w '" + w.string() + "' reports/baseline.txt reports/awada.txt";
  REQUIRE(run_cli(w, args).code == 0);
  const auto first = tree(w / "plots");
  CHECK(first.size() == 6);
  for (const auto& [name, body] : first) {
    if (name.size() < 4 || name.substr(name.size() - 4) != ".csv") {
      CHECK(body.rfind("<svg", 0) == 0);
      continue;
    }
    std::istringstream lines(body);
    std::string header, line;
    std::getline(lines, header);
    const auto cols = std::count(header.begin(), header.end(), ',');
    int rows = 0;
    while (std::getline(lines, line)) {
      CAPTURE(name);
      CHECK(std::count(line.begin(), line.end(), ',') == cols);
      ++rows;
    }
    CHECK(rows > 0);
  }
  REQUIRE(run_cli(w, args).code == 0);
  CHECK(tree(w / "plots") == first);
  CHECK(cli::export_plots({w / "reports" / "baseline.txt", w / "reports" / "awada.txt"}, w / "again").size() == 6);
  CHECK(tree(w / "again") == first);

  std::ofstream(w / "reports" / "broken.txt") << "model = x\nseeds = 1\nseed.1.ap = nan?\n";
  const Result bad = run_cli(w, "export-plots -w '" + w.string() + "' reports/broken.txt");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("broken.txt") != std::string::npos);
  CHECK(bad.err.find("line 3") != std::string::npos);
}

}  // TEST_SUITE
