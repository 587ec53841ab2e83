#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / "rope_cli_test";
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ROPE_CLI_PATH) + " " + args +
                          " >/dev/null 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string run_cli_stdout(const std::string& args, const std::string& capture) {
  const std::string cmd = std::string(ROPE_CLI_PATH) + " " + args + " >" +
                          capture + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  REQUIRE(WEXITSTATUS(status) == 0);
  std::ifstream in(capture);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("pipeline smoke: synth, blackbox, explain, eval") {
  TempDir dir;
  const std::string data = dir.file("data.csv");
  const std::string ref = dir.file("bb.json");
  const std::string exp = dir.file("exp.json");

  REQUIRE(run_cli("synth --kind correlation --beta 0 --dim 2 --n 200 --seed 7 "
                  "--out " + data) == 0);
  REQUIRE(run_cli("blackbox --kind logistic --data " + data +
                  " --seed 3 --out-model-ref " + ref) == 0);
  REQUIRE(run_cli("explain --family linear --s0 0 --data " + data +
                  " --blackbox " + ref + " --seed 11 --out " + exp) == 0);

  const json j = json::parse(slurp(exp));
  CHECK(j.at("format_version") == 1);
  CHECK(j.at("family") == "linear");
  CHECK(j.at("link") == "logistic");
  CHECK(j.contains("config"));
  CHECK(j.at("weights").size() == 2);
  CHECK(j.at("feature_names").size() == 2);

  const std::string eval_out = run_cli_stdout(
      "eval --explanation " + exp + " --data " + data + " --blackbox " + ref +
      " --metrics fidelity",
      dir.file("eval.txt"));
  const json ev = json::parse(eval_out);
  const double fid = ev.at("fidelity").get<double>();
  CHECK(fid >= 0.0);
  CHECK(fid <= 1.0);
  CHECK(fid > 0.8);  // a logistic box explained by a logistic surrogate
}

TEST_CASE("explain is byte-deterministic for identical seeds") {
  TempDir dir;
  const std::string data = dir.file("data.csv");
  const std::string ref = dir.file("bb.json");
  REQUIRE(run_cli("synth --kind correlation --beta 0.4 --dim 3 --n 150 "
                  "--seed 21 --out " + data) == 0);
  REQUIRE(run_cli("blackbox --kind gb_stumps --rounds 30 --data " + data +
                  " --seed 5 --out-model-ref " + ref) == 0);

  const std::string exp_a = dir.file("a.json");
  const std::string exp_b = dir.file("b.json");
  for (const std::string& out : {exp_a, exp_b}) {
    REQUIRE(run_cli("explain --family linear --s0 1 --data " + data +
                    " --blackbox " + ref + " --seed 9 --out " + out) == 0);
  }
  // Identical bytes apart from the embedded output path (there is none).
  CHECK(slurp(exp_a) == slurp(exp_b));

  const std::string exp_c = dir.file("c.json");
  REQUIRE(run_cli("explain --family linear --s0 1 --data " + data +
                  " --blackbox " + ref + " --seed 10 --out " + exp_c) == 0);
  CHECK(slurp(exp_a) != slurp(exp_c));
}

TEST_CASE("decision-set explanation and rulematch evaluation") {
  TempDir dir;
  const std::string data = dir.file("data.csv");
  const std::string ref = dir.file("bb.json");
  const std::string exp = dir.file("dset.json");

  REQUIRE(run_cli("synth --kind mean --dim 2 --n 200 --seed 31 --out " + data) ==
          0);
  REQUIRE(run_cli("blackbox --kind decision_set --data " + data +
                  " --seed 13 --out-model-ref " + ref) == 0);
  REQUIRE(run_cli("explain --family dset --s0 0.5 --data " + data +
                  " --blackbox " + ref + " --seed 17 --out " + exp) == 0);

  const json j = json::parse(slurp(exp));
  CHECK(j.at("family") == "decision_set");
  CHECK(j.contains("rules"));
  CHECK(j.contains("default_label"));

  const json ev = json::parse(run_cli_stdout(
      "eval --explanation " + exp + " --data " + data + " --blackbox " + ref +
      " --metrics fidelity,rulematch",
      dir.file("ev.txt")));
  CHECK(ev.contains("rule_match"));
  CHECK(ev.contains("feature_match"));
  CHECK(ev.at("feature_match").get<int>() >= 0);
}

TEST_CASE("multi families route and serialize") {
  TempDir dir;
  const std::string data = dir.file("data.csv");
  const std::string ref = dir.file("bb.json");
  const std::string exp = dir.file("multi.json");

  REQUIRE(run_cli("synth --kind correlation --beta 0 --dim 2 --n 200 --seed 3 "
                  "--out " + data) == 0);
  REQUIRE(run_cli("blackbox --kind logistic --data " + data +
                  " --seed 5 --out-model-ref " + ref) == 0);
  REQUIRE(run_cli("explain --family linear-multi --k-clusters 2 --s0 0.5 "
                  "--data " + data + " --blackbox " + ref +
                  " --seed 19 --out " + exp) == 0);

  const json j = json::parse(slurp(exp));
  CHECK(j.at("family") == "clustered");
  CHECK(j.at("K") == 2);
  CHECK(j.at("entries").size() == 2);
  double weight = 0.0;
  for (const auto& e : j.at("entries")) weight += e.at("weight").get<double>();
  CHECK(weight == doctest::Approx(1.0));

  const json ev = json::parse(run_cli_stdout(
      "eval --explanation " + exp + " --data " + data + " --blackbox " + ref +
      " --metrics fidelity,mismatch",
      dir.file("ev.txt")));
  CHECK(ev.at("fidelity").get<double>() >= 0.0);
  CHECK(ev.at("coefficient_mismatch").get<double>() >= 0.0);
}

TEST_CASE("audit metric emits the marginal and surrogate values") {
  TempDir dir;
  const std::string data = dir.file("data.csv");
  const std::string ref = dir.file("bb.json");
  const std::string exp = dir.file("exp.json");
  REQUIRE(run_cli("synth --kind correlation --beta 0.2 --dim 2 --n 80 --seed 2 "
                  "--out " + data) == 0);
  REQUIRE(run_cli("blackbox --kind logistic --data " + data +
                  " --seed 3 --out-model-ref " + ref) == 0);
  REQUIRE(run_cli("explain --family linear --s0 1 --data " + data +
                  " --blackbox " + ref + " --seed 4 --out " + exp) == 0);

  const json ev = json::parse(run_cli_stdout(
      "eval --explanation " + exp + " --data " + data + " --blackbox " + ref +
      " --metrics audit --s0 0.5 --delta-max 0.5 --audit-c 0.25",
      dir.file("ev.txt")));
  const json& audit = ev.at("audit");
  CHECK(audit.at("surrogate_lhs").get<double>() <=
        audit.at("surrogate_rhs").get<double>() + 1e-9);
  CHECK(audit.at("marginal_dependence").get<double>() <=
        audit.at("bound_2eps").get<double>() + 1e-9);
}

TEST_CASE("external black-box reference works end to end") {
  TempDir dir;
  const std::string data = dir.file("data.csv");
  const std::string ref = dir.file("bb.json");
  const std::string exp = dir.file("exp.json");

  REQUIRE(run_cli("synth --kind correlation --beta 0 --dim 2 --n 120 --seed 41 "
                  "--out " + data) == 0);
  REQUIRE(run_cli("blackbox --external \"" + std::string(ROPE_CHILD_PATH) +
                  " --dim 2\" --data " + data + " --seed 1 --out-model-ref " +
                  ref) == 0);
  REQUIRE(run_cli("explain --family linear --s0 0.5 --data " + data +
                  " --blackbox " + ref + " --seed 2 --out " + exp) == 0);

  const json ev = json::parse(run_cli_stdout(
      "eval --explanation " + exp + " --data " + data + " --blackbox " + ref +
      " --metrics fidelity",
      dir.file("ev.txt")));
  CHECK(ev.at("fidelity").get<double>() > 0.8);  // the child is x0 >= 0
}

TEST_CASE("group column filters rows for explain and eval") {
  TempDir dir;
  const std::string data = dir.file("grouped.csv");
  {
    std::ofstream out(data);
    out << "f0,f1,group,label\n";
    for (int i = 0; i < 60; ++i) {
      const double v = (i % 7) - 3.0;
      const double w = (i % 5) - 2.0;
      out << v << "," << w << "," << (i % 2 == 0 ? "A" : "B") << ","
          << (v >= 0 ? 1 : 0) << "\n";
    }
  }
  const std::string ref = dir.file("bb.json");
  const std::string exp = dir.file("exp.json");
  REQUIRE(run_cli("blackbox --kind logistic --data " + data +
                  " --seed 1 --out-model-ref " + ref) == 0);
  REQUIRE(run_cli("explain --family linear --s0 0 --group A --data " + data +
                  " --blackbox " + ref + " --seed 2 --out " + exp) == 0);
  REQUIRE(run_cli("eval --explanation " + exp + " --data " + data +
                  " --blackbox " + ref + " --metrics fidelity --group B") == 0);

  // Unknown group value fails at runtime.
  CHECK(run_cli("explain --family linear --s0 0 --group Z --data " + data +
                " --blackbox " + ref + " --seed 2 --out " + exp) == 2);
}

TEST_CASE("sweep and stability commands emit CSV plus JSON") {
  TempDir dir;
  const std::string out = dir.file("report.csv");
  REQUIRE(run_cli("sweep --kind correlation --alphas 0,0.4 --replicates 2 "
                  "--methods rope-linear,base-linear --dim-min 2 --dim-max 2 "
                  "--n 150 --threads 2 --seed 8 --out " + out) == 0);
  const std::string csv = slurp(out);
  CHECK(csv.rfind("# rope-config:", 0) == 0);
  CHECK(csv.find("experiment,method,kind,alpha,replicate") != std::string::npos);
  // 2 methods x 2 alphas x 2 replicates data rows.
  int lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 2 + 8);  // comment + header + rows

  const json j = json::parse(slurp(dir.file("report.json")));
  CHECK(j.at("rows").size() == 8);
  CHECK(j.contains("aggregates"));
  CHECK(j.contains("config"));

  const std::string stab = dir.file("stab.csv");
  REQUIRE(run_cli("stability --noise-std 0.2 --replicates 2 --n 150 --dim 2 "
                  "--methods rope-linear,base-linear --threads 2 --seed 9 "
                  "--out " + stab) == 0);
  const json sj = json::parse(slurp(dir.file("stab.json")));
  CHECK(sj.at("rows").size() == 4);
  for (const auto& row : sj.at("rows"))
    CHECK(row.contains("coefficient_mismatch"));
}

TEST_CASE("ROPE_LOG controls diagnostics on stderr") {
  TempDir dir;
  const std::string out = dir.file("clamped.csv");
  const std::string err = dir.file("stderr.txt");
  // beta far below the PSD range triggers a clamp warning.
  const std::string args = "synth --kind correlation --beta -5 --dim 2 --n 20 "
                           "--seed 1 --out " + out;

  const auto stderr_with = [&](const std::string& level) {
    const std::string cmd = "ROPE_LOG=" + level + " " + ROPE_CLI_PATH + " " +
                            args + " >/dev/null 2>" + err;
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    return slurp(err);
  };

  CHECK(stderr_with("warn").find("[rope:warn]") != std::string::npos);
  CHECK(stderr_with("error").find("[rope:warn]") == std::string::npos);
}

TEST_CASE("exit codes: usage errors are 1, runtime failures are 2") {
  TempDir dir;
  CHECK(run_cli("explain --no-such-flag") == 1);
  CHECK(run_cli("nonsense-command") == 1);
  CHECK(run_cli("synth --kind correlation --dim 2 --n 10 --out " +
                dir.file("x.csv")) == 1);  // --seed is required
  CHECK(run_cli("eval --explanation /nonexistent.json --data /nonexistent.csv "
                "--blackbox /nonexistent.json") == 2);
  CHECK(run_cli("") == 1);  // a subcommand is required
}
