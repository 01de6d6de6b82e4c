#include "mzx/cli.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = MZX_SOURCE_DIR;

std::string exp_file(const char* name) { return (kRoot / "experiments" / name).string(); }

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = mzx::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Runs the installed binary through the shell; stdout only.
Outcome binary(const std::string& args) {
  const std::string cmd = std::string("'") + MZX_BINARY + "' " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out, {}};
}

bool has_line(const std::string& text, const std::string& line) {
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (l == line) return true;
  return false;
}

double line_value(const std::string& text, const std::string& label) {
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (l.rfind(label + " ", 0) == 0) return std::stod(l.substr(label.size() + 1));
  FAIL("no line for " << label);
  return NAN;
}

double csv_value(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (l.rfind(prefix, 0) == 0) return std::stod(l.substr(prefix.size()));
  FAIL("no row " << prefix);
  return NAN;
}

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / ("mzx_cli_test_" + name);
  std::ofstream(p) << content;
  return p;
}

}  // namespace

TEST_CASE("run: analytic table output") {
  const auto r = cli({"run", exp_file("baseline.mzx")});
  CHECK(r.code == 0);
  CHECK(has_line(r.out, "X 1.0"));
  CHECK(has_line(r.out, "Y 0.0"));
  CHECK(has_line(r.out, "mode    analytic"));

  const auto e = cli({"run", exp_file("eraser.mzx"), "--given", "abs=yes"});
  CHECK(e.code == 0);
  CHECK(has_line(e.out, "X|abs 1.0"));
  CHECK(has_line(e.out, "Y|abs 0.0"));

  const auto n = cli({"run", exp_file("eraser.mzx"), "--given", "abs=no"});
  CHECK(std::abs(line_value(n.out, "X|no-abs")) <= 1e-12);
  CHECK(line_value(n.out, "Y|no-abs") == doctest::Approx(1.0).epsilon(1e-12));

  const auto w = cli({"run", exp_file("wwreadout.mzx"), "--given", "ww=A"});
  CHECK(line_value(w.out, "X|ww=A") == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("run: sampled entangler frequency") {
  const auto r = cli({"run", exp_file("entangler.mzx"), "--shots", "100000", "--seed", "7"});
  REQUIRE(r.code == 0);
  CHECK(std::abs(line_value(r.out, "X") - 0.5) <= 0.0079);
  CHECK(has_line(r.out, "shots   100000"));
  CHECK(has_line(r.out, "seed    7"));
}

TEST_CASE("run: csv and json are byte-identical across invocations") {
  for (const char* fmt : {"csv", "json"}) {
    const std::vector<std::string> args{"run", exp_file("eraser.mzx"), "--shots", "5000", "--seed", "11",
                                        "--format", fmt, "--given", "abs=yes"};
    const auto a = cli(args);
    const auto b = cli(args);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
  }
}

TEST_CASE("run: csv layout") {
  const auto r = cli({"run", exp_file("eraser.mzx"), "--format", "csv", "--given", "abs=yes"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("section,key,value\n", 0) == 0);
  CHECK(has_line(r.out, "meta,mode,analytic"));
  CHECK(std::abs(csv_value(r.out, "marginal,X,") - 0.5) <= 1e-12);
  CHECK(std::abs(csv_value(r.out, "conditional,X|abs,") - 1.0) <= 1e-12);
  CHECK(std::abs(csv_value(r.out, "branch,abs=yes;detector=X,") - 0.5) <= 1e-12);
  CHECK(std::abs(csv_value(r.out, "branch,abs=no;detector=Y,") - 0.5) <= 1e-12);
}

TEST_CASE("run: json layout and key order") {
  const auto r = cli({"run", exp_file("eraser.mzx"), "--format", "json", "--given", "abs=yes"});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::ordered_json::parse(r.out);
  std::vector<std::string> keys;
  for (const auto& [k, v] : doc.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"meta", "branches", "conditionals"});
  CHECK(doc["meta"]["mode"] == "analytic");
  CHECK(doc["meta"]["sha256"].get<std::string>().size() == 64);
  double total = 0.0;
  for (const auto& b : doc["branches"]) total += b["prob"].get<double>();
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  bool found = false;
  for (const auto& c : doc["conditionals"])
    if (c["of"] == "X" && c["given"] == "abs") {
      CHECK(c["value"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
      found = true;
    }
  CHECK(found);
}

TEST_CASE("run: seed from the environment, flag wins") {
  const std::vector<std::string> base{"run", exp_file("entangler.mzx"), "--shots", "2000"};
  ::setenv("MZX_SEED", "5", 1);
  const auto env = cli(base);
  auto explicit_args = base;
  explicit_args.insert(explicit_args.end(), {"--seed", "5"});
  const auto flag = cli(explicit_args);
  auto other_args = base;
  other_args.insert(other_args.end(), {"--seed", "6"});
  const auto other = cli(other_args);
  ::unsetenv("MZX_SEED");
  CHECK(env.out == flag.out);
  CHECK(has_line(other.out, "seed    6"));
  CHECK(env.out != other.out);
}

TEST_CASE("sweep: visibilities of the three setups") {
  const auto fringes = cli({"sweep", exp_file("baseline_phase.mzx"), "--param", "phi", "--from", "0", "--to", "2pi",
                            "--steps", "64", "--format", "csv"});
  REQUIRE(fringes.code == 0);
  CHECK(std::abs(std::stod(fringes.out.substr(fringes.out.rfind("visibility,") + 11)) - 1.0) <= 1e-10);

  const auto none = cli({"sweep", exp_file("entangler_phase.mzx"), "--param", "phi", "--from", "0", "--to", "2pi",
                         "--steps", "64", "--format", "csv"});
  REQUIRE(none.code == 0);
  CHECK(std::abs(std::stod(none.out.substr(none.out.rfind("visibility,") + 11))) <= 1e-10);

  const auto restored = cli({"sweep", exp_file("eraser_phase.mzx"), "--param", "phi", "--from", "0", "--to", "2pi",
                             "--steps", "64", "--format", "json", "--given", "abs=yes"});
  REQUIRE(restored.code == 0);
  const auto doc = nlohmann::ordered_json::parse(restored.out);
  CHECK(doc["visibility"].get<double>() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(doc["branches"].size() == 64);
  CHECK(doc["conditionals"].size() == 64);
}

TEST_CASE("exit codes") {
  CHECK(cli({"run", exp_file("baseline.mzx")}).code == 0);
  CHECK(cli({"run", "/nonexistent/file.mzx"}).code == 2);
  CHECK(cli({"validate", "/nonexistent/file.mzx"}).code == 2);

  const auto bad = temp_file("bad.mzx", "source A\nbeamsplitter\n");
  const auto v = cli({"validate", bad.string()});
  CHECK(v.code == 1);
  CHECK(v.err.find(":2:1: semantic error: detect required as final stage") != std::string::npos);
  CHECK(cli({"run", bad.string()}).code == 1);
  CHECK(cli({"validate", exp_file("eraser.mzx")}).out == "OK\n");

  CHECK(cli({"run", exp_file("baseline.mzx"), "--given", "abs=yes"}).code == 3);
  CHECK(cli({"run", exp_file("baseline.mzx"), "--given", "colour=red"}).code == 1);
  CHECK(cli({"run", exp_file("baseline.mzx"), "--shots", "0"}).code == 1);
  CHECK(cli({"run", exp_file("baseline.mzx"), "--format", "xml"}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);

  const std::vector<std::string> sweep{"sweep", exp_file("baseline_phase.mzx"), "--param", "phi", "--from", "0",
                                       "--to", "1"};
  auto with_steps = [&](const char* n) {
    auto a = sweep;
    a.insert(a.end(), {"--steps", n});
    return cli(a).code;
  };
  CHECK(with_steps("1") == 4);
  CHECK(with_steps("0") == 4);
  CHECK(with_steps("2") == 0);
  CHECK(cli({"sweep", exp_file("baseline_phase.mzx"), "--param", "theta", "--from", "0", "--to", "1", "--steps",
             "4"})
            .code == 1);
  CHECK(cli({"sweep", exp_file("baseline.mzx"), "--param", "phi", "--from", "0", "--to", "1", "--steps", "4"})
            .code == 1);
  fs::remove(bad);
}

TEST_CASE("binary: end to end") {
  const auto r = binary("run '" + exp_file("baseline.mzx") + "'");
  CHECK(r.code == 0);
  CHECK(has_line(r.out, "X 1.0"));
  CHECK(binary("run /nonexistent.mzx").code == 2);
  CHECK(binary("validate '" + exp_file("baseline.mzx") + "'").out == "OK\n");
  const auto csv = "run '" + exp_file("entangler.mzx") + "' --shots 20000 --seed 3 --format csv";
  CHECK(binary(csv).out == binary(csv).out);
  CHECK(binary(csv).out == cli({"run", exp_file("entangler.mzx"), "--shots", "20000", "--seed", "3", "--format",
                                "csv"})
                               .out);
}
