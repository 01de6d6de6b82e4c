#include "mzx/cli.hpp"

#include "mzx/dsl.hpp"
#include "mzx/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace mzx::cli {

namespace {

using Json = nlohmann::ordered_json;

struct CliFailure {
  int code;
  std::string message;
};

std::string format_general(double v, int digits) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  return std::string(buf, res.ptr);
}

// Human-readable: 12 significant digits, integers keep a trailing ".0".
std::string table_number(double v) {
  std::string s = format_general(v, 12);
  if (s.find_first_of(".eni") == std::string::npos) s += ".0";
  return s;
}

std::string csv_number(double v) { return format_general(v, 17); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliFailure{kIoError, "cannot read '" + path + "'"};
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw CliFailure{kIoError, "error reading '" + path + "'"};
  return os.str();
}

struct LoadedFile {
  std::string path;
  std::string sha256;
  dsl::ExperimentAst ast;
};

LoadedFile load(const std::string& path) {
  const std::string src = read_file(path);
  try {
    return {path, sha256_hex(src), dsl::parse(src)};
  } catch (const dsl::ParseError& e) {
    throw CliFailure{kInvalid, path + ":" + e.diagnostic().to_string()};
  }
}

double parse_number(const std::string& text) {
  try {
    const auto toks = dsl::tokenize(text);
    if (toks.size() == 1 && toks[0].kind == dsl::TokenKind::Number) return toks[0].value;
  } catch (const dsl::ParseError&) {
  }
  throw CliFailure{kInvalid, "'" + text + "' is not a number"};
}

std::optional<RecordPredicate> parse_given(const std::string& text) {
  if (text.empty()) return std::nullopt;
  RecordPredicate pred;
  try {
    pred = RecordPredicate::parse(text);
  } catch (const std::invalid_argument& e) {
    throw CliFailure{kInvalid, e.what()};
  }
  for (const auto& [key, value] : pred.terms)
    if (key != records::kAbsorbed && key != records::kWhichWay && key != records::kDetector)
      throw CliFailure{kInvalid, "unknown record key '" + key + "' (expected abs, ww or detector)"};
  return pred;
}

// "abs", "no-abs", otherwise "key=value", joined with ','.
std::string given_label(const RecordPredicate& pred) {
  std::string out;
  for (const auto& [k, v] : pred.terms) {
    if (!out.empty()) out += ',';
    if (k == records::kAbsorbed && v == "yes")
      out += "abs";
    else if (k == records::kAbsorbed && v == "no")
      out += "no-abs";
    else
      out += k + "=" + v;
  }
  return out;
}

enum class Format { Table, Csv, Json };

struct Row {
  std::string label;
  double value;
};

struct RunReport {
  std::string file;
  std::string sha256;
  bool sampled = false;
  std::uint64_t seed = 0;
  std::size_t shots = 0;
  std::vector<std::pair<Record, double>> branches;  // probability, or count when sampled
  std::vector<Row> marginals;                       // X, Y
  std::vector<Row> conditionals;                    // X|given, Y|given
  std::string given;
};

void emit_run(const RunReport& r, Format fmt, std::ostream& out) {
  const char* mode = r.sampled ? "sampled" : "analytic";
  if (fmt == Format::Json) {
    Json meta;
    meta["file"] = r.file;
    meta["sha256"] = r.sha256;
    meta["mode"] = mode;
    meta["seed"] = r.seed;
    if (r.sampled) meta["shots"] = r.shots;
    Json branches = Json::array();
    for (const auto& [rec, v] : r.branches) {
      Json rj = Json::object();
      for (const auto& [k, l] : rec) rj[k] = l;
      Json b;
      b["record"] = std::move(rj);
      if (r.sampled)
        b["count"] = static_cast<std::size_t>(v);
      else
        b["prob"] = v;
      branches.push_back(std::move(b));
    }
    Json conds = Json::array();
    for (const auto& m : r.marginals) conds.push_back(Json{{"of", m.label}, {"given", ""}, {"value", m.value}});
    for (const auto& c : r.conditionals)
      conds.push_back(Json{{"of", c.label.substr(0, c.label.find('|'))}, {"given", r.given}, {"value", c.value}});
    Json doc;
    doc["meta"] = std::move(meta);
    doc["branches"] = std::move(branches);
    doc["conditionals"] = std::move(conds);
    out << doc.dump(2) << '\n';
    return;
  }
  if (fmt == Format::Csv) {
    out << "section,key,value\n";
    out << "meta,file," << csv_field(r.file) << '\n';
    out << "meta,sha256," << r.sha256 << '\n';
    out << "meta,mode," << mode << '\n';
    out << "meta,seed," << r.seed << '\n';
    if (r.sampled) out << "meta,shots," << r.shots << '\n';
    for (const auto& [rec, v] : r.branches)
      out << "branch," << csv_field(format_record(rec, ';')) << ','
          << (r.sampled ? std::to_string(static_cast<std::size_t>(v)) : csv_number(v)) << '\n';
    for (const auto& m : r.marginals) out << "marginal," << m.label << ',' << csv_number(m.value) << '\n';
    for (const auto& c : r.conditionals) out << "conditional," << csv_field(c.label) << ',' << csv_number(c.value) << '\n';
    return;
  }
  out << "file    " << r.file << '\n';
  out << "sha256  " << r.sha256 << '\n';
  out << "mode    " << mode << '\n';
  out << "seed    " << r.seed << '\n';
  if (r.sampled) out << "shots   " << r.shots << '\n';
  out << (r.sampled ? "branches (counts)\n" : "branches (probabilities)\n");
  for (const auto& [rec, v] : r.branches)
    out << "  " << std::left << std::setw(32) << format_record(rec) << ' '
        << (r.sampled ? std::to_string(static_cast<std::size_t>(v)) : table_number(v)) << '\n';
  out << (r.sampled ? "frequencies\n" : "probabilities\n");
  for (const auto& m : r.marginals) out << m.label << ' ' << table_number(m.value) << '\n';
  for (const auto& c : r.conditionals) out << c.label << ' ' << table_number(c.value) << '\n';
}

Format parse_format(const std::string& s) {
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  return Format::Table;
}

int cmd_run(const std::string& path, std::optional<std::size_t> shots, std::uint64_t seed, Format fmt,
            const std::string& given_text, std::ostream& out) {
  const auto given = parse_given(given_text);
  const LoadedFile file = load(path);
  Pipeline pipeline = [&] {
    try {
      return dsl::compile(file.ast);
    } catch (const dsl::ParseError& e) {
      throw CliFailure{kInvalid, path + ":" + e.diagnostic().to_string()};
    }
  }();

  RunReport report{file.path, file.sha256, shots.has_value(), seed, shots.value_or(0), {}, {}, {}, {}};
  const auto px = RecordPredicate::detector("X");
  const auto py = RecordPredicate::detector("Y");
  try {
    if (shots) {
      const ShotHistogram hist = run_sampled(pipeline, *shots, seed);
      for (const auto& [rec, c] : hist.counts) report.branches.emplace_back(rec, static_cast<double>(c));
      report.marginals = {{"X", hist.frequency(px)}, {"Y", hist.frequency(py)}};
      if (given) {
        report.given = given_label(*given);
        report.conditionals = {{"X|" + report.given, hist.conditional_frequency(*given, px)},
                               {"Y|" + report.given, hist.conditional_frequency(*given, py)}};
      }
    } else {
      const OutcomeDistribution d = run_analytic(pipeline);
      for (const auto& b : d.branches) report.branches.emplace_back(b.record, b.prob);
      report.marginals = {{"X", marginal(d, px)}, {"Y", marginal(d, py)}};
      if (given) {
        report.given = given_label(*given);
        report.conditionals = {{"X|" + report.given, conditional(d, *given, px)},
                               {"Y|" + report.given, conditional(d, *given, py)}};
      }
    }
  } catch (const ZeroProbabilityEvent& e) {
    throw CliFailure{kZeroProbability, std::string(e.what()) + ": " + given_text};
  }
  emit_run(report, fmt, out);
  return kOk;
}

int cmd_sweep(const std::string& path, const std::string& param, const std::string& from_text,
              const std::string& to_text, long long steps, Format fmt, const std::string& given_text,
              std::uint64_t seed, std::ostream& out) {
  const auto given = parse_given(given_text);
  const double from = parse_number(from_text);
  const double to = parse_number(to_text);
  const LoadedFile file = load(path);

  const auto free = file.ast.free_params();
  if (std::find(free.begin(), free.end(), param) == free.end()) {
    const bool declared = std::any_of(file.ast.params.begin(), file.ast.params.end(),
                                      [&](const dsl::ParamDecl& p) { return p.name == param; });
    throw CliFailure{kInvalid, declared ? "parameter '" + param + "' is bound in the file"
                                        : "unknown parameter '" + param + "'"};
  }
  if (steps < 2) throw CliFailure{kBadSteps, "--steps must be at least 2"};

  std::vector<double> grid;
  for (long long i = 0; i < steps; ++i) grid.push_back(from + (to - from) * static_cast<double>(i) / static_cast<double>(steps));

  SweepResult result;
  try {
    result = sweep(param, [&](double v) { return dsl::compile(file.ast, {{param, v}}); }, grid, given);
  } catch (const ZeroProbabilityEvent& e) {
    throw CliFailure{kZeroProbability, std::string(e.what()) + ": " + given_text};
  } catch (const dsl::ParseError& e) {
    throw CliFailure{kInvalid, path + ":" + e.diagnostic().to_string()};
  }

  const std::string glabel = given ? given_label(*given) : "";
  if (fmt == Format::Json) {
    Json meta;
    meta["file"] = file.path;
    meta["sha256"] = file.sha256;
    meta["mode"] = "sweep";
    meta["seed"] = seed;
    meta["parameter"] = param;
    meta["from"] = from;
    meta["to"] = to;
    meta["steps"] = steps;
    Json points = Json::array(), conds = Json::array();
    for (const auto& pt : result.points) {
      points.push_back(Json{{"value", pt.value}, {"X", pt.prob_x}, {"Y", pt.prob_y}});
      if (given) conds.push_back(Json{{"value", pt.value}, {"given", glabel}, {"X", *pt.cond_x}, {"Y", *pt.cond_y}});
    }
    Json doc;
    doc["meta"] = std::move(meta);
    doc["branches"] = std::move(points);
    doc["conditionals"] = std::move(conds);
    doc["visibility"] = result.visibility;
    out << doc.dump(2) << '\n';
  } else if (fmt == Format::Csv) {
    out << "# file=" << file.path << ",sha256=" << file.sha256 << ",seed=" << seed << '\n';
    out << param << ",X,Y";
    if (given) out << ',' << csv_field("X|" + glabel) << ',' << csv_field("Y|" + glabel);
    out << '\n';
    for (const auto& pt : result.points) {
      out << csv_number(pt.value) << ',' << csv_number(pt.prob_x) << ',' << csv_number(pt.prob_y);
      if (given) out << ',' << csv_number(*pt.cond_x) << ',' << csv_number(*pt.cond_y);
      out << '\n';
    }
    out << "visibility," << csv_number(result.visibility) << '\n';
  } else {
    out << "file    " << file.path << '\n';
    out << "sha256  " << file.sha256 << '\n';
    out << "seed    " << seed << '\n';
    out << std::left << std::setw(20) << param << std::setw(16) << "X" << std::setw(16) << "Y";
    if (given) out << std::setw(16) << "X|" + glabel << std::setw(16) << "Y|" + glabel;
    out << '\n';
    for (const auto& pt : result.points) {
      out << std::setw(20) << table_number(pt.value) << std::setw(16) << table_number(pt.prob_x) << std::setw(16)
          << table_number(pt.prob_y);
      if (given) out << std::setw(16) << table_number(*pt.cond_x) << std::setw(16) << table_number(*pt.cond_y);
      out << '\n';
    }
    out << "visibility " << table_number(result.visibility) << '\n';
  }
  return kOk;
}

int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  const std::string src = read_file(path);
  std::vector<dsl::Diagnostic> diags;
  try {
    diags = dsl::validate(dsl::parse_syntax(dsl::tokenize(src)));
  } catch (const dsl::ParseError& e) {
    diags = {e.diagnostic()};
  }
  if (diags.empty()) {
    out << "OK\n";
    return kOk;
  }
  for (const auto& d : diags) err << path << ':' << d.to_string() << '\n';
  return kInvalid;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mach-Zehnder interferometer, which-way and quantum-eraser simulator", "mzx"};
  app.require_subcommand(1);

  std::string file, format = "table", given, param, from_text, to_text;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
  long long steps = 0;
  const std::vector<std::string> formats{"table", "csv", "json"};

  auto* run_cmd = app.add_subcommand("run", "Run an experiment file analytically or by sampling");
  run_cmd->add_option("file", file, "Experiment file")->required();
  auto* shots_opt = run_cmd->add_option("--shots", shots, "Sample N shots instead of the exact distribution")
                        ->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", seed, "RNG seed")->envname("MZX_SEED");
  run_cmd->add_option("--format", format, "Output format")->check(CLI::IsMember(formats));
  run_cmd->add_option("--given", given, "Condition on key=value[,key=value] (keys: abs, ww, detector)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep the free parameter of an experiment file");
  sweep_cmd->add_option("file", file, "Experiment file")->required();
  sweep_cmd->add_option("--param", param, "Free parameter name")->required();
  sweep_cmd->add_option("--from", from_text, "First grid value (accepts a pi suffix)")->required();
  sweep_cmd->add_option("--to", to_text, "End of the grid, excluded")->required();
  sweep_cmd->add_option("--steps", steps, "Number of grid points")->required();
  sweep_cmd->add_option("--seed", seed, "RNG seed (echoed only)")->envname("MZX_SEED");
  sweep_cmd->add_option("--format", format, "Output format")->check(CLI::IsMember(formats));
  sweep_cmd->add_option("--given", given, "Condition on key=value[,key=value]");

  auto* validate_cmd = app.add_subcommand("validate", "Check an experiment file");
  validate_cmd->add_option("file", file, "Experiment file")->required();

  std::vector<std::string> argv_store{"mzx"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*run_cmd) {
      std::optional<std::size_t> n;
      if (*shots_opt) n = shots;
      return cmd_run(file, n, seed, parse_format(format), given, out);
    }
    if (*sweep_cmd) return cmd_sweep(file, param, from_text, to_text, steps, parse_format(format), given, seed, out);
    return cmd_validate(file, out, err);
  } catch (const CliFailure& f) {
    err << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInvalid;
  }
}

}  // namespace mzx::cli
