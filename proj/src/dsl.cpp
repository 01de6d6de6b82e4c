#include "mzx/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <set>

namespace mzx::dsl {

namespace {

const std::set<std::string, std::less<>> kKeywords = {
    "source", "param", "beamsplitter", "mirrors", "phase", "wwreadout", "entangler",
    "eraser", "detect", "open", "closed", "excited"};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

[[noreturn]] void fail(ErrorCategory cat, std::size_t line, std::size_t col, std::string msg) {
  throw ParseError({line, col, cat, std::move(msg)});
}

std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Tokens of one source line.
class LineCursor {
 public:
  LineCursor(const Token* begin, const Token* end) : cur_(begin), end_(end), last_(begin) {}

  bool done() const { return cur_ == end_; }
  const Token& peek() const { return *cur_; }
  const Token& take() {
    last_ = cur_;
    return *cur_++;
  }

  [[noreturn]] void expected(const std::string& what) const {
    if (done()) {
      fail(ErrorCategory::Syntactic, last_->line, last_->column + last_->text.size(),
           "expected " + what + " at end of line");
    }
    fail(ErrorCategory::Syntactic, cur_->line, cur_->column,
         "expected " + what + ", found '" + cur_->text + "'");
  }

  void finish() const {
    if (!done()) fail(ErrorCategory::Syntactic, cur_->line, cur_->column, "unexpected token '" + cur_->text + "'");
  }

  Path path() {
    if (done() || peek().kind != TokenKind::Identifier || (peek().text != "A" && peek().text != "B"))
      expected("path label A or B");
    return take().text == "A" ? Path::A : Path::B;
  }

  Operand operand() {
    if (!done() && peek().kind == TokenKind::Number) {
      const Token& t = take();
      return Number{t.value, t.text};
    }
    if (!done() && peek().kind == TokenKind::Identifier) return ParamRef{take().text};
    expected("number or parameter name");
  }

 private:
  const Token* cur_;
  const Token* end_;
  const Token* last_;
};

void print_operand(std::string& out, const Operand& op) {
  if (const auto* n = std::get_if<Number>(&op))
    out += n->text.empty() ? shortest(n->value) : n->text;
  else
    out += std::get<ParamRef>(op).name;
}

}  // namespace

const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Lexical: return "lexical";
    case ErrorCategory::Syntactic: return "syntax";
    case ErrorCategory::Semantic: return "semantic";
  }
  return "unknown";
}

std::string Diagnostic::to_string() const {
  return std::to_string(line) + ":" + std::to_string(column) + ": " + category_name(category) +
         " error: " + message;
}

ParseError::ParseError(Diagnostic d) : std::runtime_error(d.to_string()), diag_(std::move(d)) {}

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> tokens;
  std::size_t line = 1, col = 1, i = 0;
  auto advance = [&](std::size_t n) {
    i += n;
    col += n;
  };

  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      ++i;
      ++line;
      col = 1;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      advance(1);
    } else if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
    } else if (c == '=') {
      tokens.push_back({TokenKind::Equals, "=", 0.0, line, col});
      advance(1);
    } else if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      std::string word(src.substr(i, j - i));
      if (word == "pi")
        tokens.push_back({TokenKind::Number, word, std::numbers::pi, line, col});
      else
        tokens.push_back({kKeywords.contains(word) ? TokenKind::Keyword : TokenKind::Identifier, word, 0.0,
                          line, col});
      advance(j - i);
    } else if (is_digit(c) || c == '.' || c == '-' || c == '+') {
      std::size_t j = i;
      if (src[j] == '-' || src[j] == '+') ++j;
      const std::size_t digits_from = j;
      while (j < src.size() && is_digit(src[j])) ++j;
      bool any = j > digits_from;
      if (j < src.size() && src[j] == '.') {
        ++j;
        const std::size_t frac = j;
        while (j < src.size() && is_digit(src[j])) ++j;
        any = any || j > frac;
      }
      if (!any) fail(ErrorCategory::Lexical, line, col, "invalid number");
      const std::size_t mantissa_end = j;
      bool times_pi = false;
      if (src.substr(j, 2) == "pi" && (j + 2 == src.size() || !ident_char(src[j + 2]))) {
        times_pi = true;
        j += 2;
      }
      if (j < src.size() && (ident_char(src[j]) || src[j] == '.'))
        fail(ErrorCategory::Lexical, line, col, "invalid number '" + std::string(src.substr(i, j - i + 1)) + "'");

      std::string_view mantissa = src.substr(i, mantissa_end - i);
      if (!mantissa.empty() && mantissa.front() == '+') mantissa.remove_prefix(1);
      double v = 0.0;
      const auto res = std::from_chars(mantissa.data(), mantissa.data() + mantissa.size(), v);
      if (res.ec != std::errc() || res.ptr != mantissa.data() + mantissa.size())
        fail(ErrorCategory::Lexical, line, col, "invalid number");
      tokens.push_back({TokenKind::Number, std::string(src.substr(i, j - i)),
                        times_pi ? v * std::numbers::pi : v, line, col});
      advance(j - i);
    } else {
      const auto uc = static_cast<unsigned char>(c);
      fail(ErrorCategory::Lexical, line, col,
           uc < 0x80 ? std::string("unexpected character '") + c + "'" : std::string("unexpected non-ASCII character"));
    }
  }
  return tokens;
}

ExperimentAst parse_syntax(const std::vector<Token>& tokens) {
  ExperimentAst ast;
  if (!tokens.empty()) ast.last_line = tokens.back().line;

  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t j = i;
    while (j < tokens.size() && tokens[j].line == tokens[i].line) ++j;
    LineCursor cur(tokens.data() + i, tokens.data() + j);
    i = j;

    const Token& head = cur.take();
    if (head.kind != TokenKind::Keyword || head.text == "open" || head.text == "closed" || head.text == "excited")
      fail(ErrorCategory::Syntactic, head.line, head.column, "expected a directive, found '" + head.text + "'");

    const std::string& kw = head.text;
    if (kw == "source") {
      if (ast.source)
        fail(ErrorCategory::Semantic, head.line, head.column,
             "source already declared on line " + std::to_string(ast.source->line));
      SourceDecl src;
      src.path = cur.path();
      if (!cur.done() && cur.peek().kind == TokenKind::Keyword && cur.peek().text == "excited") {
        cur.take();
        src.excited = true;
      }
      cur.finish();
      src.line = head.line;
      src.column = head.column;
      ast.source = src;
      continue;
    }
    if (kw == "param") {
      if (cur.done() || cur.peek().kind != TokenKind::Identifier) cur.expected("parameter name");
      ParamDecl decl{cur.take().text, std::nullopt, head.line, head.column};
      if (!cur.done()) {
        if (cur.peek().kind != TokenKind::Number) cur.expected("number");
        const Token& t = cur.take();
        decl.value = Number{t.value, t.text};
      }
      cur.finish();
      ast.params.push_back(std::move(decl));
      continue;
    }

    StageDirective st;
    st.line = head.line;
    st.column = head.column;
    if (kw == "beamsplitter") {
      st.kind = DirectiveKind::BeamSplitter;
    } else if (kw == "mirrors") {
      st.kind = DirectiveKind::Mirrors;
    } else if (kw == "wwreadout") {
      st.kind = DirectiveKind::WhichWayReadout;
    } else if (kw == "entangler") {
      st.kind = DirectiveKind::Entangler;
    } else if (kw == "detect") {
      st.kind = DirectiveKind::Detect;
    } else if (kw == "phase") {
      st.kind = DirectiveKind::Phase;
      st.path = cur.path();
      st.amount = cur.operand();
    } else {  // eraser
      st.kind = DirectiveKind::Eraser;
      if (cur.done() || cur.peek().kind != TokenKind::Keyword ||
          (cur.peek().text != "open" && cur.peek().text != "closed"))
        cur.expected("'open' or 'closed'");
      st.open = cur.take().text == "open";
      if (!cur.done()) {
        if (cur.peek().kind != TokenKind::Identifier || cur.peek().text != "eta") cur.expected("eta=<number>");
        cur.take();
        if (cur.done() || cur.peek().kind != TokenKind::Equals) cur.expected("'='");
        cur.take();
        st.amount = cur.operand();
      }
    }
    cur.finish();
    ast.stages.push_back(std::move(st));
  }
  return ast;
}

bool ExperimentAst::has(DirectiveKind kind) const {
  return std::any_of(stages.begin(), stages.end(), [&](const StageDirective& s) { return s.kind == kind; });
}

std::vector<std::string> ExperimentAst::subsystems() const {
  std::vector<std::string> out{mzx::subsystems::kDirection};
  if (has(DirectiveKind::Entangler)) {
    out.push_back(mzx::subsystems::kPhoton);
    out.push_back(mzx::subsystems::kAtom);
  }
  if (has(DirectiveKind::Eraser)) out.push_back(mzx::subsystems::kEraser);
  return out;
}

std::vector<std::string> ExperimentAst::free_params() const {
  std::vector<std::string> out;
  for (const auto& p : params)
    if (!p.value) out.push_back(p.name);
  return out;
}

std::vector<Diagnostic> validate(const ExperimentAst& ast) {
  std::vector<Diagnostic> diags;
  auto report = [&](std::size_t line, std::size_t col, std::string msg) {
    diags.push_back({line, col, ErrorCategory::Semantic, std::move(msg)});
  };

  // parameters
  std::set<std::string> declared;
  std::size_t free_count = 0;
  for (const auto& p : ast.params) {
    if (!declared.insert(p.name).second) report(p.line, p.column, "parameter '" + p.name + "' declared twice");
    if (!p.value && ++free_count == 2) report(p.line, p.column, "at most one free parameter is allowed");
  }

  if (ast.source && !ast.stages.empty() && ast.stages.front().line < ast.source->line)
    report(ast.source->line, ast.source->column, "source must precede every stage");

  const StageDirective* entangler = nullptr;
  const StageDirective* readout = nullptr;
  const StageDirective* eraser = nullptr;
  const StageDirective* detect = nullptr;
  for (const auto& st : ast.stages) {
    if (detect) {
      report(st.line, st.column, st.kind == DirectiveKind::Detect ? "detect appears more than once"
                                                                  : "detect required as final stage");
      continue;
    }
    if (st.amount) {
      if (const auto* ref = std::get_if<ParamRef>(&*st.amount); ref && !declared.contains(ref->name))
        report(st.line, st.column, "undeclared parameter '" + ref->name + "'");
    }
    switch (st.kind) {
      case DirectiveKind::Entangler:
        if (entangler) report(st.line, st.column, "entangler appears more than once");
        if (readout) report(st.line, st.column, "wwreadout and entangler are mutually exclusive");
        entangler = &st;
        break;
      case DirectiveKind::WhichWayReadout:
        if (entangler && !readout) report(st.line, st.column, "wwreadout and entangler are mutually exclusive");
        readout = &st;
        break;
      case DirectiveKind::Eraser:
        if (eraser) report(st.line, st.column, "eraser appears more than once");
        if (!entangler) report(st.line, st.column, "eraser requires photon register");
        if (st.amount && !st.open) report(st.line, st.column, "eta applies only to an open eraser");
        if (st.amount) {
          if (const auto* n = std::get_if<Number>(&*st.amount); n && !(n->value > 0.0 && n->value <= 1.0))
            report(st.line, st.column, "eta must lie in (0, 1]");
        }
        eraser = &st;
        break;
      case DirectiveKind::Phase:
        if (const auto* n = std::get_if<Number>(&*st.amount); n && !std::isfinite(n->value))
          report(st.line, st.column, "phase must be finite");
        break;
      case DirectiveKind::Detect:
        detect = &st;
        break;
      default:
        break;
    }
  }
  if (!detect) report(ast.last_line, 1, "detect required as final stage");

  std::stable_sort(diags.begin(), diags.end(),
                   [](const Diagnostic& a, const Diagnostic& b) { return a.line < b.line; });
  return diags;
}

ExperimentAst parse(const std::vector<Token>& tokens) {
  ExperimentAst ast = parse_syntax(tokens);
  if (auto diags = validate(ast); !diags.empty()) throw ParseError(diags.front());
  return ast;
}

ExperimentAst parse(std::string_view src) { return parse(tokenize(src)); }

std::string pretty_print(const ExperimentAst& ast) {
  std::string out;
  for (const auto& p : ast.params) {
    out += "param " + p.name;
    if (p.value) {
      out += ' ';
      print_operand(out, *p.value);
    }
    out += '\n';
  }
  if (ast.source) {
    out += std::string("source ") + path_name(ast.source->path);
    if (ast.source->excited) out += " excited";
    out += '\n';
  }
  for (const auto& st : ast.stages) {
    switch (st.kind) {
      case DirectiveKind::BeamSplitter: out += "beamsplitter"; break;
      case DirectiveKind::Mirrors: out += "mirrors"; break;
      case DirectiveKind::WhichWayReadout: out += "wwreadout"; break;
      case DirectiveKind::Entangler: out += "entangler"; break;
      case DirectiveKind::Detect: out += "detect"; break;
      case DirectiveKind::Phase:
        out += std::string("phase ") + path_name(*st.path) + ' ';
        print_operand(out, *st.amount);
        break;
      case DirectiveKind::Eraser:
        out += st.open ? "eraser open" : "eraser closed";
        if (st.amount) {
          out += " eta=";
          print_operand(out, *st.amount);
        }
        break;
    }
    out += '\n';
  }
  return out;
}

Pipeline compile(const ExperimentAst& ast, const Bindings& bindings) {
  if (auto diags = validate(ast); !diags.empty()) throw ParseError(diags.front());

  std::map<std::string, std::optional<double>> values;
  for (const auto& p : ast.params) values[p.name] = p.value ? std::optional(p.value->value) : std::nullopt;
  for (const auto& [name, v] : bindings) {
    auto it = values.find(name);
    if (it == values.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    if (it->second) throw std::invalid_argument("parameter '" + name + "' is already bound in the file");
    it->second = v;
  }

  auto resolve = [&](const Operand& op, const StageDirective& st) {
    if (const auto* n = std::get_if<Number>(&op)) return n->value;
    const auto& name = std::get<ParamRef>(op).name;
    const auto& v = values.at(name);
    if (!v) fail(ErrorCategory::Semantic, st.line, st.column, "unbound parameter '" + name + "'");
    return *v;
  };

  std::vector<Subsystem> subs;
  std::vector<std::string> initial_labels;
  for (const auto& name : ast.subsystems()) {
    if (name == mzx::subsystems::kDirection) {
      subs.push_back(direction_subsystem());
      initial_labels.push_back(direction_label(ast.source ? ast.source->path : Path::A));
    } else if (name == mzx::subsystems::kPhoton) {
      subs.push_back(photon_subsystem());
      initial_labels.push_back("vac");
    } else if (name == mzx::subsystems::kAtom) {
      subs.push_back(atom_subsystem());
      initial_labels.push_back("e");
    } else {
      subs.push_back(eraser_subsystem());
      initial_labels.push_back("gamma");
    }
  }
  SpaceSpec space(std::move(subs));
  StateVector initial = StateVector::basis(space, initial_labels);

  const std::vector<std::string> direction{mzx::subsystems::kDirection};
  std::vector<Stage> stages;
  for (const auto& st : ast.stages) {
    switch (st.kind) {
      case DirectiveKind::BeamSplitter:
        stages.emplace_back(UnitaryStage{beam_splitter(), direction, "beamsplitter"});
        break;
      case DirectiveKind::Mirrors:
        stages.emplace_back(UnitaryStage{mirror_pair(), direction, "mirrors"});
        break;
      case DirectiveKind::Phase: {
        const double phi = resolve(*st.amount, st);
        if (!std::isfinite(phi)) fail(ErrorCategory::Semantic, st.line, st.column, "phase must be finite");
        stages.emplace_back(UnitaryStage{phase_shifter(phi, *st.path), direction, "phase"});
        break;
      }
      case DirectiveKind::WhichWayReadout:
        stages.emplace_back(ProjectiveMeasureStage{mzx::subsystems::kDirection, records::kWhichWay, {"A", "B"}});
        break;
      case DirectiveKind::Entangler:
        stages.emplace_back(UnitaryStage{
            which_way_entangler(),
            {mzx::subsystems::kDirection, mzx::subsystems::kPhoton, mzx::subsystems::kAtom},
            "entangler"});
        break;
      case DirectiveKind::Eraser: {
        if (!st.open) break;  // closed channel: the eraser stays in |gamma>
        const double eta = st.amount ? resolve(*st.amount, st) : 1.0;
        if (!(eta > 0.0 && eta <= 1.0)) fail(ErrorCategory::Semantic, st.line, st.column, "eta must lie in (0, 1]");
        stages.emplace_back(GeneralizedMeasureStage{
            eraser_kraus(eta), {mzx::subsystems::kPhoton, mzx::subsystems::kEraser}, records::kAbsorbed});
        break;
      }
      case DirectiveKind::Detect:
        stages.emplace_back(DetectStage{});
        break;
    }
  }
  return Pipeline(std::move(space), std::move(initial), std::move(stages));
}

}  // namespace mzx::dsl
