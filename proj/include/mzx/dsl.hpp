#pragma once

// Line-oriented experiment description language (.mzx files).
//
//   source A [excited]      initial direction (A -> |x>, B -> |y>)
//   param phi [number]      declare a parameter; without a value it is free
//   beamsplitter | mirrors | entangler | wwreadout | detect
//   phase A|B <number|param>
//   eraser open|closed [eta=<number|param>]
//
// Numbers are decimals with an optional `pi` suffix (0.5pi); bare `pi` is π.
// `#` starts a comment that runs to the end of the line.

#include "mzx/experiment.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace mzx::dsl {

enum class ErrorCategory { Lexical, Syntactic, Semantic };

const char* category_name(ErrorCategory c);

struct Diagnostic {
  std::size_t line;
  std::size_t column;
  ErrorCategory category;
  std::string message;

  /// "line:col: category error: message"
  std::string to_string() const;
};

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(Diagnostic d);
  const Diagnostic& diagnostic() const { return diag_; }

 private:
  Diagnostic diag_;
};

enum class TokenKind { Keyword, Identifier, Number, Equals };

struct Token {
  TokenKind kind;
  std::string text;
  double value = 0.0;  // numbers only, with any `pi` factor applied
  std::size_t line;
  std::size_t column;
};

std::vector<Token> tokenize(std::string_view src);

struct Number {
  double value;
  std::string text;  // spelling kept for pretty-printing
  friend bool operator==(const Number& a, const Number& b) { return a.value == b.value; }
};

struct ParamRef {
  std::string name;
  friend bool operator==(const ParamRef&, const ParamRef&) = default;
};

using Operand = std::variant<Number, ParamRef>;

enum class DirectiveKind { BeamSplitter, Mirrors, Phase, WhichWayReadout, Entangler, Eraser, Detect };

struct StageDirective {
  DirectiveKind kind;
  std::optional<Path> path;       // phase
  std::optional<Operand> amount;  // phase angle, or eraser eta
  bool open = false;              // eraser
  std::size_t line = 0;
  std::size_t column = 0;

  friend bool operator==(const StageDirective& a, const StageDirective& b) {
    return a.kind == b.kind && a.path == b.path && a.amount == b.amount && a.open == b.open;
  }
};

struct SourceDecl {
  Path path = Path::A;
  bool excited = false;
  std::size_t line = 0;
  std::size_t column = 0;

  friend bool operator==(const SourceDecl& a, const SourceDecl& b) {
    return a.path == b.path && a.excited == b.excited;
  }
};

struct ParamDecl {
  std::string name;
  std::optional<Number> value;
  std::size_t line = 0;
  std::size_t column = 0;

  friend bool operator==(const ParamDecl& a, const ParamDecl& b) {
    return a.name == b.name && a.value == b.value;
  }
};

/// Parsed experiment. Equality is structural and ignores source positions.
struct ExperimentAst {
  std::optional<SourceDecl> source;
  std::vector<ParamDecl> params;
  std::vector<StageDirective> stages;
  std::size_t last_line = 1;

  bool has(DirectiveKind kind) const;
  /// Subsystems the compiled pipeline will carry, in space order.
  std::vector<std::string> subsystems() const;
  std::vector<std::string> free_params() const;

  friend bool operator==(const ExperimentAst& a, const ExperimentAst& b) {
    return a.source == b.source && a.params == b.params && a.stages == b.stages;
  }
};

/// Syntax only; see validate for the semantic rules.
ExperimentAst parse_syntax(const std::vector<Token>& tokens);

/// Semantic rule table:
///   - detect required exactly once, as the final stage
///   - entangler at most once; eraser at most once
///   - eraser requires an earlier entangler (the photon register)
///   - wwreadout and entangler are mutually exclusive
///   - source at most once and before every stage
///   - parameters declared once; every reference names a declared parameter
///   - at most one free parameter
///   - eta in (0, 1], and only on an open eraser
std::vector<Diagnostic> validate(const ExperimentAst& ast);

/// parse_syntax then validate; throws ParseError on the first problem.
ExperimentAst parse(const std::vector<Token>& tokens);
ExperimentAst parse(std::string_view src);

/// Canonical text form; parse(pretty_print(ast)) == ast.
std::string pretty_print(const ExperimentAst& ast);

using Bindings = std::map<std::string, double>;

/// Builds the pipeline. Every free parameter must be bound; bindings may not
/// name parameters that are unknown or already given a value in the file.
Pipeline compile(const ExperimentAst& ast, const Bindings& bindings = {});

}  // namespace mzx::dsl
