#ifndef PMFENCE_PARSER_HPP
#define PMFENCE_PARSER_HPP

#include <string>
#include <variant>
#include <vector>

#include "pmfence/ir.hpp"

namespace pmfence {

struct ParseResult {
  Program program;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return diagnostics.empty(); }
};

// Parses and validates a .pmir program.  On error the returned program is
// empty and `diagnostics` carries line/column positions.
ParseResult parse_program(const std::string& text);

// Validation only; used on programmatically built programs.
std::vector<Diagnostic> validate_program(const Program& p);

// Flow-insensitive variable typing for one function (params, then first
// definitions).  Assumes the program validated.
struct TypeEnv {
  std::vector<std::pair<std::string, Type>> vars;

  const Type* lookup(const std::string& name) const {
    for (const auto& [n, t] : vars)
      if (n == name) return &t;
    return nullptr;
  }
  void bind(const std::string& name, const Type& t) {
    if (!lookup(name)) vars.emplace_back(name, t);
  }
};

TypeEnv infer_types(const Program& p, const Function& f);

}  // namespace pmfence

#endif
