#ifndef PMFENCE_PRINTER_HPP
#define PMFENCE_PRINTER_HPP

#include <string>

#include "pmfence/ir.hpp"

namespace pmfence {

// Canonical text for a program: parse_program(emit_program(p)) is
// structurally equal to p.
std::string emit_program(const Program& p);

std::string emit_instruction(const Instruction& in);

}  // namespace pmfence

#endif
