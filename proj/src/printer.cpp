#include "pmfence/printer.hpp"

#include <sstream>

namespace pmfence {
namespace {

std::string type_text(const Type& t) {
  switch (t.kind) {
    case TypeKind::Int:
      return "int";
    case TypeKind::Ptr:
      return t.struct_name.empty() ? "ptr" : "ptr<" + t.struct_name + ">";
    case TypeKind::Array:
      return "int[" + std::to_string(t.array_len) + "]";
  }
  return "int";
}

std::string operand_text(const Operand& o) {
  return o.is_const ? std::to_string(o.value) : o.ref;
}

std::string location_text(const Instruction& in) {
  if (!in.field.empty()) return in.base + "." + in.field;
  return in.base + "[" + in.index_var + "]";
}

}  // namespace

std::string emit_instruction(const Instruction& in) {
  std::ostringstream o;
  switch (in.op) {
    case Opcode::Assign:
      o << "assign " << in.dst << ", "
        << (in.base.empty() && !in.args.empty() ? operand_text(in.args[0])
                                                : in.base);
      break;
    case Opcode::Load:
      o << "load " << in.dst << ", " << location_text(in);
      break;
    case Opcode::LoadAtomic:
      o << "load_atomic " << in.dst << ", " << location_text(in);
      break;
    case Opcode::Store:
      o << "store " << location_text(in) << ", " << operand_text(in.args[0]);
      break;
    case Opcode::StoreAtomic:
      o << "store_atomic " << location_text(in) << ", " << operand_text(in.args[0]);
      break;
    case Opcode::StoreRelease:
      o << "store_release " << location_text(in) << ", " << operand_text(in.args[0]);
      break;
    case Opcode::Rmw:
      o << "rmw " << in.dst << ", " << location_text(in) << ", "
        << operand_text(in.args[0]);
      break;
    case Opcode::Cas:
      o << "cas " << in.dst << ", " << location_text(in) << ", "
        << operand_text(in.args[0]) << ", " << operand_text(in.args[1]);
      break;
    case Opcode::Pmalloc:
      o << "pmalloc " << in.dst << ", " << in.field;
      break;
    case Opcode::Malloc:
      o << "malloc " << in.dst << ", " << in.field;
      break;
    case Opcode::AddrOf:
      o << "addrof " << in.dst << ", " << location_text(in);
      break;
    case Opcode::LoadIndex:
      o << "loadidx " << in.dst << ", " << location_text(in);
      break;
    case Opcode::StoreIndex:
      o << "storeidx " << location_text(in) << ", " << operand_text(in.args[0]);
      break;
    case Opcode::PtrAdd:
      o << "ptradd " << in.dst << ", " << in.base << ", " << operand_text(in.args[0]);
      break;
    case Opcode::Memcpy:
      o << "memcpy " << in.base << ", " << operand_text(in.args[0]) << ", "
        << operand_text(in.args[1]);
      break;
    case Opcode::Flush:
      o << "flush " << location_text(in);
      break;
    case Opcode::FlushOpt:
      o << "flushopt " << location_text(in);
      break;
    case Opcode::FlushRange:
      o << "flushrange " << in.base << ", " << operand_text(in.args[0]);
      break;
    case Opcode::Fence:
      o << "fence";
      break;
    case Opcode::Lock:
      o << "lock " << in.callee;
      break;
    case Opcode::Unlock:
      o << "unlock " << in.callee;
      break;
    case Opcode::Call:
      o << "call ";
      if (!in.dst.empty()) o << in.dst << ", ";
      o << in.callee << "(";
      for (size_t i = 0; i < in.args.size(); i++) {
        if (i) o << ", ";
        o << operand_text(in.args[i]);
      }
      o << ")";
      break;
    case Opcode::Br:
      o << "br " << in.label1;
      break;
    case Opcode::BrCond:
      o << "brcond " << operand_text(in.args[0]) << ", " << in.label1 << ", "
        << in.label2;
      break;
    case Opcode::Ret:
      o << "ret";
      if (!in.args.empty()) o << " " << operand_text(in.args[0]);
      break;
    case Opcode::CntInc:
      o << "cntinc " << location_text(in);
      break;
    case Opcode::CntDec:
      o << "cntdec " << location_text(in);
      break;
    case Opcode::HelpFlush:
      o << "helpflush " << location_text(in);
      break;
  }
  if (in.relax) o << " !relax";
  return o.str();
}

std::string emit_program(const Program& p) {
  std::ostringstream o;
  if (p.line_size != 64) o << "lineattr " << p.line_size << "\n";
  if (p.aligned) o << "aligned\n";
  for (const auto& s : p.structs) {
    o << "struct " << s.name << " { ";
    for (size_t i = 0; i < s.fields.size(); i++) {
      const auto& f = s.fields[i];
      if (i) o << ", ";
      o << f.name << ": " << type_text(f.type) << " @" << f.offset;
      if (f.is_atomic) o << " atomic";
    }
    o << " } size " << s.size << "\n";
  }
  for (const auto& r : p.roots) o << "pmroot " << r.name << ": " << r.struct_name << "\n";
  for (const auto& f : p.functions) {
    o << "func " << f.name << "(";
    for (size_t i = 0; i < f.params.size(); i++) {
      if (i) o << ", ";
      o << f.params[i].name << ": " << type_text(f.params[i].type);
    }
    o << ")";
    if (f.return_type) o << " -> " << type_text(*f.return_type);
    o << " {\n";
    for (const auto& b : f.blocks) {
      o << b.label << ":\n";
      for (const auto& in : b.insts) o << "  " << emit_instruction(in) << "\n";
    }
    o << "}\n";
  }
  if (p.harness) {
    o << "harness {\n";
    for (const auto& t : p.harness->threads) {
      o << "  thread " << t.function << "(";
      for (size_t i = 0; i < t.args.size(); i++) {
        if (i) o << ", ";
        o << (t.args[i].is_const ? std::to_string(t.args[i].value) : t.args[i].ref);
      }
      o << ")\n";
    }
    o << "  bounds " << p.harness->bound << "\n";
    o << "}\n";
  }
  return o.str();
}

}  // namespace pmfence
