#ifndef PMFENCE_IR_HPP
#define PMFENCE_IR_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pmfence {

// Textual mini-IR for persistent-memory programs.  One instruction per
// line, blocks introduced by "label:", structs with explicit byte offsets.

struct SourceLoc {
  int line = 0;
  int column = 0;
};

struct Diagnostic {
  SourceLoc loc;
  std::string message;
};

enum class TypeKind { Int, Ptr, Array };

struct Type {
  TypeKind kind = TypeKind::Int;
  std::string struct_name;  // Ptr: pointee struct ("" = opaque PM pointer)
  int array_len = 0;        // Array: element count (int elements, 8 bytes each)

  static Type make_int() { return Type{TypeKind::Int, "", 0}; }
  static Type make_ptr(std::string s) { return Type{TypeKind::Ptr, std::move(s), 0}; }
  static Type make_array(int n) { return Type{TypeKind::Array, "", n}; }

  bool operator==(const Type&) const = default;
};

struct Field {
  std::string name;
  Type type;
  int offset = 0;
  bool is_atomic = false;

  bool operator==(const Field&) const = default;
};

struct StructDecl {
  std::string name;
  std::vector<Field> fields;
  int size = 0;

  const Field* find_field(const std::string& fname) const {
    for (const auto& f : fields)
      if (f.name == fname) return &f;
    return nullptr;
  }

  bool operator==(const StructDecl&) const = default;
};

struct RootDecl {
  std::string name;
  std::string struct_name;

  bool operator==(const RootDecl&) const = default;
};

enum class Opcode {
  Assign,       // assign y, x
  Load,         // load y, x.f
  LoadAtomic,   // load_atomic y, x.f
  Store,        // store x.f, v
  StoreAtomic,  // store_atomic x.f, v
  StoreRelease, // store_release x.f, v
  Rmw,          // rmw y, x.f, v        (atomic exchange: y = old, x.f = v)
  Cas,          // cas y, x.f, old, new (y = 1 on success, 0 otherwise)
  Pmalloc,      // pmalloc y, Struct
  Malloc,       // malloc y, Struct
  AddrOf,       // addrof p, x.f
  LoadIndex,    // loadidx y, a[i]
  StoreIndex,   // storeidx a[i], v
  PtrAdd,       // ptradd p, x, k
  Memcpy,       // memcpy x, src, len
  Flush,        // flush x.f | flush a[i]        (clflush)
  FlushOpt,     // flushopt x.f | flushopt a[i]  (clwb)
  FlushRange,   // flushrange x, len
  Fence,        // fence                         (sfence)
  Lock,         // lock m
  Unlock,       // unlock m
  Call,         // call r, F(a, ...) | call F(a, ...)
  Br,           // br L
  BrCond,       // brcond v, L1, L2
  Ret,          // ret | ret v
  CntInc,       // cntinc x.f   (flit-mode counter increment for the line of x.f)
  CntDec,       // cntdec x.f
  HelpFlush,    // helpflush x.f (flush + fence iff the line counter is nonzero)
};

struct Operand {
  bool is_const = false;
  std::int64_t value = 0;
  std::string ref;

  static Operand constant(std::int64_t v) { return Operand{true, v, ""}; }
  static Operand var(std::string r) { return Operand{false, 0, std::move(r)}; }

  bool operator==(const Operand&) const = default;
};

struct Instruction {
  Opcode op = Opcode::Fence;
  std::string dst;                 // result variable
  std::string base;                // x in x.f / array ref / memcpy dst / ptradd src
  std::string field;               // f in x.f / struct name for pmalloc
  std::string index_var;           // i in a[i]
  std::vector<Operand> args;       // value operands / call arguments
  std::string callee;              // call target / mutex name
  std::string label1, label2;      // branch targets
  bool relax = false;              // "!relax" suffix (store / atomic load only)
  SourceLoc loc;

  bool is_terminator() const {
    return op == Opcode::Br || op == Opcode::BrCond || op == Opcode::Ret;
  }
  bool is_store() const {
    return op == Opcode::Store || op == Opcode::StoreAtomic ||
           op == Opcode::StoreRelease;
  }

  bool structurally_equal(const Instruction& o) const {
    return op == o.op && dst == o.dst && base == o.base && field == o.field &&
           index_var == o.index_var && args == o.args && callee == o.callee &&
           label1 == o.label1 && label2 == o.label2 && relax == o.relax;
  }
};

struct BasicBlock {
  std::string label;
  std::vector<Instruction> insts;  // last instruction is the terminator

  bool structurally_equal(const BasicBlock& o) const {
    if (label != o.label || insts.size() != o.insts.size()) return false;
    for (size_t i = 0; i < insts.size(); i++)
      if (!insts[i].structurally_equal(o.insts[i])) return false;
    return true;
  }
};

struct Param {
  std::string name;
  Type type;

  bool operator==(const Param&) const = default;
};

struct Function {
  std::string name;
  std::vector<Param> params;
  std::optional<Type> return_type;
  std::vector<BasicBlock> blocks;  // first block is the entry

  const BasicBlock* find_block(const std::string& label) const {
    for (const auto& b : blocks)
      if (b.label == label) return &b;
    return nullptr;
  }

  bool structurally_equal(const Function& o) const {
    if (name != o.name || params != o.params || return_type != o.return_type ||
        blocks.size() != o.blocks.size())
      return false;
    for (size_t i = 0; i < blocks.size(); i++)
      if (!blocks[i].structurally_equal(o.blocks[i])) return false;
    return true;
  }
};

struct ThreadSpec {
  std::string function;
  std::vector<Operand> args;  // root names or integer constants
};

struct Harness {
  std::vector<ThreadSpec> threads;  // at most 2
  int bound = 0;                    // max total interleaving steps

  bool structurally_equal(const Harness& o) const {
    if (bound != o.bound || threads.size() != o.threads.size()) return false;
    for (size_t i = 0; i < threads.size(); i++)
      if (threads[i].function != o.threads[i].function ||
          threads[i].args != o.threads[i].args)
        return false;
    return true;
  }
};

struct Program {
  int line_size = 64;    // "lineattr N"
  bool aligned = false;  // "aligned": objects are cache-line aligned
  std::vector<StructDecl> structs;
  std::vector<RootDecl> roots;
  std::vector<Function> functions;
  std::optional<Harness> harness;

  const StructDecl* find_struct(const std::string& name) const {
    for (const auto& s : structs)
      if (s.name == name) return &s;
    return nullptr;
  }
  const RootDecl* find_root(const std::string& name) const {
    for (const auto& r : roots)
      if (r.name == name) return &r;
    return nullptr;
  }
  const Function* find_function(const std::string& name) const {
    for (const auto& f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }

  bool structurally_equal(const Program& o) const {
    if (line_size != o.line_size || aligned != o.aligned ||
        structs != o.structs || roots != o.roots ||
        functions.size() != o.functions.size() ||
        harness.has_value() != o.harness.has_value())
      return false;
    for (size_t i = 0; i < functions.size(); i++)
      if (!functions[i].structurally_equal(o.functions[i])) return false;
    if (harness && !harness->structurally_equal(*o.harness)) return false;
    return true;
  }
};

// A program point: instruction `index` inside block `block` of a function.
struct Site {
  std::string function;
  std::string block;
  int index = 0;

  bool operator==(const Site&) const = default;
  auto operator<=>(const Site&) const = default;
};

}  // namespace pmfence

#endif
