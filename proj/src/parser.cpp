#include "pmfence/parser.hpp"

#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace pmfence {
namespace {

struct Token {
  std::string text;
  int column = 0;
};

// Splits one line into identifier/number/punctuation tokens.  "#" starts a
// comment to end of line.
std::vector<Token> tokenize(const std::string& line) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == '#') break;
    if (std::isspace(static_cast<unsigned char>(c))) {
      i++;
      continue;
    }
    size_t start = i;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < line.size() &&
             (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == '_'))
        i++;
      out.push_back({line.substr(start, i - start), static_cast<int>(start + 1)});
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '-' && i + 1 < line.size() &&
                std::isdigit(static_cast<unsigned char>(line[i + 1])))) {
      i++;
      while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) i++;
      out.push_back({line.substr(start, i - start), static_cast<int>(start + 1)});
    } else if (c == '!' && line.compare(i, 6, "!relax") == 0) {
      i += 6;
      out.push_back({"!relax", static_cast<int>(start + 1)});
    } else if (c == '-' && i + 1 < line.size() && line[i + 1] == '>') {
      i += 2;
      out.push_back({"->", static_cast<int>(start + 1)});
    } else {
      i++;
      out.push_back({line.substr(start, 1), static_cast<int>(start + 1)});
    }
  }
  return out;
}

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  size_t i = s[0] == '-' ? 1 : 0;
  if (i >= s.size()) return false;
  for (; i < s.size(); i++)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

bool is_ident(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

class Parser {
 public:
  explicit Parser(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines_.push_back(line);
  }

  ParseResult run() {
    while (line_no_ < lines_.size()) {
      auto toks = tokenize(lines_[line_no_]);
      line_no_++;
      if (toks.empty()) continue;
      const std::string& head = toks[0].text;
      if (head == "lineattr") {
        parse_lineattr(toks);
      } else if (head == "aligned") {
        prog_.aligned = true;
      } else if (head == "struct") {
        parse_struct(toks);
      } else if (head == "pmroot") {
        parse_root(toks);
      } else if (head == "func") {
        parse_func(toks);
      } else if (head == "harness") {
        parse_harness(toks);
      } else {
        error(toks[0], "expected top-level declaration, got '" + head + "'");
      }
    }
    ParseResult r;
    if (diags_.empty()) {
      auto vd = validate_program(prog_);
      diags_.insert(diags_.end(), vd.begin(), vd.end());
    }
    if (diags_.empty()) r.program = std::move(prog_);
    r.diagnostics = std::move(diags_);
    return r;
  }

 private:
  std::vector<std::string> lines_;
  size_t line_no_ = 0;
  Program prog_;
  std::vector<Diagnostic> diags_;

  int cur_line() const { return static_cast<int>(line_no_); }

  void error(const Token& t, const std::string& msg) {
    diags_.push_back({{cur_line(), t.column}, msg});
  }
  void error_at(int line, int col, const std::string& msg) {
    diags_.push_back({{line, col}, msg});
  }

  void parse_lineattr(const std::vector<Token>& toks) {
    if (toks.size() != 2 || !is_number(toks[1].text)) {
      error(toks[0], "expected 'lineattr N'");
      return;
    }
    prog_.line_size = std::stoi(toks[1].text);
    if (prog_.line_size <= 0) error(toks[1], "line size must be positive");
  }

  // type := int | ptr | ptr < Name > | int [ N ]
  bool parse_type(const std::vector<Token>& toks, size_t& i, Type& out,
                  const Token& ctx) {
    if (i >= toks.size()) {
      error(ctx, "expected type");
      return false;
    }
    if (toks[i].text == "int") {
      i++;
      if (i + 2 < toks.size() + 1 && i < toks.size() && toks[i].text == "[") {
        if (i + 2 >= toks.size() || !is_number(toks[i + 1].text) ||
            toks[i + 2].text != "]") {
          error(toks[i], "malformed array type");
          return false;
        }
        out = Type::make_array(std::stoi(toks[i + 1].text));
        i += 3;
        return true;
      }
      out = Type::make_int();
      return true;
    }
    if (toks[i].text == "ptr") {
      i++;
      if (i < toks.size() && toks[i].text == "<") {
        if (i + 2 >= toks.size() || !is_ident(toks[i + 1].text) ||
            toks[i + 2].text != ">") {
          error(toks[i], "malformed pointer type");
          return false;
        }
        out = Type::make_ptr(toks[i + 1].text);
        i += 3;
        return true;
      }
      out = Type::make_ptr("");
      return true;
    }
    error(toks[i], "unknown type '" + toks[i].text + "'");
    return false;
  }

  // struct Name { f: type @off [atomic], ... } size N
  void parse_struct(const std::vector<Token>& toks) {
    StructDecl s;
    size_t i = 1;
    if (i >= toks.size() || !is_ident(toks[i].text)) {
      error(toks[0], "expected struct name");
      return;
    }
    s.name = toks[i++].text;
    if (i >= toks.size() || toks[i].text != "{") {
      error(toks[0], "expected '{' in struct declaration");
      return;
    }
    i++;
    while (i < toks.size() && toks[i].text != "}") {
      Field f;
      if (!is_ident(toks[i].text)) {
        error(toks[i], "expected field name");
        return;
      }
      f.name = toks[i++].text;
      if (i >= toks.size() || toks[i].text != ":") {
        error(toks[0], "expected ':' after field name");
        return;
      }
      i++;
      if (!parse_type(toks, i, f.type, toks[0])) return;
      if (i >= toks.size() || toks[i].text != "@") {
        error(toks[0], "expected '@offset' after field type");
        return;
      }
      i++;
      if (i >= toks.size() || !is_number(toks[i].text)) {
        error(toks[0], "expected field offset");
        return;
      }
      f.offset = std::stoi(toks[i++].text);
      if (i < toks.size() && toks[i].text == "atomic") {
        f.is_atomic = true;
        i++;
      }
      s.fields.push_back(f);
      if (i < toks.size() && toks[i].text == ",") i++;
    }
    if (i >= toks.size()) {
      error(toks[0], "unterminated struct declaration");
      return;
    }
    i++;  // }
    if (i + 1 >= toks.size() || toks[i].text != "size" ||
        !is_number(toks[i + 1].text)) {
      error(toks[0], "expected 'size N' after struct body");
      return;
    }
    s.size = std::stoi(toks[i + 1].text);
    prog_.structs.push_back(std::move(s));
  }

  void parse_root(const std::vector<Token>& toks) {
    if (toks.size() != 4 || !is_ident(toks[1].text) || toks[2].text != ":" ||
        !is_ident(toks[3].text)) {
      error(toks[0], "expected 'pmroot name: Struct'");
      return;
    }
    prog_.roots.push_back({toks[1].text, toks[3].text});
  }

  // func name(p: type, ...) [-> type] {
  void parse_func(const std::vector<Token>& toks) {
    Function f;
    size_t i = 1;
    if (i >= toks.size() || !is_ident(toks[i].text)) {
      error(toks[0], "expected function name");
      return;
    }
    f.name = toks[i++].text;
    if (i >= toks.size() || toks[i].text != "(") {
      error(toks[0], "expected '(' after function name");
      return;
    }
    i++;
    while (i < toks.size() && toks[i].text != ")") {
      Param p;
      if (!is_ident(toks[i].text)) {
        error(toks[i], "expected parameter name");
        return;
      }
      p.name = toks[i++].text;
      if (i >= toks.size() || toks[i].text != ":") {
        error(toks[0], "expected ':' after parameter name");
        return;
      }
      i++;
      if (!parse_type(toks, i, p.type, toks[0])) return;
      f.params.push_back(p);
      if (i < toks.size() && toks[i].text == ",") i++;
    }
    if (i >= toks.size()) {
      error(toks[0], "unterminated parameter list");
      return;
    }
    i++;  // )
    if (i < toks.size() && toks[i].text == "->") {
      i++;
      Type rt;
      if (!parse_type(toks, i, rt, toks[0])) return;
      f.return_type = rt;
    }
    if (i >= toks.size() || toks[i].text != "{") {
      error(toks[0], "expected '{' to open function body");
      return;
    }
    parse_body(f);
    prog_.functions.push_back(std::move(f));
  }

  void parse_body(Function& f) {
    BasicBlock* cur = nullptr;
    bool cur_terminated = false;
    while (line_no_ < lines_.size()) {
      auto toks = tokenize(lines_[line_no_]);
      line_no_++;
      if (toks.empty()) continue;
      if (toks[0].text == "}") {
        if (cur && !cur_terminated)
          error(toks[0], "block '" + cur->label + "' is missing a terminator");
        return;
      }
      if (toks.size() >= 2 && is_ident(toks[0].text) && toks[1].text == ":" &&
          toks.size() == 2) {
        if (cur && !cur_terminated)
          error(toks[0], "block '" + cur->label + "' is missing a terminator");
        f.blocks.push_back({toks[0].text, {}});
        cur = &f.blocks.back();
        cur_terminated = false;
        continue;
      }
      if (!cur) {
        // Implicit entry block for label-free straight-line bodies.
        f.blocks.push_back({"entry", {}});
        cur = &f.blocks.back();
        cur_terminated = false;
      }
      if (cur_terminated) {
        error(toks[0], "instruction after terminator in block '" + cur->label + "'");
        continue;
      }
      Instruction inst;
      if (parse_inst(toks, inst)) {
        cur->insts.push_back(inst);
        if (inst.is_terminator()) cur_terminated = true;
      }
    }
    error_at(cur_line(), 1, "unterminated function body");
  }

  bool expect(const std::vector<Token>& toks, size_t i, const std::string& what) {
    if (i < toks.size() && toks[i].text == what) return true;
    error(toks[0], "expected '" + what + "'");
    return false;
  }

  bool parse_operand(const std::vector<Token>& toks, size_t& i, Operand& out) {
    if (i >= toks.size()) {
      error(toks[0], "expected operand");
      return false;
    }
    if (is_number(toks[i].text)) {
      out = Operand::constant(std::stoll(toks[i].text));
      i++;
      return true;
    }
    if (is_ident(toks[i].text)) {
      out = Operand::var(toks[i].text);
      i++;
      return true;
    }
    error(toks[i], "expected operand, got '" + toks[i].text + "'");
    return false;
  }

  // x.f  or  a[i]
  bool parse_location(const std::vector<Token>& toks, size_t& i, Instruction& inst) {
    if (i >= toks.size() || !is_ident(toks[i].text)) {
      error(toks[0], "expected memory location");
      return false;
    }
    inst.base = toks[i++].text;
    if (i < toks.size() && toks[i].text == ".") {
      i++;
      if (i >= toks.size() || !is_ident(toks[i].text)) {
        error(toks[0], "expected field name after '.'");
        return false;
      }
      inst.field = toks[i++].text;
      return true;
    }
    if (i < toks.size() && toks[i].text == "[") {
      i++;
      if (i >= toks.size() || !is_ident(toks[i].text)) {
        error(toks[0], "expected index variable in '[...]'");
        return false;
      }
      inst.index_var = toks[i++].text;
      if (!expect(toks, i, "]")) return false;
      i++;
      return true;
    }
    error(toks[0], "expected '.' or '[' after reference");
    return false;
  }

  bool parse_inst(const std::vector<Token>& toks, Instruction& inst) {
    inst.loc = {cur_line(), toks[0].column};
    const std::string& op = toks[0].text;
    size_t i = 1;
    auto comma = [&]() -> bool {
      if (!expect(toks, i, ",")) return false;
      i++;
      return true;
    };
    auto ident = [&](std::string& out) -> bool {
      if (i >= toks.size() || !is_ident(toks[i].text)) {
        error(toks[0], "expected identifier");
        return false;
      }
      out = toks[i++].text;
      return true;
    };
    auto finish = [&]() -> bool {
      if (i < toks.size() && toks[i].text == "!relax") {
        inst.relax = true;
        i++;
      }
      if (i != toks.size()) {
        error(toks[i], "trailing tokens on instruction line");
        return false;
      }
      if (inst.relax && inst.op != Opcode::Store &&
          inst.op != Opcode::StoreAtomic && inst.op != Opcode::LoadAtomic) {
        error(toks[0], "'!relax' is legal only on stores and atomic loads");
        return false;
      }
      return true;
    };

    if (op == "assign") {
      inst.op = Opcode::Assign;
      if (!ident(inst.dst) || !comma()) return false;
      if (i < toks.size() && is_number(toks[i].text)) {
        Operand o;
        if (!parse_operand(toks, i, o)) return false;
        inst.args.push_back(o);
        return finish();
      }
      if (!ident(inst.base)) return false;
      return finish();
    }
    if (op == "load" || op == "load_atomic") {
      inst.op = op == "load" ? Opcode::Load : Opcode::LoadAtomic;
      if (!ident(inst.dst) || !comma() || !parse_location(toks, i, inst))
        return false;
      if (!inst.index_var.empty() && inst.op == Opcode::Load)
        inst.op = Opcode::LoadIndex;
      return finish();
    }
    if (op == "store" || op == "store_atomic" || op == "store_release") {
      inst.op = op == "store"          ? Opcode::Store
                : op == "store_atomic" ? Opcode::StoreAtomic
                                       : Opcode::StoreRelease;
      Operand v;
      if (!parse_location(toks, i, inst) || !comma() || !parse_operand(toks, i, v))
        return false;
      inst.args.push_back(v);
      if (!inst.index_var.empty() && inst.op == Opcode::Store)
        inst.op = Opcode::StoreIndex;
      return finish();
    }
    if (op == "rmw") {
      inst.op = Opcode::Rmw;
      Operand v;
      if (!ident(inst.dst) || !comma() || !parse_location(toks, i, inst) ||
          !comma() || !parse_operand(toks, i, v))
        return false;
      inst.args.push_back(v);
      return finish();
    }
    if (op == "cas") {
      inst.op = Opcode::Cas;
      Operand a, b;
      if (!ident(inst.dst) || !comma() || !parse_location(toks, i, inst) ||
          !comma() || !parse_operand(toks, i, a) || !comma() ||
          !parse_operand(toks, i, b))
        return false;
      inst.args.push_back(a);
      inst.args.push_back(b);
      return finish();
    }
    if (op == "pmalloc" || op == "malloc") {
      inst.op = op == "pmalloc" ? Opcode::Pmalloc : Opcode::Malloc;
      if (!ident(inst.dst) || !comma() || !ident(inst.field)) return false;
      return finish();
    }
    if (op == "addrof") {
      inst.op = Opcode::AddrOf;
      if (!ident(inst.dst) || !comma() || !parse_location(toks, i, inst))
        return false;
      return finish();
    }
    if (op == "loadidx") {
      inst.op = Opcode::LoadIndex;
      if (!ident(inst.dst) || !comma() || !parse_location(toks, i, inst))
        return false;
      return finish();
    }
    if (op == "storeidx") {
      inst.op = Opcode::StoreIndex;
      Operand v;
      if (!parse_location(toks, i, inst) || !comma() || !parse_operand(toks, i, v))
        return false;
      inst.args.push_back(v);
      return finish();
    }
    if (op == "ptradd") {
      inst.op = Opcode::PtrAdd;
      Operand k;
      if (!ident(inst.dst) || !comma() || !ident(inst.base) || !comma() ||
          !parse_operand(toks, i, k))
        return false;
      if (!k.is_const) {
        error(toks[0], "ptradd offset must be a constant");
        return false;
      }
      inst.args.push_back(k);
      return finish();
    }
    if (op == "memcpy") {
      inst.op = Opcode::Memcpy;
      Operand len;
      std::string src;
      if (!ident(inst.base) || !comma() || !ident(src) || !comma() ||
          !parse_operand(toks, i, len))
        return false;
      inst.args.push_back(Operand::var(src));
      inst.args.push_back(len);
      return finish();
    }
    if (op == "flush" || op == "flushopt" || op == "cntinc" || op == "cntdec" ||
        op == "helpflush") {
      inst.op = op == "flush"      ? Opcode::Flush
                : op == "flushopt" ? Opcode::FlushOpt
                : op == "cntinc"   ? Opcode::CntInc
                : op == "cntdec"   ? Opcode::CntDec
                                   : Opcode::HelpFlush;
      if (!parse_location(toks, i, inst)) return false;
      return finish();
    }
    if (op == "flushrange") {
      inst.op = Opcode::FlushRange;
      Operand len;
      if (!ident(inst.base) || !comma() || !parse_operand(toks, i, len))
        return false;
      inst.args.push_back(len);
      return finish();
    }
    if (op == "fence") {
      inst.op = Opcode::Fence;
      return finish();
    }
    if (op == "lock" || op == "unlock") {
      inst.op = op == "lock" ? Opcode::Lock : Opcode::Unlock;
      if (!ident(inst.callee)) return false;
      return finish();
    }
    if (op == "call") {
      inst.op = Opcode::Call;
      std::string first;
      if (!ident(first)) return false;
      if (i < toks.size() && toks[i].text == ",") {
        i++;
        inst.dst = first;
        if (!ident(inst.callee)) return false;
      } else {
        inst.callee = first;
      }
      if (!expect(toks, i, "(")) return false;
      i++;
      while (i < toks.size() && toks[i].text != ")") {
        Operand a;
        if (!parse_operand(toks, i, a)) return false;
        inst.args.push_back(a);
        if (i < toks.size() && toks[i].text == ",") i++;
      }
      if (!expect(toks, i, ")")) return false;
      i++;
      return finish();
    }
    if (op == "br") {
      inst.op = Opcode::Br;
      if (!ident(inst.label1)) return false;
      return finish();
    }
    if (op == "brcond") {
      inst.op = Opcode::BrCond;
      Operand c;
      if (!parse_operand(toks, i, c) || !comma() || !ident(inst.label1) ||
          !comma() || !ident(inst.label2))
        return false;
      inst.args.push_back(c);
      return finish();
    }
    if (op == "ret") {
      inst.op = Opcode::Ret;
      if (i < toks.size() && toks[i].text != "!relax") {
        Operand v;
        if (!parse_operand(toks, i, v)) return false;
        inst.args.push_back(v);
      }
      return finish();
    }
    error(toks[0], "unknown instruction '" + op + "'");
    return false;
  }

  void parse_harness(const std::vector<Token>& toks) {
    if (prog_.harness) {
      error(toks[0], "duplicate harness");
      return;
    }
    if (toks.size() != 2 || toks[1].text != "{") {
      error(toks[0], "expected 'harness {'");
      return;
    }
    Harness h;
    h.bound = 1000;
    while (line_no_ < lines_.size()) {
      auto t = tokenize(lines_[line_no_]);
      line_no_++;
      if (t.empty()) continue;
      if (t[0].text == "}") {
        prog_.harness = std::move(h);
        return;
      }
      if (t[0].text == "bounds") {
        if (t.size() != 2 || !is_number(t[1].text)) {
          error(t[0], "expected 'bounds N'");
          return;
        }
        h.bound = std::stoi(t[1].text);
        continue;
      }
      if (t[0].text == "thread") {
        ThreadSpec ts;
        size_t i = 1;
        if (i >= t.size() || !is_ident(t[i].text)) {
          error(t[0], "expected thread function name");
          return;
        }
        ts.function = t[i++].text;
        if (i >= t.size() || t[i].text != "(") {
          error(t[0], "expected '(' after thread function");
          return;
        }
        i++;
        while (i < t.size() && t[i].text != ")") {
          if (is_number(t[i].text)) {
            ts.args.push_back(Operand::constant(std::stoll(t[i].text)));
          } else if (is_ident(t[i].text)) {
            ts.args.push_back(Operand::var(t[i].text));
          } else {
            error(t[i], "bad thread argument");
            return;
          }
          i++;
          if (i < t.size() && t[i].text == ",") i++;
        }
        h.threads.push_back(std::move(ts));
        continue;
      }
      error(t[0], "expected 'thread', 'bounds' or '}' in harness");
      return;
    }
    error_at(cur_line(), 1, "unterminated harness");
  }
};

}  // namespace

ParseResult parse_program(const std::string& text) { return Parser(text).run(); }

namespace {

// One fixpoint-style typing pass shared by validation and infer_types.
// Returns false and appends a diagnostic on a conflicting redefinition.
bool collect_types(const Program& p, const Function& f, TypeEnv& env,
                   std::vector<Diagnostic>* diags) {
  for (const auto& r : p.roots) env.bind(r.name, Type::make_ptr(r.struct_name));
  for (const auto& pa : f.params) env.bind(pa.name, pa.type);

  auto field_type = [&](const Instruction& in) -> const Field* {
    const Type* bt = env.lookup(in.base);
    if (!bt || bt->kind != TypeKind::Ptr || bt->struct_name.empty())
      return nullptr;
    const StructDecl* s = p.find_struct(bt->struct_name);
    if (!s) return nullptr;
    return s->find_field(in.field);
  };

  bool changed = true;
  int rounds = 0;
  while (changed && rounds < 16) {
    changed = false;
    rounds++;
    for (const auto& b : f.blocks) {
      for (const auto& in : b.insts) {
        Type t;
        bool have = false;
        switch (in.op) {
          case Opcode::Assign:
          case Opcode::PtrAdd: {
            if (in.base.empty()) {  // constant assignment
              t = Type::make_int();
              have = true;
              break;
            }
            const Type* bt = env.lookup(in.base);
            if (bt) {
              t = *bt;
              have = true;
            }
            break;
          }
          case Opcode::Load:
          case Opcode::LoadAtomic:
          case Opcode::Rmw: {
            const Field* fl = field_type(in);
            if (fl) {
              t = fl->type;
              have = true;
            }
            break;
          }
          case Opcode::Cas:
          case Opcode::LoadIndex:
            t = Type::make_int();
            have = true;
            break;
          case Opcode::Pmalloc:
          case Opcode::Malloc:
            t = Type::make_ptr(in.field);
            have = true;
            break;
          case Opcode::AddrOf: {
            const Field* fl = field_type(in);
            if (fl) {
              t = fl->type.kind == TypeKind::Array ? fl->type : Type::make_ptr("");
              have = true;
            }
            break;
          }
          case Opcode::Call: {
            if (in.dst.empty()) break;
            const Function* callee = p.find_function(in.callee);
            if (callee && callee->return_type) {
              t = *callee->return_type;
              have = true;
            }
            break;
          }
          default:
            break;
        }
        if (have && !in.dst.empty()) {
          const Type* prev = env.lookup(in.dst);
          if (!prev) {
            env.bind(in.dst, t);
            changed = true;
          } else if (!(*prev == t)) {
            if (diags)
              diags->push_back({in.loc, "variable '" + in.dst +
                                            "' redefined with a different type"});
            return false;
          }
        }
      }
    }
  }
  return true;
}

void validate_function(const Program& p, const Function& f,
                       std::vector<Diagnostic>& diags) {
  if (f.blocks.empty()) {
    diags.push_back({{0, 0}, "function '" + f.name + "' has no blocks"});
    return;
  }
  std::set<std::string> labels;
  for (const auto& b : f.blocks) {
    if (!labels.insert(b.label).second)
      diags.push_back({{0, 0}, "duplicate block label '" + b.label + "' in '" +
                                   f.name + "'"});
  }
  std::set<std::string> param_names, immutable;
  for (const auto& pa : f.params) {
    if (!param_names.insert(pa.name).second)
      diags.push_back({{0, 0}, "duplicate parameter '" + pa.name + "'"});
    immutable.insert(pa.name);
  }
  for (const auto& r : p.roots) immutable.insert(r.name);

  TypeEnv env;
  if (!collect_types(p, f, env, &diags)) return;

  auto check_location = [&](const Instruction& in) {
    const Type* bt = env.lookup(in.base);
    if (!bt) {
      diags.push_back({in.loc, "unknown reference '" + in.base + "'"});
      return;
    }
    if (!in.field.empty()) {
      if (bt->kind != TypeKind::Ptr) {
        diags.push_back({in.loc, "'" + in.base + "' is not a pointer"});
        return;
      }
      if (bt->struct_name.empty()) {
        diags.push_back(
            {in.loc, "field access through opaque pointer '" + in.base + "'"});
        return;
      }
      const StructDecl* s = p.find_struct(bt->struct_name);
      if (!s) {
        diags.push_back({in.loc, "unknown struct '" + bt->struct_name + "'"});
        return;
      }
      if (!s->find_field(in.field))
        diags.push_back({in.loc, "struct '" + s->name + "' has no field '" +
                                     in.field + "'"});
    } else if (!in.index_var.empty()) {
      if (bt->kind != TypeKind::Array)
        diags.push_back({in.loc, "'" + in.base + "' is not an array"});
      if (!env.lookup(in.index_var))
        diags.push_back({in.loc, "unknown index variable '" + in.index_var + "'"});
    }
  };
  auto check_operand = [&](const Instruction& in, const Operand& o) {
    if (!o.is_const && !env.lookup(o.ref))
      diags.push_back({in.loc, "unknown variable '" + o.ref + "'"});
  };

  for (const auto& b : f.blocks) {
    if (b.insts.empty() || !b.insts.back().is_terminator()) {
      diags.push_back(
          {{0, 0}, "block '" + b.label + "' in '" + f.name + "' has no terminator"});
      continue;
    }
    for (size_t k = 0; k < b.insts.size(); k++) {
      const Instruction& in = b.insts[k];
      if (in.is_terminator() && k + 1 != b.insts.size())
        diags.push_back({in.loc, "terminator before end of block '" + b.label + "'"});
      if (!in.dst.empty() && immutable.count(in.dst))
        diags.push_back(
            {in.loc, "parameters and roots may not be redefined: '" + in.dst + "'"});
      switch (in.op) {
        case Opcode::Assign:
          if (!in.base.empty() && !env.lookup(in.base))
            diags.push_back({in.loc, "unknown reference '" + in.base + "'"});
          break;
        case Opcode::Load:
        case Opcode::LoadAtomic:
        case Opcode::Rmw:
        case Opcode::Cas:
        case Opcode::AddrOf:
          check_location(in);
          for (const auto& a : in.args) check_operand(in, a);
          if ((in.op == Opcode::LoadAtomic || in.op == Opcode::Rmw ||
               in.op == Opcode::Cas) &&
              !in.field.empty()) {
            const Type* bt = env.lookup(in.base);
            if (bt && bt->kind == TypeKind::Ptr && !bt->struct_name.empty()) {
              const StructDecl* s = p.find_struct(bt->struct_name);
              const Field* fl = s ? s->find_field(in.field) : nullptr;
              if (fl && !fl->is_atomic)
                diags.push_back({in.loc, "atomic access to non-atomic field '" +
                                             in.field + "'"});
            }
          }
          break;
        case Opcode::Store:
        case Opcode::StoreAtomic:
        case Opcode::StoreRelease:
          check_location(in);
          check_operand(in, in.args[0]);
          if (in.op == Opcode::StoreAtomic || in.op == Opcode::StoreRelease) {
            const Type* bt = env.lookup(in.base);
            if (bt && bt->kind == TypeKind::Ptr && !bt->struct_name.empty()) {
              const StructDecl* s = p.find_struct(bt->struct_name);
              const Field* fl = s ? s->find_field(in.field) : nullptr;
              if (fl && !fl->is_atomic)
                diags.push_back({in.loc, "atomic store to non-atomic field '" +
                                             in.field + "'"});
            }
          }
          break;
        case Opcode::Pmalloc:
        case Opcode::Malloc:
          if (!p.find_struct(in.field))
            diags.push_back({in.loc, "unknown struct '" + in.field + "'"});
          break;
        case Opcode::LoadIndex:
        case Opcode::StoreIndex:
        case Opcode::Flush:
        case Opcode::FlushOpt:
        case Opcode::CntInc:
        case Opcode::CntDec:
        case Opcode::HelpFlush:
          check_location(in);
          for (const auto& a : in.args) check_operand(in, a);
          break;
        case Opcode::PtrAdd:
          if (!env.lookup(in.base))
            diags.push_back({in.loc, "unknown reference '" + in.base + "'"});
          break;
        case Opcode::Memcpy: {
          const Type* bt = env.lookup(in.base);
          if (!bt)
            diags.push_back({in.loc, "unknown reference '" + in.base + "'"});
          check_operand(in, in.args[0]);
          const Type* st =
              in.args[0].is_const ? nullptr : env.lookup(in.args[0].ref);
          if (bt && st && !(*bt == *st))
            diags.push_back({in.loc, "memcpy operands must share a struct type"});
          check_operand(in, in.args[1]);
          break;
        }
        case Opcode::FlushRange:
          if (!env.lookup(in.base))
            diags.push_back({in.loc, "unknown reference '" + in.base + "'"});
          check_operand(in, in.args[0]);
          break;
        case Opcode::Call: {
          const Function* callee = p.find_function(in.callee);
          if (!callee) {
            diags.push_back({in.loc, "call to undeclared function '" + in.callee + "'"});
            break;
          }
          if (callee->params.size() != in.args.size())
            diags.push_back({in.loc, "call to '" + in.callee + "' with " +
                                         std::to_string(in.args.size()) +
                                         " args, expected " +
                                         std::to_string(callee->params.size())});
          for (const auto& a : in.args) check_operand(in, a);
          if (!in.dst.empty() && !callee->return_type)
            diags.push_back(
                {in.loc, "'" + in.callee + "' does not return a value"});
          break;
        }
        case Opcode::Br:
          if (!labels.count(in.label1))
            diags.push_back({in.loc, "unknown branch target '" + in.label1 + "'"});
          break;
        case Opcode::BrCond:
          check_operand(in, in.args[0]);
          if (!labels.count(in.label1))
            diags.push_back({in.loc, "unknown branch target '" + in.label1 + "'"});
          if (!labels.count(in.label2))
            diags.push_back({in.loc, "unknown branch target '" + in.label2 + "'"});
          break;
        case Opcode::Ret:
          if (!in.args.empty()) {
            if (!f.return_type)
              diags.push_back({in.loc, "'" + f.name + "' returns no value"});
            check_operand(in, in.args[0]);
          } else if (f.return_type) {
            diags.push_back({in.loc, "'" + f.name + "' must return a value"});
          }
          break;
        case Opcode::Lock:
        case Opcode::Unlock:
        case Opcode::Fence:
          break;
      }
    }
  }
}

}  // namespace

std::vector<Diagnostic> validate_program(const Program& p) {
  std::vector<Diagnostic> diags;
  std::set<std::string> names;
  for (const auto& s : p.structs) {
    if (!names.insert("s:" + s.name).second)
      diags.push_back({{0, 0}, "duplicate struct '" + s.name + "'"});
    int prev = -1;
    for (const auto& f : s.fields) {
      if (f.offset <= prev)
        diags.push_back({{0, 0}, "field offsets of '" + s.name +
                                     "' must be strictly increasing"});
      prev = f.offset;
      if (f.offset >= s.size && s.size > 0)
        diags.push_back(
            {{0, 0}, "field '" + f.name + "' offset exceeds size of '" + s.name + "'"});
      if (f.is_atomic && f.type.kind == TypeKind::Array)
        diags.push_back(
            {{0, 0}, "atomic flag on array field '" + f.name + "' of '" + s.name + "'"});
      if (f.type.kind == TypeKind::Ptr && !f.type.struct_name.empty() &&
          !p.find_struct(f.type.struct_name))
        diags.push_back({{0, 0}, "field '" + f.name + "' references unknown struct '" +
                                     f.type.struct_name + "'"});
    }
  }
  for (const auto& r : p.roots) {
    if (!names.insert("r:" + r.name).second)
      diags.push_back({{0, 0}, "duplicate root '" + r.name + "'"});
    if (!p.find_struct(r.struct_name))
      diags.push_back(
          {{0, 0}, "root '" + r.name + "' has unknown struct '" + r.struct_name + "'"});
  }
  for (const auto& f : p.functions) {
    if (!names.insert("f:" + f.name).second)
      diags.push_back({{0, 0}, "duplicate function '" + f.name + "'"});
  }
  for (const auto& f : p.functions) validate_function(p, f, diags);
  if (p.harness) {
    if (p.harness->threads.size() > 2)
      diags.push_back({{0, 0}, "harness supports at most 2 threads"});
    for (const auto& t : p.harness->threads) {
      const Function* f = p.find_function(t.function);
      if (!f) {
        diags.push_back({{0, 0}, "harness thread references unknown function '" +
                                     t.function + "'"});
        continue;
      }
      if (f->params.size() != t.args.size())
        diags.push_back({{0, 0}, "harness thread '" + t.function +
                                     "' has wrong argument count"});
      for (const auto& a : t.args)
        if (!a.is_const && !p.find_root(a.ref))
          diags.push_back({{0, 0}, "harness argument '" + a.ref +
                                       "' does not name a declared root"});
    }
  }
  return diags;
}

TypeEnv infer_types(const Program& p, const Function& f) {
  TypeEnv env;
  collect_types(p, f, env, nullptr);
  return env;
}

}  // namespace pmfence
