#include "pmfence/classify.hpp"

#include "pmfence/parser.hpp"

namespace pmfence {

ClassifyResult compute_pm_set(const Program& p,
                              const std::set<std::string>& allocators) {
  ClassifyResult result;
  PmClassification& c = result.classification;

  for (const auto& name : allocators) {
    if (name == "pmalloc" || name == "malloc") continue;  // builtin instructions
    if (!p.find_function(name))
      result.errors.push_back("unknown PM allocator '" + name + "'");
  }
  if (!result.ok()) return result;

  for (const auto& r : p.roots) c.pm_roots.insert(r.name);

  std::vector<TypeEnv> envs;
  envs.reserve(p.functions.size());
  for (const auto& f : p.functions) envs.push_back(infer_types(p, f));

  auto struct_of = [&](size_t fi, const std::string& ref) -> std::string {
    const Type* t = envs[fi].lookup(ref);
    if (t && t->kind == TypeKind::Ptr) return t->struct_name;
    return "";
  };
  auto field_of = [&](size_t fi, const Instruction& in) -> const Field* {
    std::string sn = struct_of(fi, in.base);
    const StructDecl* s = sn.empty() ? nullptr : p.find_struct(sn);
    return s ? s->find_field(in.field) : nullptr;
  };
  auto field_offset = [&](size_t fi, const Instruction& in) -> int {
    const Field* f = field_of(fi, in);
    return f ? f->offset : -1;
  };

  // Objects reached from a root live in PM, so a pointer loaded out of a PM
  // object is itself a PM pointer.
  auto loads_pm_ptr = [&](size_t fi, const std::string& fn,
                          const Instruction& in) {
    if (!c.is_pm_ref(fn, in.base)) return false;
    const Field* f = field_of(fi, in);
    return f && f->type.kind == TypeKind::Ptr;
  };

  // Pointer parameters of functions nobody calls (library entry points
  // analyzed in isolation) have no binding to infer from; treat them as
  // potential PM pointers.
  {
    std::set<std::string> called;
    for (const auto& f : p.functions)
      for (const auto& b : f.blocks)
        for (const auto& in : b.insts)
          if (in.op == Opcode::Call) called.insert(in.callee);
    if (p.harness)
      for (const auto& t : p.harness->threads) called.insert(t.function);
    for (const auto& f : p.functions) {
      if (called.count(f.name)) continue;
      for (const auto& prm : f.params)
        if (prm.type.kind == TypeKind::Ptr)
          c.pm_refs.insert({f.name, prm.name});
    }
  }

  // Thread arguments bind roots to the spawned function's parameters.
  if (p.harness) {
    for (const auto& t : p.harness->threads) {
      const Function* f = p.find_function(t.function);
      if (!f) continue;
      for (size_t ai = 0; ai < t.args.size() && ai < f->params.size(); ai++)
        if (!t.args[ai].is_const && c.pm_roots.count(t.args[ai].ref))
          c.pm_refs.insert({f->name, f->params[ai].name});
    }
  }

  bool changed = true;
  while (changed) {
    changed = false;
    auto add_ref = [&](const std::string& fn, const std::string& ref) {
      if (!ref.empty() && c.pm_refs.insert({fn, ref}).second) changed = true;
    };
    auto add_field = [&](const std::string& sn, int off) {
      if (!sn.empty() && off >= 0 && c.pm_fields.insert({sn, off}).second)
        changed = true;
    };
    for (size_t fi = 0; fi < p.functions.size(); fi++) {
      const Function& f = p.functions[fi];
      for (const auto& b : f.blocks) {
        for (const auto& in : b.insts) {
          switch (in.op) {
            case Opcode::Pmalloc:
              add_ref(f.name, in.dst);
              break;
            case Opcode::Malloc:
              if (allocators.count("malloc")) add_ref(f.name, in.dst);
              break;
            case Opcode::Assign:
            case Opcode::PtrAdd:
              if (c.is_pm_ref(f.name, in.base)) add_ref(f.name, in.dst);
              break;
            case Opcode::AddrOf:
              if (c.is_pm_ref(f.name, in.base)) add_ref(f.name, in.dst);
              break;
            case Opcode::Load:
            case Opcode::LoadAtomic:
            case Opcode::Rmw:
              if (loads_pm_ptr(fi, f.name, in) ||
                  (c.is_pm_ref(f.name, in.base) &&
                   c.is_pm_field(struct_of(fi, in.base), field_offset(fi, in))))
                add_ref(f.name, in.dst);
              break;
            case Opcode::Store:
            case Opcode::StoreAtomic:
            case Opcode::StoreRelease:
              if (!in.args[0].is_const && c.is_pm_ref(f.name, in.args[0].ref))
                add_field(struct_of(fi, in.base), field_offset(fi, in));
              break;
            case Opcode::Call: {
              if (allocators.count(in.callee)) add_ref(f.name, in.dst);
              const Function* callee = p.find_function(in.callee);
              if (!callee) break;
              for (size_t ai = 0;
                   ai < in.args.size() && ai < callee->params.size(); ai++) {
                if (!in.args[ai].is_const &&
                    c.is_pm_ref(f.name, in.args[ai].ref))
                  add_ref(callee->name, callee->params[ai].name);
              }
              if (!in.dst.empty()) {
                // Return flow: any PM ref returned by the callee.
                for (const auto& cb : callee->blocks) {
                  const Instruction& t = cb.insts.back();
                  if (t.op == Opcode::Ret && !t.args.empty() &&
                      !t.args[0].is_const &&
                      c.is_pm_ref(callee->name, t.args[0].ref))
                    add_ref(f.name, in.dst);
                }
              }
              break;
            }
            default:
              break;
          }
        }
      }
    }
  }
  return result;
}

}  // namespace pmfence
