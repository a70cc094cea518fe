#include "pmfence/transform.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "pmfence/parser.hpp"
#include "pmfence/printer.hpp"

namespace pmfence {

namespace {

Instruction make_flushopt(const std::string& base, const std::string& field) {
  Instruction in;
  in.op = Opcode::FlushOpt;
  in.base = base;
  in.field = field;
  return in;
}

Instruction make_flushopt_idx(const std::string& base, const std::string& idx) {
  Instruction in;
  in.op = Opcode::FlushOpt;
  in.base = base;
  in.index_var = idx;
  return in;
}

Instruction make_flushrange(const std::string& base, std::int64_t len) {
  Instruction in;
  in.op = Opcode::FlushRange;
  in.base = base;
  in.args.push_back(Operand::constant(len));
  return in;
}

Instruction make_fence() {
  Instruction in;
  in.op = Opcode::Fence;
  return in;
}

Instruction make_simple(Opcode op, const std::string& base,
                        const std::string& field) {
  Instruction in;
  in.op = op;
  in.base = base;
  in.field = field;
  return in;
}

bool same_target(const Instruction& a, const Instruction& b) {
  return a.base == b.base && a.field == b.field && a.index_var == b.index_var;
}

class Transformer {
 public:
  Transformer(const Program& p, const std::set<std::string>& allocators,
              Mode mode)
      : allocators_(allocators), mode_(mode) {
    result_.program = p;
  }

  TransformResult run() {
    if (mode_ == Mode::Base) {
      apply_base();
      return std::move(result_);
    }
    if (mode_ == Mode::Flit) apply_flit();
    repair_loop();
    return std::move(result_);
  }

 private:
  std::set<std::string> allocators_;
  Mode mode_;
  TransformResult result_;
  int tmp_counter_ = 0;

  struct Action {
    int index = 0;
    bool before = false;
    bool replace = false;
    std::vector<Instruction> insts;
  };
  // (function, block) -> planned edits for this round.
  std::map<std::pair<std::string, std::string>, std::vector<Action>> actions_;
  std::set<std::string> dedup_;
  bool planned_any_ = false;

  Program& prog() { return result_.program; }

  Function* find_function(const std::string& name) {
    for (auto& f : prog().functions)
      if (f.name == name) return &f;
    return nullptr;
  }

  BasicBlock* find_block(const std::string& fn, const std::string& label) {
    Function* f = find_function(fn);
    if (!f) return nullptr;
    for (auto& b : f->blocks)
      if (b.label == label) return &b;
    return nullptr;
  }

  const Instruction* inst_at(const Site& s) {
    BasicBlock* b = find_block(s.function, s.block);
    if (!b || s.index < 0 || s.index >= static_cast<int>(b->insts.size()))
      return nullptr;
    return &b->insts[s.index];
  }

  void count(const Instruction& in) {
    switch (in.op) {
      case Opcode::FlushOpt: result_.stats.flushopts++; break;
      case Opcode::Flush: result_.stats.flushes++; break;
      case Opcode::Fence: result_.stats.fences++; break;
      case Opcode::FlushRange: result_.stats.flushranges++; break;
      case Opcode::CntInc:
      case Opcode::CntDec: result_.stats.counter_ops++; break;
      case Opcode::HelpFlush: result_.stats.helpflushes++; break;
      default: break;
    }
  }

  void plan(const Site& s, bool before, std::vector<Instruction> insts,
            bool replace = false) {
    std::string key = s.function + "|" + s.block + "|" +
                      std::to_string(s.index) + "|" + (before ? "b" : "a") +
                      "|" + (replace ? "r" : "i") + "|";
    for (const auto& in : insts) key += emit_instruction(in) + ";";
    if (!dedup_.insert(key).second) return;
    actions_[{s.function, s.block}].push_back(
        {s.index, before, replace, std::move(insts)});
    planned_any_ = true;
  }

  // True when the line of `target` is already written back between `idx`
  // (exclusive) and the next non-flush instruction.
  bool flushed_after(const BasicBlock& b, int idx, const Instruction& target) {
    for (size_t k = idx + 1; k < b.insts.size(); k++) {
      const Instruction& n = b.insts[k];
      if (n.op == Opcode::FlushOpt || n.op == Opcode::Flush) {
        if (same_target(n, target)) return true;
        continue;
      }
      if (n.op == Opcode::FlushRange && n.base == target.base) return true;
      if (n.op == Opcode::Fence) continue;
      return false;
    }
    return false;
  }

  // Stricter variant for the per-store discipline: the write-back must
  // also be committed by a fence before the next real instruction.
  bool flushed_and_fenced_after(const BasicBlock& b, int idx,
                                const Instruction& target) {
    bool seen_flush = false;
    for (size_t k = idx + 1; k < b.insts.size(); k++) {
      const Instruction& n = b.insts[k];
      if (n.op == Opcode::FlushOpt || n.op == Opcode::Flush) {
        if (same_target(n, target)) seen_flush = true;
        continue;
      }
      if (n.op == Opcode::FlushRange && n.base == target.base) {
        seen_flush = true;
        continue;
      }
      if (n.op == Opcode::Fence) {
        if (seen_flush) return true;
        continue;
      }
      return false;
    }
    return false;
  }

  bool fence_before(const BasicBlock& b, int idx) {
    return idx > 0 && b.insts[idx - 1].op == Opcode::Fence;
  }

  // Flush placement for one dirty site.
  void plan_site_flush(const Site& s, const InvolvedLocation& loc) {
    const Instruction* in = inst_at(s);
    BasicBlock* b = find_block(s.function, s.block);
    if (!in || !b) return;
    switch (in->op) {
      case Opcode::Store:
      case Opcode::StoreAtomic:
      case Opcode::StoreRelease:
      case Opcode::Rmw:
      case Opcode::Cas:
      case Opcode::Load:
      case Opcode::LoadAtomic: {
        Instruction fl = make_flushopt(in->base, in->field);
        if (!flushed_after(*b, s.index, fl)) plan(s, false, {fl});
        break;
      }
      case Opcode::StoreIndex: {
        Instruction fl = make_flushopt_idx(in->base, in->index_var);
        if (!flushed_after(*b, s.index, fl)) plan(s, false, {fl});
        break;
      }
      case Opcode::Memcpy: {
        std::int64_t len = in->args.size() > 1 && in->args[1].is_const
                               ? in->args[1].value
                               : 0;
        Instruction fl = make_flushrange(in->base, len);
        if (!flushed_after(*b, s.index, fl)) plan(s, false, {fl});
        break;
      }
      case Opcode::Call: {
        // The callee left this location non-clean; flush it here.
        std::string field = field_name(s.function, loc.loc);
        if (field.empty()) break;
        Instruction fl = make_flushopt(loc.loc.ref, field);
        if (!flushed_after(*b, s.index, fl)) plan(s, false, {fl});
        break;
      }
      default:
        break;
    }
  }

  std::string field_name(const std::string& fn, const AbstractLocation& loc) {
    const Function* f = prog().find_function(fn);
    if (!f) return "";
    TypeEnv env = infer_types(prog(), *f);
    const Type* t = env.lookup(loc.ref);
    std::string sn;
    if (t && t->kind == TypeKind::Ptr) sn = t->struct_name;
    if (sn.empty())
      if (const RootDecl* r = prog().find_root(loc.ref)) sn = r->struct_name;
    const StructDecl* sd = prog().find_struct(sn);
    if (!sd) return "";
    for (const auto& fld : sd->fields)
      if (fld.offset == loc.offset) return fld.name;
    return "";
  }

  void plan_fence_before(const Site& s, const std::vector<Instruction>& pre) {
    BasicBlock* b = find_block(s.function, s.block);
    if (!b) return;
    std::vector<Instruction> seq = pre;
    bool need_fence = !fence_before(*b, s.index);
    // For a block-leading site, commit at the end of each predecessor
    // instead: the same fence then also covers paths that leave the loop
    // without re-entering this block.
    if (need_fence && s.index == 0) {
      const Function* f = prog().find_function(s.function);
      std::vector<std::pair<std::string, int>> preds;
      if (f)
        for (const auto& pb : f->blocks) {
          if (pb.insts.empty()) continue;
          const Instruction& t = pb.insts.back();
          if ((t.op == Opcode::Br || t.op == Opcode::BrCond) &&
              (t.label1 == b->label || t.label2 == b->label))
            preds.push_back({pb.label, static_cast<int>(pb.insts.size()) - 1});
        }
      if (!preds.empty()) {
        for (const auto& [pl, pi] : preds) {
          BasicBlock* pb = find_block(s.function, pl);
          if (pb && !fence_before(*pb, pi))
            plan({s.function, pl, pi}, true, {make_fence()});
        }
        need_fence = false;
      }
    }
    if (need_fence) seq.push_back(make_fence());
    if (!seq.empty()) plan(s, true, seq);
  }

  // Rewrites a multi-field copy into an escaped object as a per-field
  // store sequence with interleaved write-backs, so no two lines of the
  // destination are ever non-clean at once.
  void plan_memcpy_lowering(const Site& s) {
    const Instruction* in = inst_at(s);
    if (!in || in->op != Opcode::Memcpy) return;
    const Function* f = prog().find_function(s.function);
    if (!f) return;
    TypeEnv env = infer_types(prog(), *f);
    const Type* t = env.lookup(in->base);
    const StructDecl* sd =
        t && t->kind == TypeKind::Ptr ? prog().find_struct(t->struct_name) : nullptr;
    if (!sd) return;
    std::int64_t len =
        in->args.size() > 1 && in->args[1].is_const ? in->args[1].value : -1;
    std::string src = in->args[0].ref;
    std::vector<Instruction> seq;
    for (const auto& fld : sd->fields) {
      if (len >= 0 && fld.offset >= len) continue;
      std::string tmp = "_mc" + std::to_string(tmp_counter_++);
      Instruction ld;
      ld.op = Opcode::Load;
      ld.dst = tmp;
      ld.base = src;
      ld.field = fld.name;
      Instruction st;
      st.op = Opcode::Store;
      st.base = in->base;
      st.field = fld.name;
      st.args.push_back(Operand::var(tmp));
      seq.push_back(ld);
      seq.push_back(st);
      seq.push_back(make_flushopt(in->base, fld.name));
      seq.push_back(make_fence());
    }
    if (seq.empty()) return;
    result_.stats.lowered_memcpys++;
    plan(s, false, std::move(seq), /*replace=*/true);
  }

  void plan_repairs(const Violation& v) {
    if (v.kind == ViolationKind::PointerArithmetic) {
      const Instruction* in = inst_at(v.site);
      BasicBlock* b = find_block(v.site.function, v.site.block);
      if (!in || !b) return;
      if (in->is_store() || in->op == Opcode::Rmw || in->op == Opcode::Cas) {
        Instruction fl = make_flushopt(in->base, in->field);
        if (!flushed_after(*b, v.site.index, fl))
          plan(v.site, false, {fl, make_fence()});
      } else {
        if (static_cast<size_t>(v.site.index) + 1 >= b->insts.size() ||
            b->insts[v.site.index + 1].op != Opcode::Fence)
          plan(v.site, false, {make_fence()});
      }
      return;
    }

    bool lower_memcpy = false;
    std::vector<Instruction> pre;  // flushes placed right before the fence
    for (const auto& loc : v.locations) {
      if (loc.dirty_sites.empty()) {
        // Context-provenance dirt (e.g. a parameter dirty at entry).
        std::string field = field_name(v.site.function, loc.loc);
        if (!field.empty()) pre.push_back(make_flushopt(loc.loc.ref, field));
        continue;
      }
      bool self_only = loc.dirty_sites == std::set<Site>{v.site};
      if (self_only && v.kind == ViolationKind::DoubleDirtyEscaped) {
        const Instruction* in = inst_at(v.site);
        if (in && in->op == Opcode::Memcpy) lower_memcpy = true;
        continue;
      }
      for (const auto& s : loc.dirty_sites) plan_site_flush(s, loc);
    }
    if (lower_memcpy) {
      plan_memcpy_lowering(v.site);
      if (!pre.empty()) plan(v.site, true, pre);
      return;
    }
    plan_fence_before(v.site, pre);
  }

  void apply_actions() {
    for (auto& [key, acts] : actions_) {
      BasicBlock* b = find_block(key.first, key.second);
      if (!b) continue;
      std::stable_sort(acts.begin(), acts.end(),
                       [](const Action& x, const Action& y) {
                         return x.index < y.index;
                       });
      std::vector<Instruction> out;
      size_t ai = 0;
      for (size_t i = 0; i < b->insts.size(); i++) {
        bool replaced = false;
        size_t start = ai;
        // Before-edits, then the instruction (or its replacement), then
        // after-edits, preserving plan order.
        for (size_t k = start; k < acts.size() &&
                               acts[k].index == static_cast<int>(i);
             k++)
          if (acts[k].before)
            for (const auto& in : acts[k].insts) {
              out.push_back(in);
              count(in);
            }
        for (size_t k = start; k < acts.size() &&
                               acts[k].index == static_cast<int>(i);
             k++)
          if (acts[k].replace) {
            for (const auto& in : acts[k].insts) {
              out.push_back(in);
              count(in);
            }
            replaced = true;
          }
        if (!replaced) out.push_back(b->insts[i]);
        for (size_t k = start; k < acts.size() &&
                               acts[k].index == static_cast<int>(i);
             k++)
          if (!acts[k].before && !acts[k].replace)
            for (const auto& in : acts[k].insts) {
              out.push_back(in);
              count(in);
            }
        while (ai < acts.size() && acts[ai].index == static_cast<int>(i)) ai++;
      }
      b->insts = std::move(out);
    }
    actions_.clear();
    dedup_.clear();
  }

  void repair_loop() {
    size_t total = 0;
    for (const auto& f : prog().functions)
      for (const auto& b : f.blocks) total += b.insts.size();
    int max_rounds = static_cast<int>(4 * total + 100);
    for (int round = 0; round < max_rounds; round++) {
      ClassifyResult cr = compute_pm_set(prog(), allocators_);
      if (!cr.ok()) throw std::runtime_error("bad allocator configuration");
      AnalysisResults res =
          run_interprocedural(prog(), cr.classification, mode_);
      if (res.violations.empty()) {
        result_.stats.repair_rounds = round;
        return;
      }
      // One violation per round: a single repair often resolves several
      // findings at once, and re-analysing in between avoids inserting
      // fences that an earlier repair already made redundant.
      planned_any_ = false;
      for (const auto& v : res.violations) {
        plan_repairs(v);
        if (planned_any_) break;
      }
      if (!planned_any_)
        throw std::runtime_error("transform made no progress");
      apply_actions();
    }
    throw std::runtime_error("transform did not converge");
  }

  void apply_base() {
    ClassifyResult cr = compute_pm_set(prog(), allocators_);
    if (!cr.ok()) throw std::runtime_error("bad allocator configuration");
    const PmClassification& cls = cr.classification;
    for (auto& f : prog().functions) {
      for (auto& b : f.blocks) {
        for (size_t i = 0; i < b.insts.size(); i++) {
          const Instruction& in = b.insts[i];
          if (in.relax || !cls.is_pm_ref(f.name, in.base)) continue;
          std::vector<Instruction> add;
          switch (in.op) {
            case Opcode::Store:
            case Opcode::StoreAtomic:
            case Opcode::StoreRelease:
            case Opcode::Rmw:
            case Opcode::Cas:
            case Opcode::LoadAtomic:
              add.push_back(make_flushopt(in.base, in.field));
              break;
            case Opcode::StoreIndex:
              add.push_back(make_flushopt_idx(in.base, in.index_var));
              break;
            case Opcode::Memcpy:
              add.push_back(make_flushrange(
                  in.base, in.args.size() > 1 && in.args[1].is_const
                               ? in.args[1].value
                               : 0));
              break;
            default:
              continue;
          }
          if (flushed_and_fenced_after(b, static_cast<int>(i), add[0]))
            continue;
          add.push_back(make_fence());
          for (const auto& n : add) count(n);
          b.insts.insert(b.insts.begin() + i + 1, add.begin(), add.end());
          i += add.size();
        }
      }
    }
  }

  void apply_flit() {
    ClassifyResult cr = compute_pm_set(prog(), allocators_);
    if (!cr.ok()) throw std::runtime_error("bad allocator configuration");
    const PmClassification& cls = cr.classification;
    for (auto& f : prog().functions) {
      for (auto& b : f.blocks) {
        for (size_t i = 0; i < b.insts.size(); i++) {
          const Instruction& in = b.insts[i];
          if (in.relax || !cls.is_pm_ref(f.name, in.base)) continue;
          bool atomic_store = in.op == Opcode::StoreAtomic ||
                              in.op == Opcode::StoreRelease ||
                              in.op == Opcode::Rmw || in.op == Opcode::Cas;
          if (atomic_store) {
            if (i > 0 && b.insts[i - 1].op == Opcode::CntInc &&
                same_target(b.insts[i - 1], in))
              continue;
            Instruction inc = make_simple(Opcode::CntInc, in.base, in.field);
            Instruction fl = make_flushopt(in.base, in.field);
            Instruction fe = make_fence();
            Instruction dec = make_simple(Opcode::CntDec, in.base, in.field);
            for (const auto& n : {inc, fl, fe, dec}) count(n);
            b.insts.insert(b.insts.begin() + i + 1, {fl, fe, dec});
            b.insts.insert(b.insts.begin() + i, inc);
            i += 4;
          } else if (in.op == Opcode::LoadAtomic) {
            if (i + 1 < b.insts.size() &&
                b.insts[i + 1].op == Opcode::HelpFlush &&
                same_target(b.insts[i + 1], in))
              continue;
            Instruction hf = make_simple(Opcode::HelpFlush, in.base, in.field);
            count(hf);
            b.insts.insert(b.insts.begin() + i + 1, hf);
            i += 1;
          }
        }
      }
    }
  }
};

}  // namespace

TransformResult transform_program(const Program& p,
                                  const std::set<std::string>& allocators,
                                  Mode mode) {
  Transformer t(p, allocators, mode);
  return t.run();
}

}  // namespace pmfence
