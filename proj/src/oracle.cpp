#include "pmfence/oracle.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <set>
#include <stdexcept>

#include "pmfence/parser.hpp"
#include "pmfence/printer.hpp"

namespace pmfence {

namespace {

constexpr int kCounterSlots = 1024;

struct ObjInfo {
  std::string label;
  std::string struct_name;
  int size = 0;
  bool pm = true;
};

struct Frame {
  const Function* fn = nullptr;
  int block = 0;
  int ip = 0;
  std::map<std::string, std::int64_t> locals;
  std::string ret_dst;  // filled in by a pending call from this frame
};

struct ThreadState {
  std::vector<Frame> stack;
  bool done = false;
};

using VC = std::vector<std::int64_t>;

void vc_join(VC& a, const VC& b) {
  for (size_t i = 0; i < a.size(); i++) a[i] = std::max(a[i], b[i]);
}

struct Access {
  int tid = 0;
  std::int64_t clock = 0;
  bool write = false;
  bool atomic = false;
};

struct LineLog {
  std::vector<std::pair<std::int64_t, std::int64_t>> stores;  // (addr, value)
  int min_persist = 0;  // stores guaranteed persisted at any later crash
};

struct Exec {
  std::map<std::int64_t, std::int64_t> mem;
  std::map<std::int64_t, LineLog> lines;
  std::vector<std::map<std::int64_t, int>> pending;  // per thread: line -> count
  std::array<int, kCounterSlots> counters{};
  std::map<std::int64_t, ObjInfo> registry;
  std::vector<int> alloc_count;
  std::vector<ThreadState> threads;
  std::vector<VC> vcs;
  std::map<std::string, std::pair<int, VC>> mutexes;  // holder (-1 free), VC
  std::map<std::int64_t, VC> atomic_vc;
  std::map<std::int64_t, std::vector<Access>> accesses;
  std::vector<std::string> trace;
  int steps = 0;
  bool persist_dirty = true;  // force a check at the initial crash point
  bool race = false;
};

class Oracle {
 public:
  Oracle(const Program& p, const OracleOptions& opts) : p_(p), opts_(opts) {
    line_ = p.line_size;
    for (const auto& f : p.functions) envs_[f.name] = infer_types(p, f);
    layout_roots();
    if (p.harness) {
      for (const auto& t : p.harness->threads) specs_.push_back(t);
      bound_ = opts.step_bound > 0
                   ? opts.step_bound
                   : (p.harness->bound > 0 ? p.harness->bound : 1000);
    } else {
      const Function* m = p.find_function("main");
      if (!m) throw std::invalid_argument("no harness and no main function");
      specs_.push_back(ThreadSpec{"main", {}});
      bound_ = opts.step_bound > 0 ? opts.step_bound : 1000;
    }
  }

  OracleResult run() {
    phase_ = 1;
    Exec e0 = initial_exec();
    record_strict(e0);
    dfs(e0);
    res_.strict_states = strict_.size();
    if (res_.racy || !res_.robust) return res_;
    std::size_t full_traces = res_.traces;
    res_.traces = 0;
    phase_ = 2;
    Exec e1 = initial_exec();
    check_crash_point(e1);
    dfs(e1);
    res_.traces = full_traces;  // phase 1 always enumerates fully
    return res_;
  }

 private:
  const Program& p_;
  OracleOptions opts_;
  int line_ = 64;
  int bound_ = 1000;
  std::vector<ThreadSpec> specs_;
  std::map<std::string, TypeEnv> envs_;
  std::map<std::string, std::int64_t> root_addr_;
  std::map<std::int64_t, ObjInfo> static_registry_;

  int phase_ = 1;
  bool stop_ = false;
  std::set<std::string> strict_;
  std::set<std::string> ok_images_;
  OracleResult res_;

  static std::int64_t round_up(std::int64_t v, std::int64_t a) {
    return (v + a - 1) / a * a;
  }

  void layout_roots() {
    std::int64_t base = 0x1000;
    for (const auto& r : p_.roots) {
      const StructDecl* s = p_.find_struct(r.struct_name);
      root_addr_[r.name] = base;
      static_registry_[base] = {r.name, r.struct_name, s ? s->size : 8, true};
      base += round_up(std::max(s ? s->size : 8, 1), line_);
    }
  }

  Exec initial_exec() {
    Exec e;
    size_t n = specs_.size();
    e.pending.resize(n);
    e.alloc_count.assign(n, 0);
    e.vcs.assign(n, VC(n, 0));
    e.registry = static_registry_;
    for (size_t t = 0; t < n; t++) {
      const Function* f = p_.find_function(specs_[t].function);
      if (!f) throw std::invalid_argument("unknown thread function '" +
                                          specs_[t].function + "'");
      Frame fr;
      fr.fn = f;
      for (size_t i = 0; i < f->params.size() && i < specs_[t].args.size();
           i++) {
        const Operand& a = specs_[t].args[i];
        fr.locals[f->params[i].name] =
            a.is_const ? a.value : root_value(a.ref);
      }
      ThreadState ts;
      ts.stack.push_back(std::move(fr));
      e.threads.push_back(std::move(ts));
    }
    return e;
  }

  std::int64_t root_value(const std::string& name) const {
    auto it = root_addr_.find(name);
    if (it == root_addr_.end())
      throw std::invalid_argument("unknown root '" + name + "'");
    return it->second;
  }

  // --- static typing helpers -------------------------------------------

  const Type* type_of(const Function& f, const std::string& ref) {
    const TypeEnv& env = envs_[f.name];
    if (const Type* t = env.lookup(ref)) return t;
    return nullptr;
  }

  const Field* field_decl(const Function& f, const Instruction& in) {
    std::string sn;
    if (const Type* t = type_of(f, in.base); t && t->kind == TypeKind::Ptr)
      sn = t->struct_name;
    if (sn.empty())
      if (const RootDecl* r = p_.find_root(in.base)) sn = r->struct_name;
    const StructDecl* s = p_.find_struct(sn);
    return s ? s->find_field(in.field) : nullptr;
  }

  // --- value helpers ----------------------------------------------------

  std::int64_t ref_value(const Exec& e, int tid, const std::string& ref) {
    const Frame& fr = e.threads[tid].stack.back();
    auto it = fr.locals.find(ref);
    if (it != fr.locals.end()) return it->second;
    auto rt = root_addr_.find(ref);
    if (rt != root_addr_.end()) return rt->second;
    return 0;  // use of an undefined local reads as zero
  }

  std::int64_t operand_value(const Exec& e, int tid, const Operand& o) {
    return o.is_const ? o.value : ref_value(e, tid, o.ref);
  }

  std::int64_t line_of(std::int64_t addr) const { return addr / line_; }

  // --- persistency bookkeeping -----------------------------------------

  void do_store(Exec& e, std::int64_t addr, std::int64_t v) {
    e.mem[addr] = v;
    e.lines[line_of(addr)].stores.push_back({addr, v});
    e.persist_dirty = true;
    if (phase_ == 1) record_strict(e);
  }

  void do_flush_line(Exec& e, std::int64_t l) {
    LineLog& log = e.lines[l];
    log.min_persist = static_cast<int>(log.stores.size());
    e.persist_dirty = true;
  }

  void do_flushopt_line(Exec& e, int tid, std::int64_t l) {
    int cnt = static_cast<int>(e.lines[l].stores.size());
    int& slot = e.pending[tid][l];
    slot = std::max(slot, cnt);
  }

  void do_commit(Exec& e, int tid) {
    for (const auto& [l, c] : e.pending[tid]) {
      LineLog& log = e.lines[l];
      if (c > log.min_persist) {
        log.min_persist = c;
        e.persist_dirty = true;
      }
    }
    e.pending[tid].clear();
  }

  // --- race detection ---------------------------------------------------

  void note_access(Exec& e, int tid, std::int64_t addr, bool write,
                   bool atomic) {
    auto& hist = e.accesses[addr];
    for (const auto& a : hist) {
      if (a.tid == tid) continue;
      if (!write && !a.write) continue;
      if (atomic && a.atomic) continue;
      if (e.vcs[tid][a.tid] < a.clock) {
        e.race = true;
        return;
      }
    }
    for (auto& a : hist)
      if (a.tid == tid && a.write == write && a.atomic == atomic) {
        a.clock = e.vcs[tid][tid];
        return;
      }
    hist.push_back({tid, e.vcs[tid][tid], write, atomic});
  }

  // --- reachability-restricted state -----------------------------------

  using MemFn = std::int64_t (*)(const std::map<std::int64_t, std::int64_t>&,
                                 std::int64_t);

  static std::int64_t mem_get(const std::map<std::int64_t, std::int64_t>& m,
                              std::int64_t a) {
    auto it = m.find(a);
    return it == m.end() ? 0 : it->second;
  }

  PmState restrict_state(const Exec& e,
                         const std::map<std::int64_t, std::int64_t>& mem) {
    PmState out;
    std::set<std::int64_t> visited;
    std::vector<std::int64_t> work;
    for (const auto& [name, addr] : root_addr_) {
      (void)name;
      work.push_back(addr);
    }
    while (!work.empty()) {
      std::int64_t base = work.back();
      work.pop_back();
      if (!visited.insert(base).second) continue;
      auto rit = e.registry.find(base);
      if (rit == e.registry.end() || !rit->second.pm) continue;
      const ObjInfo& oi = rit->second;
      const StructDecl* s = p_.find_struct(oi.struct_name);
      if (!s) continue;
      for (const auto& fld : s->fields) {
        if (fld.type.kind == TypeKind::Array) {
          for (int i = 0; i < fld.type.array_len; i++)
            out[oi.label + "." + fld.name + "[" + std::to_string(i) + "]"] =
                mem_get(mem, base + fld.offset + 8 * i);
          continue;
        }
        std::int64_t v = mem_get(mem, base + fld.offset);
        out[oi.label + "." + fld.name] = v;
        if (fld.type.kind == TypeKind::Ptr && v != 0) work.push_back(v);
      }
    }
    return out;
  }

  static std::string serialize(const PmState& s) {
    std::string out;
    for (const auto& [k, v] : s) out += k + "=" + std::to_string(v) + ";";
    return out;
  }

  void record_strict(const Exec& e) {
    strict_.insert(serialize(restrict_state(e, e.mem)));
  }

  // --- crash-image enumeration -----------------------------------------

  void check_crash_point(Exec& e) {
    if (!e.persist_dirty || stop_) return;
    e.persist_dirty = false;

    std::vector<std::int64_t> ls;
    std::vector<int> lo, hi;
    std::size_t combos = 1;
    for (const auto& [l, log] : e.lines) {
      if (log.min_persist == static_cast<int>(log.stores.size())) continue;
      ls.push_back(l);
      lo.push_back(log.min_persist);
      hi.push_back(static_cast<int>(log.stores.size()));
      combos *= static_cast<std::size_t>(hi.back() - lo.back() + 1);
      if (combos > opts_.max_images_per_point)
        throw std::runtime_error("crash image budget exceeded");
    }

    std::vector<int> cur(lo);
    while (true) {
      std::map<std::int64_t, std::int64_t> img;
      for (const auto& [l, log] : e.lines) {
        int c = log.min_persist;
        for (size_t i = 0; i < ls.size(); i++)
          if (ls[i] == l) c = cur[i];
        for (int k = 0; k < c; k++) img[log.stores[k].first] = log.stores[k].second;
      }
      res_.images_checked++;
      std::string key = serialize(restrict_state(e, img));
      if (!ok_images_.count(key)) {
        if (strict_.count(key)) {
          ok_images_.insert(key);
        } else {
          res_.robust = false;
          if (opts_.want_counterexample && !res_.counterexample) {
            Counterexample cx;
            cx.image = restrict_state(e, img);
            cx.trace = e.trace;
            res_.counterexample = std::move(cx);
          }
          stop_ = true;
          return;
        }
      }
      // next combination
      size_t i = 0;
      for (; i < cur.size(); i++) {
        if (cur[i] < hi[i]) {
          cur[i]++;
          break;
        }
        cur[i] = lo[i];
      }
      if (i == cur.size()) break;
      if (cur.empty()) break;
    }
  }

  void check_durability(const Exec& e) {
    std::map<std::int64_t, std::int64_t> img;
    for (const auto& [l, log] : e.lines)
      for (int k = 0; k < log.min_persist; k++)
        img[log.stores[k].first] = log.stores[k].second;
    if (serialize(restrict_state(e, img)) !=
        serialize(restrict_state(e, e.mem)))
      res_.durable = false;
  }

  // --- interleaving search ---------------------------------------------

  bool runnable(const Exec& e, int tid) const {
    const ThreadState& ts = e.threads[tid];
    if (ts.done) return false;
    const Frame& fr = ts.stack.back();
    const Instruction& in = fr.fn->blocks[fr.block].insts[fr.ip];
    if (in.op == Opcode::Lock) {
      auto it = e.mutexes.find(in.callee);
      if (it != e.mutexes.end() && it->second.first != -1 &&
          it->second.first != tid)
        return false;
    }
    return true;
  }

  void dfs(Exec& e) {
    if (stop_) return;
    std::vector<int> ready;
    for (size_t t = 0; t < e.threads.size(); t++)
      if (runnable(e, static_cast<int>(t))) ready.push_back(static_cast<int>(t));

    bool all_done = true;
    for (const auto& t : e.threads) all_done = all_done && t.done;
    if (ready.empty() || e.steps >= bound_) {
      if (!all_done && e.steps >= bound_) res_.truncated = true;
      res_.traces++;
      if (res_.traces > opts_.max_traces)
        throw std::runtime_error("interleaving budget exceeded");
      if (phase_ == 1 && all_done) check_durability(e);
      return;
    }

    for (size_t i = 0; i < ready.size(); i++) {
      if (stop_) return;
      if (i + 1 == ready.size()) {
        step(e, ready[i]);
        if (e.race) {
          res_.racy = true;
          stop_ = true;
          return;
        }
        if (phase_ == 2) check_crash_point(e);
        dfs(e);
        return;
      }
      Exec copy = e;
      step(copy, ready[i]);
      if (copy.race) {
        res_.racy = true;
        stop_ = true;
        return;
      }
      if (phase_ == 2) check_crash_point(copy);
      dfs(copy);
    }
  }

  // --- one instruction --------------------------------------------------

  void step(Exec& e, int tid) {
    ThreadState& ts = e.threads[tid];
    Frame& fr = ts.stack.back();
    const Function& f = *fr.fn;
    const Instruction in = f.blocks[fr.block].insts[fr.ip];
    e.steps++;
    e.vcs[tid][tid]++;
    e.trace.push_back("t" + std::to_string(tid) + ": " + emit_instruction(in));

    auto field_addr = [&]() -> std::int64_t {
      const Field* fl = field_decl(f, in);
      return ref_value(e, tid, in.base) + (fl ? fl->offset : 0);
    };
    auto goto_block = [&](const std::string& label) {
      for (size_t b = 0; b < f.blocks.size(); b++)
        if (f.blocks[b].label == label) {
          fr.block = static_cast<int>(b);
          fr.ip = 0;
          return;
        }
      throw std::runtime_error("missing block '" + label + "'");
    };

    if (!in.is_terminator()) fr.ip++;

    switch (in.op) {
      case Opcode::Assign:
        fr.locals[in.dst] = in.base.empty()
                                ? operand_value(e, tid, in.args[0])
                                : ref_value(e, tid, in.base);
        break;
      case Opcode::Load:
      case Opcode::LoadAtomic: {
        std::int64_t a = field_addr();
        bool atomic = in.op == Opcode::LoadAtomic;
        note_access(e, tid, a, false, atomic);
        if (atomic) {
          auto it = e.atomic_vc.find(a);
          if (it != e.atomic_vc.end()) vc_join(e.vcs[tid], it->second);
        }
        fr.locals[in.dst] = mem_get(e.mem, a);
        break;
      }
      case Opcode::Store:
      case Opcode::StoreAtomic:
      case Opcode::StoreRelease: {
        std::int64_t a = field_addr();
        bool atomic = in.op != Opcode::Store;
        note_access(e, tid, a, true, atomic);
        do_store(e, a, operand_value(e, tid, in.args[0]));
        if (atomic) {
          auto it = e.atomic_vc.find(a);
          VC nv = e.vcs[tid];
          if (it != e.atomic_vc.end()) vc_join(nv, it->second);
          e.atomic_vc[a] = std::move(nv);
        }
        break;
      }
      case Opcode::Rmw: {
        std::int64_t a = field_addr();
        do_commit(e, tid);  // locked operation orders pending write-backs
        note_access(e, tid, a, true, true);
        auto it = e.atomic_vc.find(a);
        if (it != e.atomic_vc.end()) vc_join(e.vcs[tid], it->second);
        fr.locals[in.dst] = mem_get(e.mem, a);
        do_store(e, a, operand_value(e, tid, in.args[0]));
        VC nv = e.vcs[tid];
        e.atomic_vc[a] = std::move(nv);
        break;
      }
      case Opcode::Cas: {
        std::int64_t a = field_addr();
        do_commit(e, tid);
        note_access(e, tid, a, true, true);
        auto it = e.atomic_vc.find(a);
        if (it != e.atomic_vc.end()) vc_join(e.vcs[tid], it->second);
        std::int64_t cur = mem_get(e.mem, a);
        if (cur == operand_value(e, tid, in.args[0])) {
          do_store(e, a, operand_value(e, tid, in.args[1]));
          fr.locals[in.dst] = 1;
        } else {
          fr.locals[in.dst] = 0;
        }
        VC nv = e.vcs[tid];
        e.atomic_vc[a] = std::move(nv);
        break;
      }
      case Opcode::Pmalloc:
      case Opcode::Malloc: {
        bool pm = in.op == Opcode::Pmalloc;
        const StructDecl* s = p_.find_struct(in.field);
        int size = s ? s->size : 8;
        std::int64_t region =
            (pm ? 0x100000 : 0x40000000) * static_cast<std::int64_t>(tid + 1);
        // Allocation addresses depend only on the issuing thread's own
        // sequence, so states compare across interleavings.
        std::int64_t base = region;
        int idx = e.alloc_count[tid]++;
        std::int64_t stride =
            round_up(std::max(size, 8), p_.aligned ? line_ : 8);
        base += stride * idx;
        if (p_.aligned) base = round_up(base, line_);
        e.registry[base] = {"t" + std::to_string(tid) + "#" +
                                std::to_string(idx),
                            in.field, size, pm};
        fr.locals[in.dst] = base;
        break;
      }
      case Opcode::AddrOf: {
        fr.locals[in.dst] = field_addr();
        break;
      }
      case Opcode::LoadIndex: {
        std::int64_t a =
            ref_value(e, tid, in.base) + 8 * ref_value(e, tid, in.index_var);
        note_access(e, tid, a, false, false);
        fr.locals[in.dst] = mem_get(e.mem, a);
        break;
      }
      case Opcode::StoreIndex: {
        std::int64_t a =
            ref_value(e, tid, in.base) + 8 * ref_value(e, tid, in.index_var);
        note_access(e, tid, a, true, false);
        do_store(e, a, operand_value(e, tid, in.args[0]));
        break;
      }
      case Opcode::PtrAdd:
        fr.locals[in.dst] =
            ref_value(e, tid, in.base) + operand_value(e, tid, in.args[0]);
        break;
      case Opcode::Memcpy: {
        std::int64_t dst = ref_value(e, tid, in.base);
        std::int64_t src = operand_value(e, tid, in.args[0]);
        std::int64_t len = operand_value(e, tid, in.args[1]);
        for (std::int64_t off = 0; off + 8 <= len; off += 8) {
          note_access(e, tid, src + off, false, false);
          note_access(e, tid, dst + off, true, false);
          do_store(e, dst + off, mem_get(e.mem, src + off));
        }
        break;
      }
      case Opcode::Flush: {
        std::int64_t a = !in.index_var.empty()
                             ? ref_value(e, tid, in.base) +
                                   8 * ref_value(e, tid, in.index_var)
                             : field_addr();
        do_flush_line(e, line_of(a));
        break;
      }
      case Opcode::FlushOpt: {
        std::int64_t a = !in.index_var.empty()
                             ? ref_value(e, tid, in.base) +
                                   8 * ref_value(e, tid, in.index_var)
                             : field_addr();
        do_flushopt_line(e, tid, line_of(a));
        break;
      }
      case Opcode::FlushRange: {
        std::int64_t base = ref_value(e, tid, in.base);
        std::int64_t len = operand_value(e, tid, in.args[0]);
        if (len > 0)
          for (std::int64_t l = line_of(base); l <= line_of(base + len - 1);
               l++)
            do_flushopt_line(e, tid, l);
        break;
      }
      case Opcode::Fence:
        do_commit(e, tid);
        break;
      case Opcode::CntInc:
      case Opcode::CntDec: {
        std::int64_t a = field_addr();
        int slot = static_cast<int>(line_of(a) % kCounterSlots);
        e.counters[slot] += in.op == Opcode::CntInc ? 1 : -1;
        break;
      }
      case Opcode::HelpFlush: {
        std::int64_t a = field_addr();
        int slot = static_cast<int>(line_of(a) % kCounterSlots);
        if (e.counters[slot] != 0) {
          do_flush_line(e, line_of(a));
          do_commit(e, tid);
        }
        break;
      }
      case Opcode::Lock: {
        auto& m = e.mutexes[in.callee];
        if (m.second.empty()) {
          m.first = -1;
          m.second.assign(e.vcs.size(), 0);
        }
        assert(m.first == -1 || m.first == tid);
        m.first = tid;
        vc_join(e.vcs[tid], m.second);
        do_commit(e, tid);  // acquisition is a locked operation
        break;
      }
      case Opcode::Unlock: {
        auto& m = e.mutexes[in.callee];
        m.first = -1;
        m.second = e.vcs[tid];
        break;
      }
      case Opcode::Call: {
        const Function* cf = p_.find_function(in.callee);
        if (!cf) throw std::runtime_error("unknown function '" + in.callee + "'");
        Frame nf;
        nf.fn = cf;
        for (size_t i = 0; i < cf->params.size() && i < in.args.size(); i++)
          nf.locals[cf->params[i].name] = operand_value(e, tid, in.args[i]);
        fr.ret_dst = in.dst;
        ts.stack.push_back(std::move(nf));
        break;
      }
      case Opcode::Br:
        goto_block(in.label1);
        break;
      case Opcode::BrCond:
        goto_block(operand_value(e, tid, in.args[0]) != 0 ? in.label1
                                                          : in.label2);
        break;
      case Opcode::Ret: {
        std::int64_t rv =
            in.args.empty() ? 0 : operand_value(e, tid, in.args[0]);
        ts.stack.pop_back();
        if (ts.stack.empty()) {
          ts.done = true;
        } else {
          Frame& caller = ts.stack.back();
          if (!caller.ret_dst.empty()) {
            caller.locals[caller.ret_dst] = rv;
            caller.ret_dst.clear();
          }
        }
        break;
      }
    }
  }
};

}  // namespace

OracleResult check_robustness(const Program& p, const OracleOptions& opts) {
  Oracle o(p, opts);
  return o.run();
}

}  // namespace pmfence
