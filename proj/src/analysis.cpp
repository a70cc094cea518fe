#include "pmfence/analysis.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <stdexcept>

#include "pmfence/parser.hpp"

namespace pmfence {

const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::ExitUnflushed: return "exit-unflushed";
    case ViolationKind::DoubleDirtyEscaped: return "double-dirty-escaped";
    case ViolationKind::ReleaseWhileDirty: return "release-while-dirty";
    case ViolationKind::CallsiteDirtyEscape: return "callsite-dirty-escape";
    case ViolationKind::ArrayUnflushed: return "array-unflushed";
    case ViolationKind::IndexLost: return "index-lost";
    case ViolationKind::PointerArithmetic: return "pointer-arithmetic";
    case ViolationKind::Durability: return "durability";
  }
  return "?";
}

TransferContext::TransferContext(const Program& p, const PmClassification& cls,
                                 const Function& f, Mode mode)
    : prog_(p), cls_(cls), func_(f), mode_(mode) {
  for (const auto& r : p.roots)
    var_types_[r.name] = Type::make_ptr(r.struct_name);
  TypeEnv env = infer_types(p, f);
  for (const auto& [n, t] : env.vars)
    if (!var_types_.count(n)) var_types_[n] = t;

  // Refs derived from pointer arithmetic, closed under assignment.
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& b : f.blocks)
      for (const auto& in : b.insts) {
        bool derived = false;
        if (in.op == Opcode::PtrAdd)
          derived = true;
        else if (in.op == Opcode::Assign && ptr_arith_.count(in.base))
          derived = true;
        if (derived && !in.dst.empty() && !ptr_arith_.count(in.dst)) {
          ptr_arith_.insert(in.dst);
          changed = true;
        }
      }
  }
}

bool TransferContext::is_pm_ref(const std::string& ref) const {
  return cls_.is_pm_ref(func_.name, ref);
}

bool TransferContext::ptr_arith_derived(const std::string& ref) const {
  return ptr_arith_.count(ref) > 0;
}

const std::string& TransferContext::struct_of(const std::string& ref) const {
  static const std::string empty;
  auto it = var_types_.find(ref);
  if (it == var_types_.end() || it->second.kind != TypeKind::Ptr) return empty;
  return it->second.struct_name;
}

std::vector<int> TransferContext::field_offsets(const std::string& struct_name) const {
  std::vector<int> offs;
  if (const StructDecl* s = prog_.find_struct(struct_name))
    for (const auto& fld : s->fields) offs.push_back(fld.offset);
  return offs;
}

int TransferContext::offset_of(const Instruction& inst) const {
  const std::string& sn = struct_of(inst.base);
  if (const StructDecl* s = prog_.find_struct(sn))
    if (const Field* fld = s->find_field(inst.field)) return fld->offset;
  return 0;
}

std::string TransferContext::class_rep(const AnalysisState& s,
                                       const std::string& ref) const {
  auto cl = s.alias_set(ref);
  return cl.empty() ? ref : *cl.begin();
}

std::vector<TransferContext::Unit> TransferContext::escaped_nonclean_units(
    const AnalysisState& s) const {
  std::map<std::tuple<std::string, int, bool, std::string>, Unit> acc;
  auto class_escaped = [&](const std::string& ref) {
    for (const auto& m : s.alias_set(ref))
      if (s.escape_of(m) == EscapeState::Escaped) return true;
    return false;
  };
  for (const auto& [loc, e] : s.pmap) {
    if (e.state == PersistState::Clean) continue;
    if (!class_escaped(loc.ref)) continue;
    Unit u;
    u.rep = class_rep(s, loc.ref);
    u.offset = loc.offset;
    u.involved.loc = {u.rep, loc.offset};
    u.involved.state = e.state;
    u.involved.dirty_sites = e.dirty_sites;
    u.involved.load_induced = e.load_induced;
    auto key = std::make_tuple(u.rep, u.offset, false, std::string());
    auto it = acc.find(key);
    if (it == acc.end()) {
      acc.emplace(key, std::move(u));
    } else {
      Unit& o = it->second;
      o.involved.state = meet(o.involved.state, e.state);
      o.involved.dirty_sites.insert(e.dirty_sites.begin(), e.dirty_sites.end());
      o.involved.load_induced = o.involved.load_induced && e.load_induced;
    }
  }
  // Array locations are conservatively treated as escaped.
  for (const auto& [key, e] : s.apmap) {
    if (e.state == PersistState::Clean) continue;
    Unit u;
    u.rep = key.first;
    u.offset = 0;
    u.is_array = true;
    u.index_var = key.second;
    u.involved.loc = {key.first, 0};
    u.involved.state = e.state;
    u.involved.dirty_sites = e.dirty_sites;
    u.involved.load_induced = e.load_induced;
    u.involved.is_array = true;
    u.involved.index_var = key.second;
    acc.emplace(std::make_tuple(u.rep, 0, true, u.index_var), std::move(u));
  }
  std::vector<Unit> out;
  for (auto& [k, u] : acc) out.push_back(std::move(u));
  return out;
}

void TransferContext::record_events(AnalysisState& s) const {
  auto units = escaped_nonclean_units(s);
  if (units.empty()) return;
  s.dirty_escape_event = true;
  for (const auto& u : units) {
    if (u.is_array) {
      s.event_refs.insert(u.rep);
    } else {
      for (const auto& m : s.alias_set(u.rep)) s.event_refs.insert(m);
    }
  }
}

void TransferContext::redefine(const std::string& ref, const Site&,
                               AnalysisState& s) const {
  for (const auto& m : s.alias_set(ref)) {
    if (m == ref) continue;
    auto it = s.aliases.find(m);
    if (it != s.aliases.end()) it->second.erase(ref);
  }
  s.aliases.erase(ref);
  s.emap.erase(ref);
  for (auto it = s.pmap.begin(); it != s.pmap.end();)
    it = it->first.ref == ref ? s.pmap.erase(it) : std::next(it);
  for (auto it = s.apmap.begin(); it != s.apmap.end();)
    it = (it->first.first == ref || it->first.second == ref) ? s.apmap.erase(it)
                                                            : std::next(it);
}

namespace {

void join_classes(AnalysisState& s, const std::string& a, const std::string& b) {
  auto u = s.alias_set(a);
  auto bs = s.alias_set(b);
  u.insert(bs.begin(), bs.end());
  for (const auto& r : u) s.aliases[r] = u;
}

void escape_class(AnalysisState& s, const std::string& ref) {
  for (const auto& m : s.alias_set(ref)) s.set_escape(m, EscapeState::Escaped);
}

void fence_all(AnalysisState& s) {
  for (auto it = s.pmap.begin(); it != s.pmap.end();)
    it = it->second.state == PersistState::Clwb ? s.pmap.erase(it) : std::next(it);
  for (auto it = s.apmap.begin(); it != s.apmap.end();)
    it = it->second.state == PersistState::Clwb ? s.apmap.erase(it) : std::next(it);
}

}  // namespace

void TransferContext::apply(const Instruction& inst, const Site& site,
                            AnalysisState& s) const {
  auto pm = [&](const std::string& r) { return is_pm_ref(r); };

  switch (inst.op) {
    case Opcode::Assign: {
      bool src_pm = pm(inst.base) && inst.base != inst.dst;
      EscapeState e = s.escape_of(inst.base);
      redefine(inst.dst, site, s);
      if (src_pm) {
        join_classes(s, inst.dst, inst.base);
        s.set_escape(inst.dst, e);
      }
      break;
    }
    case Opcode::Pmalloc:
    case Opcode::Malloc:
      redefine(inst.dst, site, s);
      break;
    case Opcode::Load:
    case Opcode::LoadAtomic: {
      redefine(inst.dst, site, s);
      if (pm(inst.dst)) s.set_escape(inst.dst, EscapeState::Escaped);
      if (inst.op == Opcode::LoadAtomic && pm(inst.base) && !inst.relax &&
          mode_ != Mode::Flit)
        s.pmap[{inst.base, offset_of(inst)}] =
            PersistEntry{PersistState::Dirty, {site}, true};
      break;
    }
    case Opcode::Store:
    case Opcode::StoreAtomic:
    case Opcode::StoreRelease: {
      if (pm(inst.base) && !inst.args.empty() && !inst.args[0].is_const &&
          pm(inst.args[0].ref))
        escape_class(s, inst.args[0].ref);
      if (pm(inst.base) && !inst.relax)
        s.pmap[{inst.base, offset_of(inst)}] =
            PersistEntry{PersistState::Dirty, {site}, false};
      break;
    }
    case Opcode::Rmw:
    case Opcode::Cas: {
      if (pm(inst.base)) {
        fence_all(s);
        const Operand& v = inst.op == Opcode::Rmw ? inst.args[0] : inst.args[1];
        if (!v.is_const && pm(v.ref)) escape_class(s, v.ref);
        s.pmap[{inst.base, offset_of(inst)}] =
            PersistEntry{PersistState::Dirty, {site}, false};
      }
      if (!inst.dst.empty()) {
        redefine(inst.dst, site, s);
        if (inst.op == Opcode::Rmw && pm(inst.dst))
          s.set_escape(inst.dst, EscapeState::Escaped);
      }
      break;
    }
    case Opcode::AddrOf:
    case Opcode::PtrAdd: {
      bool src_pm = pm(inst.base) && inst.base != inst.dst;
      EscapeState e = s.escape_of(inst.base);
      redefine(inst.dst, site, s);
      if (src_pm) {
        join_classes(s, inst.dst, inst.base);
        s.set_escape(inst.dst, e);
      }
      break;
    }
    case Opcode::LoadIndex:
      redefine(inst.dst, site, s);
      break;
    case Opcode::StoreIndex: {
      if (!inst.args.empty() && !inst.args[0].is_const && pm(inst.args[0].ref))
        escape_class(s, inst.args[0].ref);
      if (pm(inst.base))
        s.apmap[{inst.base, inst.index_var}] =
            PersistEntry{PersistState::Dirty, {site}, false};
      break;
    }
    case Opcode::Memcpy: {
      if (pm(inst.base)) {
        std::int64_t len =
            (inst.args.size() > 1 && inst.args[1].is_const) ? inst.args[1].value
                                                            : -1;
        for (int off : field_offsets(struct_of(inst.base)))
          if (len < 0 || off < len)
            s.pmap[{inst.base, off}] =
                PersistEntry{PersistState::Dirty, {site}, false};
      }
      break;
    }
    // Write-backs are strong updates, so they apply to the named reference
    // only: alias classes are unioned at merge points (may-alias) and
    // cleaning through a may-alias could hide a genuinely dirty line.
    case Opcode::Flush: {
      if (!inst.index_var.empty())
        s.apmap.erase({inst.base, inst.index_var});
      else
        s.pmap.erase({inst.base, offset_of(inst)});
      break;
    }
    case Opcode::FlushOpt: {
      auto lower = [](PersistEntry& e) {
        if (e.state == PersistState::Dirty) e.state = PersistState::Clwb;
      };
      if (!inst.index_var.empty()) {
        auto it = s.apmap.find({inst.base, inst.index_var});
        if (it != s.apmap.end()) lower(it->second);
      } else {
        auto it = s.pmap.find({inst.base, offset_of(inst)});
        if (it != s.pmap.end()) lower(it->second);
      }
      break;
    }
    case Opcode::FlushRange: {
      std::int64_t len =
          (!inst.args.empty() && inst.args[0].is_const) ? inst.args[0].value : -1;
      for (auto& [loc, e] : s.pmap)
        if (loc.ref == inst.base && (len < 0 || loc.offset < len) &&
            e.state == PersistState::Dirty)
          e.state = PersistState::Clwb;
      for (auto& [key, e] : s.apmap)
        if (key.first == inst.base && e.state == PersistState::Dirty)
          e.state = PersistState::Clwb;
      break;
    }
    case Opcode::Fence:
      fence_all(s);
      break;
    case Opcode::Lock:
    case Opcode::Unlock:
    case Opcode::Br:
    case Opcode::BrCond:
    case Opcode::Ret:
    case Opcode::CntInc:
    case Opcode::CntDec:
    case Opcode::HelpFlush:
      break;
    case Opcode::Call:
      assert(false && "calls are resolved by the analyzer");
      break;
  }
  record_events(s);
}

CallingContext entry_context(const Function& f, const PmClassification& cls) {
  CallingContext ctx;
  for (const auto& p : f.params) {
    if (p.type.kind == TypeKind::Ptr && cls.is_pm_ref(f.name, p.name))
      ctx.push_back({EscapeState::Escaped, PersistState::Clean, {}});
    else
      ctx.push_back({});
  }
  return ctx;
}

// ---------------------------------------------------------------------------

class FunctionAnalyzer {
 public:
  FunctionAnalyzer(const Program& p, const PmClassification& cls,
                   const Function& f, const CallingContext& ctx,
                   SummaryTable& table, Mode mode, bool entry_function,
                   std::vector<SummaryKey>* pushes)
      : p_(p),
        cls_(cls),
        f_(f),
        ctx_(ctx),
        table_(table),
        mode_(mode),
        entry_(entry_function),
        pushes_(pushes),
        tc_(p, cls, f, mode),
        cfg_(build_cfg(f)) {
    assert(ctx_.size() == f_.params.size());
  }

  FunctionAnalysis run() {
    fixpoint();
    collect();
    build_summary();
    return std::move(result_);
  }

 private:
  const Program& p_;
  const PmClassification& cls_;
  const Function& f_;
  CallingContext ctx_;
  SummaryTable& table_;
  Mode mode_;
  bool entry_;
  std::vector<SummaryKey>* pushes_;
  TransferContext tc_;
  CFG cfg_;

  FunctionAnalysis result_;
  std::vector<AnalysisState> out_;
  std::vector<bool> has_out_;
  bool has_exit_ = false;
  bool callee_release_ = false;
  std::set<std::string> ret_refs_;

  AnalysisState entry_state() const {
    AnalysisState s;
    for (const auto& r : p_.roots) s.set_escape(r.name, EscapeState::Escaped);
    for (size_t i = 0; i < f_.params.size(); i++) {
      const Param& prm = f_.params[i];
      if (prm.type.kind != TypeKind::Ptr) continue;
      if (ctx_[i].esc == EscapeState::Escaped)
        s.set_escape(prm.name, EscapeState::Escaped);
      if (ctx_[i].persist != PersistState::Clean)
        for (int off : tc_.field_offsets(prm.type.struct_name))
          s.pmap[{prm.name, off}] = PersistEntry{ctx_[i].persist, {}, false};
    }
    s.normalize();
    return s;
  }

  AnalysisState in_state(int node) const {
    AnalysisState s;
    bool any = false;
    if (node == 0) {  // first block is the entry
      s = entry_state();
      any = true;
    }
    for (int pred : cfg_.predecessors[node]) {
      if (!has_out_[pred]) continue;
      s = any ? meet(s, out_[pred]) : out_[pred];
      any = true;
    }
    if (!any) s = entry_state();
    return s;
  }

  size_t budget() const {
    size_t insts = 0;
    for (const auto& b : f_.blocks) insts += b.insts.size();
    size_t locs = (insts + f_.params.size() + p_.roots.size() + 2) * 8;
    return f_.blocks.size() * 3 * 2 * (locs + 2) + 64;
  }

  void fixpoint() {
    size_t n = f_.blocks.size();
    out_.assign(n, {});
    has_out_.assign(n, false);
    std::deque<int> work;
    std::vector<bool> queued(n, false);
    for (int node : cfg_.rpo_order) {
      work.push_back(node);
      queued[node] = true;
    }
    size_t max_iter = budget();
    while (!work.empty()) {
      int node = work.front();
      work.pop_front();
      queued[node] = false;
      if (++result_.iterations > static_cast<int>(max_iter))
        throw std::runtime_error("analysis iteration budget exceeded in " +
                                 f_.name);
      AnalysisState s = in_state(node);
      transfer_block(node, s, /*collect=*/false);
      s.normalize();
      bool changed = !has_out_[node] || !out_[node].same_dataflow(s) ||
                     out_[node].event_refs != s.event_refs ||
                     out_[node].dirty_escape_event != s.dirty_escape_event;
      out_[node] = std::move(s);
      has_out_[node] = true;
      if (changed)
        for (int succ : cfg_.successors[node])
          if (!queued[succ]) {
            work.push_back(succ);
            queued[succ] = true;
          }
    }
  }

  void collect() {
    for (int node : cfg_.rpo_order) {
      AnalysisState s = in_state(node);
      transfer_block(node, s, /*collect=*/true);
    }
  }

  void transfer_block(int node, AnalysisState& s, bool collect) {
    const BasicBlock& bb = f_.blocks[node];
    for (size_t i = 0; i < bb.insts.size(); i++) {
      const Instruction& inst = bb.insts[i];
      Site site{f_.name, bb.label, static_cast<int>(i)};
      if (collect) {
        AnalysisState copy = s;
        copy.normalize();
        result_.before[{bb.label, static_cast<int>(i)}] = std::move(copy);
        pre_checks(inst, site, s);
      }
      if (inst.op == Opcode::Call) {
        transfer_call(inst, site, s, collect);
      } else if (inst.op == Opcode::Ret) {
        if (collect) exit_checks(inst, site, s);
      } else {
        tc_.apply(inst, site, s);
        if (collect && is_store_like(inst.op)) store_check(inst, site, s);
      }
    }
  }

  static bool is_store_like(Opcode op) {
    return op == Opcode::Store || op == Opcode::StoreAtomic ||
           op == Opcode::StoreRelease || op == Opcode::Rmw ||
           op == Opcode::Cas || op == Opcode::StoreIndex || op == Opcode::Memcpy;
  }

  static bool defines_dst(Opcode op) {
    switch (op) {
      case Opcode::Assign:
      case Opcode::Load:
      case Opcode::LoadAtomic:
      case Opcode::Rmw:
      case Opcode::Cas:
      case Opcode::Pmalloc:
      case Opcode::Malloc:
      case Opcode::AddrOf:
      case Opcode::LoadIndex:
      case Opcode::PtrAdd:
      case Opcode::Call:
        return true;
      default:
        return false;
    }
  }

  bool class_escaped(const AnalysisState& s, const std::string& ref) const {
    for (const auto& m : s.alias_set(ref))
      if (s.escape_of(m) == EscapeState::Escaped) return true;
    return false;
  }

  void add_violation(ViolationKind kind, const Site& site,
                     std::vector<InvolvedLocation> locs) {
    Violation v;
    v.kind = kind;
    v.site = site;
    v.locations = std::move(locs);
    v.context = ctx_;
    v.load_induced =
        !v.locations.empty() &&
        std::all_of(v.locations.begin(), v.locations.end(),
                    [](const InvolvedLocation& l) { return l.load_induced; });
    result_.violations.push_back(std::move(v));
  }

  static std::vector<InvolvedLocation> involved_of(
      const std::vector<TransferContext::Unit>& units) {
    std::vector<InvolvedLocation> out;
    for (const auto& u : units) out.push_back(u.involved);
    return out;
  }

  // Checks evaluated on the state before the instruction's transfer.
  void pre_checks(const Instruction& inst, const Site& site,
                  const AnalysisState& s) {
    if (defines_dst(inst.op) && !inst.dst.empty()) {
      std::vector<InvolvedLocation> lost;
      for (const auto& [loc, e] : s.pmap)
        if (loc.ref == inst.dst && e.state != PersistState::Clean &&
            class_escaped(s, loc.ref)) {
          InvolvedLocation l;
          l.loc = loc;
          l.state = e.state;
          l.dirty_sites = e.dirty_sites;
          l.load_induced = e.load_induced;
          lost.push_back(std::move(l));
        }
      for (const auto& [key, e] : s.apmap)
        if ((key.first == inst.dst || key.second == inst.dst) &&
            e.state != PersistState::Clean) {
          InvolvedLocation l;
          l.loc = {key.first, 0};
          l.state = e.state;
          l.dirty_sites = e.dirty_sites;
          l.load_induced = e.load_induced;
          l.is_array = true;
          l.index_var = key.second;
          lost.push_back(std::move(l));
        }
      if (!lost.empty())
        add_violation(ViolationKind::IndexLost, site, std::move(lost));
    }

    if (inst.op == Opcode::Unlock) {
      auto units = tc_.escaped_nonclean_units(s);
      if (!units.empty())
        add_violation(ViolationKind::ReleaseWhileDirty, site, involved_of(units));
    } else if (inst.op == Opcode::StoreRelease && tc_.is_pm_ref(inst.base)) {
      auto units = tc_.escaped_nonclean_units(s);
      std::string rep = tc_.class_rep(s, inst.base);
      int off = tc_.offset_of(inst);
      std::vector<InvolvedLocation> locs;
      for (const auto& u : units)
        if (u.is_array || u.rep != rep || u.offset != off)
          locs.push_back(u.involved);
      if (!locs.empty())
        add_violation(ViolationKind::ReleaseWhileDirty, site, std::move(locs));
    }

    ptr_arith_check(inst, site, s);
  }

  void ptr_arith_check(const Instruction& inst, const Site& site,
                       const AnalysisState& s) {
    bool mem_op = inst.is_store() || inst.op == Opcode::Load ||
                  inst.op == Opcode::LoadAtomic || inst.op == Opcode::Rmw ||
                  inst.op == Opcode::Cas;
    if (!mem_op || !tc_.ptr_arith_derived(inst.base) || !tc_.is_pm_ref(inst.base))
      return;
    // Already handled when the access is immediately flushed and fenced.
    const BasicBlock* bb = f_.find_block(site.block);
    size_t i = static_cast<size_t>(site.index);
    auto at = [&](size_t k) -> const Instruction* {
      return k < bb->insts.size() ? &bb->insts[k] : nullptr;
    };
    if (inst.is_store() || inst.op == Opcode::Rmw || inst.op == Opcode::Cas) {
      const Instruction* n1 = at(i + 1);
      const Instruction* n2 = at(i + 2);
      if (n1 && n1->op == Opcode::Flush && n1->base == inst.base &&
          n1->field == inst.field)
        return;
      if (n1 && n1->op == Opcode::FlushOpt && n1->base == inst.base &&
          n1->field == inst.field && n2 && n2->op == Opcode::Fence)
        return;
    } else {
      const Instruction* n1 = at(i + 1);
      if (n1 && n1->op == Opcode::Fence) return;
    }
    InvolvedLocation l;
    l.loc = {inst.base, tc_.offset_of(inst)};
    l.state = s.persist_of({inst.base, tc_.offset_of(inst)}).state;
    add_violation(ViolationKind::PointerArithmetic, site, {l});
  }

  // A store into an escaped location while another escaped location is
  // non-clean pins the persist order; flag it.
  void store_check(const Instruction& inst, const Site& site,
                   const AnalysisState& post) {
    std::set<std::tuple<std::string, int, bool, std::string>> targets;
    bool escaped = false;
    if (inst.op == Opcode::StoreIndex) {
      if (!tc_.is_pm_ref(inst.base)) return;
      escaped = true;
      targets.insert({inst.base, 0, true, inst.index_var});
    } else if (inst.op == Opcode::Memcpy) {
      if (!tc_.is_pm_ref(inst.base)) return;
      escaped = class_escaped(post, inst.base);
      std::string rep = tc_.class_rep(post, inst.base);
      std::int64_t len =
          (inst.args.size() > 1 && inst.args[1].is_const) ? inst.args[1].value
                                                          : -1;
      for (int off : tc_.field_offsets(tc_.struct_of(inst.base)))
        if (len < 0 || off < len) targets.insert({rep, off, false, ""});
    } else {
      if (!tc_.is_pm_ref(inst.base) || inst.relax) return;
      escaped = class_escaped(post, inst.base);
      targets.insert(
          {tc_.class_rep(post, inst.base), tc_.offset_of(inst), false, ""});
    }
    if (!escaped) return;

    auto units = tc_.escaped_nonclean_units(post);
    std::vector<InvolvedLocation> others;
    for (const auto& u : units) {
      if (targets.count({u.rep, u.offset, u.is_array, u.index_var})) continue;
      if (u.involved.dirty_sites == std::set<Site>{site}) continue;
      others.push_back(u.involved);
    }
    if (!others.empty()) {
      // Include the stored-to location itself; its only dirty site is this
      // instruction, which the repair planner recognizes and skips.
      for (const auto& u : units)
        if (targets.count({u.rep, u.offset, u.is_array, u.index_var}))
          others.push_back(u.involved);
      add_violation(ViolationKind::DoubleDirtyEscaped, site, std::move(others));
      return;
    }
    // A multi-field copy into an escaped object may straddle cache lines;
    // its internal persist order is unconstrained.
    if (inst.op == Opcode::Memcpy && targets.size() > 1) {
      std::vector<InvolvedLocation> locs;
      for (const auto& u : units)
        if (targets.count({u.rep, u.offset, u.is_array, u.index_var}))
          locs.push_back(u.involved);
      add_violation(ViolationKind::DoubleDirtyEscaped, site, std::move(locs));
    }
  }

  void transfer_call(const Instruction& inst, const Site& site,
                     AnalysisState& s, bool collect) {
    const Function* cf = p_.find_function(inst.callee);
    assert(cf);
    size_t arity = cf->params.size();

    CallingContext cc;
    for (size_t j = 0; j < arity; j++) {
      ParamState ps;
      const Operand& a = inst.args[j];
      if (!a.is_const && tc_.is_pm_ref(a.ref) &&
          cf->params[j].type.kind == TypeKind::Ptr) {
        ps.esc = class_escaped(s, a.ref) ? EscapeState::Escaped
                                         : EscapeState::Captured;
        ps.persist = PersistState::Clean;
        auto cl = s.alias_set(a.ref);
        for (const auto& [loc, e] : s.pmap)
          if (cl.count(loc.ref)) ps.persist = meet(ps.persist, e.state);
      }
      cc.push_back(ps);
    }
    if (arity > 8)
      cc.assign(arity, ParamState{EscapeState::Escaped, PersistState::Dirty, {}});

    ResolveOutcome res = resolve_callsite(table_, inst.callee, arity, cc);
    table_.dependents[{inst.callee, cc}].insert({f_.name, ctx_});
    if (res.needs_push && pushes_) pushes_->push_back({inst.callee, cc});
    callee_release_ = callee_release_ || res.result.performs_release;

    // Units the callee cannot know about: everything escaped & non-clean
    // here that is not aliased to an argument.
    std::vector<InvolvedLocation> foreign;
    if (collect) {
      auto units = tc_.escaped_nonclean_units(s);
      for (const auto& u : units) {
        bool arg_aliased = false;
        if (!u.is_array)
          for (size_t j = 0; j < arity && !arg_aliased; j++)
            if (!inst.args[j].is_const &&
                s.alias_set(inst.args[j].ref).count(u.rep))
              arg_aliased = true;
        if (!arg_aliased) foreign.push_back(u.involved);
      }
      if (res.result.performs_release && !units.empty())
        add_violation(ViolationKind::ReleaseWhileDirty, site, involved_of(units));
    }

    // Apply the summary: argument escapes/persist states, aliasing pairs,
    // then the return value.
    for (size_t j = 0; j < arity; j++) {
      const Operand& a = inst.args[j];
      if (a.is_const || !tc_.is_pm_ref(a.ref) ||
          cf->params[j].type.kind != TypeKind::Ptr)
        continue;
      const ParamState& ps = res.result.states[j];
      if (ps.esc == EscapeState::Escaped) escape_class(s, a.ref);
      for (int off : tc_.field_offsets(tc_.struct_of(a.ref))) {
        PersistState st = summary_persist_at(ps, off);
        if (st == PersistState::Clean)
          s.pmap.erase({a.ref, off});
        else
          s.pmap[{a.ref, off}] = PersistEntry{st, {site}, false};
      }
    }
    if (!inst.dst.empty()) {
      tc_.redefine(inst.dst, site, s);
      if (tc_.is_pm_ref(inst.dst)) {
        const ParamState& ps = res.result.states[arity];
        if (ps.esc == EscapeState::Escaped)
          s.set_escape(inst.dst, EscapeState::Escaped);
        if (cf->return_type && cf->return_type->kind == TypeKind::Ptr &&
            ps.persist != PersistState::Clean)
          for (int off : tc_.field_offsets(cf->return_type->struct_name)) {
            PersistState st = summary_persist_at(ps, off);
            if (st != PersistState::Clean)
              s.pmap[{inst.dst, off}] = PersistEntry{st, {site}, false};
          }
      }
    }
    for (const auto& [i, j] : res.result.aliasing) {
      auto ref_at = [&](int pos) -> std::string {
        if (pos == static_cast<int>(arity)) return inst.dst;
        const Operand& a = inst.args[pos];
        return a.is_const ? std::string() : a.ref;
      };
      std::string ri = ref_at(i), rj = ref_at(j);
      if (ri.empty() || rj.empty()) continue;
      join_classes(s, ri, rj);
      if (class_escaped(s, ri)) escape_class(s, ri);
    }
    if (res.result.mark_obj_dir_esp) {
      s.dirty_escape_event = true;
      s.event_refs.insert("#" + inst.callee);
    }

    if (collect && !foreign.empty()) {
      // Trigger if the callee had an invisible dirty-escape event, or the
      // summary itself dirties an escaped argument or result.
      bool dirties_escaped = false;
      for (size_t j = 0; j < arity && !dirties_escaped; j++)
        if (!inst.args[j].is_const &&
            res.result.states[j].persist != PersistState::Clean &&
            class_escaped(s, inst.args[j].ref))
          dirties_escaped = true;
      if (!inst.dst.empty() &&
          res.result.states[arity].persist != PersistState::Clean &&
          class_escaped(s, inst.dst))
        dirties_escaped = true;
      if (res.result.mark_obj_dir_esp || dirties_escaped)
        add_violation(ViolationKind::CallsiteDirtyEscape, site,
                      std::move(foreign));
    }

    tc_.record_events(s);
  }

  void exit_checks(const Instruction& inst, const Site& site,
                   const AnalysisState& s) {
    std::string ret_ref;
    if (!inst.args.empty() && !inst.args[0].is_const) ret_ref = inst.args[0].ref;
    if (!ret_ref.empty()) ret_refs_.insert(ret_ref);

    std::set<std::string> param_names;
    for (const auto& prm : f_.params) param_names.insert(prm.name);

    std::vector<InvolvedLocation> exit_locs, durability_locs, array_locs;
    for (const auto& u : tc_.escaped_nonclean_units(s)) {
      if (u.is_array) {
        array_locs.push_back(u.involved);
        continue;
      }
      if (u.involved.load_induced) continue;
      auto cl = s.alias_set(u.rep);
      bool param_vis = false;
      for (const auto& m : cl)
        if (param_names.count(m) || (!ret_ref.empty() && cl.count(ret_ref)))
          param_vis = true;
      if (!ret_ref.empty() && cl.count(ret_ref)) param_vis = true;
      if (entry_) {
        durability_locs.push_back(u.involved);
      } else if (!param_vis) {
        exit_locs.push_back(u.involved);
      }
    }
    if (!exit_locs.empty())
      add_violation(ViolationKind::ExitUnflushed, site, std::move(exit_locs));
    if (!durability_locs.empty())
      add_violation(ViolationKind::Durability, site, std::move(durability_locs));
    if (!array_locs.empty())
      add_violation(ViolationKind::ArrayUnflushed, site, std::move(array_locs));

    if (has_exit_) {
      result_.exit_state = meet(result_.exit_state, s);
    } else {
      result_.exit_state = s;
      result_.exit_state.normalize();
      has_exit_ = true;
    }
  }

  void build_summary() {
    size_t n = f_.params.size();
    SummarizedResult& r = result_.summary;
    r.states.assign(n + 1, ParamState{});
    const AnalysisState& ex = result_.exit_state;

    auto abs_of = [&](const std::string& ref) {
      ParamState ps;
      ps.esc = class_escaped(ex, ref) ? EscapeState::Escaped
                                      : EscapeState::Captured;
      auto cl = ex.alias_set(ref);
      for (const auto& [loc, e] : ex.pmap)
        if (cl.count(loc.ref)) {
          ps.persist = meet(ps.persist, e.state);
          auto it = ps.by_offset.find(loc.offset);
          ps.by_offset[loc.offset] =
              it == ps.by_offset.end() ? e.state : meet(it->second, e.state);
        }
      return ps;
    };

    if (has_exit_) {
      for (size_t i = 0; i < n; i++)
        if (f_.params[i].type.kind == TypeKind::Ptr)
          r.states[i] = abs_of(f_.params[i].name);
      bool first = true;
      for (const auto& rr : ret_refs_) {
        ParamState ps = abs_of(rr);
        r.states[n] = first ? ps : meet(r.states[n], ps);
        first = false;
      }
      for (size_t i = 0; i < n; i++) {
        auto ci = ex.alias_set(f_.params[i].name);
        for (size_t j = i + 1; j < n; j++)
          for (const auto& m : ex.alias_set(f_.params[j].name))
            if (ci.count(m)) {
              r.aliasing.insert({static_cast<int>(i), static_cast<int>(j)});
              break;
            }
        for (const auto& rr : ret_refs_)
          if (ci.count(rr) || ex.alias_set(rr).count(f_.params[i].name)) {
            r.aliasing.insert({static_cast<int>(i), static_cast<int>(n)});
            break;
          }
      }
    }

    // Dirty-escape events not visible as a non-clean parameter or return
    // state must be surfaced at callsites.
    if (ex.dirty_escape_event) {
      std::vector<std::string> anchors;
      for (size_t i = 0; i < n; i++)
        if (r.states[i].persist != PersistState::Clean)
          anchors.push_back(f_.params[i].name);
      if (r.states[n].persist != PersistState::Clean)
        for (const auto& rr : ret_refs_) anchors.push_back(rr);
      for (const auto& e : ex.event_refs) {
        bool visible = false;
        for (const auto& a : anchors)
          if (ex.alias_set(a).count(e)) {
            visible = true;
            break;
          }
        if (!visible) {
          r.mark_obj_dir_esp = true;
          break;
        }
      }
    }

    bool releases = callee_release_;
    for (const auto& b : f_.blocks)
      for (const auto& in : b.insts)
        if (in.op == Opcode::Unlock || in.op == Opcode::StoreRelease)
          releases = true;
    r.performs_release = releases;
  }
};

FunctionAnalysis analyze_function(const Program& p, const PmClassification& cls,
                                  const Function& f, const CallingContext& ctx,
                                  SummaryTable& table, Mode mode,
                                  bool entry_function,
                                  std::vector<SummaryKey>* pushes) {
  FunctionAnalyzer a(p, cls, f, ctx, table, mode, entry_function, pushes);
  return a.run();
}

}  // namespace pmfence
