#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "pmfence/classify.hpp"
#include "pmfence/interproc.hpp"
#include "pmfence/oracle.hpp"
#include "pmfence/parser.hpp"
#include "pmfence/printer.hpp"
#include "pmfence/report.hpp"
#include "pmfence/transform.hpp"

namespace {

using namespace pmfence;

constexpr int kExitOk = 0;
constexpr int kExitViolations = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRacy = 3;

struct CommonOpts {
  std::string input;
  std::string mode = "opt";
  std::vector<std::string> pm_alloc = {"pmalloc"};
  std::string format = "text";
  std::string out;
  int lineattr = 0;
};

Mode parse_mode(const std::string& m) {
  if (m == "base") return Mode::Base;
  if (m == "flit") return Mode::Flit;
  return Mode::Opt;
}

int load(const CommonOpts& o, Program& prog) {
  std::ifstream in(o.input);
  if (!in) {
    std::cerr << "error: cannot open '" << o.input << "'\n";
    return kExitUsage;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  ParseResult pr = parse_program(ss.str());
  if (!pr.ok()) {
    for (const auto& d : pr.diagnostics)
      std::cerr << o.input << ":" << d.loc.line << ":" << d.loc.column << ": "
                << d.message << "\n";
    return kExitUsage;
  }
  prog = std::move(pr.program);
  if (o.lineattr > 0) prog.line_size = o.lineattr;
  return kExitOk;
}

int write_output(const CommonOpts& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return kExitOk;
  }
  std::ofstream f(o.out);
  if (!f) {
    std::cerr << "error: cannot write '" << o.out << "'\n";
    return kExitUsage;
  }
  f << text;
  return kExitOk;
}

std::set<std::string> allocator_set(const CommonOpts& o) {
  std::set<std::string> s;
  for (const auto& entry : o.pm_alloc) {
    std::stringstream ss(entry);
    std::string name;
    while (std::getline(ss, name, ','))
      if (!name.empty()) s.insert(name);
  }
  if (s.empty()) s.insert("pmalloc");
  return s;
}

// Minimal line diff (LCS); transformed programs only ever gain lines, but
// memcpy lowering can also drop one.
std::string line_diff(const std::string& before, const std::string& after) {
  auto split = [](const std::string& s) {
    std::vector<std::string> ls;
    std::stringstream ss(s);
    std::string l;
    while (std::getline(ss, l)) ls.push_back(l);
    return ls;
  };
  std::vector<std::string> a = split(before), b = split(after);
  size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = n; i-- > 0;)
    for (size_t j = m; j-- > 0;)
      lcs[i][j] = a[i] == b[j] ? lcs[i + 1][j + 1] + 1
                               : std::max(lcs[i + 1][j], lcs[i][j + 1]);
  std::string out;
  size_t i = 0, j = 0;
  while (i < n && j < m) {
    if (a[i] == b[j]) {
      out += "  " + a[i] + "\n";
      i++, j++;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      out += "- " + a[i++] + "\n";
    } else {
      out += "+ " + b[j++] + "\n";
    }
  }
  while (i < n) out += "- " + a[i++] + "\n";
  while (j < m) out += "+ " + b[j++] + "\n";
  return out;
}

int run_analyze(const CommonOpts& o) {
  Program prog;
  if (int rc = load(o, prog)) return rc;
  ClassifyResult cr = compute_pm_set(prog, allocator_set(o));
  if (!cr.ok()) {
    for (const auto& e : cr.errors) std::cerr << "error: " << e << "\n";
    return kExitUsage;
  }
  Mode mode = parse_mode(o.mode);
  AnalysisResults res = run_interprocedural(prog, cr.classification, mode);
  std::string text = o.format == "json"
                         ? render_json_report(res, mode).dump(2) + "\n"
                         : render_text_report(res, mode);
  if (int rc = write_output(o, text)) return rc;
  return res.violations.empty() ? kExitOk : kExitViolations;
}

int run_transform(const CommonOpts& o, bool emit_diff) {
  Program prog;
  if (int rc = load(o, prog)) return rc;
  Mode mode = parse_mode(o.mode);
  TransformResult tr;
  try {
    tr = transform_program(prog, allocator_set(o), mode);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  std::string before = emit_program(prog);
  std::string after = emit_program(tr.program);
  if (!o.out.empty()) {
    CommonOpts fo = o;
    if (int rc = write_output(fo, after)) return rc;
    if (emit_diff) std::cout << line_diff(before, after);
  } else {
    std::cout << (emit_diff ? line_diff(before, after) : after);
  }
  return kExitOk;
}

int run_simulate(const CommonOpts& o, int bound) {
  Program prog;
  if (int rc = load(o, prog)) return rc;
  if (!prog.harness && !prog.find_function("main")) {
    std::cerr << "error: simulation needs a harness or a main function\n";
    return kExitUsage;
  }
  OracleOptions opts;
  opts.step_bound = bound;
  OracleResult r;
  try {
    r = check_robustness(prog, opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  std::string text = o.format == "json"
                         ? render_json_verdict(r).dump(2) + "\n"
                         : render_text_verdict(r);
  if (int rc = write_output(o, text)) return rc;
  if (r.racy) return kExitRacy;
  return r.robust ? kExitOk : kExitViolations;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flush/fence robustness toolkit for persistent-memory programs"};
  app.require_subcommand(1);

  CommonOpts opts;
  bool emit_diff = false;
  int bound = 0;

  auto add_common = [&](CLI::App* sub, bool with_mode) {
    sub->add_option("input", opts.input, "program file")->required();
    if (with_mode)
      sub->add_option("--mode", opts.mode, "base, opt or flit")
          ->check(CLI::IsMember({"base", "opt", "flit"}))
          ->default_val("opt");
    sub->add_option("--pm-alloc", opts.pm_alloc,
                    "PM allocator names (comma separated or repeated)");
    sub->add_option("--format", opts.format, "text or json")
        ->check(CLI::IsMember({"text", "json"}))
        ->default_val("text");
    sub->add_option("--lineattr", opts.lineattr, "override cache line size");
    sub->add_option("--out", opts.out, "write output to a file");
  };

  CLI::App* analyze = app.add_subcommand("analyze", "report robustness bugs");
  add_common(analyze, true);

  CLI::App* transform =
      app.add_subcommand("transform", "insert flushes and fences");
  add_common(transform, true);
  transform->add_flag("--emit-diff", emit_diff, "print inserted lines as a diff");

  CLI::App* simulate =
      app.add_subcommand("simulate", "bounded-exhaustive crash exploration");
  add_common(simulate, false);
  simulate->add_option("--bound", bound, "max interleaving steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  if (analyze->parsed()) return run_analyze(opts);
  if (transform->parsed()) return run_transform(opts, emit_diff);
  return run_simulate(opts, bound);
}
