#include "pmfence/report.hpp"

#include <sstream>

namespace pmfence {

namespace {

std::string location_name(const InvolvedLocation& l) {
  if (l.is_array) return l.loc.ref + "[" + l.index_var + "]";
  return l.loc.ref + "+" + std::to_string(l.loc.offset);
}

std::string context_entry(const ParamState& p) {
  return std::string(to_string(p.esc)) + ":" + to_string(p.persist);
}

}  // namespace

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Base: return "base";
    case Mode::Opt: return "opt";
    case Mode::Flit: return "flit";
  }
  return "opt";
}

std::string render_text_report(const AnalysisResults& res, Mode mode) {
  std::ostringstream out;
  for (const auto& v : res.violations) {
    out << (v.is_warning() ? "warning" : "error") << ": " << to_string(v.kind)
        << " at " << v.site.function << ":" << v.site.block << ":"
        << v.site.index << "\n";
    for (const auto& l : v.locations)
      out << "  location " << location_name(l) << " (" << to_string(l.state)
          << (l.load_induced ? ", load-induced" : "") << ")\n";
    if (!v.context.empty()) {
      out << "  context [";
      for (size_t i = 0; i < v.context.size(); i++)
        out << (i ? ", " : "") << context_entry(v.context[i]);
      out << "]\n";
    }
  }
  size_t errors = 0, warnings = 0;
  for (const auto& v : res.violations) (v.is_warning() ? warnings : errors)++;
  out << "mode " << to_string(mode) << ": " << errors << " error(s), "
      << warnings << " warning(s); " << res.contexts_analyzed
      << " context(s) analyzed in " << res.iterations << " pass(es)\n";
  return out.str();
}

nlohmann::ordered_json render_json_report(const AnalysisResults& res,
                                          Mode mode) {
  nlohmann::ordered_json j;
  j["version"] = "1.0";
  j["mode"] = to_string(mode);
  j["violations"] = nlohmann::ordered_json::array();
  std::set<std::string> functions;
  for (const auto& [key, fa] : res.analyses) functions.insert(key.function);
  for (const auto& v : res.violations) {
    nlohmann::ordered_json jv;
    jv["kind"] = to_string(v.kind);
    jv["function"] = v.site.function;
    jv["block"] = v.site.block;
    jv["index"] = v.site.index;
    jv["locations"] = nlohmann::ordered_json::array();
    for (const auto& l : v.locations) {
      nlohmann::ordered_json jl;
      jl["ref"] = l.is_array ? l.loc.ref + "[" + l.index_var + "]" : l.loc.ref;
      jl["offset"] = l.loc.offset;
      jv["locations"].push_back(std::move(jl));
    }
    jv["context"] = nlohmann::ordered_json::array();
    for (const auto& p : v.context) jv["context"].push_back(context_entry(p));
    jv["severity"] = v.is_warning() ? "warning" : "error";
    j["violations"].push_back(std::move(jv));
  }
  j["summaryStats"] = {{"functions", functions.size()},
                       {"contextsAnalyzed", res.contexts_analyzed},
                       {"iterations", res.iterations}};
  return j;
}

std::string render_text_verdict(const OracleResult& r) {
  std::ostringstream out;
  if (r.racy) {
    out << "verdict: racy (robustness not assessed)\n";
  } else {
    out << "verdict: " << (r.robust ? "robust" : "not robust") << "\n";
    out << "durable: " << (r.durable ? "yes" : "no") << "\n";
  }
  out << "traces " << r.traces << ", strict states " << r.strict_states
      << ", images checked " << r.images_checked
      << (r.truncated ? " (bound hit)" : "") << "\n";
  if (r.counterexample) {
    out << "counterexample image:\n";
    for (const auto& [k, v] : r.counterexample->image)
      out << "  " << k << " = " << v << "\n";
    out << "schedule:\n";
    for (const auto& s : r.counterexample->trace) out << "  " << s << "\n";
  }
  return out.str();
}

nlohmann::ordered_json render_json_verdict(const OracleResult& r) {
  nlohmann::ordered_json j;
  j["racy"] = r.racy;
  j["robust"] = r.robust;
  j["durable"] = r.durable;
  j["truncated"] = r.truncated;
  j["traces"] = r.traces;
  j["strictStates"] = r.strict_states;
  j["imagesChecked"] = r.images_checked;
  if (r.counterexample) {
    nlohmann::ordered_json img = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.counterexample->image) img[k] = v;
    j["counterexample"] = {{"image", std::move(img)},
                           {"schedule", r.counterexample->trace}};
  }
  return j;
}

}  // namespace pmfence
