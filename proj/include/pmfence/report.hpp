#ifndef PMFENCE_REPORT_HPP
#define PMFENCE_REPORT_HPP

#include <string>

#include <json.hpp>

#include "pmfence/interproc.hpp"
#include "pmfence/oracle.hpp"

namespace pmfence {

const char* to_string(Mode m);

std::string render_text_report(const AnalysisResults& res, Mode mode);
nlohmann::ordered_json render_json_report(const AnalysisResults& res, Mode mode);

std::string render_text_verdict(const OracleResult& r);
nlohmann::ordered_json render_json_verdict(const OracleResult& r);

}  // namespace pmfence

#endif
