#ifndef PMFENCE_CLASSIFY_HPP
#define PMFENCE_CLASSIFY_HPP

#include <set>
#include <string>
#include <vector>

#include "pmfence/ir.hpp"

namespace pmfence {

// Which references and struct fields may point to persistent memory.
// Inclusion-based, flow-insensitive propagation seeded from configured PM
// allocators and declared roots; may over-approximate, never misses.
struct PmClassification {
  std::set<std::pair<std::string, std::string>> pm_refs;  // (function, ref)
  std::set<std::pair<std::string, int>> pm_fields;        // (struct, offset)
  std::set<std::string> pm_roots;

  bool is_pm_ref(const std::string& function, const std::string& ref) const {
    return pm_roots.count(ref) > 0 || pm_refs.count({function, ref}) > 0;
  }
  bool is_pm_field(const std::string& struct_name, int offset) const {
    return pm_fields.count({struct_name, offset}) > 0;
  }
};

struct ClassifyResult {
  PmClassification classification;
  std::vector<std::string> errors;  // unknown allocator names

  bool ok() const { return errors.empty(); }
};

ClassifyResult compute_pm_set(const Program& p,
                              const std::set<std::string>& allocators);

}  // namespace pmfence

#endif
