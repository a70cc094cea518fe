#ifndef PMFENCE_LATTICE_HPP
#define PMFENCE_LATTICE_HPP

namespace pmfence {

// Escape lattice: Captured on top, Escaped below.  A merge of an escaped
// value with a captured value yields Escaped.
enum class EscapeState { Escaped = 0, Captured = 1 };

// Persistency lattice: Clean ⊒ Clwb ⊒ Dirty.
enum class PersistState { Dirty = 0, Clwb = 1, Clean = 2 };

inline EscapeState meet(EscapeState a, EscapeState b) {
  return static_cast<int>(a) < static_cast<int>(b) ? a : b;
}
inline PersistState meet(PersistState a, PersistState b) {
  return static_cast<int>(a) < static_cast<int>(b) ? a : b;
}
inline bool geq(EscapeState a, EscapeState b) {
  return static_cast<int>(a) >= static_cast<int>(b);
}
inline bool geq(PersistState a, PersistState b) {
  return static_cast<int>(a) >= static_cast<int>(b);
}

inline const char* to_string(EscapeState e) {
  return e == EscapeState::Escaped ? "escaped" : "captured";
}
inline const char* to_string(PersistState p) {
  switch (p) {
    case PersistState::Dirty: return "dirty";
    case PersistState::Clwb: return "clwb";
    case PersistState::Clean: return "clean";
  }
  return "clean";
}

}  // namespace pmfence

#endif
