#ifndef PMFENCE_TESTS_GEN_HPP
#define PMFENCE_TESTS_GEN_HPP

#include <cstdint>
#include <string>

namespace pmfence::testsupport {

// Deterministic random corpus program (textual IR).  Stays within the
// oracle's comfortable bounds: at most 12 PM stores, 2 allocations,
// 2 roots, 2 threads (tiny thread bodies), loops that run at most twice.
// Race-free by construction: shared roots are touched only through
// atomics or a common mutex.
std::string random_program(std::uint64_t seed);

}  // namespace pmfence::testsupport

#endif
