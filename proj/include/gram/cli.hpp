#pragma once

#include <iosfwd>
#include <string>

namespace gram::cli {

// Exit codes: 0 success, 2 usage error, 3 data integrity error,
// 4 numerical divergence, 1 anything else.
int dispatch(int argc, const char* const* argv);

// Prints one pass/fail line per identity suite (label smoothing
// equivalence, order-swap complementarity, pre-training factorization,
// best-of-n KL closed form). Returns true when everything passed.
bool verify_identities(std::ostream& out);

// Groups results_dir/points.jsonl rows by curve name and writes one tidy
// CSV per curve. Throws IntegrityError when inputs are missing; writes
// nothing on error.
void emit_curves(const std::string& results_dir);

}  // namespace gram::cli
