#pragma once

// Invariant suites behind the `validate` subcommand: truncation quality of
// the window projectors, commutator identities, Wick-vs-enumeration oracle
// checks and the optimal-resolution identity.  Machine-readable results.

#include <string>
#include <vector>

namespace stochcool {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ValidateOptions {
  bool flip_sextic_sign = false;  // fault injection: break one Wick cycle term
  int oracle_systems = 6;         // randomized toy systems in the oracle suite
  unsigned seed = 20240817;
};

std::vector<CheckResult> run_validation_suite(const ValidateOptions& opts = {});

}  // namespace stochcool
