#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace olvae {

// Parses and executes one command; args exclude the program name.
// Returns 0 on success, 1 on usage errors (after printing usage context),
// 2 on runtime/IO/format failures (after printing the cause).
int run(std::vector<std::string> args);

// The oracle smoke suites behind `selftest`; prints one pass/fail line per
// suite and returns whether all passed.
bool run_selftests(std::ostream& out);

}  // namespace olvae
