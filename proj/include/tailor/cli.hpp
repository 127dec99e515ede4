#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tailor::cli {

/// Exit codes: 0 success, 1 domain error or bad usage, 2 transport failure.
/// Machine-readable JSON lines go to `out`, human summaries and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace tailor::cli
