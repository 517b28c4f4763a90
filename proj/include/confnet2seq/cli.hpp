#pragma once

// confnet2seq {confnet|train|generate|eval} [flags]
//
// Returns the process exit status: 0 on success, 1 after reporting an error
// on `err`, or CLI11's status for usage errors and --help.

#include <iosfwd>
#include <string>
#include <vector>

namespace confnet2seq::cli {

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace confnet2seq::cli
