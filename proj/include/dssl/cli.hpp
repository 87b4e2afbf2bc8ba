#ifndef DSSL_CLI_HPP_
#define DSSL_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace dssl {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2 };

/// Command-line entry point: `dssl <gen-data|train|evaluate|ablate|sweep> [flags]`.
/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dssl

#endif  // DSSL_CLI_HPP_
