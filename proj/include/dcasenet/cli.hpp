// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace dcasenet {

/// Entry point behind the command-line tool; exposed so tests can drive
/// the subcommands in-process. Returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace dcasenet
