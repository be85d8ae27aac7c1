#pragma once

namespace fogflow {

/// Command-line entry point. Returns 0 on success, 2 on a usage error and 1
/// when the command itself fails.
int cli_main(int argc, char** argv);

}  // namespace fogflow
