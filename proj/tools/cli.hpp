#pragma once

namespace tsrkoop {

/// Command-line entry point; returns the process exit status.
int cli_main(int argc, char** argv);

}  // namespace tsrkoop
