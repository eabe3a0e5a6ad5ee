#pragma once

namespace cfpanel {

// Entry point of the cfpanel binary. Exit codes: 0 success, 1 input or
// configuration error, 2 numerical failure.
int run_cli(int argc, char** argv);

}  // namespace cfpanel
