#pragma once

#include <iosfwd>

namespace filterlab {

// Exit codes: 0 all verdicts pass, 1 numerical failure (the failing test is
// named on err), 2 configuration or schema error.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace filterlab
