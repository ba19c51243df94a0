#pragma once

namespace jumplim {

inline constexpr int kExitPass = 0;
inline constexpr int kExitFlagFailed = 2;
inline constexpr int kExitConfig = 3;

//! Subcommands: characteristics, h0, increments, law, explosion, simulate, validate-config.
int cli_main(int argc, char** argv);

} // namespace jumplim
