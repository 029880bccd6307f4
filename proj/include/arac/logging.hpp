#pragma once

#include <cstdarg>

namespace arac::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

// Current level comes from the ARAC_LOG environment variable
// (error|info|debug); default is info. Read once on first use.
Level level();

void error(const char* fmt, ...);
void info(const char* fmt, ...);
void debug(const char* fmt, ...);

}  // namespace arac::log
