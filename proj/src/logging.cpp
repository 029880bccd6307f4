#include "arac/logging.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace arac::log {

Level level() {
  static Level lvl = [] {
    const char* env = std::getenv("ARAC_LOG");
    if (env == nullptr) return Level::Info;
    if (std::strcmp(env, "error") == 0) return Level::Error;
    if (std::strcmp(env, "debug") == 0) return Level::Debug;
    return Level::Info;
  }();
  return lvl;
}

namespace {
void emit(const char* tag, const char* fmt, va_list args) {
  std::fprintf(stderr, "[%s] ", tag);
  std::vfprintf(stderr, fmt, args);
  std::fputc('\n', stderr);
}
}  // namespace

void error(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  emit("error", fmt, args);
  va_end(args);
}

void info(const char* fmt, ...) {
  if (level() < Level::Info) return;
  va_list args;
  va_start(args, fmt);
  emit("info", fmt, args);
  va_end(args);
}

void debug(const char* fmt, ...) {
  if (level() < Level::Debug) return;
  va_list args;
  va_start(args, fmt);
  emit("debug", fmt, args);
  va_end(args);
}

}  // namespace arac::log
