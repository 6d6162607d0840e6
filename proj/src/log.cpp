#include "streamkit/log.hpp"

#include <cstdarg>
#include <cstdlib>
#include <cstring>

namespace streamkit::log {

namespace {

Level parse_env() {
  const char* v = std::getenv("STREAM_LOG");
  if (v == nullptr) return Level::error;
  if (std::strcmp(v, "debug") == 0) return Level::debug;
  if (std::strcmp(v, "info") == 0) return Level::info;
  return Level::error;
}

Level g_threshold = parse_env();

const char* tag(Level lv) {
  switch (lv) {
    case Level::error: return "error";
    case Level::info: return "info";
    case Level::debug: return "debug";
  }
  return "?";
}

}  // namespace

Level threshold() { return g_threshold; }
void set_threshold(Level lv) { g_threshold = lv; }
bool enabled(Level lv) { return static_cast<int>(lv) <= static_cast<int>(g_threshold); }

void write(Level lv, const char* fmt, ...) {
  if (!enabled(lv)) return;
  std::fprintf(stderr, "[streamkit %s] ", tag(lv));
  va_list ap;
  va_start(ap, fmt);
  std::vfprintf(stderr, fmt, ap);
  va_end(ap);
  std::fputc('\n', stderr);
}

}  // namespace streamkit::log
