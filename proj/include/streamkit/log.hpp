#pragma once

#include <cstdio>

namespace streamkit::log {

enum class Level { error = 0, info = 1, debug = 2 };

// Threshold comes from STREAM_LOG ({error,info,debug}), read once.
Level threshold();
void set_threshold(Level lv);

bool enabled(Level lv);
void write(Level lv, const char* fmt, ...) __attribute__((format(printf, 2, 3)));

}  // namespace streamkit::log

#define SK_LOG_ERROR(...) ::streamkit::log::write(::streamkit::log::Level::error, __VA_ARGS__)
#define SK_LOG_INFO(...) ::streamkit::log::write(::streamkit::log::Level::info, __VA_ARGS__)
#define SK_LOG_DEBUG(...) ::streamkit::log::write(::streamkit::log::Level::debug, __VA_ARGS__)
