#include "altinc/log.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

namespace altinc::log {

namespace {

Level from_env() {
  const char* v = std::getenv("ALTINC_LOG");
  if (!v) return Level::Info;
  const std::string s(v);
  if (s == "error") return Level::Error;
  if (s == "debug") return Level::Debug;
  return Level::Info;
}

Level& current() {
  static Level l = from_env();
  return l;
}

void emit(Level l, const char* tag, std::string_view msg) {
  if (static_cast<int>(l) > static_cast<int>(current())) return;
  std::cerr << "[" << tag << "] " << msg << "\n";
}

}  // namespace

Level level() { return current(); }
void set_level(Level l) { current() = l; }

void error(std::string_view msg) { emit(Level::Error, "error", msg); }
void info(std::string_view msg) { emit(Level::Info, "info", msg); }
void debug(std::string_view msg) { emit(Level::Debug, "debug", msg); }

}  // namespace altinc::log
