#pragma once

#include <string_view>

namespace altinc::log {

enum class Level { Error = 0, Info = 1, Debug = 2 };

/// Read once from ALTINC_LOG (error|info|debug); defaults to info.
Level level();
void set_level(Level l);

void error(std::string_view msg);
void info(std::string_view msg);
void debug(std::string_view msg);

}  // namespace altinc::log
