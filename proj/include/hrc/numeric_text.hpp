#pragma once

#include <string>
#include <string_view>

namespace hrc {

// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

// Parses a full token as a double; throws FormatError naming `what` on failure.
double parse_double(std::string_view token, std::string_view what);

long parse_int(std::string_view token, std::string_view what);

}  // namespace hrc
