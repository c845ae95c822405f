#include "hrc/numeric_text.hpp"

#include <charconv>
#include <system_error>

#include "hrc/error.hpp"

namespace hrc {

std::string format_double(double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc{}) throw FormatError("cannot format double");
  return std::string(buffer, end);
}

double parse_double(std::string_view token, std::string_view what) {
  double value = 0.0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || end != token.data() + token.size())
    throw FormatError("malformed number for '" + std::string(what) + "': '" +
                      std::string(token) + "'");
  return value;
}

long parse_int(std::string_view token, std::string_view what) {
  long value = 0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || end != token.data() + token.size())
    throw FormatError("malformed integer for '" + std::string(what) + "': '" +
                      std::string(token) + "'");
  return value;
}

}  // namespace hrc
