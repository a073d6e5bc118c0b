#pragma once

// Whitespace-token text format shared by the model files. Doubles are
// written in shortest round-trip form, so save/load is bit-exact.

#include <charconv>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>

#include "amdn/error.hpp"
#include "amdn/linalg.hpp"

namespace amdn::textio {

inline std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw FormatError("cannot format number");
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError("expected a number, got '" + std::string(s) + "'");
  return v;
}

template <typename Int>
Int parse_int(std::string_view s) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw FormatError("expected an integer, got '" + std::string(s) + "'");
  return v;
}

inline void write_values(std::ostream& out, std::span<const double> values, std::size_t per_line) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << format_double(values[i]);
    out << ((i + 1) % per_line == 0 || i + 1 == values.size() ? '\n' : ' ');
  }
}

/// Sequential token reader with keyword expectations.
class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::string token() {
    std::string t;
    if (!(in_ >> t)) fail("unexpected end of file");
    return t;
  }

  void expect(std::string_view keyword) {
    const auto t = token();
    if (t != keyword) fail("expected '" + std::string(keyword) + "', got '" + t + "'");
  }

  double number() {
    const auto t = token();
    try {
      return parse_double(t);
    } catch (const FormatError& e) {
      fail(e.what());
    }
  }

  template <typename Int = std::size_t>
  Int integer() {
    const auto t = token();
    try {
      return parse_int<Int>(t);
    } catch (const FormatError& e) {
      fail(e.what());
    }
  }

  void values(std::span<double> out) {
    for (auto& v : out) v = number();
  }

  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(source_ + ": " + msg); }

 private:
  std::istream& in_;
  std::string source_;
};

}  // namespace amdn::textio
