#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace amdn {

/// Base class for every error raised by the library. The category string is
/// what the command-line front-end prints in its `error[category]` prefix.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

#define AMDN_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(tag, what) {}       \
  };

AMDN_DEFINE_ERROR(ShapeError, "shape")
AMDN_DEFINE_ERROR(DomainError, "domain")
AMDN_DEFINE_ERROR(ConvergenceError, "convergence")
AMDN_DEFINE_ERROR(DivergenceError, "divergence")
AMDN_DEFINE_ERROR(LayoutError, "layout")
AMDN_DEFINE_ERROR(FormatError, "format")
AMDN_DEFINE_ERROR(AlignmentError, "alignment")
AMDN_DEFINE_ERROR(IoError, "io")
AMDN_DEFINE_ERROR(ConfigError, "config")

#undef AMDN_DEFINE_ERROR

}  // namespace amdn
