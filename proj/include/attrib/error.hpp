#pragma once

#include <stdexcept>
#include <string>

namespace attrib {

// Every failure surfaced by the library is an attrib::Error carrying a
// one-line diagnostic suitable for printing as-is.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace attrib
