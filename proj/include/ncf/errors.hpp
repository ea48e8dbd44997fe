#pragma once

#include <stdexcept>
#include <string>

namespace ncf {

// I/O and file-format problems (bad header, short payload, unreadable file).
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values produced during optimization. The CLI maps this to exit 3.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ncf
