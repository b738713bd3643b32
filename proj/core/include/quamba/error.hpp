#pragma once

#include <stdexcept>
#include <string>

namespace quamba {

// Every failure surfaced by the library is a quamba::Error; the CLI maps it
// to a nonzero exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define QUAMBA_CHECK(cond, msg)                    \
  do {                                             \
    if (!(cond)) throw ::quamba::Error(msg);       \
  } while (0)

}  // namespace quamba
