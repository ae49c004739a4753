#pragma once

#include <stdexcept>
#include <string>

namespace lgr {

// Raised for every contract violation in the library; the message is the
// user-facing diagnostic.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lgr
