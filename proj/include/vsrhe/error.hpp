#pragma once

#include <stdexcept>
#include <string>

namespace vsrhe {

// Every recoverable failure in the library surfaces as this type. Messages are
// meant to be shown to a user verbatim.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vsrhe
