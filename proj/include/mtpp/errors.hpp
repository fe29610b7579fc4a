#ifndef MTPP_ERRORS_HPP
#define MTPP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mtpp {

// Exit-code families used by the CLI: 2 config, 3 data, 4 numeric.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct precondition_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace mtpp

#endif
