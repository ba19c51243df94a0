#pragma once

#include <stdexcept>
#include <string>

namespace jumplim {

// Invalid scenario, triplet or model parameters.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what, std::string pointer = {})
        : std::runtime_error(what), pointer_(std::move(pointer)) {}
    // JSON pointer of the offending key, empty when not applicable.
    const std::string& pointer() const noexcept { return pointer_; }

  private:
    std::string pointer_;
};

// Caller violated an operation precondition.
class ContractError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

// A model produced an out-of-range quantity (e.g. a probability outside [0,1]).
class ModelContractError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Quadrature returned a non-finite value.
class IntegrationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace jumplim
