#pragma once

#include <stdexcept>
#include <string>

namespace sva {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid user input: bad parameters, malformed configuration, unknown names.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// A model whose analytic derivatives or covariance fail validation.
class ModelError : public ConfigError {
  public:
    using ConfigError::ConfigError;
};

/// A computation produced non-finite values or otherwise broke down.
class NumericalError : public Error {
  public:
    using Error::Error;
};

class InstantonDivergence : public NumericalError {
  public:
    InstantonDivergence(const std::string& what, int iteration)
        : NumericalError(what), iteration_(iteration) {}

    [[nodiscard]] int iteration() const noexcept { return iteration_; }

  private:
    int iteration_;
};

class RiccatiBlowup : public NumericalError {
  public:
    RiccatiBlowup(const std::string& what, double time)
        : NumericalError(what), time_(time) {}

    /// Grid time at which the first non-finite entry appeared.
    [[nodiscard]] double time() const noexcept { return time_; }

  private:
    double time_;
};

}  // namespace sva
