#pragma once

#include <stdexcept>
#include <string>

namespace vampnet {

/// Base of every error raised by the library. The category maps onto the
/// command-line exit codes (1 usage/config, 2 data/parse, 3 numeric).
class Error : public std::runtime_error {
 public:
  enum class Kind { Config, Contract, Dimension, Parse, Numeric };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case Kind::Config:
      case Kind::Contract:
        return 1;
      case Kind::Dimension:
      case Kind::Parse:
        return 2;
      case Kind::Numeric:
        return 3;
    }
    return 1;
  }

 private:
  Kind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(Kind::Config, "config error: " + w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(Kind::Contract, "contract error: " + w) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(Kind::Dimension, "dimension error: " + w) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(Kind::Parse, "parse error: " + w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(Kind::Numeric, "numeric error: " + w) {}
};

}  // namespace vampnet
