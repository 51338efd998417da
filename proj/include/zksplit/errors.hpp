#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace zksplit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivisionByZero : public Error {
 public:
  DivisionByZero() : Error("inverse of zero") {}
};

class EncodingOverflow : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ProtocolStateError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised when a receive exceeds its deadline or the peer went away.
class TransportError : public Error {
 public:
  using Error::Error;
};

// A verifier refused a proof or an opening. `tag` names the class of check that failed.
class ProofRejected : public Error {
 public:
  explicit ProofRejected(std::string tag, const std::string& detail = {})
      : Error("proof rejected [" + tag + "]" + (detail.empty() ? "" : ": " + detail)), tag_(std::move(tag)) {}
  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

}  // namespace zksplit
