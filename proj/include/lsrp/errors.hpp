#pragma once

#include <stdexcept>
#include <string>

namespace lsrp {

// Base class for all domain errors raised by the library. The CLI maps
// these to exit code 1; usage errors are handled by the argument parser.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

class BackendError : public Error {
  public:
    explicit BackendError(const std::string& what) : Error(what) {}
};

// Backend is reachable but cannot perform the requested operation
// (e.g. the wire protocol exposes no token log-probabilities).
class CapabilityError : public BackendError {
  public:
    explicit CapabilityError(const std::string& what) : BackendError(what) {}
};

class TemplateError : public Error {
  public:
    explicit TemplateError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
  public:
    explicit IoError(const std::string& what) : Error(what) {}
};

// A cloud-bound message contained private data. Carries the sentinel that
// fired so violation reports can name it.
class BoundaryViolation : public Error {
  public:
    BoundaryViolation(const std::string& sentinel, const std::string& messageKind)
        : Error("privacy boundary violation: cloud-bound " + messageKind +
                " message contains profile sentinel \"" + sentinel + "\""),
          sentinel_(sentinel), message_kind_(messageKind) {}

    const std::string& sentinel() const { return sentinel_; }
    const std::string& message_kind() const { return message_kind_; }

  private:
    std::string sentinel_;
    std::string message_kind_;
};

} // namespace lsrp
