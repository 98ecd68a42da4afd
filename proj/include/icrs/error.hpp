#pragma once

#include <stdexcept>
#include <string>

namespace icrs {

// Domain errors exit the CLI with 1, environment/IO errors with 2.
enum class ErrorKind { domain, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message),
          kind_(kind),
          code_(std::move(code)) {}

    ErrorKind kind() const { return kind_; }
    // Stable machine-readable identifier, e.g. "duplicate id", "missing id".
    const std::string& code() const { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

inline Error domain_error(std::string code, const std::string& message) {
    return Error(ErrorKind::domain, std::move(code), message);
}

inline Error io_error(std::string code, const std::string& message) {
    return Error(ErrorKind::io, std::move(code), message);
}

}  // namespace icrs
