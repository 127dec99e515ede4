#pragma once

#include <stdexcept>
#include <string>

namespace tailor {

/// Invalid input, unsatisfiable request, or exhausted domain budget.
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Backend unreachable or misbehaving after retries.
class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& what, int attempts = 0)
        : std::runtime_error(what), attempts_(attempts) {}
    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

}  // namespace tailor
