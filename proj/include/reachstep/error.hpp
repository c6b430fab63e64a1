#pragma once

#include <stdexcept>
#include <string>

namespace reachstep {

// Base for every error thrown by the toolkit. The CLI maps subclasses onto
// exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column)
        : Error(what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
          line_(line), column_(column) {}

    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class EvaluationError : public Error {
public:
    EvaluationError(const std::string& what, std::string subexpression)
        : Error(what + ": " + subexpression), subexpression_(std::move(subexpression)) {}

    const std::string& subexpression() const { return subexpression_; }

private:
    std::string subexpression_;
};

class SingularDecouplingError : public Error {
public:
    explicit SingularDecouplingError(double sigma_min)
        : Error("singular decoupling matrix (smallest singular value " + std::to_string(sigma_min) + ")"),
          sigma_min_(sigma_min) {}

    double sigma_min() const { return sigma_min_; }

private:
    double sigma_min_;
};

class SpecError : public Error {
public:
    using Error::Error;
};

class SynthesisError : public Error {
public:
    using Error::Error;
};

class EmptySetError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// A pipeline input was produced from different upstream files.
class StaleError : public Error {
public:
    using Error::Error;
};

}  // namespace reachstep
