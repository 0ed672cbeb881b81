#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace habitopt {

enum class ErrorKind {
    NonNested,
    BadProbability,
    LevelMismatch,
    ArbitrageDetected,
    VanishingAggregateSPD,
    InvalidWitness,
    NotInPayoffSpace,
    DomainViolation,
    DivisionByZeroSPD,
    WrongMarketClass,
    WrongUtilityFamily,
    InstanceTooLarge,
    Infeasible,
    NonConvergence,
    PreconditionViolated,
    BracketFailure,
    GenerationExhausted,
    InvalidInput,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-readable kind. The CLI maps kinds to exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised for u(x) evaluated outside the utility's domain. Carries the offending period and atom.
class DomainError : public Error {
public:
    DomainError(int period, int atom, double value)
        : Error(ErrorKind::DomainViolation,
                "perturbed consumption " + std::to_string(value) + " outside the domain at period " +
                    std::to_string(period) + ", atom " + std::to_string(atom)),
          period_(period), atom_(atom) {}

    int period() const noexcept { return period_; }
    int atom() const noexcept { return atom_; }

private:
    int period_;
    int atom_;
};

}  // namespace habitopt
