#include "habitopt/error.hpp"

namespace habitopt {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::NonNested: return "NonNested";
    case ErrorKind::BadProbability: return "BadProbability";
    case ErrorKind::LevelMismatch: return "LevelMismatch";
    case ErrorKind::ArbitrageDetected: return "ArbitrageDetected";
    case ErrorKind::VanishingAggregateSPD: return "VanishingAggregateSPD";
    case ErrorKind::InvalidWitness: return "InvalidWitness";
    case ErrorKind::NotInPayoffSpace: return "NotInPayoffSpace";
    case ErrorKind::DomainViolation: return "DomainViolation";
    case ErrorKind::DivisionByZeroSPD: return "DivisionByZeroSPD";
    case ErrorKind::WrongMarketClass: return "WrongMarketClass";
    case ErrorKind::WrongUtilityFamily: return "WrongUtilityFamily";
    case ErrorKind::InstanceTooLarge: return "InstanceTooLarge";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::PreconditionViolated: return "PreconditionViolated";
    case ErrorKind::BracketFailure: return "BracketFailure";
    case ErrorKind::GenerationExhausted: return "GenerationExhausted";
    case ErrorKind::InvalidInput: return "InvalidInput";
    }
    return "Unknown";
}

}  // namespace habitopt
