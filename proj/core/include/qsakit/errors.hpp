#pragma once

#include <stdexcept>
#include <string>

namespace qsa {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Frequency construction
struct DuplicateRatio : Error { using Error::Error; };
struct DependentFrequencies : Error { using Error::Error; };
struct NonPositive : Error { using Error::Error; };
struct NonIncreasingMultipliers : Error { using Error::Error; };
struct SharedFrequency : Error { using Error::Error; };

// Fields and gains
struct NegativeUnderRoot : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct NonDifferentiable : Error { using Error::Error; };
struct NotSpd : Error { using Error::Error; };

// Integration
struct NonFinite : Error { using Error::Error; };
struct StepTooCoarse : Error { using Error::Error; };

// Analysis
struct WindowEmpty : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };
struct DegenerateFit : Error { using Error::Error; };
struct NoClosedForm : Error { using Error::Error; };
struct Reducible : Error { using Error::Error; };
struct Diverged : Error { using Error::Error; };

// Orchestration
struct ConfigInvalid : Error { using Error::Error; };
struct SingularMatrix : Error { using Error::Error; };

}  // namespace qsa
