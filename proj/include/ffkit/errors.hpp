#pragma once

#include <stdexcept>
#include <string>

namespace ffkit {

// Base class for every recoverable error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// geometry
struct NonPositiveDepth : Error { using Error::Error; };

// frustum pipeline
struct InvalidRatio : Error { using Error::Error; };
struct EmptyFrustum : Error { using Error::Error; };

// tensors / autodiff
struct ShapeMismatch : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };

// box codec
struct UnknownClass : Error { using Error::Error; };
struct DecodeError : Error { using Error::Error; };

// fusion net
struct MissingGroundTruth : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct ConfigMismatch : Error { using Error::Error; };

// data io
struct MalformedLine : Error { using Error::Error; };
struct MissingKey : Error { using Error::Error; };
struct WrongArity : Error { using Error::Error; };
struct BadRatios : Error { using Error::Error; };
struct SpecInfeasible : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// metrics
struct FrameMismatch : Error { using Error::Error; };

}  // namespace ffkit
