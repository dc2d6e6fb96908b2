#pragma once

#include <stdexcept>
#include <string>

namespace dml {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteValue : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct BatchTooSmall : Error { using Error::Error; };
struct InvalidLabel : Error { using Error::Error; };
struct EmptyTripletSet : Error { using Error::Error; };
struct UnknownClass : Error { using Error::Error; };
struct NeedTwoClasses : Error { using Error::Error; };
struct ClassTooSmall : Error { using Error::Error; };
struct DegenerateVariance : Error { using Error::Error; };
struct IndivisibleBatch : Error { using Error::Error; };
struct NotEnoughClasses : Error { using Error::Error; };
struct TraceMismatch : Error { using Error::Error; };
struct OutOfRange : Error { using Error::Error; };
struct KTooLarge : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct EventTooShort : Error { using Error::Error; };
struct PlacementFailure : Error { using Error::Error; };
struct InvalidConfig : Error { using Error::Error; };

} // namespace dml
