#ifndef OCTA_ERRORS_HPP
#define OCTA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace octa {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File missing / unreadable / unwritable.
class IoError : public Error {
public:
    using Error::Error;
};

// Malformed file contents (bad magic, truncated payload, checksum mismatch).
class FormatError : public Error {
public:
    using Error::Error;
};

// Caller violated a precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// Input is valid but the operation is undefined on it (constant image for
// registration, single-bin histogram for Otsu, zero-variance sample).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

// Requested more class pixels than the ground truth provides.
class InsufficientClassPixelsError : public Error {
public:
    using Error::Error;
};

// Training loss became non-finite.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& msg, int epoch)
        : Error(msg), epoch(epoch) {}
    int epoch;
};

// Mask has no non-vessel pixels to form a FAZ.
class EmptyFazError : public Error {
public:
    using Error::Error;
};

// FAZ centroid fell outside the (non-convex) region; diameters undefined.
class CentroidOutsideError : public Error {
public:
    explicit CentroidOutsideError(const std::string& msg, double cx, double cy)
        : Error(msg), cx(cx), cy(cy) {}
    double cx, cy;
};

// A rate with zero denominator was requested.
class UndefinedRateError : public Error {
public:
    using Error::Error;
};

// An eye id is missing one of its two rater rows.
class PairingError : public Error {
public:
    using Error::Error;
};

// Synthetic generator could not reach its target within bounded iterations.
class GenerationFailureError : public Error {
public:
    using Error::Error;
};

} // namespace octa

#endif
