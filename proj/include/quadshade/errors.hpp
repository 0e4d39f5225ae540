#pragma once

#include <stdexcept>
#include <string>

namespace quadshade {

// Base class for all recoverable errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid argument or violated type invariant (non-finite coefficient, bad size, ...).
struct InvalidArgument : Error { using Error::Error; };

// I/O failures: missing file, truncated stream, malformed header.
struct IoError : Error { using Error::Error; };

// Configuration errors: unknown keys, out-of-range values.
struct ConfigError : Error { using Error::Error; };

// --- geometry / shading ---
struct ShadowedPoint : Error { using Error::Error; };        // l.n <= 0 under the Error policy
struct DegenerateLight : Error { using Error::Error; };      // (lx, ly) == (0, 0)
struct DegenerateNormal : Error { using Error::Error; };     // theta undefined: normal at the light point
struct EqualMagnitudeHessian : Error { using Error::Error; };// |lambda1| == |lambda2|, four-way result invalid
struct PlanarShape : Error { using Error::Error; };          // zero Hessian
struct NotCylinder : Error { using Error::Error; };          // cylinder family asked of a non-cylinder
struct ShadowViolation : Error { using Error::Error; };      // generated light shadows the certification grid

// --- per-patch inference ---
struct NoFeasibleTheta : Error { using Error::Error; };      // center intensity exceeds ||l||
struct InfeasibleTheta : Error { using Error::Error; };      // requested theta has no center-conic root
struct TooFewPixels : Error { using Error::Error; };         // fewer than 5 masked-in pixels
struct ViewAlignedLight : Error { using Error::Error; };     // sigma_z approximation invalid for lx = ly = 0
struct ZeroVariance : Error { using Error::Error; };         // sigma_i^2 + sigma_z^2 == 0 at a masked-in pixel

// --- reconstruction / evaluation ---
struct BoundaryPixel : Error { using Error::Error; };        // gradient requested outside the depth map
struct ShapeMismatch : Error { using Error::Error; };        // arrays of different sizes compared
struct ZeroVector : Error { using Error::Error; };           // angular error of a zero normal
struct DataError : Error { using Error::Error; };            // inconsistent inputs (e.g. all-shadow image)

} // namespace quadshade
