#pragma once

// Element type for all tensor math. Float is the training default; the
// double build exists for finite-difference gradient checking, where
// float cancellation noise would swamp the comparison.
//
// Selected per build target: compile with -DTEGRU_SCALAR_F64 (the
// `tegru64` CMake target) to get doubles.

namespace tegru {

#if defined(TEGRU_SCALAR_F64)
using Scalar = double;
#else
using Scalar = float;
#endif

inline constexpr bool kScalarIsF64 = sizeof(Scalar) == 8;

}  // namespace tegru
