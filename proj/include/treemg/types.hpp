#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace treemg {

using Cplx = std::complex<double>;

inline constexpr int kMaxDim = 4;

/// Integer lattice coordinate of a cell or vertex within one grid level.
using Index = std::array<int, kMaxDim>;

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when the accumulated operator diagonal vanishes at a vertex that
/// carries an unknown; signals phi*h^2 hitting a resonance of the discrete
/// operator.
struct SingularDiagonalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// 3^level, as int. Levels are capped so that indices fit packed keys.
int pow3(int level);

/// 2^dim.
inline int corner_count(int dim) { return 1 << dim; }

inline Index zero_index() {
    return Index{0, 0, 0, 0};
}

}  // namespace treemg
