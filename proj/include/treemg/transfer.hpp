#pragma once

#include <span>

#include "treemg/types.hpp"

namespace treemg {

/// Geometric inter-grid operators. A child position relative to its parent
/// cell is a p-tuple of thirds, each component in {0,1,2,3} (i.e. relative
/// coordinates {0, 1/3, 2/3, 1}). Weights are tabulated from that fixed set;
/// coinciding components are plain copies so that injection-coincident
/// prolongation is exact.

/// Prolongation weight of parent corner bit `corner` (0 or 1) for a child at
/// relative third `rel`.
double prolong_weight_1d(int rel, int corner);

/// Tensor-product p-linear interpolation of 2^p parent corner values at the
/// relative position `relThirds` (components in {0,1,2,3}).
Cplx prolong(std::span<const Cplx> parentCorners, std::span<const int> relThirds);

inline Cplx prolong(const Cplx* parentCorners, const int* relThirds, int dim) {
    return prolong(std::span<const Cplx>(parentCorners, std::size_t(1) << dim),
                   std::span<const int>(relThirds, static_cast<std::size_t>(dim)));
}

/// R = P^T: accumulate `fineValue`, weighted per parent corner, into the 2^p
/// coarse accumulators.
void restrict_accumulate(std::span<Cplx> coarseAcc, std::span<const int> relThirds, Cplx fineValue);

/// Plain copy of a fine value to the coinciding coarse vertex. The caller
/// must only use this at coinciding (cPoint) positions.
Cplx inject(Cplx fineU);

/// Hierarchical surplus u - P u_coarse.
Cplx hierarchical_surplus(Cplx uFine, std::span<const Cplx> parentCorners,
                          std::span<const int> relThirds);

}  // namespace treemg
