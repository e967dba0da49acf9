#pragma once

#include <span>
#include <vector>

#include "treemg/elemops.hpp"
#include "treemg/problems.hpp"
#include "treemg/spacetree.hpp"

namespace treemg {

/// Fused per-cell Helmholtz operator for all channels of one cell:
///   A_i[a][b] = lapScale*K[a][b] - phi_i * massScale * M[a][b]
/// plus, for coupled channel blocks, off-diagonal mass couplings
///   A_ij[a][b] = coupling(i,j) * massScale * M[a][b].
struct CellKernel {
    const ReferenceMatrices* ref = nullptr;
    int channels = 1;
    Cplx hElem;
    Cplx lapScale;
    Cplx massScale;
    std::vector<Cplx> phi;  // per channel, sampled at the cell centre
};

CellKernel make_cell_kernel(const ProblemSpec& spec, int level, const Index& cellIndex,
                            double theta);

/// Zeroes the transient residual accumulators of all channels. Fired at
/// touchVertexFirstTime; u, chi, sc, sf, si stay untouched.
void zero_accumulators(Vertex& v);

/// Element contribution of one cell. adjU/adjUhat hold the corner values,
/// corner-major with channels contiguous ([corner*channels + ch]); outputs use
/// the same layout. dR = -(A adjU), dRhat = -(A adjUhat), dDiag the per-channel
/// block diagonal. The caller adds the results into the vertex accumulators.
void accumulate_cell(const CellKernel& k, const ProblemSpec& spec, std::span<const Cplx> adjU,
                     std::span<const Cplx> adjUhat, std::span<Cplx> dR, std::span<Cplx> dRhat,
                     std::span<Cplx> dDiag);

/// Consistent-mass right-hand-side contribution of one (leaf) cell:
/// dB[a] += massScale * sum_b M[a][b] * chi(x_b), per channel.
void accumulate_cell_rhs(const CellKernel& k, const ProblemSpec& spec, int level,
                         const Index& cellIndex, std::span<Cplx> dB);

/// Fired at touchVertexLastTime once all adjacent cells are processed:
/// r <- b + r and rHat <- b + rHat with b = v.chi; Dirichlet vertices get u
/// pinned to zero and both residuals forced to zero.
void finish_vertex(Vertex& v, bool onBoundary);

/// One Jacobi update omega * r / diag. diag below 1e-300 in modulus raises
/// SingularDiagonalError.
Cplx jacobi(Cplx r, Cplx diag, Cplx omega);

}  // namespace treemg
