#pragma once

#include <functional>
#include <span>
#include <vector>

#include "treemg/cycles.hpp"
#include "treemg/types.hpp"

namespace treemg::oracle {

/// Dense reference implementations for small regular grids; the trusted side
/// of the matrix-free equivalence tests. Unknowns are the interior vertices of
/// one level, lexicographic with axis 0 fastest.

struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<Cplx> a;

    DenseMatrix() = default;
    DenseMatrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), Cplx(0.0)) {}
    Cplx& at(int i, int j) { return a[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)]; }
    Cplx at(int i, int j) const { return a[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)]; }
};

DenseMatrix multiply(const DenseMatrix& A, const DenseMatrix& B);
DenseMatrix transpose(const DenseMatrix& A);
std::vector<Cplx> mat_vec(const DenseMatrix& A, std::span<const Cplx> x);

struct SingularMatrixError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Gaussian elimination with partial pivoting; pivots below 1e-300 raise
/// SingularMatrixError. relResidual receives ||b - A x|| / ||b|| if non-null.
std::vector<Cplx> direct_solve(DenseMatrix A, std::vector<Cplx> b, double* relResidual = nullptr);

using ScalarField = std::function<double(std::span<const double>)>;
using CplxField = std::function<Cplx(std::span<const double>)>;

int interior_count(int p, int level);
/// Flat index of an interior lattice point (components in [1, 3^level-1]).
int interior_flat(int p, int level, const Index& idx);

/// Global complex-symmetric system over the interior vertices; homogeneous
/// Dirichlet rows/columns eliminated. phi is sampled at cell centres.
DenseMatrix dense_assemble(int p, int level, double theta, const CplxField& phi,
                           std::size_t cap = 10000);

/// Consistent-mass load vector, sum over cells of hElem^p M chi(corners).
std::vector<Cplx> load_vector(int p, int level, double theta, const ScalarField& chi);

/// b - H u built row by row without materialising the matrix; no size cap.
std::vector<Cplx> residual(int p, int level, double theta, const CplxField& phi,
                           std::span<const Cplx> b, std::span<const Cplx> u);

/// p-linear prolongation from the interior vertices of fineLevel-1 to those of
/// fineLevel, and the plain-copy injection the other way.
DenseMatrix prolongation_matrix(int p, int fineLevel);
DenseMatrix injection_matrix(int p, int fineLevel);

/// Coupled multichannel block system over (vertex, channel) unknowns (channel
/// fastest); off-diagonal couplings multiply the mass term.
DenseMatrix dense_assemble_coupled(int p, int level, double theta, std::span<const Cplx> phis,
                                   std::span<const Cplx> coupling, std::size_t cap = 10000);

struct CycleSetup {
    int p = 1;
    int levels = 2;  // finest level; coarsest compute level is 1
    double theta = 0.0;
    CplxField phi;
    ScalarField chi;
    OmegaPolicy policy;
    Cplx omegaCG = Cplx(0.8, 0.0);  // textbook only
    std::vector<Cplx> initialFineU;  // empty: zero initial guess
};

/// Literal dense transcriptions of the four cycle algorithms; returns the
/// fine-level iterate after each of `sweeps` cycles/traversals.
std::vector<std::vector<Cplx>> reference_cycles(CycleKind kind, const CycleSetup& setup,
                                                int sweeps);

}  // namespace treemg::oracle
