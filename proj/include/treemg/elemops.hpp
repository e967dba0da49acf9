#pragma once

#include <vector>

#include "treemg/types.hpp"

namespace treemg {

/// Reference element matrices on the unit hypercube for p-linear shape
/// functions, tensor-product vertex ordering with axis 0 running fastest.
/// Both matrices are symmetric; the Laplace rows sum to zero and the mass
/// entries sum to one (unit-cell volume).
struct ReferenceMatrices {
    int dim = 0;
    int n = 0;                    // 2^dim
    std::vector<double> laplace;  // n*n, row-major, unit mesh width
    std::vector<double> mass;     // n*n, row-major, unit mesh width

    double lap(int a, int b) const { return laplace[a * n + b]; }
    double mas(int a, int b) const { return mass[a * n + b]; }
};

/// Shared, lazily built reference matrices for 1 <= p <= 4.
const ReferenceMatrices& reference_matrices(int p);

std::vector<double> reference_laplace(int p);
std::vector<double> reference_mass(int p);

/// Local complex Helmholtz operator of one cell:
///   matrix = hElem^(p-2) * laplace - phiCell * hElem^p * mass
/// with hElem = h * e^{i theta} the complex-scaled mesh width.
struct CellOperator {
    int dim = 0;
    int n = 0;
    Cplx hElem;
    Cplx phiCell;
    std::vector<Cplx> matrix;  // n*n, complex-symmetric

    Cplx at(int a, int b) const { return matrix[a * n + b]; }
};

CellOperator cell_operator(int p, double h, double thetaCell, Cplx phiCell);

/// Integer power of a complex number (exponent may be negative).
Cplx cplx_ipow(Cplx z, int e);

/// The 3^p-point stencil of an interior vertex on a uniform grid, obtained by
/// summing the 2^p adjacent cell contributions. Verification use only.
std::vector<Cplx> assembled_interior_stencil(int p, double h, double theta, Cplx phi);

}  // namespace treemg
