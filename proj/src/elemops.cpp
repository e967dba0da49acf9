#include "treemg/elemops.hpp"

#include <cmath>

namespace treemg {

int pow3(int level) {
    int r = 1;
    for (int i = 0; i < level; ++i) r *= 3;
    return r;
}

Cplx cplx_ipow(Cplx z, int e) {
    if (e < 0) return 1.0 / cplx_ipow(z, -e);
    Cplx r = 1.0;
    for (int i = 0; i < e; ++i) r *= z;
    return r;
}

namespace {

void check_dim(int p) {
    if (p < 1 || p > kMaxDim)
        throw ConfigError("element dimension must be in [1," + std::to_string(kMaxDim) + "], got " +
                          std::to_string(p));
}

// 1D linear FEM matrices on [0,1].
constexpr double kLap1[2][2] = {{1.0, -1.0}, {-1.0, 1.0}};
constexpr double kMass1[2][2] = {{1.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 1.0 / 3.0}};

ReferenceMatrices build_reference(int p) {
    ReferenceMatrices m;
    m.dim = p;
    m.n = corner_count(p);
    m.laplace.assign(static_cast<std::size_t>(m.n) * m.n, 0.0);
    m.mass.assign(static_cast<std::size_t>(m.n) * m.n, 0.0);
    for (int a = 0; a < m.n; ++a) {
        for (int b = 0; b < m.n; ++b) {
            double mass = 1.0;
            for (int d = 0; d < p; ++d) mass *= kMass1[(a >> d) & 1][(b >> d) & 1];
            m.mass[a * m.n + b] = mass;
            // Stiffness: one axis takes the 1D Laplace factor, the rest mass.
            double lap = 0.0;
            for (int d = 0; d < p; ++d) {
                double t = kLap1[(a >> d) & 1][(b >> d) & 1];
                for (int i = 0; i < p; ++i)
                    if (i != d) t *= kMass1[(a >> i) & 1][(b >> i) & 1];
                lap += t;
            }
            m.laplace[a * m.n + b] = lap;
        }
    }
    return m;
}

}  // namespace

const ReferenceMatrices& reference_matrices(int p) {
    check_dim(p);
    static const ReferenceMatrices tables[kMaxDim] = {
        build_reference(1), build_reference(2), build_reference(3), build_reference(4)};
    return tables[p - 1];
}

std::vector<double> reference_laplace(int p) { return reference_matrices(p).laplace; }

std::vector<double> reference_mass(int p) { return reference_matrices(p).mass; }

CellOperator cell_operator(int p, double h, double thetaCell, Cplx phiCell) {
    check_dim(p);
    if (!(h > 0.0)) throw ConfigError("cell mesh width must be positive");
    const ReferenceMatrices& ref = reference_matrices(p);
    CellOperator op;
    op.dim = p;
    op.n = ref.n;
    op.hElem = h * Cplx(std::cos(thetaCell), std::sin(thetaCell));
    op.phiCell = phiCell;
    const Cplx lapScale = cplx_ipow(op.hElem, p - 2);
    const Cplx massScale = phiCell * cplx_ipow(op.hElem, p);
    op.matrix.resize(ref.laplace.size());
    for (std::size_t i = 0; i < op.matrix.size(); ++i)
        op.matrix[i] = lapScale * ref.laplace[i] - massScale * ref.mass[i];
    return op;
}

std::vector<Cplx> assembled_interior_stencil(int p, double h, double theta, Cplx phi) {
    check_dim(p);
    const CellOperator op = cell_operator(p, h, theta, phi);
    int points = 1;
    for (int d = 0; d < p; ++d) points *= 3;
    std::vector<Cplx> stencil(points, Cplx(0.0));
    // The vertex sits at the local corner e of the cell offset by -e; corner b
    // of that cell lands at stencil offset b - e + 1 per axis.
    const int n = corner_count(p);
    for (int e = 0; e < n; ++e) {
        for (int b = 0; b < n; ++b) {
            int flat = 0, stride = 1;
            for (int d = 0; d < p; ++d) {
                const int off = ((b >> d) & 1) - ((e >> d) & 1) + 1;
                flat += off * stride;
                stride *= 3;
            }
            stencil[flat] += op.at(e, b);
        }
    }
    return stencil;
}

}  // namespace treemg
