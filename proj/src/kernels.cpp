#include "treemg/kernels.hpp"

#include <cmath>

namespace treemg {

CellKernel make_cell_kernel(const ProblemSpec& spec, int level, const Index& cellIndex,
                            double theta) {
    CellKernel k;
    k.ref = &reference_matrices(spec.dim);
    k.channels = spec.channel_count();
    const double h = std::pow(3.0, -level);
    k.hElem = h * Cplx(std::cos(theta), std::sin(theta));
    k.lapScale = cplx_ipow(k.hElem, spec.dim - 2);
    k.massScale = cplx_ipow(k.hElem, spec.dim);
    k.phi.resize(k.channels);
    double centre[kMaxDim];
    for (int d = 0; d < spec.dim; ++d) centre[d] = (cellIndex[d] + 0.5) * h;
    for (int c = 0; c < k.channels; ++c)
        k.phi[c] =
            spec.phi_at(std::span<const double>(centre, spec.dim), c);
    return k;
}

void zero_accumulators(Vertex& v) {
    for (ChannelState& ch : v.ch) {
        ch.r = Cplx(0.0);
        ch.rHat = Cplx(0.0);
        ch.diag = Cplx(0.0);
    }
}

void accumulate_cell(const CellKernel& k, const ProblemSpec& spec, std::span<const Cplx> adjU,
                     std::span<const Cplx> adjUhat, std::span<Cplx> dR, std::span<Cplx> dRhat,
                     std::span<Cplx> dDiag) {
    const int n = k.ref->n;
    const int nc = k.channels;
    const bool coupled = spec.coupled();
    for (int a = 0; a < n; ++a) {
        for (int c = 0; c < nc; ++c) {
            Cplx accR(0.0), accRhat(0.0);
            for (int b = 0; b < n; ++b) {
                const Cplx A = k.lapScale * k.ref->lap(a, b) -
                               k.phi[c] * k.massScale * k.ref->mas(a, b);
                accR += A * adjU[b * nc + c];
                accRhat += A * adjUhat[b * nc + c];
            }
            if (coupled) {
                for (int j = 0; j < nc; ++j) {
                    if (j == c) continue;
                    const Cplx Aij = spec.coupling_at(c, j) * k.massScale;
                    if (Aij == Cplx(0.0)) continue;
                    for (int b = 0; b < n; ++b) {
                        const Cplx m = Aij * k.ref->mas(a, b);
                        accR += m * adjU[b * nc + j];
                        accRhat += m * adjUhat[b * nc + j];
                    }
                }
            }
            dR[a * nc + c] = -accR;
            dRhat[a * nc + c] = -accRhat;
            dDiag[a * nc + c] =
                k.lapScale * k.ref->lap(a, a) -
                k.phi[c] * k.massScale * k.ref->mas(a, a);
        }
    }
}

void accumulate_cell_rhs(const CellKernel& k, const ProblemSpec& spec, int level,
                         const Index& cellIndex, std::span<Cplx> dB) {
    const int n = k.ref->n;
    const int nc = k.channels;
    const double h = std::pow(3.0, -level);
    double chiCorner[(1 << kMaxDim)];
    double x[kMaxDim];
    for (int c = 0; c < nc; ++c) {
        for (int b = 0; b < n; ++b) {
            for (int d = 0; d < spec.dim; ++d) x[d] = (cellIndex[d] + ((b >> d) & 1)) * h;
            chiCorner[b] = spec.chi_at(std::span<const double>(x, spec.dim), c);
        }
        for (int a = 0; a < n; ++a) {
            Cplx acc(0.0);
            for (int b = 0; b < n; ++b) acc += k.ref->mas(a, b) * chiCorner[b];
            dB[a * nc + c] += k.massScale * acc;
        }
    }
}

void finish_vertex(Vertex& v, bool onBoundary) {
    for (ChannelState& ch : v.ch) {
        if (onBoundary) {
            ch.u = Cplx(0.0);
            ch.r = Cplx(0.0);
            ch.rHat = Cplx(0.0);
        } else {
            ch.r = ch.chi + ch.r;
            ch.rHat = ch.chi + ch.rHat;
        }
    }
}

Cplx jacobi(Cplx r, Cplx diag, Cplx omega) {
    if (std::abs(diag) < 1e-300)
        throw SingularDiagonalError("vanishing operator diagonal (phi*h^2 resonance?)");
    return omega * r / diag;
}

}  // namespace treemg
