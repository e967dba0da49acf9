#include "treemg/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "treemg/elemops.hpp"
#include "treemg/transfer.hpp"

namespace treemg::oracle {

DenseMatrix multiply(const DenseMatrix& A, const DenseMatrix& B) {
    DenseMatrix C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int k = 0; k < A.cols; ++k) {
            const Cplx aik = A.at(i, k);
            if (aik == Cplx(0.0)) continue;
            for (int j = 0; j < B.cols; ++j) C.at(i, j) += aik * B.at(k, j);
        }
    return C;
}

DenseMatrix transpose(const DenseMatrix& A) {
    DenseMatrix T(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) T.at(j, i) = A.at(i, j);
    return T;
}

std::vector<Cplx> mat_vec(const DenseMatrix& A, std::span<const Cplx> x) {
    std::vector<Cplx> y(A.rows, Cplx(0.0));
    for (int i = 0; i < A.rows; ++i) {
        Cplx acc(0.0);
        for (int j = 0; j < A.cols; ++j) acc += A.at(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

std::vector<Cplx> direct_solve(DenseMatrix A, std::vector<Cplx> b, double* relResidual) {
    if (A.rows != A.cols || static_cast<int>(b.size()) != A.rows)
        throw ConfigError("direct_solve: shape mismatch");
    const int n = A.rows;
    const DenseMatrix A0 = relResidual ? A : DenseMatrix();
    const std::vector<Cplx> b0 = b;
    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::abs(A.at(k, k));
        for (int i = k + 1; i < n; ++i) {
            const double m = std::abs(A.at(i, k));
            if (m > best) {
                best = m;
                piv = i;
            }
        }
        if (best < 1e-300) throw SingularMatrixError("singular matrix in direct solve");
        if (piv != k) {
            for (int j = 0; j < n; ++j) std::swap(A.at(k, j), A.at(piv, j));
            std::swap(b[k], b[piv]);
        }
        const Cplx inv = 1.0 / A.at(k, k);
        for (int i = k + 1; i < n; ++i) {
            const Cplx f = A.at(i, k) * inv;
            if (f == Cplx(0.0)) continue;
            A.at(i, k) = Cplx(0.0);
            for (int j = k + 1; j < n; ++j) A.at(i, j) -= f * A.at(k, j);
            b[i] -= f * b[k];
        }
    }
    std::vector<Cplx> x(n, Cplx(0.0));
    for (int i = n - 1; i >= 0; --i) {
        Cplx acc = b[i];
        for (int j = i + 1; j < n; ++j) acc -= A.at(i, j) * x[j];
        x[i] = acc / A.at(i, i);
    }
    if (relResidual) {
        const std::vector<Cplx> Ax = mat_vec(A0, x);
        double rnorm = 0.0, bnorm = 0.0;
        for (int i = 0; i < n; ++i) {
            rnorm += std::norm(b0[i] - Ax[i]);
            bnorm += std::norm(b0[i]);
        }
        *relResidual = bnorm > 0.0 ? std::sqrt(rnorm / bnorm) : std::sqrt(rnorm);
    }
    return x;
}

int interior_count(int p, int level) {
    int n = 1;
    for (int d = 0; d < p; ++d) n *= pow3(level) - 1;
    return n;
}

int interior_flat(int p, int level, const Index& idx) {
    const int m = pow3(level) - 1;
    int flat = 0, stride = 1;
    for (int d = 0; d < p; ++d) {
        flat += (idx[d] - 1) * stride;
        stride *= m;
    }
    return flat;
}

namespace {

bool interior(int p, int level, const Index& idx) {
    const int m = pow3(level);
    for (int d = 0; d < p; ++d)
        if (idx[d] <= 0 || idx[d] >= m) return false;
    return true;
}

Index interior_unflat(int p, int level, int flat) {
    const int m = pow3(level) - 1;
    Index idx = zero_index();
    for (int d = 0; d < p; ++d) {
        idx[d] = 1 + flat % m;
        flat /= m;
    }
    return idx;
}

template <class Fn>
void for_each_cell_index(int p, int level, Fn&& fn) {
    const int m = pow3(level);
    Index ci = zero_index();
    int total = 1;
    for (int d = 0; d < p; ++d) total *= m;
    for (int t = 0; t < total; ++t) {
        int tt = t;
        for (int d = 0; d < p; ++d) {
            ci[d] = tt % m;
            tt /= m;
        }
        fn(ci);
    }
}

Index cell_corner(const Index& ci, int e, int p) {
    Index vi = ci;
    for (int d = 0; d < p; ++d) vi[d] += (e >> d) & 1;
    return vi;
}

Cplx phi_at_centre(const CplxField& phi, int p, int level, const Index& ci) {
    const double h = std::pow(3.0, -level);
    double x[kMaxDim];
    for (int d = 0; d < p; ++d) x[d] = (ci[d] + 0.5) * h;
    return phi(std::span<const double>(x, p));
}

}  // namespace

DenseMatrix dense_assemble(int p, int level, double theta, const CplxField& phi,
                           std::size_t cap) {
    const int n = interior_count(p, level);
    if (static_cast<std::size_t>(n) > cap)
        throw CapacityError("dense_assemble: " + std::to_string(n) + " unknowns exceed the cap");
    DenseMatrix H(n, n);
    const double h = std::pow(3.0, -level);
    const int nc = corner_count(p);
    for_each_cell_index(p, level, [&](const Index& ci) {
        const CellOperator op = cell_operator(p, h, theta, phi_at_centre(phi, p, level, ci));
        for (int a = 0; a < nc; ++a) {
            const Index va = cell_corner(ci, a, p);
            if (!interior(p, level, va)) continue;
            const int ia = interior_flat(p, level, va);
            for (int b = 0; b < nc; ++b) {
                const Index vb = cell_corner(ci, b, p);
                if (!interior(p, level, vb)) continue;
                H.at(ia, interior_flat(p, level, vb)) += op.at(a, b);
            }
        }
    });
    return H;
}

std::vector<Cplx> load_vector(int p, int level, double theta, const ScalarField& chi) {
    const int n = interior_count(p, level);
    std::vector<Cplx> b(n, Cplx(0.0));
    const double h = std::pow(3.0, -level);
    const Cplx hElem = h * Cplx(std::cos(theta), std::sin(theta));
    const Cplx massScale = cplx_ipow(hElem, p);
    const ReferenceMatrices& ref = reference_matrices(p);
    const int nc = corner_count(p);
    for_each_cell_index(p, level, [&](const Index& ci) {
        double chiCorner[1 << kMaxDim];
        for (int e = 0; e < nc; ++e) {
            const Index ve = cell_corner(ci, e, p);
            double x[kMaxDim];
            for (int d = 0; d < p; ++d) x[d] = ve[d] * h;
            chiCorner[e] = chi(std::span<const double>(x, p));
        }
        for (int a = 0; a < nc; ++a) {
            const Index va = cell_corner(ci, a, p);
            if (!interior(p, level, va)) continue;
            Cplx acc(0.0);
            for (int e = 0; e < nc; ++e) acc += ref.mas(a, e) * chiCorner[e];
            b[interior_flat(p, level, va)] += massScale * acc;
        }
    });
    return b;
}

std::vector<Cplx> residual(int p, int level, double theta, const CplxField& phi,
                           std::span<const Cplx> b, std::span<const Cplx> u) {
    const int n = interior_count(p, level);
    std::vector<Cplx> r(b.begin(), b.end());
    const double h = std::pow(3.0, -level);
    const int m = pow3(level);
    const int nc = corner_count(p);
    // Row by row: each interior vertex gathers the matching rows of the local
    // operators of its adjacent cells. Independent of the traversal machinery.
    for (int flat = 0; flat < n; ++flat) {
        const Index idx = interior_unflat(p, level, flat);
        Cplx acc(0.0);
        for (int e = 0; e < nc; ++e) {
            Index ci = idx;
            bool ok = true;
            for (int d = 0; d < p; ++d) {
                ci[d] -= (e >> d) & 1;
                if (ci[d] < 0 || ci[d] > m - 1) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            const CellOperator op = cell_operator(p, h, theta, phi_at_centre(phi, p, level, ci));
            int a = 0;
            for (int d = 0; d < p; ++d)
                if (idx[d] - ci[d] == 1) a |= 1 << d;
            for (int bc = 0; bc < nc; ++bc) {
                const Index vb = cell_corner(ci, bc, p);
                if (!interior(p, level, vb)) continue;
                acc += op.at(a, bc) * u[interior_flat(p, level, vb)];
            }
        }
        r[flat] -= acc;
    }
    return r;
}

DenseMatrix prolongation_matrix(int p, int fineLevel) {
    const int nf = interior_count(p, fineLevel);
    const int ncoarse = interior_count(p, fineLevel - 1);
    DenseMatrix P(nf, ncoarse);
    const int mc = pow3(fineLevel - 1);
    const int nc = corner_count(p);
    for (int flat = 0; flat < nf; ++flat) {
        const Index idx = interior_unflat(p, fineLevel, flat);
        Index q = zero_index();
        int rel[kMaxDim];
        for (int d = 0; d < p; ++d) {
            q[d] = std::min(idx[d] / 3, mc - 1);
            rel[d] = idx[d] - 3 * q[d];
        }
        for (int e = 0; e < nc; ++e) {
            double w = 1.0;
            Index vc = zero_index();
            for (int d = 0; d < p; ++d) {
                vc[d] = q[d] + ((e >> d) & 1);
                w *= prolong_weight_1d(rel[d], (e >> d) & 1);
            }
            if (w == 0.0 || !interior(p, fineLevel - 1, vc)) continue;
            P.at(flat, interior_flat(p, fineLevel - 1, vc)) += w;
        }
    }
    return P;
}

DenseMatrix injection_matrix(int p, int fineLevel) {
    const int nf = interior_count(p, fineLevel);
    const int ncoarse = interior_count(p, fineLevel - 1);
    DenseMatrix I(ncoarse, nf);
    for (int flat = 0; flat < ncoarse; ++flat) {
        Index fi = interior_unflat(p, fineLevel - 1, flat);
        for (int d = 0; d < p; ++d) fi[d] *= 3;
        I.at(flat, interior_flat(p, fineLevel, fi)) = Cplx(1.0);
    }
    return I;
}

DenseMatrix dense_assemble_coupled(int p, int level, double theta, std::span<const Cplx> phis,
                                   std::span<const Cplx> coupling, std::size_t cap) {
    const int n = interior_count(p, level);
    const int nch = static_cast<int>(phis.size());
    if (static_cast<std::size_t>(n * nch) > cap)
        throw CapacityError("dense_assemble_coupled: unknown count exceeds the cap");
    DenseMatrix H(n * nch, n * nch);
    const double h = std::pow(3.0, -level);
    const Cplx hElem = h * Cplx(std::cos(theta), std::sin(theta));
    const Cplx lapScale = cplx_ipow(hElem, p - 2);
    const Cplx massScale = cplx_ipow(hElem, p);
    const ReferenceMatrices& ref = reference_matrices(p);
    const int nc = corner_count(p);
    for_each_cell_index(p, level, [&](const Index& ci) {
        for (int a = 0; a < nc; ++a) {
            const Index va = cell_corner(ci, a, p);
            if (!interior(p, level, va)) continue;
            const int ia = interior_flat(p, level, va);
            for (int b = 0; b < nc; ++b) {
                const Index vb = cell_corner(ci, b, p);
                if (!interior(p, level, vb)) continue;
                const int ib = interior_flat(p, level, vb);
                for (int c = 0; c < nch; ++c) {
                    H.at(ia * nch + c, ib * nch + c) +=
                        lapScale * ref.lap(a, b) - phis[c] * massScale * ref.mas(a, b);
                    for (int j = 0; j < nch; ++j) {
                        if (j == c || coupling.empty()) continue;
                        const Cplx Aij = coupling[c * nch + j];
                        if (Aij != Cplx(0.0)) H.at(ia * nch + c, ib * nch + j) += Aij * massScale * ref.mas(a, b);
                    }
                }
            }
        }
    });
    return H;
}

// ---------------------------------------------------------------------------
// Literal dense transcriptions of the cycle algorithms.

namespace {

using Vec = std::vector<Cplx>;

struct Hierarchy {
    std::vector<DenseMatrix> H;  // indexed by level, 1..levels
    std::vector<Vec> diag;
    std::vector<DenseMatrix> P;  // P[l]: interior(l-1) -> interior(l), l >= 2
    std::vector<DenseMatrix> I;  // I[l]: interior(l) -> interior(l-1), l >= 2
    std::vector<std::vector<int>> succ;
    std::vector<std::vector<bool>> cpoint;
};

Hierarchy build_hierarchy(const CycleSetup& s) {
    Hierarchy h;
    h.H.resize(s.levels + 1);
    h.diag.resize(s.levels + 1);
    h.P.resize(s.levels + 1);
    h.I.resize(s.levels + 1);
    h.succ.resize(s.levels + 1);
    h.cpoint.resize(s.levels + 1);
    for (int l = 1; l <= s.levels; ++l) {
        h.H[l] = dense_assemble(s.p, l, s.theta, s.phi);
        const int n = interior_count(s.p, l);
        h.diag[l].resize(n);
        for (int i = 0; i < n; ++i) h.diag[l][i] = h.H[l].at(i, i);
        if (l >= 2) {
            h.P[l] = prolongation_matrix(s.p, l);
            h.I[l] = injection_matrix(s.p, l);
        }
        h.succ[l].assign(n, s.levels - l);
        h.cpoint[l].assign(n, false);
        for (int flat = 0; flat < n; ++flat) {
            const Index idx = interior_unflat(s.p, l, flat);
            bool cp = true;
            for (int d = 0; d < s.p; ++d)
                if (idx[d] % 3 != 0) cp = false;
            h.cpoint[l][flat] = cp;
        }
    }
    return h;
}

Vec vsub(const Vec& a, const Vec& b) {
    Vec r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
    return r;
}

void vadd_inplace(Vec& a, const Vec& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

Vec restrict_t(const DenseMatrix& P, const Vec& fine) {
    Vec r(P.cols, Cplx(0.0));
    for (int i = 0; i < P.rows; ++i)
        for (int j = 0; j < P.cols; ++j) r[j] += P.at(i, j) * fine[i];
    return r;
}

}  // namespace

std::vector<std::vector<Cplx>> reference_cycles(CycleKind kind, const CycleSetup& setup,
                                                int sweeps) {
    const Hierarchy h = build_hierarchy(setup);
    const int L = setup.levels;
    const OmegaPolicy& pol = setup.policy;

    std::vector<Vec> u(L + 1), b(L + 1), sc(L + 1), sf(L + 1), si(L + 1);
    for (int l = 1; l <= L; ++l) {
        const std::size_t n = interior_count(setup.p, l);
        u[l].assign(n, Cplx(0.0));
        b[l].assign(n, Cplx(0.0));
        sc[l].assign(n, Cplx(0.0));
        sf[l].assign(n, Cplx(0.0));
        si[l].assign(n, Cplx(0.0));
    }
    b[L] = load_vector(setup.p, L, setup.theta, setup.chi);
    if (!setup.initialFineU.empty()) {
        u[L] = setup.initialFineU;
        for (int l = L; l >= 2; --l) u[l - 1] = mat_vec(h.I[l], u[l]);
    }

    auto smoother = [&](int l, const Vec& r) {
        Vec s(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) s[i] = r[i] / h.diag[l][i];
        return s;
    };
    auto omega_vec = [&](int l, int n, bool masked) {
        Vec w(interior_count(setup.p, l));
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = masked ? omega_of(pol, h.succ[l][i], h.cpoint[l][i], n)
                          : omega_unmasked(pol, h.succ[l][i], n);
        return w;
    };

    std::vector<std::vector<Cplx>> iterates;
    for (int n = 1; n <= sweeps; ++n) {
        switch (kind) {
            case CycleKind::TextbookAdd: {
                std::vector<Vec> chi(L + 1), r(L + 1);
                chi[L] = b[L];
                for (int l = L; l >= 1; --l) {
                    r[l] = vsub(chi[l], mat_vec(h.H[l], u[l]));
                    const Vec s = smoother(l, r[l]);
                    for (std::size_t i = 0; i < s.size(); ++i) u[l][i] += pol.omegaS * s[i];
                    if (l > 1) {
                        u[l - 1].assign(u[l - 1].size(), Cplx(0.0));
                        chi[l - 1] = restrict_t(h.P[l], r[l]);
                    }
                }
                for (int l = 2; l <= L; ++l) {
                    const Vec pc = mat_vec(h.P[l], u[l - 1]);
                    for (std::size_t i = 0; i < pc.size(); ++i) u[l][i] += setup.omegaCG * pc[i];
                }
                break;
            }
            case CycleKind::BuFAS: {
                std::vector<Vec> du(L + 1), inj(L + 1), idu(L + 1);
                for (int l = L; l >= 1; --l) {
                    const Vec r = vsub(b[l], mat_vec(h.H[l], u[l]));
                    const Vec w = omega_vec(l, n, true);
                    const Vec s = smoother(l, r);
                    du[l].resize(s.size());
                    for (std::size_t i = 0; i < s.size(); ++i) du[l][i] = w[i] * s[i];
                    if (l > 1) {
                        u[l - 1] = mat_vec(h.I[l], u[l]);
                        inj[l - 1] = u[l - 1];
                        idu[l - 1] = mat_vec(h.I[l], du[l]);
                        const Vec uhat = vsub(u[l], mat_vec(h.P[l], u[l - 1]));
                        const Vec rhat = vsub(b[l], mat_vec(h.H[l], uhat));
                        b[l - 1] = restrict_t(h.P[l], rhat);
                    }
                }
                vadd_inplace(u[1], du[1]);
                for (int l = 2; l <= L; ++l) {
                    Vec corr = vsub(u[l - 1], inj[l - 1]);
                    if (pol.bpx) corr = vsub(corr, idu[l - 1]);
                    const Vec pc = mat_vec(h.P[l], corr);
                    for (std::size_t i = 0; i < u[l].size(); ++i) u[l][i] += du[l][i] + pc[i];
                }
                break;
            }
            case CycleKind::TdAdd:
            case CycleKind::TdBPX: {
                const bool bpx = kind == CycleKind::TdBPX;
                std::vector<Vec> uhat(L + 1);
                for (int l = 1; l <= L; ++l) {
                    if (l > 1) {
                        vadd_inplace(sc[l], mat_vec(h.P[l], sc[l - 1]));
                        if (bpx) {
                            const Vec psi = mat_vec(h.P[l], si[l - 1]);
                            for (std::size_t i = 0; i < psi.size(); ++i)
                                if (!h.cpoint[l][i]) sc[l][i] -= psi[i];
                        }
                    }
                    for (std::size_t i = 0; i < u[l].size(); ++i) {
                        u[l][i] += sc[l][i] + sf[l][i];
                        sf[l][i] = Cplx(0.0);
                    }
                    uhat[l] = l > 1 ? vsub(u[l], mat_vec(h.P[l], u[l - 1])) : u[l];
                }
                for (int l = L; l >= 1; --l) {
                    const Vec r = vsub(b[l], mat_vec(h.H[l], u[l]));
                    const Vec rhat = vsub(b[l], mat_vec(h.H[l], uhat[l]));
                    const Vec s = smoother(l, r);
                    if (bpx) {
                        const Vec w = omega_vec(l, n, false);
                        for (std::size_t i = 0; i < s.size(); ++i)
                            sc[l][i] = h.cpoint[l][i] ? Cplx(0.0) : w[i] * s[i];
                        if (l > 1) {
                            Vec unmasked(s.size());
                            for (std::size_t i = 0; i < s.size(); ++i) unmasked[i] = w[i] * s[i];
                            si[l - 1] = mat_vec(h.I[l], unmasked);
                        }
                    } else {
                        const Vec w = omega_vec(l, n, true);
                        for (std::size_t i = 0; i < s.size(); ++i) sc[l][i] = w[i] * s[i];
                    }
                    if (l > 1) {
                        b[l - 1] = restrict_t(h.P[l], rhat);
                        Vec tot = sf[l];
                        vadd_inplace(tot, sc[l]);
                        sf[l - 1] = mat_vec(h.I[l], tot);
                    }
                }
                break;
            }
        }
        iterates.push_back(u[L]);
    }
    return iterates;
}

}  // namespace treemg::oracle
