#include "treemg/cycles.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "treemg/transfer.hpp"

namespace treemg {

Cplx two_phase_schedule(int n) {
    if (n < 1) throw ConfigError("sweep counter starts at 1");
    const Cplx w1 = 0.01 * Cplx(std::sqrt(3.0), -1.0);
    return (n % 2 == 1) ? w1 : -std::conj(w1);
}

Cplx omega_unmasked(const OmegaPolicy& pol, int succ, int n) {
    const Cplx ws = pol.twoPhase ? two_phase_schedule(n) : pol.omegaS;
    switch (pol.kind) {
        case OmegaKind::JacobiOnly: return succ == 0 ? ws : Cplx(0.0);
        case OmegaKind::UndampedCG: return ws;
        case OmegaKind::LGrid: return succ <= pol.lGrid ? ws : Cplx(0.0);
        case OmegaKind::Exponential: return cplx_ipow(ws, succ + 1);
        case OmegaKind::Transition: {
            const double e = (1.0 - 1.0 / static_cast<double>(n)) * (succ + 1);
            if (e == 0.0) return Cplx(1.0);
            return std::pow(ws, e);
        }
    }
    return Cplx(0.0);
}

Cplx omega_of(const OmegaPolicy& pol, int succ, bool cPoint, int n) {
    if (pol.hbMask && cPoint) return Cplx(0.0);
    return omega_unmasked(pol, succ, n);
}

namespace {

Index corner_index(const Index& cellIdx, int e, int dim) {
    Index vi = cellIdx;
    for (int d = 0; d < dim; ++d) vi[d] += (e >> d) & 1;
    return vi;
}

double restriction_weight(const ParentStencil& ps, int e, int dim) {
    double w = 1.0;
    for (int d = 0; d < dim; ++d) w *= prolong_weight_1d(ps.rel[d], (e >> d) & 1);
    return w;
}

/// One coarse-to-fine traversal of the single-sweep additive FAS, realising
/// the cycle line-by-line on the traversal events: the coarse-correction /
/// solution-update / surplus block at touch-first (parents precede children),
/// residual accumulation in enterCell, and the smoother staging, restriction
/// and injections at touch-last.
class TdSweep {
  public:
    TdSweep(Spacetree& tree, const ProblemSpec& spec, const OmegaPolicy& pol, int n,
            const SweepOptions& opt)
        : tree_(tree),
          spec_(spec),
          pol_(pol),
          n_(n),
          opt_(opt),
          nc_(spec.channel_count()),
          ncorner_(corner_count(spec.dim)) {
        stats_.maxNorm.assign(nc_, 0.0);
        stats_.euclidNorm.assign(nc_, 0.0);
        stats_.hNorm.assign(nc_, 0.0);
        const std::size_t m = ncorner_ * nc_;
        adjU_.resize(m);
        adjUhat_.resize(m);
        dR_.resize(m);
        dRhat_.resize(m);
        dDiag_.resize(m);
        dB_.resize(m);
        smooth_.resize(nc_);
    }

    SweepStats run() {
        TraversalEvents ev;
        ev.touchVertexFirstTime = [this](Spacetree&, const VertexRef& vr) { touch_first(vr); };
        ev.createHangingVertex = [this](Spacetree&, const VertexRef& vr) { create_hanging(vr); };
        ev.enterCell = [this](Spacetree&, const CellRef& cr) { enter_cell(cr); };
        ev.leaveCell = [this](Spacetree&, const CellRef& cr) { leave_cell(cr); };
        ev.touchVertexLastTime = [this](Spacetree&, const VertexRef& vr) { touch_last(vr); };
        ev.destroyHangingVertex = [this](Spacetree&, const VertexRef& vr) { destroy_hanging(vr); };
        tree_.traverse(ev);
        if (tree_.structure_dirty()) {
            tree_.classify();
            tree_.clear_structure_dirty();
        }
        for (int c = 0; c < nc_; ++c) {
            stats_.euclidNorm[c] = std::sqrt(stats_.euclidNorm[c]);
            stats_.hNorm[c] = std::sqrt(stats_.hNorm[c]);
        }
        return std::move(stats_);
    }

  private:
    void touch_first(const VertexRef& vr) {
        Vertex& v = *vr.v;
        zero_accumulators(v);
        for (ChannelState& s : v.ch) {
            s.chi = Cplx(0.0);
            s.siNext = Cplx(0.0);
        }
        if (vr.level > 0) {
            const ParentStencil ps = tree_.parent_stencil(vr.level, vr.index);
            const Vertex* par[1 << kMaxDim];
            tree_.parent_corner_vertices(ps, vr.level, par);
                        Cplx cu[1 << kMaxDim], csc[1 << kMaxDim], csi[1 << kMaxDim];
            for (int c = 0; c < nc_; ++c) {
                for (int e = 0; e < ncorner_; ++e) {
                    const ChannelState* pc = par[e] ? &par[e]->ch[c] : nullptr;
                    cu[e] = pc ? pc->u : Cplx(0.0);
                    csc[e] = pc ? pc->sc : Cplx(0.0);
                    csi[e] = (pol_.bpx && pc) ? pc->si : Cplx(0.0);
                }
                ChannelState& s = v.ch[c];
                s.sc += prolong(csc, ps.rel.data(), spec_.dim);
                if (pol_.bpx && !v.cPoint) s.sc -= prolong(csi, ps.rel.data(), spec_.dim);
                s.u += s.sc + s.sf;
                s.sf = Cplx(0.0);
                s.uHat = s.u - prolong(cu, ps.rel.data(), spec_.dim);
            }
        } else {
            for (ChannelState& s : v.ch) {
                s.u += s.sc + s.sf;
                s.sf = Cplx(0.0);
                s.uHat = Cplx(0.0);
            }
        }
        if (v.onBoundary) {
            for (ChannelState& s : v.ch) {
                s.u = Cplx(0.0);
                s.uHat = Cplx(0.0);
            }
        }
    }

    void create_hanging(const VertexRef& vr) {
        Vertex& v = *vr.v;
        zero_accumulators(v);
        const ParentStencil ps = tree_.parent_stencil(vr.level, vr.index);
        const Vertex* par[1 << kMaxDim];
        tree_.parent_corner_vertices(ps, vr.level, par);
                Cplx cu[1 << kMaxDim], csc[1 << kMaxDim], csi[1 << kMaxDim];
        for (int c = 0; c < nc_; ++c) {
            for (int e = 0; e < ncorner_; ++e) {
                const ChannelState* pc = par[e] ? &par[e]->ch[c] : nullptr;
                cu[e] = pc ? pc->u : Cplx(0.0);
                csc[e] = pc ? pc->sc : Cplx(0.0);
                csi[e] = (pol_.bpx && pc) ? pc->si : Cplx(0.0);
            }
            ChannelState& s = v.ch[c];
            s.u = prolong(cu, ps.rel.data(), spec_.dim);
            s.sc = prolong(csc, ps.rel.data(), spec_.dim);
            if (pol_.bpx && !v.cPoint) s.sc -= prolong(csi, ps.rel.data(), spec_.dim);
            s.uHat = Cplx(0.0);
            s.sf = Cplx(0.0);
            s.si = Cplx(0.0);
            s.siNext = Cplx(0.0);
            s.chi = Cplx(0.0);
            if (v.onBoundary) {
                s.u = Cplx(0.0);
                s.sc = Cplx(0.0);
            }
        }
    }

    void enter_cell(const CellRef& cr) {
        if (opt_.applyMarks && cr.cell->refineMark) {
            cr.cell->refineMark = false;
            if (!cr.cell->refined && std::pow(3.0, -cr.level) > opt_.hMinRefine) {
                tree_.refine_cell(cr.level, cr.index);
                ++stats_.refinedCells;
            }
        }
        const CellKernel k = make_cell_kernel(spec_, cr.level, cr.index, cr.cell->theta);
        Vertex* vs[1 << kMaxDim];
        for (int e = 0; e < ncorner_; ++e)
            vs[e] = tree_.find_vertex(cr.level, corner_index(cr.index, e, spec_.dim));
        for (int e = 0; e < ncorner_; ++e)
            for (int c = 0; c < nc_; ++c) {
                const ChannelState& s = vs[e]->ch[c];
                adjU_[e * nc_ + c] = s.u;
                adjUhat_[e * nc_ + c] = s.uHat;
            }
        accumulate_cell(k, spec_, adjU_, adjUhat_, dR_, dRhat_, dDiag_);
        for (int e = 0; e < ncorner_; ++e)
            for (int c = 0; c < nc_; ++c) {
                ChannelState& s = vs[e]->ch[c];
                s.r += dR_[e * nc_ + c];
                s.rHat += dRhat_[e * nc_ + c];
                s.diag += dDiag_[e * nc_ + c];
            }
        if (!cr.cell->refined) {
            std::fill(dB_.begin(), dB_.end(), Cplx(0.0));
            accumulate_cell_rhs(k, spec_, cr.level, cr.index, dB_);
            for (int e = 0; e < ncorner_; ++e)
                for (int c = 0; c < nc_; ++c)
                    vs[e]->ch[c].chi += dB_[e * nc_ + c];
        }
        if (opt_.checkLemma1 && cr.level >= 1) {
            for (int e = 0; e < ncorner_; ++e) {
                const Vertex* fv = vs[e];
                if (fv->hangingNow || !fv->cPoint) continue;
                Index wi = corner_index(cr.index, e, spec_.dim);
                for (int d = 0; d < spec_.dim; ++d) wi[d] /= 3;
                const Vertex* w = tree_.find_vertex(cr.level - 1, wi);
                if (!w) continue;
                for (int c = 0; c < nc_; ++c) {
                    const double err = std::abs(fv->ch[c].u - w->ch[c].u);
                    stats_.lemma1MaxError = std::max(stats_.lemma1MaxError, err);
                }
            }
        }
    }

    void leave_cell(const CellRef& cr) {
        if (!opt_.applyMarks || !cr.cell->eraseMark) return;
        cr.cell->eraseMark = false;
        if (!cr.cell->refined) return;
        bool flat = true;
        const int blockCells = pow3(spec_.dim) / pow3(0);  // 3^p
        for (int t = 0; t < blockCells && flat; ++t) {
            Index ci = zero_index();
            int tt = t;
            for (int d = 0; d < spec_.dim; ++d) {
                ci[d] = 3 * cr.index[d] + tt % 3;
                tt /= 3;
            }
            const Cell* child = tree_.find_cell(cr.level + 1, ci);
            if (child && child->refined) flat = false;
        }
        if (!flat) return;
        tree_.erase_subtree(cr.level, cr.index);
        ++stats_.erasedCells;
    }

    void touch_last(const VertexRef& vr) {
        Vertex& v = *vr.v;
        if (tree_.structure_dirty()) tree_.refresh_classification(vr.level, vr.index, v);
        finish_vertex(v, v.onBoundary);
        for (ChannelState& s : v.ch) s.si = s.siNext;
        if (opt_.collectNorms && !v.refined && !v.onBoundary) {
            ++stats_.updatedFineVertices;
            const double hp = std::pow(std::pow(3.0, -vr.level), spec_.dim);
            for (int c = 0; c < nc_; ++c) {
                const double m = std::abs(v.ch[c].r);
                auto ci = c;
                stats_.maxNorm[ci] = std::max(stats_.maxNorm[ci], m);
                stats_.euclidNorm[ci] += m * m;
                stats_.hNorm[ci] += hp * m * m;
            }
        }
        const int ellMin = tree_.ell_min();
        if (vr.level < ellMin) {
            for (ChannelState& s : v.ch) s.sc = Cplx(0.0);
            return;
        }
        for (int c = 0; c < nc_; ++c) {
            const ChannelState& s = v.ch[c];
            smooth_[c] = v.onBoundary ? Cplx(0.0) : jacobi(s.r, s.diag, Cplx(1.0));
        }
        const Cplx wRaw = omega_unmasked(pol_, v.succ, n_);
        if (pol_.bpx) {
            for (int c = 0; c < nc_; ++c)
                v.ch[c].sc =
                    v.cPoint ? Cplx(0.0) : wRaw * smooth_[c];
        } else {
            const Cplx w = (pol_.hbMask && v.cPoint) ? Cplx(0.0) : wRaw;
            for (int c = 0; c < nc_; ++c)
                v.ch[c].sc =
                    w == Cplx(0.0) ? Cplx(0.0) : w * smooth_[c];
        }
        if (vr.level > ellMin) {
            if (v.cPoint) {
                Index wi = vr.index;
                for (int d = 0; d < spec_.dim; ++d) wi[d] /= 3;
                Vertex* w = tree_.find_vertex(vr.level - 1, wi);
                if (w) {
                    for (int c = 0; c < nc_; ++c) {
                        auto ci = c;
                        w->ch[ci].sf = v.ch[ci].sf + v.ch[ci].sc;
                        if (pol_.bpx) w->ch[ci].siNext = wRaw * smooth_[ci];
                    }
                }
            }
            const ParentStencil ps = tree_.parent_stencil(vr.level, vr.index);
            Vertex* par[1 << kMaxDim];
            tree_.parent_corner_vertices(ps, vr.level, par);
            for (int e = 0; e < ncorner_; ++e) {
                if (!par[e]) continue;
                const double wgt = restriction_weight(ps, e, spec_.dim);
                if (wgt == 0.0) continue;
                for (int c = 0; c < nc_; ++c)
                    par[e]->ch[c].chi += wgt * v.ch[c].rHat;
            }
        }
    }

    void destroy_hanging(const VertexRef& vr) {
        Vertex& v = *vr.v;
        if (vr.level <= tree_.ell_min()) return;
        const ParentStencil ps = tree_.parent_stencil(vr.level, vr.index);
        Vertex* par[1 << kMaxDim];
        tree_.parent_corner_vertices(ps, vr.level, par);
        for (int c = 0; c < nc_; ++c) {
            ChannelState& s = v.ch[c];
            const Cplx rhat = v.onBoundary ? Cplx(0.0) : s.chi + s.rHat;
            s.rHat = rhat;
            for (int e = 0; e < ncorner_; ++e) {
                if (!par[e]) continue;
                const double wgt = restriction_weight(ps, e, spec_.dim);
                if (wgt != 0.0) par[e]->ch[c].chi += wgt * rhat;
            }
        }
    }

    Spacetree& tree_;
    const ProblemSpec& spec_;
    const OmegaPolicy& pol_;
    const int n_;
    const SweepOptions& opt_;
    const int nc_;
    const int ncorner_;
    SweepStats stats_;
    std::vector<Cplx> adjU_, adjUhat_, dR_, dRhat_, dDiag_, dB_, smooth_;
};

}  // namespace

SweepStats td_add(Spacetree& tree, const ProblemSpec& spec, const OmegaPolicy& pol, int n,
                  const SweepOptions& opt) {
    if (pol.bpx) throw ConfigError("td_add: policy has bpx set, use td_bpx");
    if (n < 1) throw ConfigError("sweep counter starts at 1");
    spec.validate();
    TdSweep sweep(tree, spec, pol, n, opt);
    return sweep.run();
}

SweepStats td_bpx(Spacetree& tree, const ProblemSpec& spec, const OmegaPolicy& polIn, int n,
                  const SweepOptions& opt) {
    if (n < 1) throw ConfigError("sweep counter starts at 1");
    spec.validate();
    OmegaPolicy pol = polIn;
    pol.bpx = true;
    pol.hbMask = false;  // masking is realised structurally
    TdSweep sweep(tree, spec, pol, n, opt);
    return sweep.run();
}

// ---------------------------------------------------------------------------
// Level-pass machinery shared by the bottom-up reference cycles.

namespace {

struct LevelAccum {
    // hanging-position accumulators, keyed by packed index; one entry per channel
    std::unordered_map<Key, std::vector<Cplx>> map;

    std::vector<Cplx>& at(Key k, int nc) {
        auto it = map.find(k);
        if (it == map.end()) it = map.emplace(k, std::vector<Cplx>(nc, Cplx(0.0))).first;
        return it->second;
    }
};

}  // namespace

void bu_fas(Spacetree& tree, const ProblemSpec& spec, const OmegaPolicy& pol, int n) {
    spec.validate();
    if (tree.structure_dirty()) {
        tree.classify();
        tree.clear_structure_dirty();
    }
    const int p = spec.dim;
    const int nc = spec.channel_count();
    const int ncor = corner_count(p);
    const int L = tree.depth();
    const int lmin = tree.ell_min();
    std::vector<LevelAccum> hangStash(L + 1);

    const std::size_t m = ncor * nc;
    std::vector<Cplx> adjU(m), adjUhat(m), dR(m), dRhat(m), dDiag(m), dB(m);

    // -------- downward sweep: fine to coarse
    for (int ell = L; ell >= lmin; --ell) {
        // Residual of the current iterate, du staging. b on this level is the
        // leaf-cell load plus (for covered vertices) the restriction written
        // while processing level ell+1.
        tree.for_each_vertex_at(ell, [&](const Index&, Vertex& v) {
            for (ChannelState& s : v.ch) {
                s.r = Cplx(0.0);
                s.diag = Cplx(0.0);
                if (ell == L) s.chi = Cplx(0.0);
            }
        });
        tree.for_each_cell_at(ell, [&](const Index& ci, Cell& cell) {
            const CellKernel k = make_cell_kernel(spec, ell, ci, cell.theta);
            Vertex* vs[1 << kMaxDim];
            bool hang[1 << kMaxDim];
            for (int e = 0; e < ncor; ++e) {
                const Index vi = corner_index(ci, e, p);
                vs[e] = tree.find_vertex(ell, vi);
                hang[e] = vs[e]->hanging;
                for (int c = 0; c < nc; ++c)
                    adjU[e * nc + c] =
                        hang[e] ? tree.u_at(ell, vi, c) : vs[e]->ch[c].u;
            }
            std::fill(adjUhat.begin(), adjUhat.end(), Cplx(0.0));
            accumulate_cell(k, spec, adjU, adjUhat, dR, dRhat, dDiag);
            for (int e = 0; e < ncor; ++e) {
                if (hang[e]) continue;
                for (int c = 0; c < nc; ++c) {
                    vs[e]->ch[c].r += dR[e * nc + c];
                    vs[e]->ch[c].diag += dDiag[e * nc + c];
                }
            }
            if (!cell.refined) {
                std::fill(dB.begin(), dB.end(), Cplx(0.0));
                accumulate_cell_rhs(k, spec, ell, ci, dB);
                for (int e = 0; e < ncor; ++e) {
                    if (hang[e]) continue;
                    for (int c = 0; c < nc; ++c)
                        vs[e]->ch[c].chi += dB[e * nc + c];
                }
            }
        });
        tree.for_each_vertex_at(ell, [&](const Index&, Vertex& v) {
            if (v.hanging) return;
            const Cplx w = omega_of(pol, v.succ, v.cPoint, n);
            for (int c = 0; c < nc; ++c) {
                ChannelState& s = v.ch[c];
                s.r = v.onBoundary ? Cplx(0.0) : s.chi + s.r;
                s.sc = (v.onBoundary || w == Cplx(0.0)) ? Cplx(0.0) : w * jacobi(s.r, s.diag, Cplx(1.0));
            }
        });
        if (ell == lmin) break;

        // Injection refresh plus the pre-update snapshots the prolongation of
        // pure coarse corrections needs: sf holds the injected (pre-update)
        // solution, si the injected smoother update of the finer level.
        tree.for_each_vertex_at(ell - 1, [&](const Index& wi, Vertex& w) {
            if (w.hanging) return;
            Index fi = wi;
            for (int d = 0; d < p; ++d) fi[d] *= 3;
            const Vertex* fv = tree.find_vertex(ell, fi);
            const bool coinc = fv && !fv->hanging;
            for (int c = 0; c < nc; ++c) {
                ChannelState& s = w.ch[c];
                if (coinc) s.u = fv->ch[c].u;
                s.sf = s.u;
                s.si = coinc ? fv->ch[c].sc : Cplx(0.0);
                s.chi = Cplx(0.0);  // about to receive this level's restriction
            }
        });
        hangStash[ell - 1].map.clear();

        // Hierarchical surplus and residual, restriction of r-hat.
        tree.for_each_vertex_at(ell, [&](const Index& idx, Vertex& v) {
            if (v.hanging) return;
            const ParentStencil ps = tree.parent_stencil(ell, idx);
            const Vertex* par[1 << kMaxDim];
            tree.parent_corner_vertices(ps, ell, par);
            for (int c = 0; c < nc; ++c) {
                ChannelState& s = v.ch[c];
                if (v.onBoundary) {
                    s.uHat = Cplx(0.0);
                } else {
                    Cplx cu[1 << kMaxDim];
                    for (int e = 0; e < ncor; ++e) {
                        if (!par[e]) {
                            cu[e] = Cplx(0.0);
                        } else if (par[e]->hanging) {
                            Index pi = zero_index();
                            for (int d = 0; d < p; ++d) pi[d] = ps.q[d] + ((e >> d) & 1);
                            cu[e] = tree.u_at(ell - 1, pi, c);
                        } else {
                            cu[e] = par[e]->ch[c].u;
                        }
                    }
                    s.uHat = s.u - prolong(cu, ps.rel.data(), p);
                }
                s.rHat = Cplx(0.0);
            }
        });
        LevelAccum hangRhat, hangB;
        tree.for_each_cell_at(ell, [&](const Index& ci, Cell& cell) {
            const CellKernel k = make_cell_kernel(spec, ell, ci, cell.theta);
            Vertex* vs[1 << kMaxDim];
            bool hang[1 << kMaxDim];
            Key keys[1 << kMaxDim];
            for (int e = 0; e < ncor; ++e) {
                const Index vi = corner_index(ci, e, p);
                vs[e] = tree.find_vertex(ell, vi);
                hang[e] = vs[e]->hanging;
                keys[e] = pack_index(p, vi);
                for (int c = 0; c < nc; ++c)
                    adjUhat[e * nc + c] =
                        hang[e] ? Cplx(0.0) : vs[e]->ch[c].uHat;
            }
            std::fill(adjU.begin(), adjU.end(), Cplx(0.0));
            accumulate_cell(k, spec, adjU, adjUhat, dR, dRhat, dDiag);
            for (int e = 0; e < ncor; ++e) {
                for (int c = 0; c < nc; ++c) {
                    const Cplx val = dRhat[e * nc + c];
                    if (hang[e])
                        hangRhat.at(keys[e], nc)[c] += val;
                    else
                        vs[e]->ch[c].rHat += val;
                }
            }
            if (!cell.refined) {
                std::fill(dB.begin(), dB.end(), Cplx(0.0));
                accumulate_cell_rhs(k, spec, ell, ci, dB);
                for (int e = 0; e < ncor; ++e) {
                    if (!hang[e]) continue;
                    for (int c = 0; c < nc; ++c)
                        hangB.at(keys[e], nc)[c] += dB[e * nc + c];
                }
            }
        });
        auto scatter_rhat = [&](const Index& idx, const Cplx* vals) {
            const ParentStencil ps = tree.parent_stencil(ell, idx);
            Vertex* par[1 << kMaxDim];
            tree.parent_corner_vertices(ps, ell, par);
            for (int e = 0; e < ncor; ++e) {
                const double wgt = restriction_weight(ps, e, p);
                if (wgt == 0.0) continue;
                Index pi = zero_index();
                for (int d = 0; d < p; ++d) pi[d] = ps.q[d] + ((e >> d) & 1);
                if (par[e] && !par[e]->hanging) {
                    for (int c = 0; c < nc; ++c)
                        par[e]->ch[c].chi += wgt * vals[c];
                } else {
                    auto& acc = hangStash[ell - 1].at(pack_index(p, pi), nc);
                    for (int c = 0; c < nc; ++c) acc[c] += wgt * vals[c];
                }
            }
        };
        tree.for_each_vertex_at(ell, [&](const Index& idx, Vertex& v) {
            if (v.hanging) return;
            Cplx vals[16];
            for (int c = 0; c < nc; ++c) {
                ChannelState& s = v.ch[c];
                s.rHat = v.onBoundary ? Cplx(0.0) : s.chi + s.rHat;
                vals[c] = s.rHat;
            }
            scatter_rhat(idx, vals);
        });
        // Hanging rows: load + inbound restriction + surplus matvec, folded to
        // the parent level with the transposed interpolation weights.
        {
            auto& inbound = hangStash[ell].map;
            std::vector<Key> keys;
            for (const auto& [k2, acc] : hangRhat.map) keys.push_back(k2);
            for (const auto& [k2, acc] : hangB.map)
                if (!hangRhat.map.count(k2)) keys.push_back(k2);
            for (const auto& [k2, acc] : inbound)
                if (!hangRhat.map.count(k2) && !hangB.map.count(k2)) keys.push_back(k2);
            std::sort(keys.begin(), keys.end());
            for (Key k2 : keys) {
                const Index idx = unpack_index(p, k2);
                const Vertex* hv = tree.find_vertex(ell, idx);
                if (hv && !hv->hanging) continue;  // only hanging rows fold down
                if (tree.vertex_on_boundary(ell, idx)) continue;
                Cplx vals[16];
                for (int c = 0; c < nc; ++c) {
                    Cplx t(0.0);
                    if (auto it = hangRhat.map.find(k2); it != hangRhat.map.end()) t += it->second[c];
                    if (auto it = hangB.map.find(k2); it != hangB.map.end()) t += it->second[c];
                    if (auto it = inbound.find(k2); it != inbound.end()) t += it->second[c];
                    vals[c] = t;
                }
                scatter_rhat(idx, vals);
            }
        }
    }

    // -------- upward sweep: apply du plus the prolongated pure coarse correction
    std::function<Cplx(int, const Index&, int)> corr_at = [&](int lv, const Index& idx, int c) -> Cplx {
        if (lv < lmin) return Cplx(0.0);
        const Vertex* v = tree.find_vertex(lv, idx);
        if (v && !v->hanging) return v->ch[c].siNext;
        const ParentStencil ps = tree.parent_stencil(lv, idx);
        Cplx cc[1 << kMaxDim];
        for (int e = 0; e < ncor; ++e) {
            Index pi = zero_index();
            for (int d = 0; d < p; ++d) pi[d] = ps.q[d] + ((e >> d) & 1);
            cc[e] = corr_at(lv - 1, pi, c);
        }
        return prolong(cc, ps.rel.data(), p);
    };
    for (int ell = lmin; ell <= L; ++ell) {
        tree.for_each_vertex_at(ell, [&](const Index& idx, Vertex& v) {
            if (v.hanging) return;
            if (v.onBoundary) {
                for (ChannelState& s : v.ch) s.siNext = Cplx(0.0);
                return;
            }
            const ParentStencil ps = tree.parent_stencil(ell, idx);
            const Vertex* par[1 << kMaxDim];
            if (ell > lmin) tree.parent_corner_vertices(ps, ell, par);
            for (int c = 0; c < nc; ++c) {
                ChannelState& s = v.ch[c];
                Cplx upd = s.sc;
                if (ell > lmin) {
                    Cplx term[1 << kMaxDim];
                    for (int e = 0; e < ncor; ++e) {
                        Index pi = zero_index();
                        for (int d = 0; d < p; ++d) pi[d] = ps.q[d] + ((e >> d) & 1);
                        if (par[e] && !par[e]->hanging) {
                            const ChannelState& ws = par[e]->ch[c];
                            // u - I u_old (- I du with bpx): prolong only the correction
                            term[e] = ws.u - ws.sf - (pol.bpx ? ws.si : Cplx(0.0));
                        } else {
                            term[e] = corr_at(ell - 1, pi, c);
                        }
                    }
                    upd += prolong(term, ps.rel.data(), p);
                }
                s.u += upd;
                s.siNext = upd;  // full correction of this cycle, for hanging interpolation
            }
        });
    }
}

void textbook_add(Spacetree& tree, const ProblemSpec& spec, Cplx omegaS, Cplx omegaCG) {
    spec.validate();
    if (tree.structure_dirty()) {
        tree.classify();
        tree.clear_structure_dirty();
    }
    const int p = spec.dim;
    const int nc = spec.channel_count();
    const int ncor = corner_count(p);
    const int L = tree.depth();
    const int lmin = tree.ell_min();
    for (int ell = 0; ell < L; ++ell) {
        bool regular = true;
        tree.for_each_cell_at(ell, [&](const Index&, Cell& c) {
            if (!c.refined) regular = false;
        });
        if (!regular) throw UnsupportedConfigError("textbook_add requires a regular hierarchy");
    }

    const std::size_t m = ncor * nc;
    std::vector<Cplx> adjU(m), adjUhat(m), dR(m), dRhat(m), dDiag(m), dB(m);

    for (int ell = L; ell >= lmin; --ell) {
        tree.for_each_vertex_at(ell, [&](const Index&, Vertex& v) {
            for (ChannelState& s : v.ch) {
                s.r = Cplx(0.0);
                s.diag = Cplx(0.0);
                if (ell == L) s.chi = Cplx(0.0);
            }
        });
        tree.for_each_cell_at(ell, [&](const Index& ci, Cell& cell) {
            const CellKernel k = make_cell_kernel(spec, ell, ci, cell.theta);
            Vertex* vs[1 << kMaxDim];
            for (int e = 0; e < ncor; ++e) {
                vs[e] = tree.find_vertex(ell, corner_index(ci, e, p));
                for (int c = 0; c < nc; ++c)
                    adjU[e * nc + c] = vs[e]->ch[c].u;
            }
            std::fill(adjUhat.begin(), adjUhat.end(), Cplx(0.0));
            accumulate_cell(k, spec, adjU, adjUhat, dR, dRhat, dDiag);
            for (int e = 0; e < ncor; ++e)
                for (int c = 0; c < nc; ++c) {
                    vs[e]->ch[c].r += dR[e * nc + c];
                    vs[e]->ch[c].diag += dDiag[e * nc + c];
                }
            if (!cell.refined && ell == L) {
                std::fill(dB.begin(), dB.end(), Cplx(0.0));
                accumulate_cell_rhs(k, spec, ell, ci, dB);
                for (int e = 0; e < ncor; ++e)
                    for (int c = 0; c < nc; ++c)
                        vs[e]->ch[c].chi += dB[e * nc + c];
            }
        });
        // Residual first, then the damped Jacobi step on the same residual.
        tree.for_each_vertex_at(ell, [&](const Index&, Vertex& v) {
            for (int c = 0; c < nc; ++c) {
                ChannelState& s = v.ch[c];
                s.r = v.onBoundary ? Cplx(0.0) : s.chi + s.r;
                if (!v.onBoundary) s.u += omegaS * jacobi(s.r, s.diag, Cplx(1.0));
            }
        });
        if (ell > lmin) {
            tree.for_each_vertex_at(ell - 1, [&](const Index&, Vertex& w) {
                for (ChannelState& s : w.ch) {
                    s.u = Cplx(0.0);  // correction scheme: corrections start from zero
                    s.chi = Cplx(0.0);
                }
            });
            tree.for_each_vertex_at(ell, [&](const Index& idx, Vertex& v) {
                const ParentStencil ps = tree.parent_stencil(ell, idx);
                Vertex* par[1 << kMaxDim];
                tree.parent_corner_vertices(ps, ell, par);
                for (int e = 0; e < ncor; ++e) {
                    if (!par[e]) continue;
                    const double wgt = restriction_weight(ps, e, p);
                    if (wgt == 0.0) continue;
                    for (int c = 0; c < nc; ++c)
                        par[e]->ch[c].chi += wgt * v.ch[c].r;
                }
            });
        }
    }
    for (int ell = lmin + 1; ell <= L; ++ell) {
        tree.for_each_vertex_at(ell, [&](const Index& idx, Vertex& v) {
            if (v.onBoundary) return;
            const ParentStencil ps = tree.parent_stencil(ell, idx);
            const Vertex* par[1 << kMaxDim];
            tree.parent_corner_vertices(ps, ell, par);
            for (int c = 0; c < nc; ++c) {
                Cplx cu[1 << kMaxDim];
                for (int e = 0; e < ncor; ++e) cu[e] = par[e] ? par[e]->ch[c].u : Cplx(0.0);
                v.ch[c].u +=
                    omegaCG * prolong(cu, ps.rel.data(), p);
            }
        });
    }
}

SweepStats evaluate_residual_norms(Spacetree& tree, const ProblemSpec& spec) {
    spec.validate();
    if (tree.structure_dirty()) {
        tree.classify();
        tree.clear_structure_dirty();
    }
    const int p = spec.dim;
    const int nc = spec.channel_count();
    const int ncor = corner_count(p);
    SweepStats st;
    st.maxNorm.assign(nc, 0.0);
    st.euclidNorm.assign(nc, 0.0);
    st.hNorm.assign(nc, 0.0);

    const std::size_t m = ncor * nc;
    std::vector<Cplx> adjU(m), adjUhat(m), dR(m), dRhat(m), dDiag(m), dB(m);
    // Leaf-cell discretisation only: hanging corners act as Dirichlet data.
    tree.for_each_vertex([&](int, const Index&, Vertex& v) {
        for (ChannelState& s : v.ch) {
            s.r = Cplx(0.0);
            s.chi = Cplx(0.0);
        }
    });
    tree.for_each_cell([&](int ell, const Index& ci, Cell& cell) {
        if (cell.refined) return;
        const CellKernel k = make_cell_kernel(spec, ell, ci, cell.theta);
        Vertex* vs[1 << kMaxDim];
        bool hang[1 << kMaxDim];
        for (int e = 0; e < ncor; ++e) {
            const Index vi = corner_index(ci, e, p);
            vs[e] = tree.find_vertex(ell, vi);
            hang[e] = vs[e]->hanging;
            for (int c = 0; c < nc; ++c)
                adjU[e * nc + c] =
                    hang[e] ? tree.u_at(ell, vi, c) : vs[e]->ch[c].u;
        }
        std::fill(adjUhat.begin(), adjUhat.end(), Cplx(0.0));
        accumulate_cell(k, spec, adjU, adjUhat, dR, dRhat, dDiag);
        std::fill(dB.begin(), dB.end(), Cplx(0.0));
        accumulate_cell_rhs(k, spec, ell, ci, dB);
        for (int e = 0; e < ncor; ++e) {
            if (hang[e]) continue;
            for (int c = 0; c < nc; ++c) {
                vs[e]->ch[c].r += dR[e * nc + c];
                vs[e]->ch[c].chi += dB[e * nc + c];
            }
        }
    });
    tree.for_each_vertex([&](int ell, const Index&, Vertex& v) {
        if (v.hanging || v.refined || v.onBoundary) return;
        ++st.updatedFineVertices;
        const double hp = std::pow(std::pow(3.0, -ell), p);
        for (int c = 0; c < nc; ++c) {
            ChannelState& s = v.ch[c];
            s.r = s.chi + s.r;
            const double mm = std::abs(s.r);
            auto ci = c;
            st.maxNorm[ci] = std::max(st.maxNorm[ci], mm);
            st.euclidNorm[ci] += mm * mm;
            st.hNorm[ci] += hp * mm * mm;
        }
    });
    for (int c = 0; c < nc; ++c) {
        st.euclidNorm[c] = std::sqrt(st.euclidNorm[c]);
        st.hNorm[c] = std::sqrt(st.hNorm[c]);
    }
    return st;
}

namespace {

double unit_rand(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    x = x ^ (x >> 31);
    return 2.0 * static_cast<double>(x >> 11) / 9007199254740992.0 - 1.0;
}

}  // namespace

void set_random_initial_guess(Spacetree& tree, std::uint64_t seed) {
    if (tree.structure_dirty()) {
        tree.classify();
        tree.clear_structure_dirty();
    }
    const int p = tree.dim();
    for (int ell = tree.depth(); ell >= 0; --ell) {
        tree.for_each_vertex_at(ell, [&](const Index& idx, Vertex& v) {
            if (v.hanging) return;
            const Key k = pack_index(p, idx);
            for (int c = 0; c < tree.channels(); ++c) {
                ChannelState& s = v.ch[c];
                if (v.onBoundary) {
                    s.u = Cplx(0.0);
                } else if (!v.refined) {
                    const std::uint64_t base =
                        seed ^ (static_cast<std::uint64_t>(ell) << 56) ^ (static_cast<std::uint64_t>(c) << 48) ^ k;
                    s.u = Cplx(unit_rand(base), unit_rand(base ^ 0x5bf03635ull));
                } else {
                    Index fi = idx;
                    for (int d = 0; d < p; ++d) fi[d] *= 3;
                    const Vertex* fv = tree.find_vertex(ell + 1, fi);
                    s.u = fv ? fv->ch[c].u : Cplx(0.0);
                }
            }
        });
    }
    reset_pipeline_state(tree);
}

void reset_pipeline_state(Spacetree& tree) {
    tree.for_each_vertex([&](int, const Index&, Vertex& v) {
        for (ChannelState& s : v.ch) {
            s.sc = Cplx(0.0);
            s.sf = Cplx(0.0);
            s.si = Cplx(0.0);
            s.siNext = Cplx(0.0);
            s.uHat = Cplx(0.0);
        }
    });
}

}  // namespace treemg
