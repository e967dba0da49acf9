#include "treemg/amr.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

namespace treemg {

void AmrConfig::validate() const {
    if (!(hMin <= hMax)) throw ConfigError("amr: hMin must not exceed hMax");
    if (refineFraction <= 0.0 || refineFraction >= 1.0 || eraseFraction <= 0.0 ||
        eraseFraction >= 1.0)
        throw ConfigError("amr: fractions must lie in (0,1)");
    if (binCount < 2) throw ConfigError("amr: need at least two bins");
}

double feature(const Spacetree& tree, int level, const Index& idx, int channel) {
    const int m = pow3(level);
    const Cplx centre = tree.u_at(level, idx, channel);
    double s = 0.0;
    for (int d = 0; d < tree.dim(); ++d) {
        if (idx[d] - 1 < 0 || idx[d] + 1 > m) continue;
        Index lo = idx, hi = idx;
        --lo[d];
        ++hi[d];
        const Cplx second = tree.u_at(level, lo, channel) - 2.0 * centre + tree.u_at(level, hi, channel);
        s = std::max(s, std::abs(second));
    }
    return s;
}

namespace {

struct Candidate {
    int level;
    Key key;
    double s;
    double convergenceIndicator;  // |r/diag|
};

}  // namespace

int select_bins(const std::vector<std::size_t>& hist, std::size_t total, double goal,
                bool fromTop) {
    const int bins = static_cast<int>(hist.size());
    int best = 0;  // marking nothing can be the closest achievable share
    double bestDist = goal;
    std::size_t cum = 0;
    for (int k = 1; k <= bins; ++k) {
        const int b = fromTop ? bins - k : k - 1;
        cum += hist[b];
        const double dist = std::abs(static_cast<double>(cum) / static_cast<double>(total) - goal);
        if (dist < bestDist - 1e-15) {
            bestDist = dist;
            best = k;
        }
    }
    return best;
}

MarkStats mark(Spacetree& tree, const AmrConfig& cfg) {
    cfg.validate();
    if (tree.structure_dirty()) {
        tree.classify();
        tree.clear_structure_dirty();
    }
    MarkStats stats;
    const int p = tree.dim();
    const int nc = tree.channels();

    // Record features everywhere (reporting); collect marking candidates on
    // interior fine-grid vertices only.
    std::vector<Candidate> cand;
    tree.for_each_vertex([&](int level, const Index& idx, Vertex& v) {
        if (v.hanging || level < 1) return;
        for (int c = 0; c < nc; ++c) v.ch[c].s = feature(tree, level, idx, c);
    });

    std::set<std::pair<int, Key>> refineSet;
    std::set<std::pair<int, Key>> eraseSet;
    for (int c = 0; c < nc; ++c) {
        cand.clear();
        tree.for_each_vertex([&](int level, const Index& idx, Vertex& v) {
            if (v.hanging || v.refined || v.onBoundary || level < tree.ell_min()) return;
            const ChannelState& s = v.ch[c];
            const double ind = std::abs(s.diag) > 0.0 ? std::abs(s.r) / std::abs(s.diag) : 0.0;
            cand.push_back({level, pack_index(p, idx), s.s, ind});
        });
        if (cand.empty()) continue;
        double smin = cand.front().s, smax = cand.front().s;
        for (const Candidate& x : cand) {
            smin = std::min(smin, x.s);
            smax = std::max(smax, x.s);
        }
        const double span = smax - smin;
        if (!(span > 0.0)) continue;  // degenerate single bin: no marks
        const int bins = cfg.binCount;
        std::vector<std::size_t> hist(bins, 0);
        auto bin_of = [&](double s) {
            int b = static_cast<int>((s - smin) / span * bins);
            return std::min(std::max(b, 0), bins - 1);
        };
        for (const Candidate& x : cand) ++hist[bin_of(x.s)];
        const int kRef = select_bins(hist, cand.size(), cfg.refineFraction, /*fromTop=*/true);
        const int kErase = select_bins(hist, cand.size(), cfg.eraseFraction, /*fromTop=*/false);
        std::set<std::pair<int, Key>> eraseThis;
        for (const Candidate& x : cand) {
            const int b = bin_of(x.s);
            if (b >= bins - kRef) {
                if (x.convergenceIndicator > cfg.convergenceVeto) {
                    ++stats.vetoConvergence;
                } else {
                    refineSet.insert({x.level, x.key});
                }
            } else if (b < kErase) {
                if (x.convergenceIndicator > cfg.convergenceVeto) {
                    ++stats.vetoConvergence;
                } else {
                    eraseThis.insert({x.level, x.key});
                }
            }
        }
        // Refinement marks are unioned over channels; a vertex is erased only
        // if every channel agrees.
        if (c == 0) {
            eraseSet = std::move(eraseThis);
        } else {
            std::set<std::pair<int, Key>> merged;
            for (const auto& e : eraseSet)
                if (eraseThis.count(e)) merged.insert(e);
            eraseSet = std::move(merged);
        }
    }
    for (const auto& e : refineSet) eraseSet.erase(e);
    stats.refineVertices = refineSet.size();
    stats.eraseVertices = eraseSet.size();

    // Translate refinement marks: every unrefined cell adjacent to a marked
    // vertex refines, unless it already sits at the mesh-width floor.
    for (const auto& [level, key] : refineSet) {
        const Index idx = unpack_index(p, key);
        const int m = pow3(level);
        const double h = std::pow(3.0, -level);
        for (int e = 0; e < corner_count(p); ++e) {
            Index ci = zero_index();
            bool ok = true;
            for (int d = 0; d < p; ++d) {
                ci[d] = idx[d] - ((e >> d) & 1);
                if (ci[d] < 0 || ci[d] > m - 1) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            Cell* cell = tree.find_cell(level, ci);
            if (!cell || cell->refined) continue;
            if (!(h > cfg.hMin)) {
                ++stats.vetoHMin;
                continue;
            }
            if (!cell->refineMark) {
                cell->refineMark = true;
                ++stats.refineCells;
            }
        }
    }

    // Translate erase marks: a refined cell with unrefined children erases if
    // its strictly interior child-block vertices are all erase-marked, none of
    // the block is refine-marked, and the resulting mesh width stays legal.
    tree.for_each_cell([&](int level, const Index& ci, Cell& cell) {
        if (!cell.refined || level < tree.ell_min()) return;
        const double h = std::pow(3.0, -level);
        int innerTotal = 0, innerMarked = 0;
        bool anyRefineMark = false, childRefined = false;
        const int blockVerts = [&] {
            int n = 1;
            for (int d = 0; d < p; ++d) n *= 4;
            return n;
        }();
        for (int t = 0; t < blockVerts; ++t) {
            Index vi = zero_index();
            bool inner = true;
            int tt = t;
            for (int d = 0; d < p; ++d) {
                const int rel = tt % 4;
                tt /= 4;
                vi[d] = 3 * ci[d] + rel;
                if (rel == 0 || rel == 3) inner = false;
            }
            const std::pair<int, Key> id{level + 1, pack_index(p, vi)};
            if (refineSet.count(id)) anyRefineMark = true;
            if (!inner) continue;
            const Vertex* v = tree.find_vertex(level + 1, vi);
            if (!v || v->hanging || v->onBoundary) continue;
            ++innerTotal;
            if (eraseSet.count(id)) ++innerMarked;
        }
        const int blockCells = pow3(p);
        for (int t = 0; t < blockCells; ++t) {
            Index cci = zero_index();
            int tt = t;
            for (int d = 0; d < p; ++d) {
                cci[d] = 3 * ci[d] + tt % 3;
                tt /= 3;
            }
            const Cell* child = tree.find_cell(level + 1, cci);
            if (child && child->refined) childRefined = true;
        }
        if (childRefined || anyRefineMark || innerTotal == 0 || innerMarked != innerTotal) return;
        if (h > cfg.hMax) {
            ++stats.vetoHMax;
            return;
        }
        if (!cell.eraseMark) {
            cell.eraseMark = true;
            ++stats.eraseCells;
        }
    });
    return stats;
}

void clear_marks(Spacetree& tree) {
    tree.for_each_cell([](int, const Index&, Cell& c) {
        c.refineMark = false;
        c.eraseMark = false;
    });
}

}  // namespace treemg
