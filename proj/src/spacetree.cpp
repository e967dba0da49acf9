#include "treemg/spacetree.hpp"

#include <algorithm>
#include <climits>
#include <ostream>

#include "treemg/transfer.hpp"

namespace treemg {

namespace {
constexpr int kMaxLevel = 9;  // 3^9+1 lattice positions per axis fit a packed key
}

Key pack_index(int dim, const Index& idx) {
    Key k = 0;
    for (int d = 0; d < dim; ++d) k |= static_cast<Key>(static_cast<std::uint16_t>(idx[d])) << (16 * d);
    return k;
}

Index unpack_index(int dim, Key k) {
    Index idx = zero_index();
    for (int d = 0; d < dim; ++d) idx[d] = static_cast<int>((k >> (16 * d)) & 0xffffu);
    return idx;
}

Spacetree::Spacetree(const Config& cfg) : cfg_(cfg) {
    if (cfg.dim < 1 || cfg.dim > kMaxDim) throw ConfigError("spacetree dimension out of range");
    if (cfg.channels < 1) throw ConfigError("channel count must be >= 1");
    if (cfg.ellMin < 1) throw ConfigError("ellMin must be >= 1");
    thetaOf_ = [](int, const Index&) { return 0.0; };
    cells_.resize(1);
    verts_.resize(1);
    cells_[0][pack_index(cfg_.dim, zero_index())] = Cell{};
    const int n = corner_count(cfg_.dim);
    for (int e = 0; e < n; ++e) {
        Index vi = zero_index();
        for (int d = 0; d < cfg_.dim; ++d) vi[d] = (e >> d) & 1;
        Vertex v;
        v.ch.resize(cfg_.channels);
        v.onBoundary = true;
        verts_[0][pack_index(cfg_.dim, vi)] = std::move(v);
        ++totalVertices_;
    }
    classify();
}

Spacetree Spacetree::build_regular(int p, int levels, const Config& cfgIn) {
    if (levels < 1) throw ConfigError("build_regular needs levels >= 1");
    if (levels > kMaxLevel) throw ConfigError("tree depth exceeds supported maximum");
    Config cfg = cfgIn;
    cfg.dim = p;
    // Vertex estimate across all levels; fail before allocating.
    std::size_t estimate = 0;
    for (int l = 0; l <= levels; ++l) {
        std::size_t perAxis = static_cast<std::size_t>(pow3(l)) + 1;
        std::size_t n = 1;
        for (int d = 0; d < p; ++d) n *= perAxis;
        estimate += n;
    }
    if (estimate > cfg.maxVertices)
        throw CapacityError("regular grid would hold " + std::to_string(estimate) +
                            " vertices, cap is " + std::to_string(cfg.maxVertices));
    Spacetree tree(cfg);
    for (int l = 0; l < levels; ++l) {
        std::vector<Key> keys;
        keys.reserve(tree.cells_[l].size());
        for (auto& [k, c] : tree.cells_[l])
            if (!c.refined) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        for (Key k : keys) tree.refine_cell(l, unpack_index(p, k));
    }
    tree.classify();
    tree.structureDirty_ = false;
    return tree;
}

Spacetree Spacetree::build_regular(int p, int levels, int channels) {
    Config cfg;
    cfg.dim = p;
    cfg.channels = channels;
    return build_regular(p, levels, cfg);
}

void Spacetree::set_theta_assigner(std::function<double(int, const Index&)> fn) {
    thetaOf_ = std::move(fn);
    reassign_theta();
}

void Spacetree::reassign_theta() {
    for (int l = 0; l <= depth(); ++l)
        for (auto& [k, c] : cells_[l]) c.theta = thetaOf_(l, unpack_index(cfg_.dim, k));
}

bool Spacetree::has_cell(int level, const Index& idx) const {
    if (level < 0 || level > depth()) return false;
    return cells_[level].count(pack_index(cfg_.dim, idx)) > 0;
}

Cell* Spacetree::find_cell(int level, const Index& idx) {
    if (level < 0 || level > depth()) return nullptr;
    auto it = cells_[level].find(pack_index(cfg_.dim, idx));
    return it == cells_[level].end() ? nullptr : &it->second;
}

const Cell* Spacetree::find_cell(int level, const Index& idx) const {
    return const_cast<Spacetree*>(this)->find_cell(level, idx);
}

Vertex* Spacetree::find_vertex(int level, const Index& idx) {
    if (level < 0 || level > depth()) return nullptr;
    auto it = verts_[level].find(pack_index(cfg_.dim, idx));
    return it == verts_[level].end() ? nullptr : &it->second;
}

const Vertex* Spacetree::find_vertex(int level, const Index& idx) const {
    return const_cast<Spacetree*>(this)->find_vertex(level, idx);
}

bool Spacetree::vertex_on_boundary(int level, const Index& idx) const {
    const int m = pow3(level);
    for (int d = 0; d < cfg_.dim; ++d)
        if (idx[d] == 0 || idx[d] == m) return true;
    return false;
}

bool Spacetree::index_is_cpoint(int dim, const Index& idx) {
    for (int d = 0; d < dim; ++d)
        if (idx[d] % 3 != 0) return false;
    return true;
}

int Spacetree::indomain_adjacent_positions(int level, const Index& idx) const {
    const int m = pow3(level);
    int n = 1;
    for (int d = 0; d < cfg_.dim; ++d) {
        int cnt = 0;
        if (idx[d] - 1 >= 0) ++cnt;
        if (idx[d] <= m - 1) ++cnt;
        n *= cnt;
    }
    return n;
}

int Spacetree::existing_adjacent_cells(int level, const Index& idx) const {
    const int m = pow3(level);
    const int n = corner_count(cfg_.dim);
    int have = 0;
    for (int e = 0; e < n; ++e) {
        Index c = zero_index();
        bool ok = true;
        for (int d = 0; d < cfg_.dim; ++d) {
            c[d] = idx[d] - ((e >> d) & 1);
            if (c[d] < 0 || c[d] > m - 1) {
                ok = false;
                break;
            }
        }
        if (ok && has_cell(level, c)) ++have;
    }
    return have;
}

ParentStencil Spacetree::parent_stencil(int level, const Index& idx) const {
    ParentStencil ps;
    const int mCoarse = pow3(level - 1);
    for (int d = 0; d < cfg_.dim; ++d) {
        int q = idx[d] / 3;
        if (q > mCoarse - 1) q = mCoarse - 1;
        ps.q[d] = q;
        ps.rel[d] = idx[d] - 3 * q;
    }
    return ps;
}

void Spacetree::parent_corner_vertices(const ParentStencil& ps, int childLevel,
                                       const Vertex* out[]) const {
    const int n = corner_count(cfg_.dim);
    for (int e = 0; e < n; ++e) {
        Index vi = zero_index();
        for (int d = 0; d < cfg_.dim; ++d) vi[d] = ps.q[d] + ((e >> d) & 1);
        out[e] = find_vertex(childLevel - 1, vi);
    }
}

void Spacetree::parent_corner_vertices(const ParentStencil& ps, int childLevel, Vertex* out[]) {
    const_cast<const Spacetree*>(this)->parent_corner_vertices(
        ps, childLevel, const_cast<const Vertex**>(out));
}

Cplx Spacetree::u_at(int level, const Index& idx, int channel) const {
    if (level < 0) return Cplx(0.0);
    const Vertex* v = find_vertex(level, idx);
    if (v && !v->hanging) return v->ch[channel].u;
    if (level == 0) return Cplx(0.0);
    const ParentStencil ps = parent_stencil(level, idx);
    Cplx corners[1 << kMaxDim];
    const int n = corner_count(cfg_.dim);
    for (int e = 0; e < n; ++e) {
        Index vi = zero_index();
        for (int d = 0; d < cfg_.dim; ++d) vi[d] = ps.q[d] + ((e >> d) & 1);
        corners[e] = u_at(level - 1, vi, channel);
    }
    return prolong(corners, ps.rel.data(), cfg_.dim);
}

std::size_t Spacetree::cell_count(int level) const {
    if (level < 0 || level > depth()) return 0;
    return cells_[level].size();
}

std::size_t Spacetree::vertex_count(int level) const {
    if (level < 0 || level > depth()) return 0;
    return verts_[level].size();
}

std::size_t Spacetree::leaf_cell_count() const {
    std::size_t n = 0;
    for (const auto& lvl : cells_)
        for (const auto& [k, c] : lvl)
            if (!c.refined) ++n;
    return n;
}

std::size_t Spacetree::interior_fine_vertex_count() const {
    std::size_t n = 0;
    for (const auto& lvl : verts_)
        for (const auto& [k, v] : lvl)
            if (!v.hanging && !v.refined && !v.onBoundary) ++n;
    return n;
}

void Spacetree::ensure_level(int level) {
    while (static_cast<int>(cells_.size()) <= level) {
        cells_.emplace_back();
        verts_.emplace_back();
    }
}

void Spacetree::check_capacity(std::size_t newVertices) const {
    if (totalVertices_ + newVertices > cfg_.maxVertices)
        throw CapacityError("vertex capacity exceeded (" + std::to_string(cfg_.maxVertices) + ")");
}

bool Spacetree::create_vertex_if_missing(int level, const Index& idx, const Index& parentCell,
                                         const std::array<int, kMaxDim>& rel) {
    auto& map = verts_[level];
    const Key k = pack_index(cfg_.dim, idx);
    if (map.count(k)) return false;
    check_capacity(1);
    Vertex v;
    v.ch.resize(cfg_.channels);
    v.onBoundary = vertex_on_boundary(level, idx);
    v.cPoint = index_is_cpoint(cfg_.dim, idx);
    const int n = corner_count(cfg_.dim);
    const Vertex* parents[1 << kMaxDim];
    for (int e = 0; e < n; ++e) {
        Index pi = zero_index();
        for (int d = 0; d < cfg_.dim; ++d) pi[d] = parentCell[d] + ((e >> d) & 1);
        parents[e] = find_vertex(level - 1, pi);
    }
    for (int c = 0; c < cfg_.channels; ++c) {
        Cplx corners[1 << kMaxDim];
        for (int e = 0; e < n; ++e) corners[e] = parents[e] ? parents[e]->ch[c].u : Cplx(0.0);
        v.ch[c].u = prolong(corners, rel.data(), cfg_.dim);
    }
    map.emplace(k, std::move(v));
    ++totalVertices_;
    return true;
}

void Spacetree::refine_cell(int level, const Index& idx) {
    Cell* c = find_cell(level, idx);
    if (!c) throw ConfigError("refine_cell: no such cell");
    if (c->refined) throw ConfigError("refine_cell: cell already refined");
    if (level + 1 > kMaxLevel) throw CapacityError("refine_cell: maximum depth reached");
    ensure_level(level + 1);
    const int p = cfg_.dim;
    int blockCells = 1, blockVerts = 1;
    for (int d = 0; d < p; ++d) {
        blockCells *= 3;
        blockVerts *= 4;
    }
    check_capacity(blockVerts);
    c->refined = true;
    // Children first, so adjacency counts of the new vertices are complete.
    for (int t = 0; t < blockCells; ++t) {
        Index ci = zero_index();
        int tt = t;
        for (int d = 0; d < p; ++d) {
            ci[d] = 3 * idx[d] + tt % 3;
            tt /= 3;
        }
        Cell nc;
        nc.theta = thetaOf_(level + 1, ci);
        cells_[level + 1].emplace(pack_index(p, ci), nc);
    }
    for (int t = 0; t < blockVerts; ++t) {
        Index vi = zero_index();
        std::array<int, kMaxDim> rel{};
        int tt = t;
        for (int d = 0; d < p; ++d) {
            rel[d] = tt % 4;
            vi[d] = 3 * idx[d] + rel[d];
            tt /= 4;
        }
        const bool created = create_vertex_if_missing(level + 1, vi, idx, rel);
        Vertex& v = *find_vertex(level + 1, vi);
        if (!inTraversal_) continue;
        if (created) {
            // A brand-new vertex is already consistent with the running sweep:
            // its u is the prolonged post-update parent value and its surplus
            // is zero, so the touch-first update block must not fire for it.
            // Mark it touched; touch-last/destroy still fire after its cells.
            v.epoch = epoch_;
            v.done = 0;
            v.expected = static_cast<std::uint32_t>(existing_adjacent_cells(level + 1, vi));
            v.hangingNow = static_cast<int>(v.expected) < indomain_adjacent_positions(level + 1, vi);
            refresh_classification(level + 1, vi, v);
        } else if (v.epoch == epoch_) {
            // An existing vertex already touched this traversal will also be
            // visited by the new adjacent cells; extend its expected count.
            int added = 1;
            for (int d = 0; d < p; ++d) added *= (rel[d] == 1 || rel[d] == 2) ? 2 : 1;
            v.expected += static_cast<std::uint32_t>(added);
        }
    }
    structureDirty_ = true;
}

void Spacetree::erase_subtree(int level, const Index& idx) {
    Cell* c = find_cell(level, idx);
    if (!c) throw ConfigError("erase_subtree: no such cell");
    if (!c->refined) throw ConfigError("erase_subtree: cell is not refined");
    const int p = cfg_.dim;
    int blockCells = 1, blockVerts = 1;
    for (int d = 0; d < p; ++d) {
        blockCells *= 3;
        blockVerts *= 4;
    }
    for (int t = 0; t < blockCells; ++t) {
        Index ci = zero_index();
        int tt = t;
        for (int d = 0; d < p; ++d) {
            ci[d] = 3 * idx[d] + tt % 3;
            tt /= 3;
        }
        Cell* child = find_cell(level + 1, ci);
        if (child && child->refined) erase_subtree(level + 1, ci);
        cells_[level + 1].erase(pack_index(p, ci));
    }
    c->refined = false;
    for (int t = 0; t < blockVerts; ++t) {
        Index vi = zero_index();
        int tt = t;
        for (int d = 0; d < p; ++d) {
            vi[d] = 3 * idx[d] + tt % 4;
            tt /= 4;
        }
        if (existing_adjacent_cells(level + 1, vi) == 0) {
            if (verts_[level + 1].erase(pack_index(p, vi)) > 0) --totalVertices_;
        }
    }
    structureDirty_ = true;
}

void Spacetree::touch_vertex(int level, const Index& idx, TraversalEvents& ev) {
    Vertex& v = *find_vertex(level, idx);
    if (v.epoch == epoch_) return;
    v.epoch = epoch_;
    v.done = 0;
    v.expected = static_cast<std::uint32_t>(existing_adjacent_cells(level, idx));
    v.hangingNow = static_cast<int>(v.expected) < indomain_adjacent_positions(level, idx);
    VertexRef vr{level, idx, &v, v.hangingNow};
    if (v.hangingNow) {
        if (ev.createHangingVertex) ev.createHangingVertex(*this, vr);
    } else {
        if (ev.touchVertexFirstTime) ev.touchVertexFirstTime(*this, vr);
    }
}

void Spacetree::finish_vertex_visit(int level, const Index& idx, TraversalEvents& ev) {
    Vertex& v = *find_vertex(level, idx);
    ++v.done;
    if (v.done != v.expected) return;
    VertexRef vr{level, idx, &v, v.hangingNow};
    if (v.hangingNow) {
        if (ev.destroyHangingVertex) ev.destroyHangingVertex(*this, vr);
    } else {
        if (ev.touchVertexLastTime) ev.touchVertexLastTime(*this, vr);
    }
}

void Spacetree::visit_cell(int level, const Index& idx, TraversalEvents& ev) {
    const int p = cfg_.dim;
    const int n = corner_count(p);
    for (int e = 0; e < n; ++e) {
        Index vi = idx;
        for (int d = 0; d < p; ++d) vi[d] += (e >> d) & 1;
        touch_vertex(level, vi, ev);
    }
    Cell& c = *find_cell(level, idx);
    CellRef cr{level, idx, &c};
    if (ev.enterCell) ev.enterCell(*this, cr);
    if (c.refined) {
        int blockCells = 1;
        for (int d = 0; d < p; ++d) blockCells *= 3;
        for (int t = 0; t < blockCells; ++t) {
            Index ci = zero_index();
            int tt = t;
            for (int d = 0; d < p; ++d) {
                ci[d] = 3 * idx[d] + tt % 3;
                tt /= 3;
            }
            visit_cell(level + 1, ci, ev);
        }
    }
    if (ev.leaveCell) ev.leaveCell(*this, cr);
    for (int e = 0; e < n; ++e) {
        Index vi = idx;
        for (int d = 0; d < p; ++d) vi[d] += (e >> d) & 1;
        finish_vertex_visit(level, vi, ev);
    }
}

void Spacetree::traverse(TraversalEvents& ev) {
    ++epoch_;
    inTraversal_ = true;
    try {
        visit_cell(0, zero_index(), ev);
    } catch (...) {
        inTraversal_ = false;
        throw;
    }
    inTraversal_ = false;
}

void Spacetree::refresh_classification(int level, const Index& idx, Vertex& v) {
    v.onBoundary = vertex_on_boundary(level, idx);
    v.cPoint = level > 0 && index_is_cpoint(cfg_.dim, idx);
    const int total = indomain_adjacent_positions(level, idx);
    const int p = cfg_.dim;
    const int m = pow3(level);
    int have = 0, refinedAdj = 0;
    const int n = corner_count(p);
    for (int e = 0; e < n; ++e) {
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
        const Cell* c = find_cell(level, ci);
        if (c) {
            ++have;
            if (c->refined) ++refinedAdj;
        }
    }
    v.hanging = have < total;
    v.refined = !v.hanging && refinedAdj == have;
    if (!v.refined) {
        v.succ = 0;
        return;
    }
    // succ = 1 + min over the child vertices, i.e. the level+1 lattice points
    // within one cell radius of the coinciding position.
    const int mf = pow3(level + 1);
    int lo[kMaxDim], hi[kMaxDim];
    for (int d = 0; d < p; ++d) {
        lo[d] = std::max(0, 3 * idx[d] - 3);
        hi[d] = std::min(mf, 3 * idx[d] + 3);
    }
    int minSucc = INT_MAX;
    Index w = zero_index();
    std::function<void(int)> scan = [&](int d) {
        if (d == p) {
            const Vertex* cv = find_vertex(level + 1, w);
            if (cv) minSucc = std::min(minSucc, cv->hanging ? 0 : cv->succ);
            return;
        }
        for (w[d] = lo[d]; w[d] <= hi[d]; ++w[d]) scan(d + 1);
    };
    scan(0);
    v.succ = minSucc == INT_MAX ? 0 : 1 + minSucc;
}

void Spacetree::classify() {
    for (int l = depth(); l >= 0; --l)
        for (auto& [k, v] : verts_[l]) refresh_classification(l, unpack_index(cfg_.dim, k), v);
}

void Spacetree::dump(std::ostream& os) const {
    char buf[512];
    for (int l = 0; l <= depth(); ++l) {
        std::vector<Key> keys;
        for (const auto& [k, c] : cells_[l])
            if (!c.refined) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        for (Key k : keys) {
            const Index idx = unpack_index(cfg_.dim, k);
            int off = std::snprintf(buf, sizeof buf, "%d", l);
            for (int d = 0; d < cfg_.dim; ++d) off += std::snprintf(buf + off, sizeof buf - off, " %d", idx[d]);
            const Cell& c = cells_[l].at(k);
            off += std::snprintf(buf + off, sizeof buf - off, " %.17g", c.theta);
            os << buf << '\n';
        }
    }
    for (int l = 0; l <= depth(); ++l) {
        std::vector<Key> keys;
        for (const auto& [k, v] : verts_[l])
            if (!v.hanging) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        for (Key k : keys) {
            const Index idx = unpack_index(cfg_.dim, k);
            const Vertex& v = verts_[l].at(k);
            int off = std::snprintf(buf, sizeof buf, "%d", l);
            for (int d = 0; d < cfg_.dim; ++d) off += std::snprintf(buf + off, sizeof buf - off, " %d", idx[d]);
            for (const auto& ch : v.ch)
                off += std::snprintf(buf + off, sizeof buf - off, " %.17g %.17g",
                                     ch.u.real(), ch.u.imag());
            os << buf << '\n';
        }
    }
}

}  // namespace treemg
