#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <unordered_map>
#include <vector>

#include "treemg/types.hpp"

namespace treemg {

using Key = std::uint64_t;

Key pack_index(int dim, const Index& idx);
Index unpack_index(int dim, Key k);

struct Cell {
    bool refined = false;
    bool refineMark = false;
    bool eraseMark = false;
    double theta = 0.0;  // complex rotation of this cell, radians
};

/// Per-channel solver payload of one vertex. r, rHat, diag and chi are
/// re-accumulated every traversal; u, sc, sf, si persist between sweeps.
struct ChannelState {
    Cplx u{};
    Cplx chi{};  // right-hand side weight; overwritten by restriction on covered vertices
    Cplx r{};
    Cplx rHat{};
    Cplx uHat{};
    Cplx diag{};
    Cplx sc{};
    Cplx sf{};
    Cplx si{};
    Cplx siNext{};  // shadow for the injected smoother update, committed at touch-last
    double s = 0.0;  // feature value of the dynamic refinement criterion
};

struct Vertex {
    std::vector<ChannelState> ch;

    // Classification; refreshed by classify() and during traversal backtracking.
    bool hanging = false;
    bool refined = false;
    bool onBoundary = false;
    bool cPoint = false;
    int succ = 0;

    // Traversal bookkeeping, valid for the current epoch only.
    std::uint64_t epoch = 0;
    std::uint32_t done = 0;
    std::uint32_t expected = 0;
    bool hangingNow = false;
};

struct CellRef {
    int level = 0;
    Index index{};
    Cell* cell = nullptr;
};

struct VertexRef {
    int level = 0;
    Index index{};
    Vertex* v = nullptr;
    bool hanging = false;  // role within the running traversal
};

class Spacetree;

/// Event hooks of the depth-first multiscale traversal. Ordering contract:
/// touchVertexFirstTime (or createHangingVertex) fires before any enterCell of
/// an adjacent same-level cell; touchVertexLastTime (destroyHangingVertex)
/// after all adjacent same-level cells fired leaveCell; parents are entered
/// before children and left after them.
struct TraversalEvents {
    std::function<void(Spacetree&, const CellRef&)> enterCell;
    std::function<void(Spacetree&, const CellRef&)> leaveCell;
    std::function<void(Spacetree&, const VertexRef&)> touchVertexFirstTime;
    std::function<void(Spacetree&, const VertexRef&)> touchVertexLastTime;
    std::function<void(Spacetree&, const VertexRef&)> createHangingVertex;
    std::function<void(Spacetree&, const VertexRef&)> destroyHangingVertex;
};

/// Decomposition of a vertex position into its canonical parent cell plus the
/// relative position in thirds. Zero-weight parent corners may be absent from
/// the tree; gather helpers substitute zero there.
struct ParentStencil {
    Index q{};                         // parent cell index at level-1
    std::array<int, kMaxDim> rel{};    // per-axis thirds in {0,1,2,3}
};

/// The 3-partitioned spacetree over the unit hypercube. Levels form nested
/// Cartesian lattices; a vertex is unique by (level, index) and several
/// vertices may coincide spatially. Storage is hash-per-level; the traversal
/// contract, not the storage layout, is what the solver relies on.
class Spacetree {
  public:
    struct Config {
        int dim = 2;
        int channels = 1;
        int ellMin = 1;
        std::size_t maxVertices = 8u * 1024u * 1024u;
    };

    explicit Spacetree(const Config& cfg);

    /// Fully refined tree of the given depth; finest mesh width 3^-levels.
    static Spacetree build_regular(int p, int levels, const Config& cfg);
    static Spacetree build_regular(int p, int levels, int channels = 1);

    int dim() const { return cfg_.dim; }
    int channels() const { return cfg_.channels; }
    int ell_min() const { return cfg_.ellMin; }
    int depth() const { return static_cast<int>(cells_.size()) - 1; }
    const Config& config() const { return cfg_; }

    /// Cells whose centre lies in an absorbing layer or rotated bulk get their
    /// theta from this assigner at creation time.
    void set_theta_assigner(std::function<double(int, const Index&)> fn);
    void reassign_theta();

    bool has_cell(int level, const Index& idx) const;
    Cell* find_cell(int level, const Index& idx);
    const Cell* find_cell(int level, const Index& idx) const;
    Vertex* find_vertex(int level, const Index& idx);
    const Vertex* find_vertex(int level, const Index& idx) const;

    /// Creates the 3^p children of an unrefined cell. New vertices receive
    /// p-linearly prolonged u, zero hierarchical surplus and zero pipeline
    /// helpers. Safe to call from within enterCell.
    void refine_cell(int level, const Index& idx);

    /// Removes all descendants of a refined cell; parent-level payload stays
    /// untouched. Safe to call from within leaveCell.
    void erase_subtree(int level, const Index& idx);

    void traverse(TraversalEvents& ev);

    /// Exact bottom-up recomputation of hanging/refined/boundary/cPoint flags
    /// and succ for every stored vertex.
    void classify();

    /// Incremental flag/succ refresh of one vertex; used during backtracking.
    void refresh_classification(int level, const Index& idx, Vertex& v);

    bool structure_dirty() const { return structureDirty_; }
    void clear_structure_dirty() { structureDirty_ = false; }

    bool vertex_on_boundary(int level, const Index& idx) const;
    static bool index_is_cpoint(int dim, const Index& idx);
    int indomain_adjacent_positions(int level, const Index& idx) const;
    int existing_adjacent_cells(int level, const Index& idx) const;

    ParentStencil parent_stencil(int level, const Index& idx) const;
    /// Parent corner vertices (level-1); zero-weight corners may be null.
    void parent_corner_vertices(const ParentStencil& ps, int childLevel,
                                const Vertex* out[]) const;
    void parent_corner_vertices(const ParentStencil& ps, int childLevel, Vertex* out[]);

    /// Solution value at an arbitrary lattice position, resolving hanging and
    /// uncovered positions by recursive p-linear interpolation from coarser
    /// levels.
    Cplx u_at(int level, const Index& idx, int channel) const;

    std::size_t cell_count(int level) const;
    std::size_t vertex_count(int level) const;
    std::size_t leaf_cell_count() const;
    /// Non-hanging, non-boundary vertices with no coinciding non-hanging
    /// vertex on the next finer level; the unknowns all norms run over.
    std::size_t interior_fine_vertex_count() const;

    template <class Fn>  // Fn(int level, const Index&, Cell&)
    void for_each_cell(Fn&& fn) {
        for (int l = 0; l <= depth(); ++l)
            for (auto& [k, c] : cells_[l]) fn(l, unpack_index(cfg_.dim, k), c);
    }
    template <class Fn>  // Fn(int level, const Index&, Vertex&)
    void for_each_vertex(Fn&& fn) {
        for (int l = 0; l <= depth(); ++l)
            for (auto& [k, v] : verts_[l]) fn(l, unpack_index(cfg_.dim, k), v);
    }
    template <class Fn>
    void for_each_vertex_at(int level, Fn&& fn) {
        if (level > depth()) return;
        for (auto& [k, v] : verts_[level]) fn(unpack_index(cfg_.dim, k), v);
    }
    template <class Fn>
    void for_each_cell_at(int level, Fn&& fn) {
        if (level > depth()) return;
        for (auto& [k, c] : cells_[level]) fn(unpack_index(cfg_.dim, k), c);
    }

    /// Plain-text grid dump: one line per unrefined cell "level i0..i(p-1)
    /// theta", one per non-hanging vertex "level i0..i(p-1) re(u) im(u)".
    void dump(std::ostream& os) const;

  private:
    void ensure_level(int level);
    Vertex& vertex_at(int level, Key k);
    bool create_vertex_if_missing(int level, const Index& idx, const Index& parentCell,
                                  const std::array<int, kMaxDim>& rel);
    void visit_cell(int level, const Index& idx, TraversalEvents& ev);
    void touch_vertex(int level, const Index& idx, TraversalEvents& ev);
    void finish_vertex_visit(int level, const Index& idx, TraversalEvents& ev);
    void check_capacity(std::size_t newVertices) const;

    Config cfg_;
    std::vector<std::unordered_map<Key, Cell>> cells_;
    std::vector<std::unordered_map<Key, Vertex>> verts_;
    std::function<double(int, const Index&)> thetaOf_;
    std::uint64_t epoch_ = 0;
    std::size_t totalVertices_ = 0;
    bool structureDirty_ = false;
    bool inTraversal_ = false;
};

}  // namespace treemg
