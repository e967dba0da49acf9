#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "treemg/spacetree.hpp"
#include "treemg/transfer.hpp"

using namespace treemg;

namespace {

Index idx2(int a, int b) {
    Index i = zero_index();
    i[0] = a;
    i[1] = b;
    return i;
}

/// Root plus a partially refined first level: a 2-level adaptive grid with
/// hanging vertices along the refinement boundary.
Spacetree adaptive_2level() {
    Spacetree::Config cfg;
    cfg.dim = 2;
    Spacetree tree(cfg);
    tree.refine_cell(0, zero_index());
    tree.refine_cell(1, idx2(0, 0));
    tree.refine_cell(1, idx2(1, 0));
    tree.refine_cell(1, idx2(0, 1));
    tree.classify();
    tree.clear_structure_dirty();
    return tree;
}

}  // namespace

TEST_CASE("build_regular counting") {
    SUBCASE("p=2, one level") {
        Spacetree t = Spacetree::build_regular(2, 1);
        CHECK(t.cell_count(1) == 9);
        CHECK(t.vertex_count(1) == 16);
        CHECK(t.vertex_count(0) == 4);
        CHECK(t.leaf_cell_count() == 9);
    }
    SUBCASE("p=2, two levels") {
        Spacetree t = Spacetree::build_regular(2, 2);
        CHECK(t.cell_count(2) == 81);
        CHECK(t.vertex_count(2) == 100);
        CHECK(t.interior_fine_vertex_count() == 64);
    }
    SUBCASE("p=3, one level") {
        Spacetree t = Spacetree::build_regular(3, 1);
        CHECK(t.cell_count(1) == 27);
        CHECK(t.vertex_count(1) == 64);
    }
    SUBCASE("capacity error") {
        Spacetree::Config cfg;
        cfg.dim = 2;
        cfg.maxVertices = 50;
        CHECK_THROWS_AS(Spacetree::build_regular(2, 2, cfg), CapacityError);
    }
}

TEST_CASE("traversal event counting and ordering") {
    Spacetree t = Spacetree::build_regular(2, 2);
    int enters = 0, leaves = 0, firsts = 0, lasts = 0;
    std::set<std::pair<int, Key>> touched, finished;
    std::map<std::pair<int, Key>, int> pendingCells;  // entered but not left
    int cellDepthViolations = 0;
    std::vector<std::pair<int, Key>> stack;

    TraversalEvents ev;
    ev.touchVertexFirstTime = [&](Spacetree& tr, const VertexRef& vr) {
        ++firsts;
        const auto id = std::make_pair(vr.level, pack_index(tr.dim(), vr.index));
        CHECK(touched.insert(id).second);  // exactly once per traversal
    };
    ev.touchVertexLastTime = [&](Spacetree& tr, const VertexRef& vr) {
        ++lasts;
        const auto id = std::make_pair(vr.level, pack_index(tr.dim(), vr.index));
        CHECK(finished.insert(id).second);
    };
    ev.enterCell = [&](Spacetree& tr, const CellRef& cr) {
        ++enters;
        // every corner must have been touched, none finished
        for (int e = 0; e < 4; ++e) {
            Index vi = cr.index;
            vi[0] += e & 1;
            vi[1] += (e >> 1) & 1;
            const auto id = std::make_pair(cr.level, pack_index(tr.dim(), vi));
            CHECK(touched.count(id) == 1);
            CHECK(finished.count(id) == 0);
        }
        if (!stack.empty() && stack.back().first != cr.level - 1) ++cellDepthViolations;
        stack.emplace_back(cr.level, pack_index(tr.dim(), cr.index));
    };
    ev.leaveCell = [&](Spacetree&, const CellRef& cr) {
        ++leaves;
        CHECK(stack.back().first == cr.level);
        stack.pop_back();
    };
    t.traverse(ev);
    CHECK(enters == 1 + 9 + 81);
    CHECK(leaves == enters);
    CHECK(firsts == 4 + 16 + 100);  // every vertex of a regular tree is non-hanging
    CHECK(lasts == firsts);
    CHECK(cellDepthViolations == 0);
}

TEST_CASE("hanging vertices on an adaptive tree") {
    Spacetree t = adaptive_2level();
    // Brute-force check of the hanging predicate.
    t.for_each_vertex([&](int level, const Index& idx, Vertex& v) {
        const bool hangingExpected =
            t.existing_adjacent_cells(level, idx) < t.indomain_adjacent_positions(level, idx);
        CHECK(v.hanging == hangingExpected);
    });
    std::set<std::pair<int, Key>> hangingCreated;
    int created = 0, destroyed = 0;
    TraversalEvents ev;
    ev.createHangingVertex = [&](Spacetree& tr, const VertexRef& vr) {
        ++created;
        hangingCreated.insert({vr.level, pack_index(tr.dim(), vr.index)});
    };
    ev.destroyHangingVertex = [&](Spacetree&, const VertexRef&) { ++destroyed; };
    ev.enterCell = [&](Spacetree& tr, const CellRef& cr) {
        // every hanging corner has been created before this cell is entered
        for (int e = 0; e < 4; ++e) {
            Index vi = cr.index;
            vi[0] += e & 1;
            vi[1] += (e >> 1) & 1;
            const Vertex* v = tr.find_vertex(cr.level, vi);
            REQUIRE(v != nullptr);
            if (v->hanging) CHECK(hangingCreated.count({cr.level, pack_index(tr.dim(), vi)}) == 1);
        }
    };
    t.traverse(ev);
    CHECK(created > 0);
    CHECK(created == destroyed);
}

TEST_CASE("classification on a regular two-level tree") {
    Spacetree t = Spacetree::build_regular(2, 2);
    t.for_each_vertex_at(1, [&](const Index& idx, Vertex& v) {
        CHECK(v.refined);
        CHECK(v.succ == 1);
        if (idx[0] > 0 && idx[0] < 3 && idx[1] > 0 && idx[1] < 3) CHECK(!v.onBoundary);
        CHECK(v.cPoint == (idx[0] % 3 == 0 && idx[1] % 3 == 0));
    });
    t.for_each_vertex_at(2, [&](const Index&, Vertex& v) {
        CHECK(!v.refined);
        CHECK(v.succ == 0);
    });
}

TEST_CASE("refine_cell payload initialisation") {
    Spacetree::Config cfg;
    cfg.dim = 2;
    Spacetree t(cfg);
    // corner u values (1,0,0,0) in tensor order
    t.find_vertex(0, idx2(0, 0))->ch[0].u = Cplx(1.0);
    t.refine_cell(0, zero_index());
    CHECK(t.vertex_count(1) == 16);
    // coinciding corner copies the parent value exactly
    CHECK(t.find_vertex(1, idx2(0, 0))->ch[0].u == Cplx(1.0));
    // interior vertex at relative position (1/3,1/3): bilinear weight 4/9
    CHECK(std::abs(t.find_vertex(1, idx2(1, 1))->ch[0].u - Cplx(4.0 / 9.0)) < 1e-15);
    // edge vertex interpolates along the bottom edge
    CHECK(std::abs(t.find_vertex(1, idx2(1, 0))->ch[0].u - Cplx(2.0 / 3.0)) < 1e-15);

    SUBCASE("all-zero parent produces all-zero children") {
        Spacetree t2(cfg);
        t2.refine_cell(0, zero_index());
        t2.for_each_vertex_at(1, [&](const Index&, Vertex& v) { CHECK(v.ch[0].u == Cplx(0.0)); });
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(t.refine_cell(0, zero_index()), ConfigError);  // already refined
        CHECK_THROWS_AS(t.erase_subtree(1, idx2(0, 0)), ConfigError);  // not refined
    }
}

TEST_CASE("erase_subtree restores structure") {
    Spacetree t = adaptive_2level();
    const auto cells1 = t.cell_count(2);
    const auto verts1 = t.vertex_count(2);
    t.erase_subtree(1, idx2(0, 0));
    t.classify();
    CHECK(t.cell_count(2) < cells1);
    CHECK(t.vertex_count(2) < verts1);
    t.refine_cell(1, idx2(0, 0));
    t.classify();
    CHECK(t.cell_count(2) == cells1);
    CHECK(t.vertex_count(2) == verts1);

    // erase then re-refine reproduces u exactly for surplus-free data
    Spacetree s = adaptive_2level();
    s.for_each_vertex_at(1, [&](const Index& idx, Vertex& v) {
        if (!v.onBoundary) v.ch[0].u = Cplx(idx[0] * 0.25, idx[1] * -0.5);
    });
    s.erase_subtree(1, idx2(1, 0));
    s.refine_cell(1, idx2(1, 0));
    s.classify();
    // children of cell (1,0): u equals the fresh prolongation of the parent corners
    const Vertex* v = s.find_vertex(2, idx2(4, 1));
    REQUIRE(v != nullptr);
    const ParentStencil ps = s.parent_stencil(2, idx2(4, 1));
    const Vertex* par[4];
    s.parent_corner_vertices(ps, 2, par);
    Cplx corners[4];
    for (int e = 0; e < 4; ++e) corners[e] = par[e] ? par[e]->ch[0].u : Cplx(0.0);
    CHECK(std::abs(v->ch[0].u - prolong(corners, ps.rel.data(), 2)) < 1e-15);
}

TEST_CASE("leaf cells tile the domain exactly once") {
    Spacetree t = adaptive_2level();
    t.refine_cell(2, idx2(0, 0));  // deepen one corner: levels 0..3, ragged
    t.classify();
    double volume = 0.0;
    t.for_each_cell([&](int level, const Index&, Cell& c) {
        if (!c.refined) volume += std::pow(std::pow(3.0, -level), 2.0);
    });
    CHECK(volume == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("level jumps above hanging vertices traverse and classify") {
    // No balancing: cell (0,0) at level 2 refined while the neighbouring
    // level-1 cells (1,1).. stay coarse.
    Spacetree::Config cfg;
    cfg.dim = 2;
    Spacetree t(cfg);
    t.refine_cell(0, zero_index());
    t.refine_cell(1, idx2(0, 0));
    t.refine_cell(2, idx2(2, 2));  // adjacent to the hanging boundary at level 2
    t.classify();
    t.clear_structure_dirty();
    int enters = 0;
    TraversalEvents ev;
    ev.enterCell = [&](Spacetree&, const CellRef&) { ++enters; };
    t.traverse(ev);
    CHECK(enters == 1 + 9 + 9 + 9);
    // the coinciding finer vertex above a hanging vertex is itself hanging
    t.for_each_vertex_at(3, [&](const Index& idx, Vertex& v) {
        if (v.hanging) return;
        Index w = idx;
        if (w[0] % 3 == 0 && w[1] % 3 == 0) {
            w[0] /= 3;
            w[1] /= 3;
            const Vertex* coarse = t.find_vertex(2, w);
            REQUIRE(coarse != nullptr);
            CHECK(!coarse->hanging);
        }
    });
}

TEST_CASE("classification is idempotent and refinement-local") {
    Spacetree t = adaptive_2level();
    std::map<std::pair<int, Key>, std::tuple<bool, bool, int>> before;
    t.for_each_vertex([&](int level, const Index& idx, Vertex& v) {
        before[{level, pack_index(2, idx)}] = {v.hanging, v.refined, v.succ};
    });
    t.classify();  // idempotent
    t.for_each_vertex([&](int level, const Index& idx, Vertex& v) {
        auto [h, r, s] = before[{level, pack_index(2, idx)}];
        CHECK(v.hanging == h);
        CHECK(v.refined == r);
        CHECK(v.succ == s);
    });
    // refining one cell only changes classifications adjacent to it
    t.refine_cell(2, idx2(5, 0));
    t.classify();
    t.for_each_vertex([&](int level, const Index& idx, Vertex& v) {
        if (level > 2) return;
        const bool nearRefined = level == 2 && idx[0] >= 4 && idx[0] <= 6 && idx[1] <= 1;
        const bool parentOfRefined = level == 1 && idx[0] >= 1 && idx[0] <= 2 && idx[1] <= 1;
        if (nearRefined || parentOfRefined) return;
        auto it = before.find({level, pack_index(2, idx)});
        if (it == before.end()) return;
        auto [h, r, s] = it->second;
        CHECK(v.hanging == h);
        CHECK(v.refined == r);
        CHECK(v.succ == s);
    });
}

TEST_CASE("u_at resolves hanging positions by interpolation") {
    Spacetree t = adaptive_2level();
    t.for_each_vertex_at(1, [&](const Index& idx, Vertex& v) {
        if (!v.onBoundary) v.ch[0].u = Cplx(0.5 * idx[0] + 0.25 * idx[1], 0.0);
    });
    // position (7,3) at level 2 lies on the boundary of the unrefined (2,1)
    // block; it must interpolate between level-1 vertices (2,1) and (3,1).
    const Index probe = idx2(7, 3);
    const Vertex* hv = t.find_vertex(2, probe);
    if (hv) CHECK(hv->hanging);
    const Cplx left = t.find_vertex(1, idx2(2, 1))->ch[0].u;
    const Cplx right = t.find_vertex(1, idx2(3, 1))->ch[0].u;
    CHECK(std::abs(t.u_at(2, probe, 0) - (left * (2.0 / 3.0) + right * (1.0 / 3.0))) < 1e-14);
}

TEST_CASE("grid dump format") {
    Spacetree t = Spacetree::build_regular(2, 1);
    t.find_vertex(1, idx2(1, 1))->ch[0].u = Cplx(0.5, -0.25);
    std::ostringstream os;
    t.dump(os);
    std::istringstream is(os.str());
    std::string line;
    int cellLines = 0, vertexLines = 0;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::vector<std::string> tok;
        std::string t2;
        while (ls >> t2) tok.push_back(t2);
        if (tok.size() == 4) ++cellLines;        // level i0 i1 theta
        else if (tok.size() == 5) ++vertexLines; // level i0 i1 re im
        else CHECK(false);
    }
    CHECK(cellLines == 9);
    CHECK(vertexLines == 20);
}
