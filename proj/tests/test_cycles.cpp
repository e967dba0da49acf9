#include <doctest.h>

#include <cmath>

#include "treemg/oracle.hpp"
#include "test_util.hpp"

using namespace treemg;
using namespace treemg::testutil;

namespace {

oracle::CycleSetup make_setup(const ProblemSpec& spec, int levels, const OmegaPolicy& pol,
                              const std::vector<Cplx>& initial = {}) {
    oracle::CycleSetup s;
    s.p = spec.dim;
    s.levels = levels;
    s.theta = spec.thetaGlobal;
    s.phi = phi_field(spec);
    s.chi = chi_field(spec);
    s.policy = pol;
    s.omegaCG = pol.omegaS;
    s.initialFineU = initial;
    return s;
}

}  // namespace

TEST_CASE("omega policy table") {
    OmegaPolicy pol;
    pol.omegaS = Cplx(0.8, 0.0);
    SUBCASE("exponential damping") {
        pol.kind = OmegaKind::Exponential;
        CHECK(std::abs(omega_of(pol, 2, false, 1) - Cplx(0.512)) < 1e-15);
        CHECK(std::abs(omega_of(pol, 0, false, 1) - Cplx(0.8)) < 1e-15);
    }
    SUBCASE("transition starts undamped") {
        pol.kind = OmegaKind::Transition;
        CHECK(omega_of(pol, 5, false, 1) == Cplx(1.0));
        // n=2: omega^{(1/2)(succ+1)}
        CHECK(std::abs(omega_of(pol, 1, false, 2) - Cplx(0.8)) < 1e-15);
    }
    SUBCASE("jacobi-only freezes coarse levels") {
        pol.kind = OmegaKind::JacobiOnly;
        CHECK(omega_of(pol, 0, false, 1) == Cplx(0.8, 0.0));
        CHECK(omega_of(pol, 1, false, 1) == Cplx(0.0));
    }
    SUBCASE("undamped L-grid") {
        pol.kind = OmegaKind::LGrid;
        pol.lGrid = 2;
        CHECK(omega_of(pol, 2, false, 1) == Cplx(0.8, 0.0));
        CHECK(omega_of(pol, 3, false, 1) == Cplx(0.0));
    }
    SUBCASE("hb mask wins over every kind") {
        pol.kind = OmegaKind::UndampedCG;
        pol.hbMask = true;
        CHECK(omega_of(pol, 0, true, 1) == Cplx(0.0));
        CHECK(omega_of(pol, 0, false, 1) == Cplx(0.8, 0.0));
    }
}

TEST_CASE("two-phase relaxation schedule") {
    const Cplx w1 = two_phase_schedule(1);
    CHECK(w1.real() == doctest::Approx(0.01 * std::sqrt(3.0)));
    CHECK(w1.imag() == doctest::Approx(-0.01));
    const Cplx w2 = two_phase_schedule(2);
    CHECK(std::abs(w2 + std::conj(w1)) < 1e-18);
    const Cplx sum = w1 + w2;
    CHECK(std::abs(sum.real()) < 1e-18);
    CHECK(sum.imag() == doctest::Approx(-0.02));
}

TEST_CASE("first traversal on fresh state leaves u unchanged") {
    ProblemSpec spec = const_problem(2, 0.0, Cplx(0.0));
    Spacetree tree = Spacetree::build_regular(2, 2);
    const auto u0 = random_vector(64, 5);
    set_fine_interior_u(tree, u0);
    OmegaPolicy pol;
    td_add(tree, spec, pol, 1);
    CHECK(max_abs_diff(get_fine_interior_u(tree), u0) == 0.0);
}

namespace {

void tree_vs_transcription(CycleKind kind, int p, int levels, const OmegaPolicy& pol,
                           const ProblemSpec& spec, int sweeps, std::uint64_t seed, double tol) {
    CAPTURE(static_cast<int>(kind));
    CAPTURE(p);
    CAPTURE(levels);
    const auto u0 = random_vector(oracle::interior_count(p, levels), seed);
    Spacetree tree = Spacetree::build_regular(p, levels);
    tree.set_theta_assigner([&](int l, const Index& i) { return cell_theta(spec, l, i); });
    set_fine_interior_u(tree, u0);
    const auto ref = oracle::reference_cycles(kind, make_setup(spec, levels, pol, u0), sweeps);
    for (int n = 1; n <= sweeps; ++n) {
        switch (kind) {
            case CycleKind::TdAdd: td_add(tree, spec, pol, n); break;
            case CycleKind::TdBPX: td_bpx(tree, spec, pol, n); break;
            case CycleKind::BuFAS: bu_fas(tree, spec, pol, n); break;
            case CycleKind::TextbookAdd: textbook_add(tree, spec, pol.omegaS, pol.omegaS); break;
        }
        const double diff = max_abs_diff(get_fine_interior_u(tree), ref[n - 1]);
        CAPTURE(n);
        CHECK(diff <= tol);
    }
}

}  // namespace

TEST_CASE("tree drivers match the dense transcriptions line by line") {
    OmegaPolicy pol;
    pol.kind = OmegaKind::Exponential;
    pol.omegaS = Cplx(0.8, 0.0);
    SUBCASE("td_add, Poisson p=1, 2 levels") {
        tree_vs_transcription(CycleKind::TdAdd, 1, 2, pol, const_problem(1, 0.0, Cplx(0.0)), 8, 21,
                              1e-13);
    }
    SUBCASE("td_add, Helmholtz p=2, 2 levels, rotated") {
        tree_vs_transcription(CycleKind::TdAdd, 2, 2, pol,
                              const_problem(2, 35.0, Cplx(45.0 * 45.0, 0.0)), 6, 22, 1e-12);
    }
    SUBCASE("td_bpx matches the dense BPX transcription") {
        OmegaPolicy ucg;
        ucg.kind = OmegaKind::UndampedCG;
        ucg.omegaS = Cplx(0.8, 0.0);
        OmegaPolicy ucgBpx = ucg;
        ucgBpx.bpx = true;
        tree_vs_transcription(CycleKind::TdBPX, 1, 2, ucgBpx, const_problem(1, 0.0, Cplx(0.0)), 10,
                              23, 1e-13);
        tree_vs_transcription(CycleKind::TdBPX, 2, 2, ucgBpx,
                              const_problem(2, 35.0, Cplx(45.0 * 45.0, 0.0)), 6, 24, 1e-12);
    }
    SUBCASE("bu_fas matches the dense bottom-up transcription") {
        tree_vs_transcription(CycleKind::BuFAS, 1, 3, pol, const_problem(1, 0.0, Cplx(0.0)), 6, 25,
                              1e-12);
        OmegaPolicy bpx = pol;
        bpx.bpx = true;
        tree_vs_transcription(CycleKind::BuFAS, 2, 2, bpx, const_problem(2, 0.0, Cplx(-1000.0, 0.0)),
                              6, 26, 1e-12);
    }
    SUBCASE("textbook_add matches Algorithm 1") {
        tree_vs_transcription(CycleKind::TextbookAdd, 1, 2, pol, const_problem(1, 0.0, Cplx(0.0)),
                              10, 27, 1e-13);
        tree_vs_transcription(CycleKind::TextbookAdd, 2, 3, pol, const_problem(2, 0.0, Cplx(0.0)), 5,
                              28, 1e-12);
    }
}

TEST_CASE("single-level cycles reduce to damped Jacobi") {
    ProblemSpec spec = const_problem(1, 0.0, Cplx(0.0));
    OmegaPolicy pol;
    pol.kind = OmegaKind::UndampedCG;
    pol.omegaS = Cplx(0.8, 0.0);
    Spacetree a = Spacetree::build_regular(1, 1);
    Spacetree b = Spacetree::build_regular(1, 1);
    bu_fas(a, spec, pol, 1);
    textbook_add(b, spec, pol.omegaS, pol.omegaS);
    CHECK(max_abs_diff(get_fine_interior_u(a), get_fine_interior_u(b)) < 1e-15);
    // u+ = u + omega * S(u, chi) from zero start: u = omega * b / diag
    const auto H = oracle::dense_assemble(1, 1, 0.0, phi_field(spec));
    const auto load = oracle::load_vector(1, 1, 0.0, chi_field(spec));
    const auto u = get_fine_interior_u(a);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(u[i] - Cplx(0.8) * load[i] / H.at(i, i)) < 1e-14);
}

TEST_CASE("pipeline equivalence: td_add trails bu_fas by one traversal") {
    const std::vector<OmegaKind> kinds = {OmegaKind::JacobiOnly, OmegaKind::UndampedCG,
                                          OmegaKind::LGrid, OmegaKind::Exponential,
                                          OmegaKind::Transition};
    for (int p = 1; p <= 2; ++p) {
        for (int levels = 1; levels <= 3; ++levels) {
            for (OmegaKind kind : kinds) {
                OmegaPolicy pol;
                pol.kind = kind;
                pol.omegaS = Cplx(0.8, 0.0);
                pol.lGrid = 2;
                CAPTURE(p);
                CAPTURE(levels);
                CAPTURE(static_cast<int>(kind));
                ProblemSpec spec = const_problem(p, 0.0, Cplx(0.0));
                const auto u0 = random_vector(oracle::interior_count(p, levels), 31 + levels);
                Spacetree td = Spacetree::build_regular(p, levels);
                Spacetree bu = Spacetree::build_regular(p, levels);
                set_fine_interior_u(td, u0);
                set_fine_interior_u(bu, u0);
                td_add(td, spec, pol, 1);
                for (int k = 1; k <= 8; ++k) {
                    td_add(td, spec, pol, k + 1);
                    bu_fas(bu, spec, pol, k);
                    const double diff = max_abs_diff(get_fine_interior_u(td), get_fine_interior_u(bu));
                    CAPTURE(k);
                    CHECK(diff <= 1e-12);
                }
            }
        }
    }
    SUBCASE("with the hb mask") {
        OmegaPolicy pol;
        pol.kind = OmegaKind::Exponential;
        pol.omegaS = Cplx(0.8, 0.0);
        pol.hbMask = true;
        ProblemSpec spec = const_problem(2, 0.0, Cplx(-1000.0, 0.0));
        const auto u0 = random_vector(64, 37);
        Spacetree td = Spacetree::build_regular(2, 2);
        Spacetree bu = Spacetree::build_regular(2, 2);
        set_fine_interior_u(td, u0);
        set_fine_interior_u(bu, u0);
        td_add(td, spec, pol, 1);
        for (int k = 1; k <= 6; ++k) {
            td_add(td, spec, pol, k + 1);
            bu_fas(bu, spec, pol, k);
            CHECK(max_abs_diff(get_fine_interior_u(td), get_fine_interior_u(bu)) <= 1e-12);
        }
    }
}

TEST_CASE("lemma 1: injection consistency whenever residuals are evaluated") {
    ProblemSpec spec = const_problem(2, 0.0, Cplx(0.0));
    Spacetree tree = Spacetree::build_regular(2, 2);
    set_random_initial_guess(tree, 4242);
    OmegaPolicy pol;
    pol.kind = OmegaKind::Exponential;
    SweepOptions opt;
    opt.checkLemma1 = true;
    double worst = 0.0;
    for (int n = 1; n <= 10; ++n) {
        const SweepStats st = td_add(tree, spec, pol, n, opt);
        worst = std::max(worst, st.lemma1MaxError);
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("lemma 2: the coarse right-hand side realises FAS") {
    // After one prelude traversal, b_coarse = R rhat must equal
    // R r + H_c I u computed densely (Galerkin grids: uniform theta, const phi).
    const int p = 2, levels = 2;
    ProblemSpec spec = const_problem(p, 0.0, Cplx(-1000.0, 0.0));
    const auto u0 = random_vector(oracle::interior_count(p, levels), 55);
    Spacetree tree = Spacetree::build_regular(p, levels);
    set_fine_interior_u(tree, u0);
    OmegaPolicy pol;
    td_add(tree, spec, pol, 1);
    const auto bCoarseTree = gather_interior(tree, 1, [](const Vertex& v) { return v.ch[0].chi; });

    const auto Hf = oracle::dense_assemble(p, levels, 0.0, phi_field(spec));
    const auto Hc = oracle::dense_assemble(p, levels - 1, 0.0, phi_field(spec));
    const auto P = oracle::prolongation_matrix(p, levels);
    const auto I = oracle::injection_matrix(p, levels);
    const auto b = oracle::load_vector(p, levels, 0.0, chi_field(spec));
    const auto Hu = oracle::mat_vec(Hf, u0);
    std::vector<Cplx> r(u0.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - Hu[i];
    const auto Rr = oracle::mat_vec(oracle::transpose(P), r);
    const auto HcIu = oracle::mat_vec(Hc, oracle::mat_vec(I, u0));
    double scale = 1.0;
    for (std::size_t i = 0; i < Rr.size(); ++i) scale = std::max(scale, std::abs(Rr[i] + HcIu[i]));
    for (std::size_t i = 0; i < Rr.size(); ++i)
        CHECK(std::abs(bCoarseTree[i] - (Rr[i] + HcIu[i])) <= 1e-12 * scale);
}

TEST_CASE("the exact discrete solution is a fixed point of every cycle") {
    struct Case {
        int p, levels;
        double thetaDeg;
        Cplx phi;
    };
    for (const Case& c : {Case{2, 2, 0.0, Cplx(0.0)}, Case{1, 3, 35.0, Cplx(45.0 * 45.0, 0.0)}}) {
        CAPTURE(c.p);
        ProblemSpec spec = const_problem(c.p, c.thetaDeg, c.phi);
        const double theta = spec.thetaGlobal;
        const auto H = oracle::dense_assemble(c.p, c.levels, theta, phi_field(spec));
        const auto b = oracle::load_vector(c.p, c.levels, theta, chi_field(spec));
        const auto uStar = oracle::direct_solve(H, b);
        const double scale = std::max(1.0, max_abs(uStar));
        for (CycleKind kind :
             {CycleKind::TdAdd, CycleKind::TdBPX, CycleKind::BuFAS, CycleKind::TextbookAdd}) {
            CAPTURE(static_cast<int>(kind));
            Spacetree tree = Spacetree::build_regular(c.p, c.levels);
            tree.set_theta_assigner([&](int l, const Index& i) { return cell_theta(spec, l, i); });
            set_fine_interior_u(tree, uStar);
            OmegaPolicy pol;
            pol.kind = kind == CycleKind::TdBPX ? OmegaKind::UndampedCG : OmegaKind::Exponential;
            for (int n = 1; n <= 2; ++n) {
                switch (kind) {
                    case CycleKind::TdAdd: td_add(tree, spec, pol, n); break;
                    case CycleKind::TdBPX: td_bpx(tree, spec, pol, n); break;
                    case CycleKind::BuFAS: bu_fas(tree, spec, pol, n); break;
                    case CycleKind::TextbookAdd: textbook_add(tree, spec, pol.omegaS, pol.omegaS); break;
                }
                CHECK(max_abs_diff(get_fine_interior_u(tree), uStar) <= 1e-12 * scale);
            }
        }
    }
}

TEST_CASE("bu_fas with the BPX update conserves the injection property") {
    ProblemSpec spec = const_problem(2, 0.0, Cplx(-1000.0, 0.0));
    Spacetree tree = Spacetree::build_regular(2, 2);
    set_random_initial_guess(tree, 99);
    OmegaPolicy pol;
    pol.kind = OmegaKind::UndampedCG;
    pol.bpx = true;
    for (int n = 1; n <= 6; ++n) {
        bu_fas(tree, spec, pol, n);
        tree.for_each_vertex_at(1, [&](const Index& idx, Vertex& v) {
            if (v.hanging || v.onBoundary) return;
            Index fi = idx;
            fi[0] *= 3;
            fi[1] *= 3;
            const Vertex* fv = tree.find_vertex(2, fi);
            REQUIRE(fv != nullptr);
            CHECK(std::abs(v.ch[0].u - fv->ch[0].u) <= 1e-12);
        });
    }
}

TEST_CASE("staged corrections vanish at cPoints under hb and BPX") {
    ProblemSpec spec = const_problem(2, 0.0, Cplx(-1000.0, 0.0));
    for (int variant = 0; variant < 2; ++variant) {
        Spacetree tree = Spacetree::build_regular(2, 2);
        set_random_initial_guess(tree, 7);
        OmegaPolicy pol;
        pol.kind = OmegaKind::Exponential;
        pol.hbMask = variant == 0;
        for (int n = 1; n <= 5; ++n) {
            if (variant == 0)
                td_add(tree, spec, pol, n);
            else
                td_bpx(tree, spec, pol, n);
            tree.for_each_vertex([&](int level, const Index&, Vertex& v) {
                if (level < 1 || v.hanging || !v.cPoint) return;
                CHECK(v.ch[0].sc == Cplx(0.0));  // exact structural zero
            });
        }
    }
}

TEST_CASE("singular diagonal is detected") {
    // 1d, h=1/3: vertex diagonal 2/h - phi * 2h/3 vanishes at phi = 3/h^2 = 27.
    ProblemSpec spec = const_problem(1, 0.0, Cplx(27.0, 0.0));
    Spacetree tree = Spacetree::build_regular(1, 1);
    OmegaPolicy pol;
    CHECK_THROWS_AS(td_add(tree, spec, pol, 1), SingularDiagonalError);
}

TEST_CASE("textbook_add rejects adaptive grids") {
    Spacetree::Config cfg;
    cfg.dim = 2;
    Spacetree tree(cfg);
    tree.refine_cell(0, zero_index());
    Index c = zero_index();
    tree.refine_cell(1, c);
    tree.classify();
    ProblemSpec spec = const_problem(2, 0.0, Cplx(0.0));
    CHECK_THROWS_AS(textbook_add(tree, spec, Cplx(0.8, 0.0), Cplx(0.8, 0.0)),
                    UnsupportedConfigError);
}

TEST_CASE("adaptive grids: td cycles run and converge across level jumps") {
    // Ragged tree with a jump > 1 across a face; constant phi Poisson.
    Spacetree::Config cfg;
    cfg.dim = 2;
    Spacetree tree(cfg);
    tree.refine_cell(0, zero_index());
    Index c00 = zero_index();
    tree.refine_cell(1, c00);
    Index c22 = zero_index();
    c22[0] = 2;
    c22[1] = 2;
    tree.refine_cell(2, c22);
    tree.classify();
    tree.clear_structure_dirty();
    ProblemSpec spec = const_problem(2, 0.0, Cplx(0.0));
    OmegaPolicy pol;
    pol.kind = OmegaKind::Exponential;
    SweepOptions opt;
    opt.checkLemma1 = true;
    double first = 0.0, last = 0.0, lemma = 0.0;
    for (int n = 1; n <= 60; ++n) {
        const SweepStats st = td_add(tree, spec, pol, n, opt);
        const double norm = st.hNorm[0];
        if (n == 1) first = norm;
        last = norm;
        lemma = std::max(lemma, st.lemma1MaxError);
    }
    CHECK(last < 1e-6 * first);
    CHECK(lemma <= 1e-11);
}
