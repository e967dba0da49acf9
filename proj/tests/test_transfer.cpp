#include <doctest.h>

#include <span>
#include <cmath>
#include <vector>

#include "treemg/transfer.hpp"

using namespace treemg;

namespace {

double rnd(std::uint64_t& state) {
    state = state * 6364136223846793005ull + 1442695040888963407ull;
    return static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5;
}

Cplx crnd(std::uint64_t& state) { return Cplx(rnd(state), rnd(state)); }

}  // namespace

TEST_CASE("prolongation basics") {
    SUBCASE("identity at corners") {
        const Cplx corners[4] = {Cplx(3.5, 1.0), Cplx(-2.0), Cplx(9.0), Cplx(0.25)};
        const int rel00[2] = {0, 0};
        CHECK(prolong(corners, rel00, 2) == corners[0]);
        const int rel33[2] = {3, 3};
        CHECK(prolong(corners, rel33, 2) == corners[3]);
    }
    SUBCASE("1d third point") {
        const Cplx corners[2] = {Cplx(0.0), Cplx(1.0)};
        const int rel[1] = {1};
        CHECK(std::abs(prolong(corners, rel, 1) - Cplx(1.0 / 3.0)) < 1e-16);
    }
    SUBCASE("2d bilinear weight product") {
        const Cplx corners[4] = {Cplx(1.0), Cplx(0.0), Cplx(0.0), Cplx(0.0)};
        const int rel[2] = {1, 2};
        CHECK(std::abs(prolong(corners, rel, 2) - Cplx(2.0 / 9.0)) < 1e-15);
    }
}

TEST_CASE("partition of unity, exact in thirds") {
    // Weight numerators over the common denominator 3 per axis.
    for (int rel = 0; rel <= 3; ++rel) {
        const int n0 = static_cast<int>(std::lround(3.0 * prolong_weight_1d(rel, 0)));
        const int n1 = static_cast<int>(std::lround(3.0 * prolong_weight_1d(rel, 1)));
        CHECK(n0 + n1 == 3);
        CHECK(std::abs(prolong_weight_1d(rel, 0) - n0 / 3.0) < 1e-16);
        CHECK(std::abs(prolong_weight_1d(rel, 1) - n1 / 3.0) < 1e-16);
    }
    // Coinciding positions put full weight on a single corner.
    CHECK(prolong_weight_1d(0, 0) == 1.0);
    CHECK(prolong_weight_1d(0, 1) == 0.0);
    CHECK(prolong_weight_1d(3, 1) == 1.0);
}

TEST_CASE("constant preservation") {
    const Cplx ones[8] = {Cplx(1.0), Cplx(1.0), Cplx(1.0), Cplx(1.0),
                          Cplx(1.0), Cplx(1.0), Cplx(1.0), Cplx(1.0)};
    for (int p = 1; p <= 3; ++p) {
        int rel[kMaxDim] = {0, 0, 0, 0};
        int total = 1;
        for (int d = 0; d < p; ++d) total *= 4;
        for (int t = 0; t < total; ++t) {
            int tt = t;
            for (int d = 0; d < p; ++d) {
                rel[d] = tt % 4;
                tt /= 4;
            }
            CHECK(std::abs(prolong(ones, rel, p) - Cplx(1.0)) < 1e-15);
        }
    }
}

TEST_CASE("adjointness of P and R on random complex fields") {
    // <P uc, vf> = <uc, R vf> summed over the full fine/coarse lattices of a
    // 2-level p=2 grid (complex bilinear pairing, no conjugation).
    std::uint64_t state = 7;
    for (int trial = 0; trial < 100; ++trial) {
        const int mc = 4, mf = 10;  // 3+1 and 9+1 lattice points per axis
        std::vector<Cplx> uc(mc * mc), vf(mf * mf);
        for (Cplx& v : uc) v = crnd(state);
        for (Cplx& v : vf) v = crnd(state);
        Cplx lhs(0.0), rhs(0.0);
        std::vector<Cplx> racc(mc * mc, Cplx(0.0));
        for (int y = 0; y < mf; ++y)
            for (int x = 0; x < mf; ++x) {
                const int q0 = std::min(x / 3, 2), q1 = std::min(y / 3, 2);
                const int rel[2] = {x - 3 * q0, y - 3 * q1};
                const Cplx corners[4] = {uc[q1 * mc + q0], uc[q1 * mc + q0 + 1],
                                         uc[(q1 + 1) * mc + q0], uc[(q1 + 1) * mc + q0 + 1]};
                lhs += prolong(corners, rel, 2) * vf[y * mf + x];
                Cplx acc[4] = {};
                restrict_accumulate(acc, rel, vf[y * mf + x]);
                racc[q1 * mc + q0] += acc[0];
                racc[q1 * mc + q0 + 1] += acc[1];
                racc[(q1 + 1) * mc + q0] += acc[2];
                racc[(q1 + 1) * mc + q0 + 1] += acc[3];
            }
        for (int i = 0; i < mc * mc; ++i) rhs += uc[i] * racc[i];
        CHECK(std::abs(lhs - rhs) <= 1e-13 * (1.0 + std::abs(lhs)));
    }
}

TEST_CASE("restriction column sums") {
    // Constant field 1 over the four 1d child positions of one refined cell.
    Cplx acc[2] = {Cplx(0.0), Cplx(0.0)};
    for (int rel = 0; rel <= 3; ++rel) {
        const int r[1] = {rel};
        restrict_accumulate(acc, r, Cplx(1.0));
    }
    CHECK(std::abs(acc[0] - Cplx(2.0)) < 1e-14);
    CHECK(std::abs(acc[1] - Cplx(2.0)) < 1e-14);
}

TEST_CASE("injection and hierarchical surplus") {
    CHECK(inject(Cplx(3.0, 4.0)) == Cplx(3.0, 4.0));
    // I o P at a coinciding position is the identity.
    const Cplx corners[2] = {Cplx(5.0, -1.0), Cplx(2.0, 2.0)};
    const int rel0[1] = {0};
    CHECK(inject(prolong(corners, rel0, 1)) == corners[0]);

    // u in the range of P has zero surplus.
    std::uint64_t state = 99;
    for (int trial = 0; trial < 100; ++trial) {
        Cplx c[4];
        for (Cplx& v : c) v = crnd(state);
        for (int r0 = 0; r0 <= 3; ++r0)
            for (int r1 = 0; r1 <= 3; ++r1) {
                const int rel[2] = {r0, r1};
                const Cplx uf = prolong(c, rel, 2);
                CHECK(std::abs(hierarchical_surplus(uf, c, rel)) < 1e-14);
                // reconstruction: uhat + P(coarse) returns u exactly enough
                const Cplx other = crnd(state);
                const Cplx uhat = hierarchical_surplus(other, c, rel);
                CHECK(std::abs(uhat + prolong(c, rel, 2) - other) <= 1e-13 * (1.0 + std::abs(other)));
            }
    }
}
