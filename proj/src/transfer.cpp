#include "treemg/transfer.hpp"

namespace treemg {

namespace {

constexpr double kW0[4] = {1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0};
constexpr double kW1[4] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};

int dim_of(std::size_t corners) {
    int p = 0;
    while ((std::size_t{1} << p) < corners) ++p;
    return p;
}

}  // namespace

double prolong_weight_1d(int rel, int corner) { return corner == 0 ? kW0[rel] : kW1[rel]; }

Cplx prolong(std::span<const Cplx> parentCorners, std::span<const int> relThirds) {
    const int p = dim_of(parentCorners.size());
    Cplx vals[1 << kMaxDim];
    for (std::size_t i = 0; i < parentCorners.size(); ++i) vals[i] = parentCorners[i];
    // Fold one axis at a time; coinciding components copy the corner exactly.
    int n = 1 << p;
    for (int d = 0; d < p; ++d) {
        const int rel = relThirds[d];
        n >>= 1;
        for (int i = 0; i < n; ++i) {
            const Cplx c0 = vals[2 * i], c1 = vals[2 * i + 1];
            if (rel == 0)
                vals[i] = c0;
            else if (rel == 3)
                vals[i] = c1;
            else
                vals[i] = kW0[rel] * c0 + kW1[rel] * c1;
        }
    }
    return vals[0];
}

void restrict_accumulate(std::span<Cplx> coarseAcc, std::span<const int> relThirds,
                         Cplx fineValue) {
    const int p = dim_of(coarseAcc.size());
    const int n = 1 << p;
    for (int k = 0; k < n; ++k) {
        double w = 1.0;
        for (int d = 0; d < p; ++d) w *= prolong_weight_1d(relThirds[d], (k >> d) & 1);
        if (w != 0.0) coarseAcc[k] += w * fineValue;
    }
}

Cplx inject(Cplx fineU) { return fineU; }

Cplx hierarchical_surplus(Cplx uFine, std::span<const Cplx> parentCorners,
                          std::span<const int> relThirds) {
    return uFine - prolong(parentCorners, relThirds);
}

}  // namespace treemg
