#pragma once

#include "treemg/spacetree.hpp"

namespace treemg {

struct AmrConfig {
    double hMax = 1.0 / 3.0;
    double hMin = 1e-3;
    double refineFraction = 0.10;
    double eraseFraction = 0.02;
    int binCount = 20;
    double convergenceVeto = 1e-2;

    void validate() const;
};

struct MarkStats {
    std::size_t refineVertices = 0;
    std::size_t eraseVertices = 0;
    std::size_t refineCells = 0;
    std::size_t eraseCells = 0;
    std::size_t vetoConvergence = 0;
    std::size_t vetoHMin = 0;
    std::size_t vetoHMax = 0;
};

/// Feature value s = max_d |u(v-e_d) - 2u(v) + u(v+e_d)| of one vertex; the
/// modulus of the complex second difference per axis. Axes without both
/// in-domain neighbours contribute 0; hanging neighbour values are resolved by
/// interpolation.
double feature(const Spacetree& tree, int level, const Index& idx, int channel);

/// Number of extreme bins (from the top for refinement, from the bottom for
/// erasing) whose cumulative vertex share lies closest to the goal fraction;
/// ties towards fewer bins, zero when even one bin overshoots the goal by
/// more than marking nothing would undershoot it.
int select_bins(const std::vector<std::size_t>& hist, std::size_t total, double goal,
                bool fromTop);

/// Computes features on every stored vertex, bins the interior fine-grid ones
/// into equal-width subranges per channel, selects the top/bottom bins closest
/// to the refine/erase fractions, applies the vetoes and translates the
/// surviving vertex marks into cell refine/erase marks. The marks take effect
/// during the next traversal (refinement on descent, erase on backtracking);
/// refinement wins over erase on overlap.
MarkStats mark(Spacetree& tree, const AmrConfig& cfg);

/// Clears any pending cell marks without applying them.
void clear_marks(Spacetree& tree);

}  // namespace treemg
