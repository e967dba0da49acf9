#pragma once

#include <cstdint>
#include <vector>

#include "treemg/kernels.hpp"
#include "treemg/problems.hpp"
#include "treemg/spacetree.hpp"

namespace treemg {

enum class OmegaKind { JacobiOnly, UndampedCG, LGrid, Exponential, Transition };

/// Relaxation-parameter family. The kind selects the multilevel smoothing
/// variant; hbMask zeroes updates at cPoints (hierarchical basis); bpx selects
/// the single-sweep BPX realisation where the masking happens structurally.
struct OmegaPolicy {
    OmegaKind kind = OmegaKind::Exponential;
    Cplx omegaS = Cplx(0.8, 0.0);
    int lGrid = 2;          // L of the undamped L-grid scheme
    bool hbMask = false;
    bool bpx = false;
    bool twoPhase = false;  // alternate the two complex relaxation factors per sweep
};

enum class CycleKind { TextbookAdd, BuFAS, TdAdd, TdBPX };

/// omega_1 = 0.01(sqrt(3) - i) on odd sweeps, omega_2 = -conj(omega_1) on even.
Cplx two_phase_schedule(int n);

/// Policy table value without the hb mask.
Cplx omega_unmasked(const OmegaPolicy& pol, int succ, int n);

/// Full vertex relaxation factor; the hb mask is applied last.
Cplx omega_of(const OmegaPolicy& pol, int succ, bool cPoint, int n);

struct SweepStats {
    std::vector<double> maxNorm;     // per channel, residual over interior fine-grid vertices
    std::vector<double> euclidNorm;
    std::vector<double> hNorm;
    std::size_t updatedFineVertices = 0;
    double lemma1MaxError = 0.0;
    int refinedCells = 0;
    int erasedCells = 0;
};

struct SweepOptions {
    bool applyMarks = false;   // honour pending cell refine/erase marks
    double hMinRefine = 0.0;   // refinement proceeds while the cell h exceeds this
    bool checkLemma1 = false;  // assert u_{l-1} = I u_l at cPoints inside enterCell
    bool collectNorms = true;
};

/// One single-sweep additive FAS traversal (coarse-to-fine); n is the 1-based
/// sweep counter used by the transition policy and the two-phase schedule.
SweepStats td_add(Spacetree& tree, const ProblemSpec& spec, const OmegaPolicy& pol, int n,
                  const SweepOptions& opt = {});

/// The single-sweep BPX variant; omega is cPoint-agnostic, masking and the
/// -P si correction happen structurally inside the traversal.
SweepStats td_bpx(Spacetree& tree, const ProblemSpec& spec, const OmegaPolicy& pol, int n,
                  const SweepOptions& opt = {});

/// One bottom-up additive FAS cycle (fine-to-coarse, then prolongation of pure
/// coarse corrections). Requires the construction condition u_{l-1} = I u_l at
/// entry; conserves it. With pol.bpx the update prolongs u_{l-1} - I(u + du).
void bu_fas(Spacetree& tree, const ProblemSpec& spec, const OmegaPolicy& pol, int n);

/// One textbook additive multigrid cycle in correction-scheme form; regular
/// hierarchies only. The coarsest level receives a sole smoothing step.
void textbook_add(Spacetree& tree, const ProblemSpec& spec, Cplx omegaS, Cplx omegaCG);

/// Residual norms over interior fine-grid vertices at the current iterate;
/// used after bu/textbook cycles (td sweeps collect norms in-traversal).
SweepStats evaluate_residual_norms(Spacetree& tree, const ProblemSpec& spec);

/// Seeded uniform-random complex initial guess on fine-grid vertices,
/// injection-consistent on all coarser levels; pipeline helpers reset.
void set_random_initial_guess(Spacetree& tree, std::uint64_t seed);

/// Reset sc, sf, si (startup invariant of the pipelined schemes).
void reset_pipeline_state(Spacetree& tree);

}  // namespace treemg
