#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treemg/amr.hpp"
#include "treemg/cycles.hpp"
#include "treemg/problems.hpp"
#include "treemg/spacetree.hpp"

namespace treemg {

enum class NormKind { Max, Euclid, H };

struct RunConfig {
    std::string problem = "poisson-sin";  // poisson-sin | helmholtz-sin | helmholtz-ball | gaussian
    int dim = 2;
    CycleKind cycle = CycleKind::TdAdd;
    OmegaKind omegaKind = OmegaKind::Exponential;
    std::optional<Cplx> omegaS;  // defaulted per problem when unset
    int lGrid = 2;
    bool hbMask = false;
    bool twoPhase = false;
    double thetaDeg = 0.0;
    std::optional<Cplx> phi;  // constant Helmholtz shift; problems may override
    int channels = 1;
    Cplx couplingAij = Cplx(0.0);  // uniform off-diagonal coupling
    int fixedLevel = 0;            // >0 selects a fixed regular grid
    double hMax = 0.0;             // adaptive run when both hMax and hMin set
    double hMin = 0.0;
    int maxSweeps = 100;
    double targetResidualDrop = 1e-6;
    NormKind norm = NormKind::H;
    std::string outputPrefix;  // empty: no artifacts written
    std::uint64_t seed = 0;
    bool randomInitialGuess = false;
    int ellMin = 1;
    double omegaCG = 0.0;  // textbook cycle only; 0 means omegaS

    void validate() const;
};

RunConfig parse_config_file(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

enum class RunOutcome { Converged, BudgetExhausted, Diverged };

struct SweepRecord {
    int sweep = 0;
    double workUnits = 0.0;
    std::size_t vertexCount = 0;
    double maxNorm = 0.0;
    double euclidNorm = 0.0;
    double hNorm = 0.0;
    std::vector<double> perChannelMax, perChannelEuclid, perChannelH;
    MarkStats amr;
};

struct RunResult {
    RunOutcome outcome = RunOutcome::BudgetExhausted;
    int sweeps = 0;
    double workUnits = 0.0;
    std::size_t vertexCount = 0;
    double firstNorm = 0.0;
    double finalNorm = 0.0;
    std::vector<SweepRecord> history;
    std::string message;
};

/// Executes one configured solver run; writes <prefix>.csv, <prefix>.grid and
/// <prefix>.log when an output prefix is set.
RunResult run(const RunConfig& cfg);

/// |x|_h = sqrt(sum_i |h_i|^dim |x_i|^2) with h_i the fine-cell mesh width at
/// entry i (as 3^-level_i).
double norm_h(std::span<const Cplx> values, std::span<const int> levels, int dim);

/// Cumulative fine-vertex updates divided by the cost of one sweep over the
/// regular grid at the reference resolution.
double work_units(double cumulativeUpdates, double referenceRegularCost);

/// Materialised problem description of a run configuration (also used by the
/// test suites to reproduce runner setups).
ProblemSpec problem_of(const RunConfig& cfg);
int start_level_of(const RunConfig& cfg);
int reference_level_of(const RunConfig& cfg);

}  // namespace treemg
