#include "treemg/runner.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace treemg {

void RunConfig::validate() const {
    const bool fixed = fixedLevel > 0;
    const bool adaptive = hMax > 0.0 || hMin > 0.0;
    if (fixed == adaptive)
        throw ConfigError("exactly one of { level, (h_max,h_min) } must be configured");
    if (adaptive && (hMax <= 0.0 || hMin <= 0.0 || hMin > hMax))
        throw ConfigError("adaptive runs need 0 < h_min <= h_max");
    if (maxSweeps < 1) throw ConfigError("max_sweeps must be >= 1");
    if (channels < 1) throw ConfigError("channels must be >= 1");
    if (dim < 1 || dim > kMaxDim) throw ConfigError("dim out of range");
    if (targetResidualDrop <= 0.0) throw ConfigError("target_drop must be positive");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

Cplx parse_cplx(const std::string& v) {
    const std::size_t comma = v.find(',');
    if (comma == std::string::npos) return Cplx(std::stod(v), 0.0);
    return Cplx(std::stod(v.substr(0, comma)), std::stod(v.substr(comma + 1)));
}

CycleKind parse_cycle(const std::string& v) {
    if (v == "td-add") return CycleKind::TdAdd;
    if (v == "td-bpx") return CycleKind::TdBPX;
    if (v == "bu-fas") return CycleKind::BuFAS;
    if (v == "textbook") return CycleKind::TextbookAdd;
    throw ConfigError("unknown cycle '" + v + "'");
}

OmegaKind parse_omega(const std::string& v) {
    if (v == "jacobi-only") return OmegaKind::JacobiOnly;
    if (v == "undamped") return OmegaKind::UndampedCG;
    if (v == "lgrid") return OmegaKind::LGrid;
    if (v == "exponential") return OmegaKind::Exponential;
    if (v == "transition") return OmegaKind::Transition;
    throw ConfigError("unknown omega policy '" + v + "'");
}

NormKind parse_norm(const std::string& v) {
    if (v == "max") return NormKind::Max;
    if (v == "euclid") return NormKind::Euclid;
    if (v == "h") return NormKind::H;
    throw ConfigError("unknown norm '" + v + "'");
}

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError("expected boolean, got '" + v + "'");
}

double aggregate(NormKind kind, const std::vector<double>& perChannel) {
    if (kind == NormKind::Max) {
        double m = 0.0;
        for (double v : perChannel) m = std::max(m, v);
        return m;
    }
    double s = 0.0;
    for (double v : perChannel) s += v * v;
    return std::sqrt(s);
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "problem") cfg.problem = value;
    else if (key == "dim") cfg.dim = std::stoi(value);
    else if (key == "cycle") cfg.cycle = parse_cycle(value);
    else if (key == "omega") cfg.omegaKind = parse_omega(value);
    else if (key == "omega_s") cfg.omegaS = parse_cplx(value);
    else if (key == "omega_cg") cfg.omegaCG = std::stod(value);
    else if (key == "lgrid") cfg.lGrid = std::stoi(value);
    else if (key == "hb") cfg.hbMask = parse_bool(value);
    else if (key == "two_phase") cfg.twoPhase = parse_bool(value);
    else if (key == "theta_deg") cfg.thetaDeg = std::stod(value);
    else if (key == "phi") cfg.phi = parse_cplx(value);
    else if (key == "channels") cfg.channels = std::stoi(value);
    else if (key == "coupling") cfg.couplingAij = parse_cplx(value);
    else if (key == "level") cfg.fixedLevel = std::stoi(value);
    else if (key == "h_max") cfg.hMax = std::stod(value);
    else if (key == "h_min") cfg.hMin = std::stod(value);
    else if (key == "max_sweeps") cfg.maxSweeps = std::stoi(value);
    else if (key == "target_drop") cfg.targetResidualDrop = std::stod(value);
    else if (key == "norm") cfg.norm = parse_norm(value);
    else if (key == "out") cfg.outputPrefix = value;
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "initial") cfg.randomInitialGuess = (value == "random");
    else if (key == "ell_min") cfg.ellMin = std::stoi(value);
    else throw ConfigError("unknown configuration key '" + key + "'");
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    RunConfig cfg;
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed config line: " + line);
        apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

ProblemSpec problem_of(const RunConfig& cfg) {
    ProblemSpec spec;
    spec.dim = cfg.dim;
    spec.thetaGlobal = cfg.thetaDeg * M_PI / 180.0;
    ChannelFields fields;
    if (cfg.problem == "poisson-sin") {
        fields.chi = ChiKind::SinProduct;
        fields.phiValue = Cplx(0.0);
    } else if (cfg.problem == "helmholtz-sin") {
        fields.chi = ChiKind::SinProduct;
        fields.phiValue = cfg.phi.value_or(Cplx(45.0 * 45.0, 0.0));
    } else if (cfg.problem == "helmholtz-ball") {
        fields.chi = ChiKind::BallIndicator;
        fields.phiValue = cfg.phi.value_or(Cplx(-1000.0, 0.0));
    } else if (cfg.problem == "gaussian") {
        if (cfg.dim != 2) throw ConfigError("the gaussian scenario is two-dimensional");
        fields.chi = ChiKind::GaussianScenario;
        fields.phi = PhiKind::GaussianScenario;
        spec.absorbing.enabled = true;
        spec.absorbing.fraction = 1.0 / 3.0;
        spec.absorbing.angle = 30.0 * M_PI / 180.0;
        spec.absorbing.openHi[0] = true;  // right and top faces are open,
        spec.absorbing.openHi[1] = true;  // bottom/left carry the nuclei axes
    } else {
        throw ConfigError("unknown problem '" + cfg.problem + "'");
    }
    if (cfg.phi && cfg.problem != "gaussian") fields.phiValue = *cfg.phi;
    spec.channels.assign(cfg.channels, fields);
    if (cfg.channels > 1 && cfg.couplingAij != Cplx(0.0)) {
        spec.coupling.assign(cfg.channels * cfg.channels, Cplx(0.0));
        for (int i = 0; i < cfg.channels; ++i)
            for (int j = 0; j < cfg.channels; ++j)
                if (i != j) spec.coupling[i * cfg.channels + j] = cfg.couplingAij;
    }
    spec.validate();
    return spec;
}

namespace {

int level_for_h(double h) {
    // Smallest level whose mesh width does not exceed h.
    int level = 0;
    double m = 1.0;
    while (m > h * (1.0 + 1e-12) && level < 12) {
        m /= 3.0;
        ++level;
    }
    return level;
}

Cplx default_omega(const RunConfig& cfg) {
    if (cfg.omegaS) return *cfg.omegaS;
    return cfg.problem == "gaussian" ? Cplx(0.4, 0.0) : Cplx(0.8, 0.0);
}

}  // namespace

int start_level_of(const RunConfig& cfg) {
    if (cfg.fixedLevel > 0) return cfg.fixedLevel;
    return std::max(cfg.ellMin, level_for_h(cfg.hMax));
}

int reference_level_of(const RunConfig& cfg) {
    if (cfg.fixedLevel > 0) return cfg.fixedLevel;
    return level_for_h(cfg.hMin);
}

double norm_h(std::span<const Cplx> values, std::span<const int> levels, int dim) {
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double h = std::pow(3.0, -levels[i]);
        acc += std::pow(h, dim) * std::norm(values[i]);
    }
    return std::sqrt(acc);
}

double work_units(double cumulativeUpdates, double referenceRegularCost) {
    return cumulativeUpdates / referenceRegularCost;
}

RunResult run(const RunConfig& cfg) {
    cfg.validate();
    const ProblemSpec spec = problem_of(cfg);
    const bool adaptive = cfg.fixedLevel == 0;
    const int startLevel = start_level_of(cfg);
    const int refLevel = reference_level_of(cfg);

    Spacetree::Config tcfg;
    tcfg.dim = cfg.dim;
    tcfg.channels = cfg.channels;
    tcfg.ellMin = cfg.ellMin;
    Spacetree tree = Spacetree::build_regular(cfg.dim, startLevel, tcfg);
    tree.set_theta_assigner([&spec](int level, const Index& idx) { return cell_theta(spec, level, idx); });
    if (cfg.randomInitialGuess) set_random_initial_guess(tree, cfg.seed);

    OmegaPolicy pol;
    pol.kind = cfg.omegaKind;
    pol.omegaS = default_omega(cfg);
    pol.lGrid = cfg.lGrid;
    pol.hbMask = cfg.hbMask;
    pol.twoPhase = cfg.twoPhase;

    AmrConfig amr;
    amr.hMax = cfg.hMax;
    amr.hMin = cfg.hMin;

    if (adaptive && (cfg.cycle == CycleKind::BuFAS || cfg.cycle == CycleKind::TextbookAdd))
        throw UnsupportedConfigError("adaptive runs require a single-sweep cycle (td-add or td-bpx)");

    double referenceCost = 1.0;
    {
        double n = 1.0;
        for (int d = 0; d < cfg.dim; ++d) n *= static_cast<double>(pow3(refLevel) - 1);
        referenceCost = std::max(1.0, n);
    }

    std::ofstream csv, log;
    if (!cfg.outputPrefix.empty()) {
        csv.open(cfg.outputPrefix + ".csv");
        log.open(cfg.outputPrefix + ".log");
        if (!csv || !log) throw ConfigError("cannot write outputs at prefix '" + cfg.outputPrefix + "'");
        csv << "sweep,workUnits,vertexCount,maxNorm,euclid,hNorm";
        if (cfg.channels > 1)
            for (int c = 0; c < cfg.channels; ++c)
                csv << ",maxNorm" << c << ",euclid" << c << ",hNorm" << c;
        csv << "\n";
        log << "# treemg run\n";
        log << "problem=" << cfg.problem << " dim=" << cfg.dim << " theta_deg=" << cfg.thetaDeg
            << " channels=" << cfg.channels << "\n";
        log << (adaptive ? "adaptive" : "fixed") << " start_level=" << startLevel
            << " reference_level=" << refLevel << " max_sweeps=" << cfg.maxSweeps << "\n";
    }

    RunResult res;
    double cumulativeUpdates = 0.0;
    double minNorm = 0.0;
    bool haveMin = false;
    SweepOptions opt;
    opt.applyMarks = adaptive;
    opt.hMinRefine = cfg.hMin;

    char buf[256];
    for (int n = 1; n <= cfg.maxSweeps; ++n) {
        SweepStats stats;
        std::string failure;
        try {
            switch (cfg.cycle) {
                case CycleKind::TdAdd: stats = td_add(tree, spec, pol, n, opt); break;
                case CycleKind::TdBPX: stats = td_bpx(tree, spec, pol, n, opt); break;
                case CycleKind::BuFAS:
                    bu_fas(tree, spec, pol, n);
                    stats = evaluate_residual_norms(tree, spec);
                    break;
                case CycleKind::TextbookAdd: {
                    const Cplx wcg = cfg.omegaCG != 0.0 ? Cplx(cfg.omegaCG, 0.0) : pol.omegaS;
                    textbook_add(tree, spec, pol.omegaS, wcg);
                    stats = evaluate_residual_norms(tree, spec);
                    break;
                }
            }
        } catch (const SingularDiagonalError& e) {
            failure = e.what();
        }
        res.sweeps = n;
        if (!failure.empty()) {
            res.outcome = RunOutcome::Diverged;
            res.message = failure;
            if (log) log << "sweep " << n << ": " << failure << "\n";
            break;
        }
        cumulativeUpdates += static_cast<double>(stats.updatedFineVertices);

        SweepRecord rec;
        rec.sweep = n;
        rec.workUnits = work_units(cumulativeUpdates, referenceCost);
        rec.vertexCount = tree.interior_fine_vertex_count();
        rec.maxNorm = aggregate(NormKind::Max, stats.maxNorm);
        rec.euclidNorm = aggregate(NormKind::Euclid, stats.euclidNorm);
        rec.hNorm = aggregate(NormKind::H, stats.hNorm);
        rec.perChannelMax = stats.maxNorm;
        rec.perChannelEuclid = stats.euclidNorm;
        rec.perChannelH = stats.hNorm;

        const double current = cfg.norm == NormKind::Max    ? rec.maxNorm
                               : cfg.norm == NormKind::Euclid ? rec.euclidNorm
                                                              : rec.hNorm;
        if (n == 1) res.firstNorm = current;
        res.finalNorm = current;
        res.workUnits = rec.workUnits;
        res.vertexCount = rec.vertexCount;

        if (csv) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%zu,%.17g,%.17g,%.17g", n, rec.workUnits,
                          rec.vertexCount, rec.maxNorm, rec.euclidNorm, rec.hNorm);
            csv << buf;
            if (cfg.channels > 1)
                for (int c = 0; c < cfg.channels; ++c) {
                    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g",
                                  rec.perChannelMax[c],
                                  rec.perChannelEuclid[c],
                                  rec.perChannelH[c]);
                    csv << buf;
                }
            csv << "\n";
        }

        if (!std::isfinite(current)) {
            res.history.push_back(std::move(rec));
            res.outcome = RunOutcome::Diverged;
            res.message = "non-finite residual";
            break;
        }
        if (!haveMin || current < minNorm) {
            minNorm = current;
            haveMin = true;
        }
        if (current > minNorm * 1e6 && n > 1) {
            res.history.push_back(std::move(rec));
            res.outcome = RunOutcome::Diverged;
            res.message = "residual grew six orders over its minimum";
            break;
        }
        const bool converged =
            res.firstNorm < 1e-300 || current <= cfg.targetResidualDrop * res.firstNorm;

        if (adaptive) {
            rec.amr = mark(tree, amr);
            if (log)
                log << "sweep " << n << ": refined=" << stats.refinedCells
                    << " erased=" << stats.erasedCells << " marks(refine=" << rec.amr.refineCells
                    << ", erase=" << rec.amr.eraseCells << ", veto_conv=" << rec.amr.vetoConvergence
                    << ", veto_hmin=" << rec.amr.vetoHMin << ", veto_hmax=" << rec.amr.vetoHMax
                    << ")\n";
        }
        res.history.push_back(std::move(rec));
        if (converged) {
            res.outcome = RunOutcome::Converged;
            break;
        }
        if (n == cfg.maxSweeps) res.outcome = RunOutcome::BudgetExhausted;
    }

    if (!cfg.outputPrefix.empty()) {
        std::ofstream grid(cfg.outputPrefix + ".grid");
        tree.dump(grid);
        if (log) {
            const char* name = res.outcome == RunOutcome::Converged      ? "converged"
                               : res.outcome == RunOutcome::Diverged     ? "diverged"
                                                                         : "budget-exhausted";
            log << "status=" << name << " sweeps=" << res.sweeps << " workUnits=" << res.workUnits
                << " vertices=" << res.vertexCount << " firstNorm=" << res.firstNorm
                << " finalNorm=" << res.finalNorm << "\n";
        }
    }
    return res;
}

}  // namespace treemg
