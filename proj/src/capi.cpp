#include "treemg.h"

#include <cstring>
#include <string>

#include "treemg/runner.hpp"

using namespace treemg;

struct treemg_config {
    RunConfig cfg;
};

struct treemg_result {
    RunResult res;
    int channels = 1;
};

namespace {

thread_local std::string g_lastError;

treemg_status fail(treemg_status code, const char* what) {
    g_lastError = what ? what : "unknown error";
    return code;
}

template <class Fn>
treemg_status guarded(Fn&& fn) {
    try {
        fn();
        g_lastError.clear();
        return TREEMG_OK;
    } catch (const ConfigError& e) {
        return fail(TREEMG_E_USAGE, e.what());
    } catch (const UnsupportedConfigError& e) {
        return fail(TREEMG_E_USAGE, e.what());
    } catch (const CapacityError& e) {
        return fail(TREEMG_E_CAPACITY, e.what());
    } catch (const std::exception& e) {
        return fail(TREEMG_E_RUNTIME, e.what());
    }
}

}  // namespace

extern "C" {

unsigned treemg_version(void) { return 100; }

const char* treemg_last_error(void) { return g_lastError.c_str(); }

treemg_config* treemg_config_new(void) { return new treemg_config(); }

void treemg_config_free(treemg_config* cfg) { delete cfg; }

treemg_status treemg_config_load_file(treemg_config* cfg, const char* path) {
    if (!cfg || !path) return fail(TREEMG_E_USAGE, "null argument");
    return guarded([&] { cfg->cfg = parse_config_file(path); });
}

treemg_status treemg_config_set(treemg_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) return fail(TREEMG_E_USAGE, "null argument");
    return guarded([&] { apply_override(cfg->cfg, key, value); });
}

treemg_status treemg_run(const treemg_config* cfg, treemg_result** out) {
    if (!cfg || !out) return fail(TREEMG_E_USAGE, "null argument");
    *out = nullptr;
    auto* res = new treemg_result();
    const treemg_status st = guarded([&] {
        res->res = run(cfg->cfg);
        res->channels = cfg->cfg.channels;
    });
    if (st != TREEMG_OK) {
        delete res;
        return st;
    }
    *out = res;
    return TREEMG_OK;
}

void treemg_result_free(treemg_result* res) { delete res; }

treemg_outcome treemg_result_outcome(const treemg_result* res) {
    switch (res->res.outcome) {
        case RunOutcome::Converged: return TREEMG_RUN_CONVERGED;
        case RunOutcome::BudgetExhausted: return TREEMG_RUN_BUDGET_EXHAUSTED;
        case RunOutcome::Diverged: return TREEMG_RUN_DIVERGED;
    }
    return TREEMG_RUN_DIVERGED;
}

int treemg_result_sweeps(const treemg_result* res) { return res->res.sweeps; }

double treemg_result_work_units(const treemg_result* res) { return res->res.workUnits; }

long long treemg_result_vertex_count(const treemg_result* res) {
    return static_cast<long long>(res->res.vertexCount);
}

double treemg_result_final_norm(const treemg_result* res, const char* which, int channel) {
    if (res->res.history.empty()) return 0.0;
    const SweepRecord& rec = res->res.history.back();
    const bool agg = channel < 0;
    if (!agg && channel >= res->channels) return -1.0;
    auto c = channel;
    if (std::strcmp(which, "max") == 0) return agg ? rec.maxNorm : rec.perChannelMax[c];
    if (std::strcmp(which, "euclid") == 0) return agg ? rec.euclidNorm : rec.perChannelEuclid[c];
    if (std::strcmp(which, "h") == 0) return agg ? rec.hNorm : rec.perChannelH[c];
    return -1.0;
}

double treemg_result_first_norm(const treemg_result* res) { return res->res.firstNorm; }

}  // extern "C"
