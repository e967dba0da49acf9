/* C interface of the treemg solver library: complex-valued additive geometric
 * multilevel solvers for Poisson/Helmholtz problems on adaptive spacetrees.
 * Opaque handles plus integer status codes; all functions are thread-safe as
 * long as each handle is used from one thread at a time. */

#ifndef TREEMG_H
#define TREEMG_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum treemg_status {
    TREEMG_OK = 0,
    TREEMG_E_USAGE = 1,     /* bad key, malformed value, inconsistent config */
    TREEMG_E_CAPACITY = 2,  /* grid would exceed the configured memory cap */
    TREEMG_E_RUNTIME = 3    /* numerical or I/O failure during the run */
} treemg_status;

typedef enum treemg_outcome {
    TREEMG_RUN_CONVERGED = 0,
    TREEMG_RUN_BUDGET_EXHAUSTED = 1,
    TREEMG_RUN_DIVERGED = 2
} treemg_outcome;

typedef struct treemg_config treemg_config;
typedef struct treemg_result treemg_result;

unsigned treemg_version(void);

/* Most recent error message of the calling thread; empty string if none. */
const char* treemg_last_error(void);

treemg_config* treemg_config_new(void);
void treemg_config_free(treemg_config* cfg);

/* Flat key=value configuration file; keys match treemg_config_set. */
treemg_status treemg_config_load_file(treemg_config* cfg, const char* path);
treemg_status treemg_config_set(treemg_config* cfg, const char* key, const char* value);

/* Executes the configured solver run. On success *out owns the result and
 * must be released with treemg_result_free. */
treemg_status treemg_run(const treemg_config* cfg, treemg_result** out);

void treemg_result_free(treemg_result* res);
treemg_outcome treemg_result_outcome(const treemg_result* res);
int treemg_result_sweeps(const treemg_result* res);
double treemg_result_work_units(const treemg_result* res);
long long treemg_result_vertex_count(const treemg_result* res);
/* which: "max", "euclid" or "h"; channel -1 aggregates over channels. */
double treemg_result_final_norm(const treemg_result* res, const char* which, int channel);
double treemg_result_first_norm(const treemg_result* res);

#ifdef __cplusplus
}
#endif

#endif /* TREEMG_H */
