// Batch solver runner. Usage:
//   solve <config>... [--key value]... [--jobs N]
// Each config file produces its own residual CSV, grid dump and run log;
// --key value pairs override every config. Exit codes: 0 converged,
// 2 sweep budget exhausted, 3 diverged, 64 usage error.

#include <cstdio>
#include <cstring>
#include <string>
#include <thread>
#include <vector>

#include "treemg.h"

namespace {

struct Job {
    std::string configPath;
    int exitCode = 64;
    std::string message;
};

int run_one(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides,
            std::string& message) {
    treemg_config* cfg = treemg_config_new();
    if (treemg_config_load_file(cfg, path.c_str()) != TREEMG_OK) {
        message = treemg_last_error();
        treemg_config_free(cfg);
        return 64;
    }
    for (const auto& [k, v] : overrides) {
        if (treemg_config_set(cfg, k.c_str(), v.c_str()) != TREEMG_OK) {
            message = treemg_last_error();
            treemg_config_free(cfg);
            return 64;
        }
    }
    treemg_result* res = nullptr;
    const treemg_status st = treemg_run(cfg, &res);
    treemg_config_free(cfg);
    if (st != TREEMG_OK) {
        message = treemg_last_error();
        return st == TREEMG_E_USAGE ? 64 : 3;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "sweeps=%d workUnits=%.6g vertices=%lld hNorm=%.6g",
                  treemg_result_sweeps(res), treemg_result_work_units(res),
                  treemg_result_vertex_count(res), treemg_result_final_norm(res, "h", -1));
    message = buf;
    int code = 0;
    switch (treemg_result_outcome(res)) {
        case TREEMG_RUN_CONVERGED: code = 0; break;
        case TREEMG_RUN_BUDGET_EXHAUSTED: code = 2; break;
        case TREEMG_RUN_DIVERGED: code = 3; break;
    }
    treemg_result_free(res);
    return code;
}

void usage() {
    std::fprintf(stderr,
                 "usage: solve <config>... [--key value]... [--jobs N]\n"
                 "keys: problem dim cycle omega omega_s omega_cg lgrid hb two_phase theta_deg phi\n"
                 "      channels coupling level h_max h_min max_sweeps target_drop norm out seed\n"
                 "      initial ell_min\n");
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<Job> jobs;
    std::vector<std::pair<std::string, std::string>> overrides;
    int threads = 1;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--help" || arg == "-h") {
            usage();
            return 0;
        }
        if (arg == "--jobs") {
            if (i + 1 >= argc) {
                usage();
                return 64;
            }
            threads = std::atoi(argv[++i]);
            if (threads < 1) threads = 1;
            continue;
        }
        if (arg.rfind("--", 0) == 0) {
            if (i + 1 >= argc) {
                usage();
                return 64;
            }
            overrides.emplace_back(arg.substr(2), argv[++i]);
            continue;
        }
        jobs.push_back(Job{arg});
    }
    if (jobs.empty()) {
        usage();
        return 64;
    }

    if (threads == 1 || jobs.size() == 1) {
        for (Job& j : jobs) j.exitCode = run_one(j.configPath, overrides, j.message);
    } else {
        std::vector<std::thread> pool;
        std::size_t next = 0;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&jobs, &overrides, &next, t, threads] {
                for (std::size_t i = static_cast<std::size_t>(t); i < jobs.size(); i += static_cast<std::size_t>(threads))
                    jobs[i].exitCode = run_one(jobs[i].configPath, overrides, jobs[i].message);
                (void)next;
            });
        for (std::thread& th : pool) th.join();
    }

    int worst = 0;
    for (const Job& j : jobs) {
        const char* status = j.exitCode == 0   ? "converged"
                             : j.exitCode == 2 ? "budget-exhausted"
                             : j.exitCode == 3 ? "diverged"
                                               : "usage-error";
        std::printf("%s: %s (%s)\n", j.configPath.c_str(), status, j.message.c_str());
        if (j.exitCode == 64 || (worst != 64 && j.exitCode > worst)) worst = j.exitCode;
    }
    return worst;
}
