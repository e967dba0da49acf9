#include <doctest.h>

#include <cstring>
#include <string>

#include "treemg.h"

TEST_CASE("c api: configure and run a small solve") {
    treemg_config* cfg = treemg_config_new();
    REQUIRE(cfg != nullptr);
    CHECK(treemg_config_set(cfg, "problem", "poisson-sin") == TREEMG_OK);
    CHECK(treemg_config_set(cfg, "dim", "2") == TREEMG_OK);
    CHECK(treemg_config_set(cfg, "level", "2") == TREEMG_OK);
    CHECK(treemg_config_set(cfg, "max_sweeps", "60") == TREEMG_OK);
    treemg_result* res = nullptr;
    REQUIRE(treemg_run(cfg, &res) == TREEMG_OK);
    REQUIRE(res != nullptr);
    CHECK(treemg_result_outcome(res) == TREEMG_RUN_CONVERGED);
    CHECK(treemg_result_sweeps(res) > 1);
    CHECK(treemg_result_vertex_count(res) == 64);
    CHECK(treemg_result_final_norm(res, "h", -1) > 0.0);
    CHECK(treemg_result_final_norm(res, "h", 0) == treemg_result_final_norm(res, "h", -1));
    CHECK(treemg_result_final_norm(res, "max", -1) >= treemg_result_final_norm(res, "h", -1));
    CHECK(treemg_result_first_norm(res) > treemg_result_final_norm(res, "h", -1));
    CHECK(treemg_result_work_units(res) == doctest::Approx(treemg_result_sweeps(res)));
    treemg_result_free(res);
    treemg_config_free(cfg);
}

TEST_CASE("c api: errors surface as status codes with messages") {
    treemg_config* cfg = treemg_config_new();
    CHECK(treemg_config_set(cfg, "no_such_key", "1") == TREEMG_E_USAGE);
    CHECK(std::strlen(treemg_last_error()) > 0);
    CHECK(treemg_config_load_file(cfg, "missing_file.cfg") == TREEMG_E_USAGE);
    // inconsistent configuration: no grid selection at all
    treemg_result* res = nullptr;
    CHECK(treemg_run(cfg, &res) == TREEMG_E_USAGE);
    CHECK(res == nullptr);
    // null arguments
    CHECK(treemg_config_set(nullptr, "a", "b") == TREEMG_E_USAGE);
    CHECK(treemg_run(cfg, nullptr) == TREEMG_E_USAGE);
    treemg_config_free(cfg);
    CHECK(treemg_version() >= 100);
}

TEST_CASE("c api: capacity errors map to their own status") {
    treemg_config* cfg = treemg_config_new();
    CHECK(treemg_config_set(cfg, "dim", "4") == TREEMG_OK);
    CHECK(treemg_config_set(cfg, "level", "6") == TREEMG_OK);  // 3^24 cells: far over the cap
    treemg_result* res = nullptr;
    CHECK(treemg_run(cfg, &res) == TREEMG_E_CAPACITY);
    treemg_config_free(cfg);
}
