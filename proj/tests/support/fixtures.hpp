#pragma once

// Shared fixtures and brute-force oracles for the test and acceptance
// binaries.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "booster/artifact_repo.hpp"
#include "booster/compose.hpp"
#include "booster/config_model.hpp"
#include "booster/sim_env.hpp"

namespace booster::testing {

using Rng = std::mt19937_64;

int uniform_int(Rng& rng, int lo, int hi);
double uniform_real(Rng& rng, double lo, double hi);

SchemaDef random_schema(Rng& rng, int n_tables, int max_columns = 5);
// Connected join tree over n distinct tables of the schema, with random
// predicates, reads and (sometimes) a single-column order_by.
QuerySpec random_query(Rng& rng, const SchemaDef& schema, int n_tables, const std::string& id);
std::vector<IndexDef> random_indexes(Rng& rng, const SchemaDef& schema, int n);
QueryOptions random_options(Rng& rng, const QuerySpec& q);

// Small star schema (orders, customer, item) with four queries q1..q4.
Workload toy_workload();

// Random tuner trajectory over the workload: random knobs and indexes per
// step, recorded runtimes from the simulator, and queries randomly absent
// from some steps when `gaps` is set.
std::vector<TrajectoryStep> random_trajectory(Rng& rng, const Workload& w, const SimEnv& sim,
                                              const std::string& trial, int steps, bool gaps);

// Suggestion-shaped JSON for a query that mixes valid settings with the
// kinds of mistakes models make: foreign knobs, out-of-range values,
// indexes on missing columns, hints on absent tables, missing fields.
json random_suggestion(Rng& rng, const SchemaDef& schema, const QuerySpec& q);

// A QConfig for `q` under a random configuration, planned and timed on sim.
QConfig random_reference(Rng& rng, const SimEnv& sim, const QuerySpec& q, const std::string& id);

// Every plan shape the planner may choose, enumerated directly from the
// planner's search space rules and costed through cost_plan. Returns the
// (cost, signature)-minimal shape, or nullopt when no shape is feasible.
// Only intended for small queries.
struct OraclePlan {
    PlanTree plan;
    double cost = 0;
    std::size_t shapes = 0;
};
std::optional<OraclePlan> brute_force_plan(const SimEnv& env, const QuerySpec& q, const Configuration& config);

// Second implementation of the runtime rule, driven from a re-costed tree.
double reference_runtime(const SimEnv& env, const QuerySpec& q, const Configuration& config,
                         const PlanTree& shape);

// Single-table scan over the toy schema's orders/customer tables.
QuerySpec scan_query(const std::string& id, const std::vector<Predicate>& predicates,
                     const std::vector<ColumnRef>& reads,
                     std::optional<std::vector<ColumnRef>> order_by = std::nullopt);

// Hand-built seed: indexes by id, knobs through the default dictionary.
Seed make_seed(const std::string& query_id, const std::vector<std::string>& indexes,
               const std::vector<std::pair<std::string, json>>& knobs = {}, Provenance provenance = Provenance::LLM);

// Workloads of at most four queries with at most four minimal seeds each,
// where the best seeds of different queries interfere through shared
// indexes or planner knobs.
struct ComposeFixture {
    std::string name;
    Workload workload;
    std::map<std::string, std::vector<Seed>> seeds;
};
std::vector<ComposeFixture> adversarial_fixtures();

// Best workload runtime over every assignment of one ranked seed per query,
// every merged candidate of that assignment, and every subset of indexes
// each query may additionally hide, planned and timed directly.
struct BruteForceResult {
    double objective = 0;
    std::size_t configurations = 0;  // (query, configuration) pairs timed
};
BruteForceResult brute_force_compose(const Workload& workload, const RankedSeeds& ranked, const SimEnv& sim);

double stock_objective(const Workload& workload, const SimEnv& sim);
double workload_objective(const Workload& workload, const Configuration& config, const SimEnv& sim);

// Template drift: a history tuned on `before`, and `after` where half of the
// queries keep their template but change parameters.
struct DriftFixture {
    Workload before;
    Workload after;
    std::vector<std::string> changed;
    std::vector<TrajectoryStep> history;
};
DriftFixture make_drift_fixture(std::uint64_t seed);

}  // namespace booster::testing
