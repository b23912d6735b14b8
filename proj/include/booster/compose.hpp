#pragma once

// Seed ranking and the beam-search composition of per-query seeds into one
// holistic configuration.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "booster/config_model.hpp"
#include "booster/sim_env.hpp"

namespace booster {

// ---------------------------------------------------------------------------
// Ranking

struct RankedSeed {
    Seed seed;
    double est_runtime = 0;
    int rank = 0;  // 1 = best for its query
    bool timed_out = false;
    // Index substitutions applied while estimating (seed index -> stand-in).
    std::map<std::string, std::string> substitutions;
};

using RankedSeeds = std::map<std::string, std::vector<RankedSeed>>;

void to_json(json& j, const RankedSeed& r);
void from_json(const json& j, RankedSeed& r);

// The stand-in for `index` when estimating `query`: the widest index of
// `pool` that covers it, adds only columns the query never reads, and is
// packed no looser. Returns nullopt when no such index exists.
std::optional<IndexDef> covering_substitute(const IndexDef& index, const QuerySpec& query,
                                            const std::vector<IndexDef>& pool);

// Executes every seed's plan (with covering substitutes) in ascending
// undistorted plan cost and ranks by simulated runtime.
RankedSeeds rank_seeds(const std::map<std::string, std::vector<Seed>>& seeds, const Workload& workload,
                       const SimEnv& sim);

// ---------------------------------------------------------------------------
// Budget and evaluation

class Budget {
public:
    enum class Mode { EvalCount, WallClock };

    static Budget evals(std::uint64_t n) { return Budget(Mode::EvalCount, static_cast<double>(n)); }
    // Simulated seconds of fresh executions.
    static Budget seconds(double s) { return Budget(Mode::WallClock, s); }
    // "500evals", "0evals", "1.5h", "90m", "30s". Throws InvalidInput.
    static Budget parse(const std::string& text);

    Mode mode() const { return mode_; }
    double limit() const { return limit_; }
    double consumed() const { return consumed_; }
    double remaining() const { return limit_ - consumed_; }
    bool exhausted() const;
    void charge(double amount) { consumed_ += amount; }

private:
    Budget(Mode m, double limit) : mode_(m), limit_(limit) {}
    Mode mode_;
    double limit_;
    double consumed_ = 0;
};

void to_json(json& j, const Budget& b);

// Results keyed by (query, plan signature, digest of the query's physical
// slice). Safe for concurrent use.
class PlanCache {
public:
    struct Entry {
        double runtime = 0;
        bool timed_out = false;  // runtime is then the timeout that was hit
    };

    std::optional<Entry> find(const std::string& key) const;
    void put(const std::string& key, Entry e);
    std::size_t size() const;
    std::uint64_t hits() const { return hits_; }

    static std::string key(const QuerySpec& q, const std::string& signature, const Configuration& config);

private:
    mutable std::mutex mutex_;
    std::map<std::string, Entry> entries_;
    mutable std::uint64_t hits_ = 0;
};

struct CandidateResult {
    Configuration config;
    std::map<std::string, double> runtime;
    std::map<std::string, bool> timed_out;
    double objective = 0;
    std::size_t fresh_executions = 0;
};

struct EvaluateResult {
    std::vector<CandidateResult> evaluated;  // completed prefix of the candidates
    std::optional<std::size_t> best;         // index into evaluated
    bool exhausted = false;                  // budget ran out before all were done
    std::size_t fresh_executions = 0;        // including discarded candidates
};

// Planning kernels: one plan per (candidate, query), or nullopt when the
// candidate's hints are unsatisfiable for the query.
using PlanGrid = std::vector<std::vector<std::optional<PlanTree>>>;
PlanGrid plan_candidates_serial(const std::vector<Configuration>& cands, const Workload& workload, const SimEnv& sim);
PlanGrid plan_candidates_parallel(const std::vector<Configuration>& cands, const Workload& workload,
                                  const SimEnv& sim);

enum class PlanKernel { Serial, Parallel };

struct EvaluateOptions {
    // Per-query execution timeouts (simulated seconds).
    std::map<std::string, double> timeouts;
    PlanKernel kernel = PlanKernel::Parallel;
};

// Candidates are executed in order. A candidate the budget cannot finish is
// discarded and evaluation stops.
EvaluateResult evaluate(const std::vector<Configuration>& cands, const Workload& workload, Budget& budget,
                        PlanCache& cache, const SimEnv& sim, const EvaluateOptions& options = {});

// ---------------------------------------------------------------------------
// Beam search

std::vector<Configuration> merge(const std::map<std::string, Seed>& per_query_seeds);

struct BeamState {
    Configuration current_best;
    std::map<std::string, double> per_query_runtime;
    std::map<std::string, RankedSeed> per_query_seed;
    double objective = 0;
    std::set<std::pair<std::string, std::string>> selected_history;  // (query, physical digest)
};

inline constexpr double kDegradationTolerance = 0.05;

// Picks the next query to roll out and records it in the history.
std::string select(BeamState& state, const std::vector<std::string>& query_order,
                   double tolerance = kDegradationTolerance);

enum class Mechanism { M1, M2, M3, M4 };
std::string_view to_string(Mechanism m);
std::optional<Mechanism> parse_mechanism(std::string_view s);
std::set<Mechanism> parse_mechanisms(const std::string& csv);  // "M1,M3" or "all"

struct RolloutCandidate {
    RankedSeed seed;
    Mechanism mechanism = Mechanism::M1;
};

struct RolloutStage {
    std::string name;  // "local", "physical-1" .. "physical-4"
    bool local = false;
    std::vector<RolloutCandidate> candidates;
};

// Staged alternates for one query. Empty stages are omitted.
std::vector<RolloutStage> rollout(const std::string& query_id, const BeamState& state, const RankedSeeds& ranked,
                                  const Workload& workload, const SimEnv& sim, const std::set<Mechanism>& mechanisms);

struct IterationRecord {
    int iteration = 0;
    std::string query;
    std::string stage;  // "none" when nothing improved
    double improvement = 0;
    double objective = 0;
};

struct ComposeOptions {
    std::set<Mechanism> mechanisms = {Mechanism::M1, Mechanism::M2, Mechanism::M3, Mechanism::M4};
    int max_iterations = 1000;
    PlanKernel kernel = PlanKernel::Parallel;
};

struct ComposeResult {
    BeamState state;
    double initial_objective = 0;
    bool initial_evaluated = false;  // false when the budget ran out before the first evaluation
    std::vector<IterationRecord> iterations;
    std::uint64_t evaluations = 0;  // fresh simulator executions
    Budget budget = Budget::evals(0);
    bool converged = false;
    std::size_t cache_hits = 0;
};

ComposeResult compose(const Workload& workload, const RankedSeeds& ranked, Budget budget, const SimEnv& sim,
                      const ComposeOptions& options = {});

// Digest document handed to the assisted tuner.
json digest(const ComposeResult& result);

}  // namespace booster
