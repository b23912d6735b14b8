#pragma once

// Ingestion of tuner artifacts: parsing trajectories through data-driven
// adapters, picking interesting configurations, and building linked QConfigs.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "booster/config_model.hpp"
#include "booster/schematic_type.hpp"
#include "booster/sim_env.hpp"

namespace booster {

struct TrajectoryStep {
    long step_index = 0;
    Configuration config;
    std::map<std::string, double> per_query_runtime;
    // Queries the step executed but whose runtime the artifact lacks.
    std::set<std::string> unrecorded;
    double objective = 0;
    std::string tuner_id;
    std::string trial_id;
    std::map<std::string, PlanTree> plans;  // optional recorded plans

    // Queries present in the step.
    std::set<std::string> queries() const;
};

void to_json(json& j, const TrajectoryStep& s);
void from_json(const json& j, TrajectoryStep& s);

struct QConfig {
    std::string qconfig_id;
    QuerySpec query;
    Configuration config_slice;
    PlanTree plan;
    double runtime = 0;
    std::string schema_meta;
    std::vector<std::string> links;
    std::map<SchematicType, std::vector<double>> identity_vectors;
    std::string trial_id;
    long step_index = 0;
    std::string tuner_id;
};

void to_json(json& j, const QConfig& q);
void from_json(const json& j, QConfig& q);

std::string qconfig_id(const std::string& trial_id, const std::string& query_id, long step_index);

// ---------------------------------------------------------------------------
// Adapters

// Declarative description of one tuner's artifact layout. Field paths are
// dot-separated keys into each step object.
struct Adapter {
    std::string id;
    std::string tuner_id;
    // "jsonl": one step per line. "json": a document holding the steps at
    // steps_path (empty path = the document is the array).
    std::string format = "jsonl";
    std::string steps_path;
    std::string step_index_field = "step_index";
    std::string trial_field = "trial_id";
    std::string default_trial = "trial-0";
    std::string objective_field = "objective";
    std::string runtimes_field = "per_query_runtime";
    std::string knobs_field = "config.system_knobs";
    std::string indexes_field = "config.indexes";
    std::string options_field = "config.query_options";
    std::string plans_field = "plans";
    // Foreign tunable name -> canonical knob name.
    std::map<std::string, std::string> knob_aliases;
    // Foreign tunables to drop silently (e.g. OS-level settings).
    std::set<std::string> ignored_knobs;
    // System-level enable_* toggles become per-query optimizer flags.
    bool widen_system_flags = true;
    // Multiplier applied to recorded runtimes/objective (e.g. 0.001 for ms).
    double time_scale = 1.0;
};

void to_json(json& j, const Adapter& a);
void from_json(const json& j, Adapter& a);

class AdapterRegistry {
public:
    // Registry preloaded with the bundled adapters.
    static AdapterRegistry with_builtins();

    void add(Adapter a);
    void load_file(const std::filesystem::path& path);
    // Throws UnknownAdapter.
    const Adapter& get(const std::string& id) const;
    std::vector<std::string> ids() const;

private:
    std::map<std::string, Adapter> adapters_;
};

// Parses a raw artifact bundle. `known_queries` receives widened flags in
// addition to the queries named in each step. Throws MalformedArtifact.
std::vector<TrajectoryStep> parse_artifacts(const std::string& raw, const Adapter& adapter,
                                            const std::vector<std::string>& known_queries = {});

// Native bundle: JSON lines, one step per line.
std::string serialize_native(const std::vector<TrajectoryStep>& steps);

// Replays unrecorded runtimes on the simulator and recomputes objectives.
void fill_missing_runtimes(std::vector<TrajectoryStep>& steps, const Workload& workload, const SimEnv& sim);

// Steps grouped by trial, chronological within each trial.
std::map<std::string, std::vector<TrajectoryStep>> group_by_trial(const std::vector<TrajectoryStep>& steps);

// Running-best improvements of one trial, always including the first step.
std::vector<TrajectoryStep> interesting_configs(const std::vector<TrajectoryStep>& steps);

// ---------------------------------------------------------------------------
// Linking

class LinkPolicy {
public:
    virtual ~LinkPolicy() = default;
    virtual std::string id() const = 0;
    // `steps` are the interesting steps the QConfigs were built from.
    virtual void link(std::vector<QConfig>& qconfigs, const std::vector<TrajectoryStep>& steps) const = 0;
};

// Links each QConfig to the same query's QConfig at the next interesting
// step of the trial. A query missing from a step breaks its chain.
class ChronologicalLinker final : public LinkPolicy {
public:
    std::string id() const override { return "chronological"; }
    void link(std::vector<QConfig>& qconfigs, const std::vector<TrajectoryStep>& steps) const override;
};

// Like the chronological policy but bridges steps where the query is absent.
class GapBridgingLinker final : public LinkPolicy {
public:
    std::string id() const override { return "bridge-gaps"; }
    void link(std::vector<QConfig>& qconfigs, const std::vector<TrajectoryStep>& steps) const override;
};

std::unique_ptr<LinkPolicy> make_link_policy(const std::string& id);

// One QConfig per (query, step). Missing plans/runtimes are replayed on
// `sim` when given; otherwise ReplayFailure.
std::vector<QConfig> build_qconfigs(const std::vector<TrajectoryStep>& interesting, const Workload& workload,
                                    const SimEnv* sim, const LinkPolicy& linker);

// Digest of the referenced tables' statistics.
std::string schema_meta_digest(const QuerySpec& q, const SchemaDef& schema);

// The part of a configuration relevant to one query.
Configuration config_slice(const Configuration& config, const QuerySpec& q);

}  // namespace booster
