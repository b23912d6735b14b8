#pragma once

// Deterministic simulated DBMS. Plans queries with an analytic cost model,
// honours indexes, hints and knobs, and turns plans into simulated runtimes.
// Everything here is a pure function of its inputs.

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "booster/config_model.hpp"

namespace booster {

// ---------------------------------------------------------------------------
// Schema and workload

struct ColumnDef {
    std::string name;
    std::int64_t distinct_values = 1;
    int width_bytes = 4;
};

struct TableDef {
    std::string name;
    std::int64_t row_count = 1;
    std::vector<ColumnDef> columns;

    const ColumnDef* column(std::string_view name) const;
    int column_index(std::string_view name) const;  // -1 when absent
};

struct SchemaDef {
    std::vector<TableDef> tables;

    const TableDef* table(std::string_view name) const;
    // Throws InvalidInput when an invariant is violated.
    void validate() const;
};

struct ColumnRef {
    std::string table;
    std::string column;
    friend auto operator<=>(const ColumnRef&, const ColumnRef&) = default;
};

struct Predicate {
    std::string table;
    std::string column;
    double selectivity = 1.0;
};

struct JoinEdge {
    ColumnRef left;
    ColumnRef right;
};

struct QuerySpec {
    std::string query_id;
    std::string sql_text;
    std::string template_id;
    std::vector<ColumnRef> referenced;
    std::vector<Predicate> predicates;
    std::vector<JoinEdge> joins;
    std::optional<std::vector<ColumnRef>> order_by;
    int cte_blocks = 0;

    // Distinct tables in order of first appearance.
    std::vector<std::string> tables() const;
    // Every (table, column) the query reads, in any role.
    std::set<ColumnRef> columns_read() const;
};

struct Workload {
    SchemaDef schema;
    std::vector<QuerySpec> queries;

    const QuerySpec* find(std::string_view query_id) const;
};

Workload load_workload(const std::filesystem::path& path);
void save_workload(const Workload& w, const std::filesystem::path& path);

void to_json(json& j, const ColumnDef& c);
void from_json(const json& j, ColumnDef& c);
void to_json(json& j, const TableDef& t);
void from_json(const json& j, TableDef& t);
void to_json(json& j, const SchemaDef& s);
void from_json(const json& j, SchemaDef& s);
void to_json(json& j, const ColumnRef& c);
void from_json(const json& j, ColumnRef& c);
void to_json(json& j, const QuerySpec& q);
void from_json(const json& j, QuerySpec& q);
void to_json(json& j, const Workload& w);
void from_json(const json& j, Workload& w);

// ---------------------------------------------------------------------------
// Plans

enum class Operator {
    SeqScan,
    IndexScan,
    BitmapScan,
    NestLoopJoin,
    HashJoin,
    MergeJoin,
    Sort,
    Aggregate,
    CTEScan,
    Materialize,
};
inline constexpr std::size_t kOperatorCount = 10;

std::string_view to_string(Operator op);
std::optional<Operator> parse_operator(std::string_view s);
bool is_scan(Operator op);
bool is_join(Operator op);
// The optimizer flag that disables op, if any.
std::optional<std::string_view> disabling_flag(Operator op);

struct PlanNode {
    Operator op = Operator::SeqScan;
    std::optional<std::string> relation;
    std::optional<std::string> index;
    double est_cost = 0;  // cumulative, includes children
    double est_rows = 0;
    std::vector<PlanNode> children;

    double self_cost() const;
};

struct PlanTree {
    PlanNode root;

    std::set<std::string> indexes_used() const;
    std::set<Operator> operators() const;
    // Realised access method per scanned relation.
    std::map<std::string, AccessMethod> access_methods() const;
    // (tables under the join, join type) for every join node.
    std::vector<JoinDirective> joins() const;
    double cost() const { return root.est_cost; }
};

// Canonical pre-order rendering of (operator, relation, index). Children
// keep their execution-role order (outer before inner). Costs and row
// estimates are excluded.
std::string plan_signature(const PlanTree& plan);
std::string plan_signature(const PlanNode& node);

void to_json(json& j, const PlanNode& n);
void from_json(const json& j, PlanNode& n);
void to_json(json& j, const PlanTree& p);
void from_json(const json& j, PlanTree& p);

// ---------------------------------------------------------------------------
// Simulator

struct SimParams {
    // Random I/O cost the hardware actually exhibits; the random_page_cost
    // knob only steers the planner.
    double true_random_page_cost = 2.0;
    double seconds_per_cost_unit = 1e-4;
    // Nodes whose self cost reaches this threshold run with parallel workers.
    double parallel_min_cost = 1000.0;
    double parallel_setup_seconds = 0.01;
    // Reported plan costs are inflated by this fraction per restrictive hint.
    double hint_distortion = 0.0;
    std::array<double, kOperatorCount> latency = {1.0, 1.0, 1.0, 1.0, 0.9, 1.0, 1.2, 1.0, 1.0, 0.8};
};

// Cost-model constants shared by the planner and runtime paths.
namespace cost {
inline constexpr double kPageBytes = 8192.0;
inline constexpr double kSeqPage = 1.0;
inline constexpr double kCpuTuple = 0.01;
inline constexpr double kCpuIndexTuple = 0.005;
inline constexpr double kCpuOperator = 0.0025;
inline constexpr double kTupleHeader = 24.0;
inline constexpr double kIndexTupleHeader = 16.0;
inline constexpr int kDefaultFillfactor = 90;
}  // namespace cost

struct ExecutionResult {
    PlanTree plan;
    double runtime = 0;
    bool timed_out = false;
    std::set<std::string> indexes_used;
};

struct WhatIfResult {
    PlanTree plan;
    std::set<std::string> indexes_used;
};

class SimEnv {
public:
    explicit SimEnv(SchemaDef schema, SimParams params = {});
    SimEnv(const SimEnv& other);
    SimEnv& operator=(const SimEnv&) = delete;

    const SchemaDef& schema() const { return schema_; }
    const SimParams& params() const { return params_; }

    // Throws UnknownObject / InvalidInput.
    void validate_query(const QuerySpec& query) const;

    // Minimum-cost plan under the configuration and the query's options,
    // ignoring `hidden` (and the options' hidden set). Equal-cost plans are
    // ordered by signature.
    PlanTree plan(const QuerySpec& query, const Configuration& config,
                  const std::set<std::string>& hidden = {}) const;

    ExecutionResult execute(const QuerySpec& query, const Configuration& config,
                            std::optional<double> timeout = std::nullopt) const;

    // Executes a fixed plan shape (as a hint-forcing extension would). Index
    // nodes may name any index in the configuration.
    ExecutionResult execute_plan(const QuerySpec& query, const Configuration& config,
                                 const PlanTree& shape,
                                 std::optional<double> timeout = std::nullopt) const;

    WhatIfResult what_if(const QuerySpec& query, const Configuration& config,
                         const std::vector<IndexDef>& hypothetical) const;

    // Re-costs a plan shape with planner constants and no hint distortion.
    PlanTree cost_plan(const QuerySpec& query, const Configuration& config,
                       const PlanTree& shape) const;
    double undistorted_cost(const QuerySpec& query, const Configuration& config,
                            const PlanTree& shape) const {
        return cost_plan(query, config, shape).cost();
    }

    // Simulated seconds for a plan shape; no timeout, not counted.
    double runtime_of(const QuerySpec& query, const Configuration& config,
                      const PlanTree& shape) const;

    // Number of execute/execute_plan calls so far.
    std::uint64_t executions() const { return executions_.load(); }

    // Effective parallel workers under the configuration's knobs.
    int effective_workers(const Configuration& config) const;

private:
    SchemaDef schema_;
    SimParams params_;
    mutable std::atomic<std::uint64_t> executions_{0};
};

// Planner knob values, with dictionary defaults for unset knobs.
double knob_or_default(const Configuration& config, std::string_view name);

}  // namespace booster
