#pragma once

// Canonical representation of DBMS configurations: system knobs, indexes and
// per-query options (hints). Every other module speaks in these types.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

namespace booster {

using json = nlohmann::json;

enum class KnobScope { System, Query };
enum class KnobType { Bool, Int, Real, Enum };

using KnobValue = std::variant<bool, std::int64_t, double, std::string>;

struct Knob {
    std::string name;
    KnobValue value;
    KnobScope scope = KnobScope::System;
    std::optional<std::pair<double, double>> bounds;
    std::vector<std::string> domain;  // enum tokens, when the knob is an enum

    bool within_bounds() const;
    friend bool operator==(const Knob&, const Knob&) = default;
};

// Numeric view of a knob value used for ordering (min/median/max) and bounds.
// Enum tokens map to their position in the domain, or -1 when unknown.
double knob_numeric(const Knob& k);

// One entry in the knob dictionary.
struct KnobSpec {
    std::string name;
    KnobScope scope = KnobScope::System;
    KnobType type = KnobType::Int;
    double min = 0;
    double max = 0;
    std::vector<std::string> domain;
    KnobValue default_value;
    std::vector<std::string> aliases;
};

// Maps canonical knob names and their aliases to specs. Artifacts from
// different tuners normalise into this one namespace.
class KnobDictionary {
public:
    KnobDictionary() = default;
    explicit KnobDictionary(std::vector<KnobSpec> specs);

    // Resolves a canonical name or alias; nullptr when unknown.
    const KnobSpec* find(std::string_view name) const;
    const std::vector<KnobSpec>& specs() const { return specs_; }

    // Builds a knob from a raw JSON value. Values are coerced to the spec's
    // type and clamped into bounds. Returns nullopt for unknown names or
    // values that cannot be coerced.
    std::optional<Knob> make(std::string_view name, const json& raw) const;
    Knob make_default(std::string_view name) const;

private:
    std::vector<KnobSpec> specs_;
    std::map<std::string, std::size_t, std::less<>> by_name_;
};

// Bundled dictionary: the system knobs the simulator understands plus the
// query-scope optimizer flags.
const KnobDictionary& default_knob_dictionary();

namespace knobs {
inline constexpr std::string_view kWorkersPerGather = "max_parallel_workers_per_gather";
inline constexpr std::string_view kMaxWorkers = "max_parallel_workers";
inline constexpr std::string_view kWorkMem = "work_mem";
inline constexpr std::string_view kRandomPageCost = "random_page_cost";
}  // namespace knobs

// ---------------------------------------------------------------------------
// Indexes

struct IndexDef {
    std::string table;
    std::vector<std::string> key_columns;
    std::vector<std::string> include_columns;
    std::optional<int> fillfactor;

    std::string id() const;
    std::vector<std::string> all_columns() const;  // key then include
    friend bool operator==(const IndexDef&, const IndexDef&) = default;
};

// "table(k1,k2)INCLUDE(i1)FF=70", omitting empty parts.
std::string canonical_index_id(const IndexDef& def);
// Inverse of canonical_index_id. Throws InvalidInput on malformed text.
IndexDef parse_index_id(std::string_view id);
// True iff candidate can stand in for original: same table, original's key
// is a prefix of candidate's key, and original's columns are a subset of
// candidate's columns.
bool covers(const IndexDef& candidate, const IndexDef& original);
// Throws InvalidInput when key is empty, overlaps include, or fillfactor is
// outside [10,100].
void validate_index(const IndexDef& def);

// ---------------------------------------------------------------------------
// Per-query options

enum class AccessMethod { Any, Seq, Index, Bitmap };
enum class JoinType { NestLoop, Hash, Merge };
enum class CteMode { Default, Inline, Materialize };

std::string_view to_string(AccessMethod m);
std::string_view to_string(JoinType j);
std::string_view to_string(CteMode m);
std::optional<AccessMethod> parse_access_method(std::string_view s);
std::optional<JoinType> parse_join_type(std::string_view s);
std::optional<CteMode> parse_cte_mode(std::string_view s);

namespace flags {
inline constexpr std::string_view kSort = "enable_sort";
inline constexpr std::string_view kHashJoin = "enable_hashjoin";
inline constexpr std::string_view kMergeJoin = "enable_mergejoin";
inline constexpr std::string_view kNestLoop = "enable_nestloop";
inline constexpr std::string_view kSeqScan = "enable_seqscan";
inline constexpr std::string_view kIndexScan = "enable_indexscan";
inline constexpr std::string_view kBitmapScan = "enable_bitmapscan";
inline constexpr std::string_view kMaterial = "enable_material";
}  // namespace flags

const std::vector<std::string>& optimizer_flag_names();
bool is_optimizer_flag(std::string_view name);

struct JoinDirective {
    std::set<std::string> tables;
    JoinType join_type = JoinType::Hash;
    friend bool operator==(const JoinDirective&, const JoinDirective&) = default;
};

struct QueryOptions {
    std::string query_id;
    std::map<std::string, bool> optimizer_flags;  // absent flag = enabled
    std::map<std::string, AccessMethod> table_access;
    std::vector<JoinDirective> join_directives;
    CteMode cte_mode = CteMode::Default;
    // Indexes the planner must ignore for this query. They stay in the
    // configuration and remain visible to every other query.
    std::set<std::string> hidden_indexes;

    bool flag(std::string_view name) const;  // default true
    bool empty() const;
    friend bool operator==(const QueryOptions&, const QueryOptions&) = default;
};

// ---------------------------------------------------------------------------
// Configuration

struct Configuration {
    std::map<std::string, Knob> system_knobs;
    std::map<std::string, IndexDef> indexes;  // keyed by index id
    std::map<std::string, QueryOptions> query_options;

    void add_index(const IndexDef& def) { indexes.emplace(def.id(), def); }
    void set_knob(Knob k) { system_knobs[k.name] = std::move(k); }
    // Options for a query; a default-constructed value when unset.
    QueryOptions options_for(const std::string& query_id) const;
    friend bool operator==(const Configuration&, const Configuration&) = default;
};

// Drops every per-query option, keeping knobs and indexes.
Configuration strip_query_options(const Configuration& config);

// Stable digests over canonical JSON.
std::string config_digest(const Configuration& config);
std::string physical_digest(const Configuration& config);  // knobs + indexes

// ---------------------------------------------------------------------------
// Seeds

// Declaration order is the preference order used when breaking ties.
enum class Provenance { LLM, Filled, Reference, IndexAugmented, Permuted };
std::string_view to_string(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view s);

struct Seed {
    std::string query_id;
    std::map<std::string, Knob> system_knob_suggestions;
    std::map<std::string, IndexDef> indexes;
    QueryOptions options;
    std::optional<double> est_runtime;
    Provenance provenance = Provenance::LLM;
    std::vector<std::string> source_qconfig_ids;

    void add_index(const IndexDef& def) { indexes.emplace(def.id(), def); }
    // The seed deployed on its own: its knobs, its indexes, its options.
    Configuration as_configuration() const;
    // Digest over (query, knobs, indexes, options); ignores estimates and
    // provenance.
    std::string digest() const;
};

// ---------------------------------------------------------------------------
// JSON wire format

void to_json(json& j, const Knob& k);
void to_json(json& j, const IndexDef& d);
void from_json(const json& j, IndexDef& d);
void to_json(json& j, const JoinDirective& d);
void from_json(const json& j, JoinDirective& d);
void to_json(json& j, const QueryOptions& o);
void from_json(const json& j, QueryOptions& o);
void to_json(json& j, const Configuration& c);
void from_json(const json& j, Configuration& c);
void to_json(json& j, const Seed& s);
void from_json(const json& j, Seed& s);

json knobs_to_json(const std::map<std::string, Knob>& knobs);
// Unknown knob names are kept verbatim with an inferred type and no bounds.
std::map<std::string, Knob> knobs_from_json(const json& j,
                                            const KnobDictionary& dict = default_knob_dictionary());

}  // namespace booster
