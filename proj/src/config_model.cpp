#include "booster/config_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "booster/errors.hpp"
#include "booster/hash.hpp"

namespace booster {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

KnobSpec flag_spec(std::string_view name, std::vector<std::string> aliases) {
    KnobSpec s;
    s.name = std::string(name);
    s.scope = KnobScope::Query;
    s.type = KnobType::Bool;
    s.min = 0;
    s.max = 1;
    s.default_value = true;
    s.aliases = std::move(aliases);
    return s;
}

// Parses "64MB", "512kB", "1GB", "2048" into kilobytes.
std::optional<double> parse_memory_kb(std::string_view text) {
    std::string t = lower(text);
    t.erase(std::remove_if(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); }),
            t.end());
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(t, &pos);
    } catch (...) {
        return std::nullopt;
    }
    std::string unit = t.substr(pos);
    if (unit.empty() || unit == "kb" || unit == "k") return v;
    if (unit == "mb" || unit == "m") return v * 1024.0;
    if (unit == "gb" || unit == "g") return v * 1024.0 * 1024.0;
    if (unit == "b") return v / 1024.0;
    return std::nullopt;
}

std::optional<double> parse_number(std::string_view text) {
    std::string t(text);
    std::size_t pos = 0;
    try {
        double v = std::stod(t, &pos);
        if (pos != t.size()) return std::nullopt;
        return v;
    } catch (...) {
        return std::nullopt;
    }
}

json value_to_json(const KnobValue& v) {
    return std::visit([](const auto& x) { return json(x); }, v);
}

}  // namespace

bool Knob::within_bounds() const {
    if (std::holds_alternative<std::string>(value)) {
        if (domain.empty()) return true;
        return std::find(domain.begin(), domain.end(), std::get<std::string>(value)) !=
               domain.end();
    }
    if (!bounds) return true;
    double v = knob_numeric(*this);
    return v >= bounds->first && v <= bounds->second;
}

double knob_numeric(const Knob& k) {
    return std::visit(
        [&](const auto& x) -> double {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, bool>) {
                return x ? 1.0 : 0.0;
            } else if constexpr (std::is_same_v<T, std::string>) {
                auto it = std::find(k.domain.begin(), k.domain.end(), x);
                return it == k.domain.end() ? -1.0 : static_cast<double>(it - k.domain.begin());
            } else {
                return static_cast<double>(x);
            }
        },
        k.value);
}

KnobDictionary::KnobDictionary(std::vector<KnobSpec> specs) : specs_(std::move(specs)) {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        by_name_[lower(specs_[i].name)] = i;
        for (const auto& a : specs_[i].aliases) by_name_[lower(a)] = i;
    }
}

const KnobSpec* KnobDictionary::find(std::string_view name) const {
    auto it = by_name_.find(lower(name));
    return it == by_name_.end() ? nullptr : &specs_[it->second];
}

std::optional<Knob> KnobDictionary::make(std::string_view name, const json& raw) const {
    const KnobSpec* spec = find(name);
    if (!spec) return std::nullopt;
    Knob k;
    k.name = spec->name;
    k.scope = spec->scope;
    if (spec->type != KnobType::Enum) k.bounds = std::make_pair(spec->min, spec->max);
    k.domain = spec->domain;

    switch (spec->type) {
        case KnobType::Bool: {
            if (raw.is_boolean()) {
                k.value = raw.get<bool>();
            } else if (raw.is_number()) {
                k.value = raw.get<double>() != 0.0;
            } else if (raw.is_string()) {
                std::string s = lower(raw.get<std::string>());
                if (s == "on" || s == "true" || s == "yes" || s == "1")
                    k.value = true;
                else if (s == "off" || s == "false" || s == "no" || s == "0")
                    k.value = false;
                else
                    return std::nullopt;
            } else {
                return std::nullopt;
            }
            return k;
        }
        case KnobType::Int:
        case KnobType::Real: {
            std::optional<double> v;
            if (raw.is_boolean()) return std::nullopt;
            if (raw.is_number()) {
                v = raw.get<double>();
            } else if (raw.is_string()) {
                v = spec->name == knobs::kWorkMem ? parse_memory_kb(raw.get<std::string>())
                                                  : parse_number(raw.get<std::string>());
            }
            if (!v || !std::isfinite(*v)) return std::nullopt;
            double clamped = std::clamp(*v, spec->min, spec->max);
            if (spec->type == KnobType::Int)
                k.value = static_cast<std::int64_t>(std::llround(clamped));
            else
                k.value = clamped;
            return k;
        }
        case KnobType::Enum: {
            if (!raw.is_string()) return std::nullopt;
            std::string s = raw.get<std::string>();
            if (std::find(spec->domain.begin(), spec->domain.end(), s) == spec->domain.end())
                return std::nullopt;
            k.value = s;
            return k;
        }
    }
    return std::nullopt;
}

Knob KnobDictionary::make_default(std::string_view name) const {
    const KnobSpec* spec = find(name);
    if (!spec) throw UnknownObject("knob " + std::string(name));
    auto k = make(spec->name, value_to_json(spec->default_value));
    return *k;
}

const KnobDictionary& default_knob_dictionary() {
    static const KnobDictionary dict = [] {
        std::vector<KnobSpec> specs;
        specs.push_back({std::string(knobs::kWorkersPerGather), KnobScope::System, KnobType::Int, 0, 16,
                         {}, std::int64_t{2},
                         {"parallel_workers", "workers", "max_parallel_workers_per_query", "dop"}});
        specs.push_back({std::string(knobs::kMaxWorkers), KnobScope::System, KnobType::Int, 0, 64, {},
                         std::int64_t{8}, {"max_workers", "parallel_worker_limit"}});
        specs.push_back({std::string(knobs::kWorkMem), KnobScope::System, KnobType::Int, 64, 4194304,
                         {}, std::int64_t{4096}, {"workmem", "sort_mem", "work_mem_kb"}});
        specs.push_back({std::string(knobs::kRandomPageCost), KnobScope::System, KnobType::Real, 1.0,
                         20.0, {}, 4.0, {"rpc", "random_io_cost"}});
        specs.push_back(flag_spec(flags::kSort, {"sort", "enable_sorting"}));
        specs.push_back(flag_spec(flags::kHashJoin, {"hashjoin", "enable_hash_join"}));
        specs.push_back(flag_spec(flags::kMergeJoin, {"mergejoin", "enable_merge_join"}));
        specs.push_back(flag_spec(flags::kNestLoop, {"nestloop", "enable_nested_loop"}));
        specs.push_back(flag_spec(flags::kSeqScan, {"seqscan", "enable_seq_scan"}));
        specs.push_back(flag_spec(flags::kIndexScan, {"indexscan", "enable_index_scan"}));
        specs.push_back(flag_spec(flags::kBitmapScan, {"bitmapscan", "enable_bitmap_scan"}));
        specs.push_back(flag_spec(flags::kMaterial, {"material", "enable_materialization"}));
        return KnobDictionary(std::move(specs));
    }();
    return dict;
}

// ---------------------------------------------------------------------------

std::string canonical_index_id(const IndexDef& def) {
    std::string out = def.table + "(";
    for (std::size_t i = 0; i < def.key_columns.size(); ++i) {
        if (i) out += ',';
        out += def.key_columns[i];
    }
    out += ')';
    if (!def.include_columns.empty()) {
        out += "INCLUDE(";
        for (std::size_t i = 0; i < def.include_columns.size(); ++i) {
            if (i) out += ',';
            out += def.include_columns[i];
        }
        out += ')';
    }
    if (def.fillfactor) out += "FF=" + std::to_string(*def.fillfactor);
    return out;
}

std::string IndexDef::id() const { return canonical_index_id(*this); }

std::vector<std::string> IndexDef::all_columns() const {
    std::vector<std::string> out = key_columns;
    out.insert(out.end(), include_columns.begin(), include_columns.end());
    return out;
}

namespace {

std::vector<std::string> split_columns(std::string_view body, std::string_view whole) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= body.size()) {
        std::size_t comma = body.find(',', start);
        std::string_view part = body.substr(start, comma == std::string_view::npos
                                                       ? std::string_view::npos
                                                       : comma - start);
        if (part.empty()) throw InvalidInput("empty column in index id '" + std::string(whole) + "'");
        out.emplace_back(part);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

IndexDef parse_index_id(std::string_view id) {
    IndexDef def;
    auto bad = [&](const char* why) {
        return InvalidInput(std::string(why) + " in index id '" + std::string(id) + "'");
    };
    std::size_t open = id.find('(');
    if (open == std::string_view::npos || open == 0) throw bad("missing table");
    def.table = std::string(id.substr(0, open));
    std::size_t close = id.find(')', open);
    if (close == std::string_view::npos) throw bad("unterminated key list");
    def.key_columns = split_columns(id.substr(open + 1, close - open - 1), id);
    std::string_view rest = id.substr(close + 1);
    constexpr std::string_view kInclude = "INCLUDE(";
    if (rest.substr(0, kInclude.size()) == kInclude) {
        std::size_t end = rest.find(')');
        if (end == std::string_view::npos) throw bad("unterminated INCLUDE list");
        def.include_columns = split_columns(rest.substr(kInclude.size(), end - kInclude.size()), id);
        rest = rest.substr(end + 1);
    }
    constexpr std::string_view kFf = "FF=";
    if (rest.substr(0, kFf.size()) == kFf) {
        std::string digits(rest.substr(kFf.size()));
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(),
                                           [](unsigned char c) { return std::isdigit(c); }))
            throw bad("bad fillfactor");
        def.fillfactor = std::stoi(digits);
        rest = {};
    }
    if (!rest.empty()) throw bad("trailing text");
    validate_index(def);
    return def;
}

bool covers(const IndexDef& candidate, const IndexDef& original) {
    if (candidate.table != original.table) return false;
    if (original.key_columns.size() > candidate.key_columns.size()) return false;
    if (!std::equal(original.key_columns.begin(), original.key_columns.end(),
                    candidate.key_columns.begin()))
        return false;
    auto cand_cols = candidate.all_columns();
    for (const auto& c : original.all_columns())
        if (std::find(cand_cols.begin(), cand_cols.end(), c) == cand_cols.end()) return false;
    return true;
}

void validate_index(const IndexDef& def) {
    if (def.table.empty()) throw InvalidInput("index without table");
    if (def.key_columns.empty()) throw InvalidInput("index " + def.table + " has no key columns");
    std::set<std::string> seen;
    for (const auto& c : def.all_columns())
        if (!seen.insert(c).second)
            throw InvalidInput("column '" + c + "' repeated in index on " + def.table);
    if (def.fillfactor && (*def.fillfactor < 10 || *def.fillfactor > 100))
        throw InvalidInput("fillfactor out of [10,100] on index on " + def.table);
}

// ---------------------------------------------------------------------------

std::string_view to_string(AccessMethod m) {
    switch (m) {
        case AccessMethod::Any: return "Any";
        case AccessMethod::Seq: return "Seq";
        case AccessMethod::Index: return "Index";
        case AccessMethod::Bitmap: return "Bitmap";
    }
    return "Any";
}

std::string_view to_string(JoinType j) {
    switch (j) {
        case JoinType::NestLoop: return "NestLoop";
        case JoinType::Hash: return "Hash";
        case JoinType::Merge: return "Merge";
    }
    return "Hash";
}

std::string_view to_string(CteMode m) {
    switch (m) {
        case CteMode::Default: return "Default";
        case CteMode::Inline: return "Inline";
        case CteMode::Materialize: return "Materialize";
    }
    return "Default";
}

std::optional<AccessMethod> parse_access_method(std::string_view s) {
    std::string l = lower(s);
    if (l == "any") return AccessMethod::Any;
    if (l == "seq" || l == "seqscan" || l == "sequential") return AccessMethod::Seq;
    if (l == "index" || l == "indexscan" || l == "indexonlyscan") return AccessMethod::Index;
    if (l == "bitmap" || l == "bitmapscan") return AccessMethod::Bitmap;
    return std::nullopt;
}

std::optional<JoinType> parse_join_type(std::string_view s) {
    std::string l = lower(s);
    if (l == "nestloop" || l == "nestloopjoin" || l == "nested_loop" || l == "nl") return JoinType::NestLoop;
    if (l == "hash" || l == "hashjoin" || l == "hash_join") return JoinType::Hash;
    if (l == "merge" || l == "mergejoin" || l == "merge_join") return JoinType::Merge;
    return std::nullopt;
}

std::optional<CteMode> parse_cte_mode(std::string_view s) {
    std::string l = lower(s);
    if (l == "default") return CteMode::Default;
    if (l == "inline" || l == "not materialized") return CteMode::Inline;
    if (l == "materialize" || l == "materialized") return CteMode::Materialize;
    return std::nullopt;
}

const std::vector<std::string>& optimizer_flag_names() {
    static const std::vector<std::string> names = {
        std::string(flags::kSort),      std::string(flags::kHashJoin),
        std::string(flags::kMergeJoin), std::string(flags::kNestLoop),
        std::string(flags::kSeqScan),   std::string(flags::kIndexScan),
        std::string(flags::kBitmapScan), std::string(flags::kMaterial)};
    return names;
}

bool is_optimizer_flag(std::string_view name) {
    const auto& names = optimizer_flag_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

bool QueryOptions::flag(std::string_view name) const {
    auto it = optimizer_flags.find(std::string(name));
    return it == optimizer_flags.end() || it->second;
}

bool QueryOptions::empty() const {
    return optimizer_flags.empty() && table_access.empty() && join_directives.empty() &&
           cte_mode == CteMode::Default && hidden_indexes.empty();
}

QueryOptions Configuration::options_for(const std::string& query_id) const {
    auto it = query_options.find(query_id);
    if (it != query_options.end()) return it->second;
    QueryOptions o;
    o.query_id = query_id;
    return o;
}

Configuration strip_query_options(const Configuration& config) {
    Configuration out;
    out.system_knobs = config.system_knobs;
    out.indexes = config.indexes;
    return out;
}

std::string config_digest(const Configuration& config) { return digest_hex(json(config).dump()); }

std::string physical_digest(const Configuration& config) {
    json j;
    j["system_knobs"] = knobs_to_json(config.system_knobs);
    json idx = json::array();
    for (const auto& [id, _] : config.indexes) idx.push_back(id);
    j["indexes"] = idx;
    return digest_hex(j.dump());
}

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::LLM: return "LLM";
        case Provenance::Filled: return "Filled";
        case Provenance::Reference: return "Reference";
        case Provenance::IndexAugmented: return "IndexAugmented";
        case Provenance::Permuted: return "Permuted";
    }
    return "LLM";
}

std::optional<Provenance> parse_provenance(std::string_view s) {
    for (auto p : {Provenance::LLM, Provenance::Filled, Provenance::Reference,
                   Provenance::IndexAugmented, Provenance::Permuted})
        if (to_string(p) == s) return p;
    return std::nullopt;
}

Configuration Seed::as_configuration() const {
    Configuration c;
    c.system_knobs = system_knob_suggestions;
    c.indexes = indexes;
    QueryOptions o = options;
    o.query_id = query_id;
    c.query_options.emplace(query_id, std::move(o));
    return c;
}

std::string Seed::digest() const {
    json j;
    j["query_id"] = query_id;
    j["system_knobs"] = knobs_to_json(system_knob_suggestions);
    json idx = json::array();
    for (const auto& [id, _] : indexes) idx.push_back(id);
    j["indexes"] = idx;
    QueryOptions o = options;
    o.query_id = query_id;
    j["options"] = o;
    return digest_hex(j.dump());
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const Knob& k) {
    j = json{{"name", k.name},
             {"value", value_to_json(k.value)},
             {"scope", k.scope == KnobScope::System ? "system" : "query"}};
}

void to_json(json& j, const IndexDef& d) {
    j = json{{"id", d.id()},
             {"table", d.table},
             {"key_columns", d.key_columns},
             {"include_columns", d.include_columns}};
    if (d.fillfactor) j["fillfactor"] = *d.fillfactor;
}

void from_json(const json& j, IndexDef& d) {
    if (j.is_string()) {
        d = parse_index_id(j.get<std::string>());
        return;
    }
    d = IndexDef{};
    d.table = j.at("table").get<std::string>();
    d.key_columns = j.at("key_columns").get<std::vector<std::string>>();
    if (j.contains("include_columns") && !j["include_columns"].is_null())
        d.include_columns = j["include_columns"].get<std::vector<std::string>>();
    if (j.contains("fillfactor") && !j["fillfactor"].is_null())
        d.fillfactor = j["fillfactor"].get<int>();
    validate_index(d);
}

void to_json(json& j, const JoinDirective& d) {
    j = json{{"tables", d.tables}, {"join_type", to_string(d.join_type)}};
}

void from_json(const json& j, JoinDirective& d) {
    d.tables = j.at("tables").get<std::set<std::string>>();
    auto t = parse_join_type(j.at("join_type").get<std::string>());
    if (!t) throw InvalidInput("unknown join type " + j.at("join_type").dump());
    d.join_type = *t;
}

void to_json(json& j, const QueryOptions& o) {
    json access = json::object();
    for (const auto& [t, m] : o.table_access) access[t] = to_string(m);
    j = json{{"query_id", o.query_id},
             {"optimizer_flags", o.optimizer_flags},
             {"table_access", access},
             {"join_directives", o.join_directives},
             {"cte_mode", to_string(o.cte_mode)},
             {"hidden_indexes", o.hidden_indexes}};
}

void from_json(const json& j, QueryOptions& o) {
    o = QueryOptions{};
    if (j.contains("query_id")) o.query_id = j["query_id"].get<std::string>();
    if (j.contains("optimizer_flags"))
        o.optimizer_flags = j["optimizer_flags"].get<std::map<std::string, bool>>();
    if (j.contains("table_access")) {
        for (const auto& [t, m] : j["table_access"].items()) {
            auto am = parse_access_method(m.get<std::string>());
            if (!am) throw InvalidInput("unknown access method " + m.dump());
            o.table_access[t] = *am;
        }
    }
    if (j.contains("join_directives"))
        o.join_directives = j["join_directives"].get<std::vector<JoinDirective>>();
    if (j.contains("cte_mode")) {
        auto m = parse_cte_mode(j["cte_mode"].get<std::string>());
        if (!m) throw InvalidInput("unknown cte mode " + j["cte_mode"].dump());
        o.cte_mode = *m;
    }
    if (j.contains("hidden_indexes"))
        o.hidden_indexes = j["hidden_indexes"].get<std::set<std::string>>();
}

json knobs_to_json(const std::map<std::string, Knob>& knobs) {
    json j = json::object();
    for (const auto& [name, k] : knobs) j[name] = value_to_json(k.value);
    return j;
}

std::map<std::string, Knob> knobs_from_json(const json& j, const KnobDictionary& dict) {
    std::map<std::string, Knob> out;
    for (const auto& [name, raw] : j.items()) {
        if (auto k = dict.make(name, raw)) {
            out[k->name] = *k;
            continue;
        }
        Knob k;
        k.name = name;
        if (raw.is_boolean())
            k.value = raw.get<bool>();
        else if (raw.is_number_integer())
            k.value = raw.get<std::int64_t>();
        else if (raw.is_number())
            k.value = raw.get<double>();
        else if (raw.is_string())
            k.value = raw.get<std::string>();
        else
            throw InvalidInput("knob '" + name + "' has non-scalar value");
        out[name] = k;
    }
    return out;
}

void to_json(json& j, const Configuration& c) {
    json options = json::object();
    for (const auto& [q, o] : c.query_options) options[q] = o;
    json idx = json::array();
    for (const auto& [_, d] : c.indexes) idx.push_back(d);
    j = json{{"system_knobs", knobs_to_json(c.system_knobs)},
             {"indexes", idx},
             {"query_options", options}};
}

void from_json(const json& j, Configuration& c) {
    c = Configuration{};
    if (j.contains("system_knobs")) c.system_knobs = knobs_from_json(j["system_knobs"]);
    if (j.contains("indexes"))
        for (const auto& d : j["indexes"]) c.add_index(d.get<IndexDef>());
    if (j.contains("query_options")) {
        for (const auto& [q, o] : j["query_options"].items()) {
            QueryOptions opts = o.get<QueryOptions>();
            opts.query_id = q;
            c.query_options[q] = std::move(opts);
        }
    }
}

void to_json(json& j, const Seed& s) {
    json idx = json::array();
    for (const auto& [_, d] : s.indexes) idx.push_back(d);
    j = json{{"query_id", s.query_id},
             {"system_knobs", knobs_to_json(s.system_knob_suggestions)},
             {"indexes", idx},
             {"options", s.options},
             {"est_runtime", s.est_runtime ? json(*s.est_runtime) : json(nullptr)},
             {"provenance", to_string(s.provenance)},
             {"source_qconfig_ids", s.source_qconfig_ids}};
}

void from_json(const json& j, Seed& s) {
    s = Seed{};
    s.query_id = j.at("query_id").get<std::string>();
    if (j.contains("system_knobs")) s.system_knob_suggestions = knobs_from_json(j["system_knobs"]);
    if (j.contains("indexes"))
        for (const auto& d : j["indexes"]) s.add_index(d.get<IndexDef>());
    if (j.contains("options")) s.options = j["options"].get<QueryOptions>();
    s.options.query_id = s.query_id;
    if (j.contains("est_runtime") && !j["est_runtime"].is_null())
        s.est_runtime = j["est_runtime"].get<double>();
    if (j.contains("provenance")) {
        auto p = parse_provenance(j["provenance"].get<std::string>());
        if (!p) throw InvalidInput("unknown provenance " + j["provenance"].dump());
        s.provenance = *p;
    }
    if (j.contains("source_qconfig_ids"))
        s.source_qconfig_ids = j["source_qconfig_ids"].get<std::vector<std::string>>();
}

}  // namespace booster
