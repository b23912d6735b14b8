#include "booster/recommend.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <set>
#include <thread>

#include "booster/errors.hpp"
#include "booster/hash.hpp"
#include "booster/schematic_embed.hpp"
#include "booster/vector_store.hpp"
#include "http_json.hpp"

namespace booster {

// ---------------------------------------------------------------------------
// Prompt

namespace {

const std::vector<std::string>& instruction_text() {
    static const std::vector<std::string> text = {
        "You are tuning a relational database for the target query below. Propose one configuration "
        "(system knobs, indexes, and query options) that lowers the query's runtime.",
        "Each reference describes a configuration that made a similar query fast, with the plan it "
        "produced and the measured runtime. Decide which of its settings carry over to the target query "
        "and reuse their parameter values where they apply.",
        "Use only tables and columns present in the target schema and knob names from the output contract. "
        "Reply with a single JSON object that satisfies the contract and nothing else.",
    };
    return text;
}

std::string render_reference(std::size_t rank, const QConfig& ref) {
    Configuration shown = ref.config_slice;
    std::string out = "### Reference " + std::to_string(rank) + ": " + ref.qconfig_id + "\n";
    out += "query: " + query_sql(ref.query) + "\n";
    out += "plan: " + plan_signature(ref.plan) + "\n";
    out += "runtime_seconds: " + json(ref.runtime).dump() + "\n";
    out += "configuration: " + json(shown).dump() + "\n";
    return out;
}

}  // namespace

const json& suggestion_schema() {
    static const json schema = json::parse(R"j({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "suggestion",
  "type": "object",
  "properties": {
    "system_knobs": {
      "type": "object",
      "additionalProperties": {"type": ["number", "string", "boolean"]}
    },
    "indexes": {
      "type": "array",
      "items": {
        "oneOf": [
          {"type": "string"},
          {
            "type": "object",
            "required": ["table", "key_columns"],
            "properties": {
              "table": {"type": "string"},
              "key_columns": {"type": "array", "items": {"type": "string"}, "minItems": 1},
              "include_columns": {"type": "array", "items": {"type": "string"}},
              "fillfactor": {"type": "integer", "minimum": 10, "maximum": 100}
            }
          }
        ]
      }
    },
    "options": {
      "type": "object",
      "properties": {
        "optimizer_flags": {"type": "object", "additionalProperties": {"type": "boolean"}},
        "table_access": {
          "type": "object",
          "additionalProperties": {"enum": ["Any", "Seq", "Index", "Bitmap"]}
        },
        "join_directives": {
          "type": "array",
          "items": {
            "type": "object",
            "required": ["tables", "join_type"],
            "properties": {
              "tables": {"type": "array", "items": {"type": "string"}, "minItems": 2},
              "join_type": {"enum": ["NestLoop", "Hash", "Merge"]}
            }
          }
        },
        "cte_mode": {"enum": ["Default", "Inline", "Materialize"]}
      }
    }
  }
})j");
    return schema;
}

std::string Prompt::render() const {
    std::string out = std::string("[") + kPromptVersion + "]\n## Instructions\n";
    for (std::size_t i = 0; i < instructions.size(); ++i)
        out += std::to_string(i + 1) + ". " + instructions[i] + "\n";
    out += "## Output contract\n" + output_contract + "\n";
    out += "## Target\n" + target;
    out += "## References\n";
    if (references.empty() && dropped_references == 0) out += "none\n";
    for (const auto& r : references) out += r;
    if (budget_chars > 0 && out.size() > budget_chars) out.resize(budget_chars);
    return out;
}

Prompt build_prompt(const QuerySpec& query, const PlanTree& plan, const SchemaDef& schema,
                    const std::vector<QConfig>& refs, const PromptOptions& options) {
    Prompt p;
    p.instructions = instruction_text();
    p.output_contract = suggestion_schema().dump(2);
    p.target = build_schematic({QueryForm::SQL, false}, query, schema, plan).text + "\n-- plan\n" + plan_text(plan.root);
    if (p.target.empty() || p.target.back() != '\n') p.target += '\n';
    for (std::size_t i = 0; i < refs.size(); ++i) p.references.push_back(render_reference(i + 1, refs[i]));

    const std::size_t budget = options.context_tokens * options.chars_per_token;
    // budget_chars stays 0 while measuring so render() applies no cut.
    while (!p.references.empty() && p.render().size() > budget) {
        p.references.pop_back();
        ++p.dropped_references;
    }
    p.truncated = p.render().size() > budget;
    p.budget_chars = budget;
    return p;
}

// ---------------------------------------------------------------------------
// Providers

void to_json(json& j, const LlmConfig& c) {
    j = json{{"provider", c.provider},
             {"endpoint", c.endpoint},
             {"model", c.model},
             {"api_key_env", c.api_key_env},
             {"temperature", c.temperature},
             {"context_tokens", c.context_tokens},
             {"max_output_tokens", c.max_output_tokens},
             {"samples", c.samples},
             {"max_concurrent_requests", c.max_concurrent_requests},
             {"mock_responses", c.mock_responses}};
}

void from_json(const json& j, LlmConfig& c) {
    c = LlmConfig{};
    c.provider = j.value("provider", c.provider);
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.temperature = j.value("temperature", c.temperature);
    c.context_tokens = j.value("context_tokens", c.context_tokens);
    c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
    c.samples = j.value("samples", c.samples);
    c.max_concurrent_requests = j.value("max_concurrent_requests", c.max_concurrent_requests);
    c.mock_responses = j.value("mock_responses", c.mock_responses);
}

std::string prompt_digest(const std::string& rendered_prompt) { return digest_hex(rendered_prompt); }

MockProvider MockProvider::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open mock responses file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidInput("mock responses file " + path + ": " + e.what());
    }
    auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    MockProvider m;
    if (doc.contains("responses"))
        for (const auto& [k, v] : doc["responses"].items()) m.script(k, text(v));
    if (doc.contains("default")) m.set_default(text(doc["default"]));
    return m;
}

std::vector<std::string> MockProvider::complete(const std::string& prompt, std::size_t n) const {
    if (!available_) throw ProviderUnavailable("mock provider switched off");
    std::string key = prompt_digest(prompt);
    auto it = responses_.find(key);
    if (it == responses_.end() && !default_) throw ProviderUnavailable("no scripted response for prompt " + key);
    const std::string& r = it != responses_.end() ? it->second : *default_;
    return std::vector<std::string>(std::max<std::size_t>(n, 1), r);
}

HttpProvider::HttpProvider(LlmConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw InvalidInput("http provider needs an endpoint");
}

std::vector<std::string> HttpProvider::complete(const std::string& prompt, std::size_t n) const {
    std::map<std::string, std::string> headers;
    if (!config_.api_key_env.empty())
        if (const char* key = std::getenv(config_.api_key_env.c_str())) headers["Authorization"] = std::string("Bearer ") + key;
    json body{{"model", config_.model},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
              {"temperature", config_.temperature},
              {"max_tokens", config_.max_output_tokens},
              {"n", std::max<std::size_t>(n, 1)}};
    try {
        json reply = detail::post_json(config_.endpoint, body, headers, std::chrono::seconds(120));
        std::vector<std::string> out;
        for (const auto& c : reply.at("choices")) out.push_back(c.at("message").at("content").get<std::string>());
        if (out.empty()) throw ProviderUnavailable(config_.endpoint + " returned no choices");
        return out;
    } catch (const ProviderUnavailable&) {
        throw;
    } catch (const std::exception& e) {
        throw ProviderUnavailable(config_.endpoint + ": " + e.what());
    }
}

std::unique_ptr<LlmProvider> make_provider(const LlmConfig& config) {
    if (config.provider == "mock") {
        if (config.mock_responses.empty()) return std::make_unique<MockProvider>();
        return std::make_unique<MockProvider>(MockProvider::from_file(config.mock_responses));
    }
    if (config.provider == "http") return std::make_unique<HttpProvider>(config);
    throw InvalidInput("unknown llm provider '" + config.provider + "'");
}

// ---------------------------------------------------------------------------
// Suggestions

namespace {

std::string strip_fences(const std::string& s) {
    auto open = s.find("```");
    if (open == std::string::npos) return s;
    auto body = s.find('\n', open);
    if (body == std::string::npos) return s;
    auto close = s.find("```", body);
    return s.substr(body + 1, close == std::string::npos ? std::string::npos : close - body - 1);
}

}  // namespace

std::vector<LlmSuggestion> parse_suggestions(const std::string& completion) {
    json doc;
    try {
        doc = json::parse(strip_fences(completion));
    } catch (const json::exception&) {
        return {LlmSuggestion{completion, std::nullopt, false}};
    }
    if (doc.is_object() && doc.contains("suggestions") && doc["suggestions"].is_array()) doc = doc["suggestions"];
    std::vector<LlmSuggestion> out;
    if (doc.is_array()) {
        for (const auto& item : doc) {
            if (item.is_object())
                out.push_back({item.dump(), item, true});
            else
                out.push_back({item.dump(), std::nullopt, false});
        }
        return out;
    }
    if (!doc.is_object()) return {LlmSuggestion{completion, std::nullopt, false}};
    return {LlmSuggestion{completion, doc, true}};
}

std::vector<LlmSuggestion> suggest(const Prompt& prompt, const LlmProvider& provider, std::size_t n) {
    std::vector<LlmSuggestion> out;
    for (const auto& c : provider.complete(prompt.render(), n)) {
        auto parsed = parse_suggestions(c);
        out.insert(out.end(), parsed.begin(), parsed.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sanitizer

std::string_view to_string(PermutationStrategy s) {
    switch (s) {
        case PermutationStrategy::None: return "None";
        case PermutationStrategy::JoinTypes: return "JoinTypes";
        case PermutationStrategy::AccessMethods: return "AccessMethods";
        case PermutationStrategy::Sort: return "Sort";
        case PermutationStrategy::All: return "All";
    }
    return "All";
}

std::optional<PermutationStrategy> parse_permutation_strategy(std::string_view s) {
    std::string l(s);
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (l == "none") return PermutationStrategy::None;
    if (l == "jointypes" || l == "join") return PermutationStrategy::JoinTypes;
    if (l == "accessmethods" || l == "access") return PermutationStrategy::AccessMethods;
    if (l == "sort") return PermutationStrategy::Sort;
    if (l == "all") return PermutationStrategy::All;
    return std::nullopt;
}

std::vector<IndexDef> static_index_candidates(const QuerySpec& query, const SchemaDef& schema) {
    std::vector<IndexDef> out;
    std::set<std::string> seen;
    auto add = [&](IndexDef d) {
        const TableDef* t = schema.table(d.table);
        if (!t) return;
        for (const auto& c : d.key_columns)
            if (!t->column(c)) return;
        if (seen.insert(d.id()).second) out.push_back(std::move(d));
    };
    for (const auto& p : query.predicates) add(IndexDef{p.table, {p.column}, {}, std::nullopt});
    for (const auto& e : query.joins) {
        add(IndexDef{e.left.table, {e.left.column}, {}, std::nullopt});
        add(IndexDef{e.right.table, {e.right.column}, {}, std::nullopt});
    }
    for (const auto& t : query.tables()) {
        std::vector<const Predicate*> preds;
        for (const auto& p : query.predicates)
            if (p.table == t) preds.push_back(&p);
        std::stable_sort(preds.begin(), preds.end(),
                         [](const Predicate* a, const Predicate* b) { return a->selectivity < b->selectivity; });
        IndexDef composite{t, {}, {}, std::nullopt};
        for (const auto* p : preds)
            if (std::find(composite.key_columns.begin(), composite.key_columns.end(), p->column) ==
                composite.key_columns.end())
                composite.key_columns.push_back(p->column);
        if (composite.key_columns.size() >= 2) add(composite);
    }
    return out;
}

std::vector<QueryOptions> permutation_variants(const QuerySpec& query, PermutationStrategy strategy) {
    auto off = [](std::initializer_list<std::string_view> names) {
        QueryOptions o;
        for (auto n : names) o.optimizer_flags[std::string(n)] = false;
        return std::vector<QueryOptions>{o};
    };
    std::vector<QueryOptions> joins, access, sort;
    if (!query.joins.empty()) {
        for (auto v : {off({flags::kHashJoin, flags::kMergeJoin}), off({flags::kNestLoop, flags::kMergeJoin}),
                       off({flags::kNestLoop, flags::kHashJoin})})
            joins.push_back(v[0]);
    }
    for (auto v : {off({flags::kSeqScan}), off({flags::kIndexScan, flags::kBitmapScan}), off({flags::kBitmapScan})})
        access.push_back(v[0]);
    sort = off({flags::kSort});

    switch (strategy) {
        case PermutationStrategy::None: return {};
        case PermutationStrategy::JoinTypes: return joins;
        case PermutationStrategy::AccessMethods: return access;
        case PermutationStrategy::Sort: return sort;
        case PermutationStrategy::All: break;
    }
    auto with_identity = [](std::vector<QueryOptions> v) {
        v.insert(v.begin(), QueryOptions{});
        return v;
    };
    std::vector<QueryOptions> out;
    for (const auto& j : with_identity(joins))
        for (const auto& a : with_identity(access))
            for (const auto& s : with_identity(sort)) {
                QueryOptions o = j;
                for (const auto& src : {a, s})
                    for (const auto& [f, v] : src.optimizer_flags) o.optimizer_flags[f] = v;
                if (!o.optimizer_flags.empty()) out.push_back(o);
            }
    return out;
}

json seed_as_suggestion(const Seed& seed) {
    json idx = json::array();
    for (const auto& [id, _] : seed.indexes) idx.push_back(id);
    json options = seed.options;
    options.erase("query_id");
    options.erase("hidden_indexes");
    return json{{"system_knobs", knobs_to_json(seed.system_knob_suggestions)}, {"indexes", idx}, {"options", options}};
}

namespace {

const char* const kFields[] = {"system_knobs", "indexes", "options"};

struct RawCandidate {
    json body = json::object();
    Provenance provenance = Provenance::LLM;
    std::vector<std::string> sources;
};

// Folds the spellings models tend to use onto the three canonical fields.
json normalize_fields(const json& in) {
    static const std::map<std::string, std::string> aliases = {
        {"knobs", "system_knobs"},          {"system_knob_suggestions", "system_knobs"},
        {"settings", "system_knobs"},       {"query_options", "options"},
        {"hints", "options"},               {"query_knobs", "options"},
        {"index", "indexes"},               {"recommended_indexes", "indexes"},
    };
    json out = json::object();
    for (const auto& [k, v] : in.items()) {
        auto it = aliases.find(k);
        std::string key = it == aliases.end() ? k : it->second;
        if (std::find(std::begin(kFields), std::end(kFields), key) != std::end(kFields) && !out.contains(key))
            out[key] = v;
    }
    return out;
}

RawCandidate reference_candidate(const QConfig& ref) {
    RawCandidate c;
    c.provenance = Provenance::Reference;
    c.sources = {ref.qconfig_id};
    json idx = json::array();
    for (const auto& [id, _] : ref.config_slice.indexes) idx.push_back(id);
    json options = ref.config_slice.options_for(ref.query.query_id);
    c.body = json{{"system_knobs", knobs_to_json(ref.config_slice.system_knobs)}, {"indexes", idx}, {"options", options}};
    return c;
}

// Validity pruning: everything that does not name a known knob, an existing
// column, or a table of the query is dropped; values are clamped.
Seed prune(const RawCandidate& raw, const QuerySpec& query, const SchemaDef& schema) {
    const auto& dict = default_knob_dictionary();
    Seed s;
    s.query_id = query.query_id;
    s.provenance = raw.provenance;
    s.source_qconfig_ids = raw.sources;
    s.options.query_id = query.query_id;
    const auto tables = query.tables();
    auto in_query = [&](const std::string& t) { return std::find(tables.begin(), tables.end(), t) != tables.end(); };

    // Options first so explicit per-query flags win over system-level ones.
    std::map<std::string, bool> flags;
    if (raw.body.contains("options") && raw.body["options"].is_object()) {
        json o = raw.body["options"];
        static const std::set<std::string> fields = {"optimizer_flags", "table_access", "join_directives", "cte_mode",
                                                     "hidden_indexes", "query_id"};
        bool structured = false;
        for (const auto& [k, _] : o.items()) structured = structured || fields.count(k);
        if (!structured && o.contains(query.query_id) && o[query.query_id].is_object()) o = o[query.query_id];

        json rawflags = o.contains("optimizer_flags") && o["optimizer_flags"].is_object() ? o["optimizer_flags"] : json::object();
        for (const auto& [k, v] : o.items())
            if (!fields.count(k)) rawflags[k] = v;  // bare enable_* entries
        for (const auto& [name, v] : rawflags.items()) {
            const KnobSpec* spec = dict.find(name);
            if (!spec || !is_optimizer_flag(spec->name)) continue;
            auto k = dict.make(spec->name, v);
            if (k) flags[k->name] = std::get<bool>(k->value);
        }
        if (o.contains("table_access") && o["table_access"].is_object())
            for (const auto& [t, m] : o["table_access"].items()) {
                if (!m.is_string() || !in_query(t)) continue;
                if (auto am = parse_access_method(m.get<std::string>())) s.options.table_access[t] = *am;
            }
        if (o.contains("join_directives") && o["join_directives"].is_array())
            for (const auto& d : o["join_directives"]) {
                try {
                    auto jd = d.get<JoinDirective>();
                    if (jd.tables.size() < 2) continue;
                    if (!std::all_of(jd.tables.begin(), jd.tables.end(), in_query)) continue;
                    s.options.join_directives.push_back(jd);
                } catch (const std::exception&) {
                }
            }
        if (o.contains("cte_mode") && o["cte_mode"].is_string())
            if (auto m = parse_cte_mode(o["cte_mode"].get<std::string>())) s.options.cte_mode = *m;
    }

    if (raw.body.contains("system_knobs") && raw.body["system_knobs"].is_object())
        for (const auto& [name, v] : raw.body["system_knobs"].items()) {
            const KnobSpec* spec = dict.find(name);
            if (!spec) continue;
            auto k = dict.make(spec->name, v);
            if (!k) continue;
            if (spec->scope == KnobScope::Query) {
                if (is_optimizer_flag(k->name)) flags.emplace(k->name, std::get<bool>(k->value));
                continue;
            }
            s.system_knob_suggestions[k->name] = *k;
        }
    for (const auto& [f, v] : flags)
        if (!v) s.options.optimizer_flags[f] = false;  // enabled is the default

    if (raw.body.contains("indexes") && raw.body["indexes"].is_array())
        for (const auto& entry : raw.body["indexes"]) {
            try {
                IndexDef d = entry.get<IndexDef>();
                const TableDef* t = schema.table(d.table);
                if (!t || !in_query(d.table)) continue;
                auto cols = d.all_columns();
                if (!std::all_of(cols.begin(), cols.end(), [&](const std::string& c) { return t->column(c); })) continue;
                s.add_index(d);
            } catch (const std::exception&) {
            }
        }
    return s;
}

struct Sanitized {
    Seed seed;
    std::string signature;
    double cost = 0;
};

// Minimal form: the candidate's plan with hypothetical indexes, unused
// indexes removed, permissive scan hints pinned to the realised methods.
std::optional<Sanitized> minimal_form(const Seed& cand, const QuerySpec& query, const SimEnv& sim) {
    Seed s = cand;
    Configuration base = s.as_configuration();
    base.indexes.clear();
    std::vector<IndexDef> hyp;
    for (const auto& [_, d] : s.indexes) hyp.push_back(d);
    WhatIfResult w;
    try {
        w = sim.what_if(query, base, hyp);
    } catch (const Error&) {
        return std::nullopt;
    }
    for (auto it = s.indexes.begin(); it != s.indexes.end();)
        it = w.indexes_used.count(it->first) ? std::next(it) : s.indexes.erase(it);

    Seed pinned = s;
    const bool scans_restricted = !s.options.flag(flags::kSeqScan) || !s.options.flag(flags::kIndexScan) ||
                                  !s.options.flag(flags::kBitmapScan);
    bool changed = false;
    for (const auto& [t, m] : w.plan.access_methods()) {
        auto it = pinned.options.table_access.find(t);
        bool any = it == pinned.options.table_access.end() || it->second == AccessMethod::Any;
        if (any && (scans_restricted || it != pinned.options.table_access.end())) {
            pinned.options.table_access[t] = m;
            changed = true;
        }
    }
    if (scans_restricted) {
        bool all_pinned = true;
        for (const auto& t : query.tables()) {
            auto it = pinned.options.table_access.find(t);
            all_pinned = all_pinned && it != pinned.options.table_access.end() && it->second != AccessMethod::Any;
        }
        if (all_pinned) {
            for (auto f : {flags::kSeqScan, flags::kIndexScan, flags::kBitmapScan})
                pinned.options.optimizer_flags.erase(std::string(f));
        }
    }
    const std::string want = plan_signature(w.plan);
    for (const Seed* attempt : {changed ? &pinned : nullptr, &s}) {
        if (!attempt) continue;
        try {
            Configuration cfg = attempt->as_configuration();
            PlanTree p = sim.plan(query, cfg);
            if (plan_signature(p) != want) continue;
            // Plans carry no Gather nodes, so the parallel degree joins the
            // signature to keep seeds that differ only in it apart.
            return Sanitized{*attempt, want + "|workers=" + std::to_string(sim.effective_workers(cfg)),
                             sim.undistorted_cost(query, cfg, p)};
        } catch (const Error&) {
        }
    }
    return std::nullopt;
}

bool better(const Sanitized& a, const Sanitized& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.seed.provenance != b.seed.provenance) return a.seed.provenance < b.seed.provenance;
    return a.seed.digest() < b.seed.digest();
}

}  // namespace

std::vector<Seed> sanitize(const std::vector<LlmSuggestion>& suggestions, const std::vector<QConfig>& refs,
                           const QuerySpec& query, const SimEnv& sim, const SanitizeOptions& options) {
    sim.validate_query(query);
    const SchemaDef& schema = sim.schema();

    // (a) preliminary list: suggestions, references, fill-ins, and the stock
    // configuration so a query always keeps at least one seed.
    std::vector<RawCandidate> prelim;
    std::vector<json> suggested;
    for (const auto& s : suggestions)
        if (s.valid_json && s.parsed && s.parsed->is_object()) suggested.push_back(normalize_fields(*s.parsed));
    for (const auto& body : suggested) prelim.push_back({body, Provenance::LLM, {}});
    std::vector<RawCandidate> ref_cands;
    for (const auto& r : refs) ref_cands.push_back(reference_candidate(r));
    prelim.insert(prelim.end(), ref_cands.begin(), ref_cands.end());
    std::size_t fills = 0;
    for (const auto& body : suggested) {
        for (const auto& rc : ref_cands) {
            if (fills == options.max_fill_ins) break;
            json filled = body;
            bool any = false;
            for (const char* f : kFields)
                if (!filled.contains(f) && rc.body.contains(f)) {
                    filled[f] = rc.body[f];
                    any = true;
                }
            if (!any) continue;
            prelim.push_back({filled, Provenance::Filled, rc.sources});
            ++fills;
        }
    }
    prelim.push_back({json::object(), Provenance::Filled, {}});

    // (c) validity pruning. Exploration (b) below works on pruned candidates;
    // everything it adds is valid by construction.
    std::vector<Seed> cands;
    for (const auto& raw : prelim) cands.push_back(prune(raw, query, schema));

    // (b) exploration per preliminary candidate.
    if (options.explore) {
        const auto statics = static_index_candidates(query, schema);
        const auto perms = permutation_variants(query, options.strategy);
        const std::size_t n = cands.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Seed base = cands[i];
            Seed all = base;
            all.provenance = Provenance::IndexAugmented;
            std::size_t added = 0;
            for (const auto& idx : statics) {
                if (base.indexes.count(idx.id())) continue;
                Seed v = base;
                v.provenance = Provenance::IndexAugmented;
                v.add_index(idx);
                cands.push_back(v);
                all.add_index(idx);
                ++added;
            }
            if (added > 1) cands.push_back(all);
            for (const auto& p : perms) {
                Seed v = base;
                v.provenance = Provenance::Permuted;
                for (const auto& [f, on] : p.optimizer_flags) v.options.optimizer_flags[f] = on;
                cands.push_back(v);
            }
        }
    }

    // (d) minimal form, then (e) one seed per plan signature and parallel degree.
    std::map<std::string, Sanitized> best;
    for (const auto& c : cands) {
        auto m = minimal_form(c, query, sim);
        if (!m) continue;
        auto it = best.find(m->signature);
        if (it == best.end())
            best.emplace(m->signature, std::move(*m));
        else if (better(*m, it->second))
            it->second = std::move(*m);
    }
    std::vector<Sanitized> out;
    for (auto& [_, s] : best) out.push_back(std::move(s));
    std::sort(out.begin(), out.end(), [](const Sanitized& a, const Sanitized& b) {
        if (a.cost != b.cost) return a.cost < b.cost;
        return a.signature < b.signature;
    });
    std::vector<Seed> seeds;
    for (auto& s : out) seeds.push_back(std::move(s.seed));
    return seeds;
}

// ---------------------------------------------------------------------------
// Pipeline

QueryRecommendation recommend_query(const QuerySpec& query, const SimEnv& sim, const VectorStore& store,
                                    Embedder& embedder, const LlmProvider& provider, const RecommendOptions& options) {
    QueryRecommendation rec;
    rec.query_id = query.query_id;
    sim.validate_query(query);
    PlanTree plan = sim.plan(query, Configuration{});
    std::vector<QConfig> refs;
    if (store.size() > 0) {
        auto vectors = embed_all(build_schematics(query, sim.schema(), plan), embedder);
        try {
            refs = store.retrieve_references(vectors, std::max<std::size_t>(options.k, 1));
        } catch (const EmptySegment&) {
        }
    }
    for (const auto& r : refs) rec.reference_ids.push_back(r.qconfig_id);
    Prompt prompt = build_prompt(query, plan, sim.schema(), refs, options.prompt);
    rec.prompt_digest = prompt_digest(prompt.render());
    rec.suggestions = suggest(prompt, provider, options.samples);
    rec.seeds = sanitize(rec.suggestions, refs, query, sim, options.sanitize);
    return rec;
}

std::vector<QueryRecommendation> recommend_workload(const Workload& workload, const SimEnv& sim,
                                                    const VectorStore& store, Embedder& embedder,
                                                    const LlmProvider& provider, const RecommendOptions& options) {
    const std::size_t n = workload.queries.size();
    std::vector<QueryRecommendation> out(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out[i] = recommend_query(workload.queries[i], sim, store, embedder, provider, options);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::size_t threads = std::min(std::max<std::size_t>(options.max_concurrent_requests, 1), n);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace booster
