#include "booster/artifact_repo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "booster/errors.hpp"
#include "booster/hash.hpp"

namespace booster {

namespace {

// Generated from adapters/*.json at configure time.
#include "builtin_adapters.inc"

const json* lookup(const json& obj, std::string_view path) {
    if (path.empty()) return &obj;
    const json* cur = &obj;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        std::size_t dot = path.find('.', pos);
        std::string key(path.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos));
        if (!cur->is_object()) return nullptr;
        auto it = cur->find(key);
        if (it == cur->end()) return nullptr;
        cur = &*it;
        if (dot == std::string_view::npos) break;
        pos = dot + 1;
    }
    return cur;
}

std::string trial_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    return v.dump();
}

}  // namespace

std::set<std::string> TrajectoryStep::queries() const {
    std::set<std::string> out = unrecorded;
    for (const auto& [q, _] : per_query_runtime) out.insert(q);
    return out;
}

void to_json(json& j, const TrajectoryStep& s) {
    json rt = json::object();
    for (const auto& [q, r] : s.per_query_runtime) rt[q] = r;
    for (const auto& q : s.unrecorded) rt[q] = nullptr;
    json plans = json::object();
    for (const auto& [q, p] : s.plans) plans[q] = p;
    j = json{{"step_index", s.step_index}, {"trial_id", s.trial_id},     {"tuner_id", s.tuner_id},
             {"objective", s.objective},   {"per_query_runtime", rt},    {"config", s.config},
             {"plans", plans}};
}

void from_json(const json& j, TrajectoryStep& s) {
    s = TrajectoryStep{};
    s.step_index = j.at("step_index").get<long>();
    s.trial_id = j.value("trial_id", std::string{});
    s.tuner_id = j.value("tuner_id", std::string{});
    s.objective = j.value("objective", 0.0);
    if (j.contains("per_query_runtime"))
        for (const auto& [q, r] : j["per_query_runtime"].items()) {
            if (r.is_null())
                s.unrecorded.insert(q);
            else
                s.per_query_runtime[q] = r.get<double>();
        }
    if (j.contains("config")) s.config = j["config"].get<Configuration>();
    if (j.contains("plans"))
        for (const auto& [q, p] : j["plans"].items()) s.plans[q] = p.get<PlanTree>();
}

std::string qconfig_id(const std::string& trial_id, const std::string& query_id, long step_index) {
    return trial_id + "/" + query_id + "-C" + std::to_string(step_index);
}

void to_json(json& j, const QConfig& q) {
    json vecs = json::object();
    for (const auto& [t, v] : q.identity_vectors) vecs[to_string(t)] = v;
    j = json{{"qconfig_id", q.qconfig_id}, {"query", q.query},     {"config_slice", q.config_slice},
             {"plan", q.plan},             {"runtime", q.runtime}, {"schema_meta", q.schema_meta},
             {"links", q.links},           {"identity_vectors", vecs}, {"trial_id", q.trial_id},
             {"step_index", q.step_index}, {"tuner_id", q.tuner_id}};
}

void from_json(const json& j, QConfig& q) {
    q = QConfig{};
    q.qconfig_id = j.at("qconfig_id").get<std::string>();
    q.query = j.at("query").get<QuerySpec>();
    q.config_slice = j.at("config_slice").get<Configuration>();
    q.plan = j.at("plan").get<PlanTree>();
    q.runtime = j.at("runtime").get<double>();
    q.schema_meta = j.value("schema_meta", std::string{});
    q.links = j.value("links", std::vector<std::string>{});
    if (j.contains("identity_vectors"))
        for (const auto& [name, v] : j["identity_vectors"].items()) {
            auto t = parse_schematic_type(name);
            if (!t) throw InvalidInput("unknown schematic type " + name);
            q.identity_vectors[*t] = v.get<std::vector<double>>();
        }
    q.trial_id = j.value("trial_id", std::string{});
    q.step_index = j.value("step_index", 0L);
    q.tuner_id = j.value("tuner_id", std::string{});
}

// ---------------------------------------------------------------------------
// Adapters

void to_json(json& j, const Adapter& a) {
    j = json{{"id", a.id},
             {"tuner_id", a.tuner_id},
             {"format", a.format},
             {"steps_path", a.steps_path},
             {"fields",
              {{"step_index", a.step_index_field},
               {"trial_id", a.trial_field},
               {"objective", a.objective_field},
               {"runtimes", a.runtimes_field},
               {"knobs", a.knobs_field},
               {"indexes", a.indexes_field},
               {"options", a.options_field},
               {"plans", a.plans_field}}},
             {"default_trial", a.default_trial},
             {"knob_aliases", a.knob_aliases},
             {"ignored_knobs", a.ignored_knobs},
             {"widen_system_flags", a.widen_system_flags},
             {"time_scale", a.time_scale}};
}

void from_json(const json& j, Adapter& a) {
    a = Adapter{};
    a.id = j.at("id").get<std::string>();
    a.tuner_id = j.value("tuner_id", a.id);
    a.format = j.value("format", a.format);
    if (a.format != "json" && a.format != "jsonl") throw InvalidInput("adapter " + a.id + ": unknown format " + a.format);
    a.steps_path = j.value("steps_path", a.steps_path);
    if (j.contains("fields")) {
        const json& f = j["fields"];
        a.step_index_field = f.value("step_index", a.step_index_field);
        a.trial_field = f.value("trial_id", a.trial_field);
        a.objective_field = f.value("objective", a.objective_field);
        a.runtimes_field = f.value("runtimes", a.runtimes_field);
        a.knobs_field = f.value("knobs", a.knobs_field);
        a.indexes_field = f.value("indexes", a.indexes_field);
        a.options_field = f.value("options", a.options_field);
        a.plans_field = f.value("plans", a.plans_field);
    }
    a.default_trial = j.value("default_trial", a.default_trial);
    a.knob_aliases = j.value("knob_aliases", a.knob_aliases);
    a.ignored_knobs = j.value("ignored_knobs", a.ignored_knobs);
    a.widen_system_flags = j.value("widen_system_flags", a.widen_system_flags);
    a.time_scale = j.value("time_scale", a.time_scale);
    if (!(a.time_scale > 0)) throw InvalidInput("adapter " + a.id + ": time_scale must be positive");
}

AdapterRegistry AdapterRegistry::with_builtins() {
    AdapterRegistry r;
    for (const char* text : kBuiltinAdapters) r.add(json::parse(text).get<Adapter>());
    return r;
}

void AdapterRegistry::add(Adapter a) {
    std::string id = a.id;
    adapters_[id] = std::move(a);
}

void AdapterRegistry::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open adapter file " + path.string());
    try {
        add(json::parse(in).get<Adapter>());
    } catch (const json::exception& e) {
        throw InvalidInput("adapter file " + path.string() + ": " + e.what());
    }
}

const Adapter& AdapterRegistry::get(const std::string& id) const {
    auto it = adapters_.find(id);
    if (it == adapters_.end()) throw UnknownAdapter("'" + id + "'");
    return it->second;
}

std::vector<std::string> AdapterRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : adapters_) out.push_back(id);
    return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct StepParser {
    const Adapter& a;
    const std::vector<std::string>& known;
    const KnobDictionary& dict = default_knob_dictionary();

    double seconds(const json& v, long step, const std::string& path) const {
        if (!v.is_number()) throw MalformedArtifact(step, path, "expected a number");
        double s = v.get<double>() * a.time_scale;
        if (!std::isfinite(s) || s < 0) throw MalformedArtifact(step, path, "negative or non-finite time");
        return s;
    }

    std::string canonical_flag(const std::string& name) const {
        const KnobSpec* spec = dict.find(name);
        if (spec && is_optimizer_flag(spec->name)) return spec->name;
        return name;
    }

    TrajectoryStep parse(const json& obj, std::size_t position) const {
        long fallback = static_cast<long>(position);
        if (!obj.is_object()) throw MalformedArtifact(fallback, "", "step is not a JSON object");
        TrajectoryStep s;
        s.tuner_id = a.tuner_id;
        if (const json* tid = lookup(obj, "tuner_id"); tid && tid->is_string()) s.tuner_id = tid->get<std::string>();

        const json* idx = lookup(obj, a.step_index_field);
        if (idx) {
            if (!idx->is_number_integer()) throw MalformedArtifact(fallback, a.step_index_field, "expected an integer");
            s.step_index = idx->get<long>();
        } else {
            s.step_index = fallback;
        }
        long at = s.step_index;
        const json* trial = lookup(obj, a.trial_field);
        s.trial_id = trial ? trial_string(*trial) : a.default_trial;

        // Runtimes
        if (const json* rt = lookup(obj, a.runtimes_field)) {
            if (!rt->is_object()) throw MalformedArtifact(at, a.runtimes_field, "expected an object");
            for (const auto& [q, v] : rt->items()) {
                if (v.is_null())
                    s.unrecorded.insert(q);
                else
                    s.per_query_runtime[q] = seconds(v, at, a.runtimes_field + "." + q);
            }
        } else {
            s.unrecorded.insert(known.begin(), known.end());
        }

        // Knobs
        std::map<std::string, bool> system_flags;
        if (const json* kn = lookup(obj, a.knobs_field)) {
            if (!kn->is_object()) throw MalformedArtifact(at, a.knobs_field, "expected an object");
            for (const auto& [raw_name, v] : kn->items()) {
                if (a.ignored_knobs.count(raw_name)) continue;
                auto alias = a.knob_aliases.find(raw_name);
                std::string name = alias != a.knob_aliases.end() ? alias->second : raw_name;
                std::string path = a.knobs_field + "." + raw_name;
                const KnobSpec* spec = dict.find(name);
                if (spec) {
                    auto k = dict.make(spec->name, v);
                    if (!k) throw MalformedArtifact(at, path, "value " + v.dump() + " not valid for " + spec->name);
                    if (a.widen_system_flags && is_optimizer_flag(spec->name)) {
                        system_flags[spec->name] = std::get<bool>(k->value);
                        continue;
                    }
                    s.config.set_knob(*k);
                    continue;
                }
                try {
                    auto kept = knobs_from_json(json{{name, v}});
                    for (auto& [_, k] : kept) s.config.set_knob(k);
                } catch (const Error& e) {
                    throw MalformedArtifact(at, path, e.what());
                }
            }
        }

        // Indexes
        if (const json* ix = lookup(obj, a.indexes_field)) {
            if (!ix->is_array()) throw MalformedArtifact(at, a.indexes_field, "expected an array");
            for (std::size_t i = 0; i < ix->size(); ++i) {
                std::string path = a.indexes_field + "[" + std::to_string(i) + "]";
                try {
                    s.config.add_index((*ix)[i].get<IndexDef>());
                } catch (const std::exception& e) {
                    throw MalformedArtifact(at, path, e.what());
                }
            }
        }

        // Per-query options
        if (const json* op = lookup(obj, a.options_field)) {
            if (!op->is_object()) throw MalformedArtifact(at, a.options_field, "expected an object");
            for (const auto& [q, v] : op->items()) {
                std::string path = a.options_field + "." + q;
                try {
                    json norm = v;
                    if (norm.contains("optimizer_flags")) {
                        json flags = json::object();
                        for (const auto& [f, on] : norm["optimizer_flags"].items()) {
                            auto k = dict.make(canonical_flag(f), on);
                            if (!k || !is_optimizer_flag(k->name))
                                throw InvalidInput("bad optimizer flag " + f + "=" + on.dump());
                            flags[k->name] = std::get<bool>(k->value);
                        }
                        norm["optimizer_flags"] = flags;
                    }
                    QueryOptions o = norm.get<QueryOptions>();
                    o.query_id = q;
                    s.config.query_options[q] = std::move(o);
                } catch (const std::exception& e) {
                    throw MalformedArtifact(at, path, e.what());
                }
            }
        }

        // Recorded plans
        if (const json* pl = lookup(obj, a.plans_field); pl && !pl->is_null()) {
            if (!pl->is_object()) throw MalformedArtifact(at, a.plans_field, "expected an object");
            for (const auto& [q, v] : pl->items()) {
                try {
                    s.plans[q] = v.get<PlanTree>();
                } catch (const std::exception& e) {
                    throw MalformedArtifact(at, a.plans_field + "." + q, e.what());
                }
            }
        }

        // Widen system-level operator toggles to every query; an explicit
        // per-query setting wins.
        if (!system_flags.empty()) {
            std::set<std::string> targets = s.queries();
            targets.insert(known.begin(), known.end());
            for (const auto& [q, _] : s.config.query_options) targets.insert(q);
            for (const auto& q : targets) {
                QueryOptions& o = s.config.query_options[q];
                o.query_id = q;
                for (const auto& [f, on] : system_flags) o.optimizer_flags.emplace(f, on);
            }
        }

        double sum = 0;
        for (const auto& [_, r] : s.per_query_runtime) sum += r;
        if (const json* ob = lookup(obj, a.objective_field); ob && !ob->is_null()) {
            s.objective = seconds(*ob, at, a.objective_field);
            if (s.unrecorded.empty() && !s.per_query_runtime.empty() &&
                std::abs(s.objective - sum) > 1e-9 * std::max(1.0, std::abs(sum)))
                throw MalformedArtifact(at, a.objective_field, "objective differs from the sum of query runtimes");
            if (s.unrecorded.empty() && !s.per_query_runtime.empty()) s.objective = sum;
        } else {
            s.objective = sum;
        }
        return s;
    }
};

std::vector<json> split_steps(const std::string& raw, const Adapter& a) {
    std::vector<json> out;
    if (a.format == "jsonl") {
        std::istringstream in(raw);
        std::string line;
        long lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                out.push_back(json::parse(line));
            } catch (const json::exception& e) {
                throw MalformedArtifact(static_cast<long>(out.size()), "line " + std::to_string(lineno), e.what());
            }
        }
        return out;
    }
    if (raw.find_first_not_of(" \t\r\n") == std::string::npos) return out;
    json doc;
    try {
        doc = json::parse(raw);
    } catch (const json::exception& e) {
        throw MalformedArtifact(0, "", e.what());
    }
    const json* steps = lookup(doc, a.steps_path);
    if (!steps) throw MalformedArtifact(0, a.steps_path, "missing step array");
    if (!steps->is_array()) throw MalformedArtifact(0, a.steps_path, "expected an array");
    for (const auto& s : *steps) out.push_back(s);
    return out;
}

}  // namespace

std::vector<TrajectoryStep> parse_artifacts(const std::string& raw, const Adapter& adapter,
                                            const std::vector<std::string>& known_queries) {
    StepParser parser{adapter, known_queries};
    std::vector<TrajectoryStep> out;
    std::map<std::string, long> last_index;
    auto objs = split_steps(raw, adapter);
    for (std::size_t i = 0; i < objs.size(); ++i) {
        TrajectoryStep s = parser.parse(objs[i], i);
        auto it = last_index.find(s.trial_id);
        if (it != last_index.end() && s.step_index <= it->second)
            throw MalformedArtifact(s.step_index, adapter.step_index_field,
                                    "step index not increasing within trial " + s.trial_id);
        last_index[s.trial_id] = s.step_index;
        out.push_back(std::move(s));
    }
    return out;
}

std::string serialize_native(const std::vector<TrajectoryStep>& steps) {
    std::string out;
    for (const auto& s : steps) {
        out += json(s).dump();
        out += '\n';
    }
    return out;
}

void fill_missing_runtimes(std::vector<TrajectoryStep>& steps, const Workload& workload, const SimEnv& sim) {
    for (auto& s : steps) {
        for (const auto& qid : s.unrecorded) {
            const QuerySpec* q = workload.find(qid);
            if (!q) throw ReplayFailure("query " + qid + " of step " + std::to_string(s.step_index) + " not in workload");
            try {
                auto it = s.plans.find(qid);
                ExecutionResult r = it != s.plans.end() ? sim.execute_plan(*q, s.config, it->second)
                                                        : sim.execute(*q, s.config);
                s.per_query_runtime[qid] = r.runtime;
                s.plans.emplace(qid, r.plan);
            } catch (const ReplayFailure&) {
                throw;
            } catch (const Error& e) {
                throw ReplayFailure("query " + qid + " at step " + std::to_string(s.step_index) + ": " + e.what());
            }
        }
        s.unrecorded.clear();
        double sum = 0;
        for (const auto& [_, r] : s.per_query_runtime) sum += r;
        s.objective = sum;
    }
}

std::map<std::string, std::vector<TrajectoryStep>> group_by_trial(const std::vector<TrajectoryStep>& steps) {
    std::map<std::string, std::vector<TrajectoryStep>> out;
    for (const auto& s : steps) out[s.trial_id].push_back(s);
    for (auto& [_, v] : out)
        std::stable_sort(v.begin(), v.end(),
                         [](const TrajectoryStep& a, const TrajectoryStep& b) { return a.step_index < b.step_index; });
    return out;
}

std::vector<TrajectoryStep> interesting_configs(const std::vector<TrajectoryStep>& steps) {
    std::vector<TrajectoryStep> out;
    for (const auto& s : steps) {
        if (out.empty() || s.objective < out.back().objective) out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linking

namespace {

using ChainKey = std::pair<std::string, long>;  // (trial, step)

std::map<std::string, std::vector<const TrajectoryStep*>> steps_by_trial(const std::vector<TrajectoryStep>& steps) {
    std::map<std::string, std::vector<const TrajectoryStep*>> out;
    for (const auto& s : steps) out[s.trial_id].push_back(&s);
    for (auto& [_, v] : out)
        std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->step_index < b->step_index; });
    return out;
}

std::map<std::string, QConfig*> index_by_id(std::vector<QConfig>& qcs) {
    std::map<std::string, QConfig*> out;
    for (auto& q : qcs) out[q.qconfig_id] = &q;
    return out;
}

void add_link(QConfig& from, const std::string& to) {
    if (std::find(from.links.begin(), from.links.end(), to) == from.links.end()) from.links.push_back(to);
}

}  // namespace

void ChronologicalLinker::link(std::vector<QConfig>& qconfigs, const std::vector<TrajectoryStep>& steps) const {
    auto by_id = index_by_id(qconfigs);
    for (const auto& [trial, seq] : steps_by_trial(steps)) {
        for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
            for (const auto& q : seq[i]->queries()) {
                auto from = by_id.find(qconfig_id(trial, q, seq[i]->step_index));
                auto to = by_id.find(qconfig_id(trial, q, seq[i + 1]->step_index));
                if (from != by_id.end() && to != by_id.end()) add_link(*from->second, to->first);
            }
        }
    }
}

void GapBridgingLinker::link(std::vector<QConfig>& qconfigs, const std::vector<TrajectoryStep>& steps) const {
    auto by_id = index_by_id(qconfigs);
    for (const auto& [trial, seq] : steps_by_trial(steps)) {
        std::map<std::string, std::string> last;  // query -> previous qconfig id
        for (const auto* s : seq) {
            for (const auto& q : s->queries()) {
                std::string id = qconfig_id(trial, q, s->step_index);
                if (!by_id.count(id)) continue;
                auto prev = last.find(q);
                if (prev != last.end()) add_link(*by_id.at(prev->second), id);
                last[q] = id;
            }
        }
    }
}

std::unique_ptr<LinkPolicy> make_link_policy(const std::string& id) {
    if (id == "chronological") return std::make_unique<ChronologicalLinker>();
    if (id == "bridge-gaps") return std::make_unique<GapBridgingLinker>();
    throw InvalidInput("unknown link policy '" + id + "'");
}

// ---------------------------------------------------------------------------
// QConfigs

std::string schema_meta_digest(const QuerySpec& q, const SchemaDef& schema) {
    json meta = json::array();
    for (const auto& t : q.tables()) {
        const TableDef* td = schema.table(t);
        if (td) meta.push_back(*td);
    }
    return digest_hex(meta.dump());
}

Configuration config_slice(const Configuration& config, const QuerySpec& q) {
    Configuration out;
    out.system_knobs = config.system_knobs;
    auto tables = q.tables();
    for (const auto& [id, idx] : config.indexes)
        if (std::find(tables.begin(), tables.end(), idx.table) != tables.end()) out.indexes.emplace(id, idx);
    auto it = config.query_options.find(q.query_id);
    if (it != config.query_options.end()) out.query_options.emplace(q.query_id, it->second);
    return out;
}

std::vector<QConfig> build_qconfigs(const std::vector<TrajectoryStep>& interesting, const Workload& workload,
                                    const SimEnv* sim, const LinkPolicy& linker) {
    std::vector<QConfig> out;
    for (const auto& s : interesting) {
        for (const auto& qid : s.queries()) {
            const QuerySpec* q = workload.find(qid);
            if (!q) throw ReplayFailure("query " + qid + " at step " + std::to_string(s.step_index) + " not in workload");
            QConfig qc;
            qc.qconfig_id = qconfig_id(s.trial_id, qid, s.step_index);
            qc.query = *q;
            qc.config_slice = config_slice(s.config, *q);
            qc.trial_id = s.trial_id;
            qc.step_index = s.step_index;
            qc.tuner_id = s.tuner_id;
            qc.schema_meta = schema_meta_digest(*q, workload.schema);

            auto recorded_plan = s.plans.find(qid);
            auto recorded_rt = s.per_query_runtime.find(qid);
            try {
                if (recorded_plan != s.plans.end())
                    qc.plan = recorded_plan->second;
                else if (sim)
                    qc.plan = sim->plan(*q, s.config);
                else
                    throw ReplayFailure("no recorded plan for " + qc.qconfig_id + " and no simulator to replay");
                if (recorded_rt != s.per_query_runtime.end())
                    qc.runtime = recorded_rt->second;
                else if (sim)
                    qc.runtime = sim->execute_plan(*q, s.config, qc.plan).runtime;
                else
                    throw ReplayFailure("no recorded runtime for " + qc.qconfig_id + " and no simulator to replay");
            } catch (const ReplayFailure&) {
                throw;
            } catch (const Error& e) {
                throw ReplayFailure(qc.qconfig_id + ": " + e.what());
            }
            out.push_back(std::move(qc));
        }
    }
    linker.link(out, interesting);
    return out;
}

}  // namespace booster
