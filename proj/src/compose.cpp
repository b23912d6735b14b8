#include "booster/compose.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "booster/errors.hpp"

namespace booster {

// ---------------------------------------------------------------------------
// Ranking

void to_json(json& j, const RankedSeed& r) {
    j = json{{"seed", r.seed},
             {"est_runtime", r.est_runtime},
             {"rank", r.rank},
             {"timed_out", r.timed_out},
             {"substitutions", r.substitutions}};
}

void from_json(const json& j, RankedSeed& r) {
    r = RankedSeed{};
    r.seed = j.at("seed").get<Seed>();
    r.est_runtime = j.at("est_runtime").get<double>();
    r.rank = j.value("rank", 0);
    r.timed_out = j.value("timed_out", false);
    if (j.contains("substitutions")) r.substitutions = j["substitutions"].get<std::map<std::string, std::string>>();
    r.seed.est_runtime = r.est_runtime;
}

std::optional<IndexDef> covering_substitute(const IndexDef& index, const QuerySpec& query,
                                            const std::vector<IndexDef>& pool) {
    std::set<std::string> read;
    for (const auto& c : query.columns_read())
        if (c.table == index.table) read.insert(c.column);
    const auto own = index.all_columns();
    const int own_ff = index.fillfactor.value_or(cost::kDefaultFillfactor);
    std::optional<IndexDef> best;
    for (const auto& c : pool) {
        if (c.id() == index.id() || !covers(c, index)) continue;
        if (c.fillfactor.value_or(cost::kDefaultFillfactor) > own_ff) continue;
        bool extra_read = false;
        for (const auto& col : c.all_columns())
            if (std::find(own.begin(), own.end(), col) == own.end() && read.count(col)) extra_read = true;
        if (extra_read) continue;
        if (!best || c.all_columns().size() > best->all_columns().size() ||
            (c.all_columns().size() == best->all_columns().size() && c.id() < best->id()))
            best = c;
    }
    return best;
}

namespace {

void rename_index(PlanNode& n, const std::string& from, const std::string& to) {
    if (n.index && *n.index == from) n.index = to;
    for (auto& c : n.children) rename_index(c, from, to);
}

}  // namespace

RankedSeeds rank_seeds(const std::map<std::string, std::vector<Seed>>& seeds, const Workload& workload,
                       const SimEnv& sim) {
    std::vector<IndexDef> pool;
    {
        std::set<std::string> seen;
        for (const auto& [_, list] : seeds)
            for (const auto& s : list)
                for (const auto& [id, d] : s.indexes)
                    if (seen.insert(id).second) pool.push_back(d);
    }

    RankedSeeds out;
    for (const auto& [qid, list] : seeds) {
        const QuerySpec* q = workload.find(qid);
        if (!q) throw InvalidInput("seeds for unknown query " + qid);

        struct Pending {
            RankedSeed r;
            PlanTree plan;
            Configuration config;
            double cost = 0;
        };
        std::vector<Pending> pending;
        for (const auto& s : list) {
            Pending p;
            p.r.seed = s;
            Configuration exact = s.as_configuration();
            PlanTree plan = sim.plan(*q, exact);
            p.cost = sim.undistorted_cost(*q, exact, plan);
            p.config = exact;
            for (const auto& id : plan.indexes_used()) {
                auto sub = covering_substitute(exact.indexes.at(id), *q, pool);
                if (!sub) continue;
                p.config.indexes.erase(id);
                p.config.add_index(*sub);
                rename_index(plan.root, id, sub->id());
                p.r.substitutions[id] = sub->id();
            }
            p.plan = std::move(plan);
            pending.push_back(std::move(p));
        }
        std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
            if (a.cost != b.cost) return a.cost < b.cost;
            return a.r.seed.digest() < b.r.seed.digest();
        });

        std::optional<double> best_known;
        for (auto& p : pending) {
            std::optional<double> timeout;
            if (best_known) timeout = std::max(1.0, 3.0 * *best_known);
            ExecutionResult r = sim.execute_plan(*q, p.config, p.plan, timeout);
            p.r.est_runtime = r.runtime;
            p.r.timed_out = r.timed_out;
            p.r.seed.est_runtime = r.runtime;
            if (!r.timed_out) best_known = best_known ? std::min(*best_known, r.runtime) : r.runtime;
        }
        std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
            if (a.r.est_runtime != b.r.est_runtime) return a.r.est_runtime < b.r.est_runtime;
            if (a.r.seed.provenance != b.r.seed.provenance) return a.r.seed.provenance < b.r.seed.provenance;
            return a.r.seed.digest() < b.r.seed.digest();
        });
        auto& ranked = out[qid];
        for (std::size_t i = 0; i < pending.size(); ++i) {
            pending[i].r.rank = static_cast<int>(i + 1);
            ranked.push_back(std::move(pending[i].r));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Budget

Budget Budget::parse(const std::string& text) {
    std::size_t pos = 0;
    double value = 0;
    try {
        value = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw InvalidInput("budget '" + text + "' does not start with a number");
    }
    std::string unit = text.substr(pos);
    std::transform(unit.begin(), unit.end(), unit.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (!std::isfinite(value) || value < 0) throw InvalidInput("budget '" + text + "' must be non-negative");
    if (unit == "evals" || unit == "eval" || unit == "e") {
        if (value != std::floor(value)) throw InvalidInput("evaluation budget must be whole");
        return evals(static_cast<std::uint64_t>(value));
    }
    if (unit == "h") return seconds(value * 3600);
    if (unit == "m" || unit == "min") return seconds(value * 60);
    if (unit == "s" || unit.empty()) return seconds(value);
    throw InvalidInput("budget '" + text + "' has unknown unit '" + unit + "'");
}

bool Budget::exhausted() const {
    if (mode_ == Mode::EvalCount) return consumed_ + 1 > limit_;
    return consumed_ >= limit_;
}

void to_json(json& j, const Budget& b) {
    j = json{{"mode", b.mode() == Budget::Mode::EvalCount ? "eval_count" : "wall_clock"},
             {"limit", b.limit()},
             {"consumed", b.consumed()}};
}

// ---------------------------------------------------------------------------
// Cache

std::optional<PlanCache::Entry> PlanCache::find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    ++hits_;
    return it->second;
}

void PlanCache::put(const std::string& key, Entry e) {
    std::lock_guard lock(mutex_);
    entries_[key] = e;
}

std::size_t PlanCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::string PlanCache::key(const QuerySpec& q, const std::string& signature, const Configuration& config) {
    // Only the query's own tables' indexes and the knobs can move its runtime.
    Configuration slice;
    slice.system_knobs = config.system_knobs;
    const auto tables = q.tables();
    for (const auto& [id, d] : config.indexes)
        if (std::find(tables.begin(), tables.end(), d.table) != tables.end()) slice.indexes.emplace(id, d);
    return q.query_id + "|" + signature + "|" + physical_digest(slice);
}

// ---------------------------------------------------------------------------
// Planning kernels

namespace {

std::optional<PlanTree> try_plan(const SimEnv& sim, const QuerySpec& q, const Configuration& c) {
    try {
        return sim.plan(q, c);
    } catch (const Error&) {
        return std::nullopt;
    }
}

}  // namespace

PlanGrid plan_candidates_serial(const std::vector<Configuration>& cands, const Workload& workload, const SimEnv& sim) {
    PlanGrid grid(cands.size(), std::vector<std::optional<PlanTree>>(workload.queries.size()));
    for (std::size_t c = 0; c < cands.size(); ++c)
        for (std::size_t q = 0; q < workload.queries.size(); ++q) grid[c][q] = try_plan(sim, workload.queries[q], cands[c]);
    return grid;
}

PlanGrid plan_candidates_parallel(const std::vector<Configuration>& cands, const Workload& workload,
                                  const SimEnv& sim) {
    const std::size_t nq = workload.queries.size();
    PlanGrid grid(cands.size(), std::vector<std::optional<PlanTree>>(nq));
    const auto cells = static_cast<long long>(cands.size() * nq);
#pragma omp parallel for schedule(dynamic) if (cells > 1)
    for (long long i = 0; i < cells; ++i) {
        const auto c = static_cast<std::size_t>(i) / nq;
        const auto q = static_cast<std::size_t>(i) % nq;
        grid[c][q] = try_plan(sim, workload.queries[q], cands[c]);
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Evaluate

EvaluateResult evaluate(const std::vector<Configuration>& cands, const Workload& workload, Budget& budget,
                        PlanCache& cache, const SimEnv& sim, const EvaluateOptions& options) {
    EvaluateResult res;
    if (cands.empty()) return res;
    PlanGrid grid = options.kernel == PlanKernel::Parallel ? plan_candidates_parallel(cands, workload, sim)
                                                           : plan_candidates_serial(cands, workload, sim);
    for (std::size_t ci = 0; ci < cands.size(); ++ci) {
        CandidateResult cr;
        cr.config = cands[ci];
        bool feasible = true, complete = true;
        for (std::size_t qi = 0; qi < workload.queries.size(); ++qi) {
            const auto& plan = grid[ci][qi];
            if (!plan) {
                feasible = false;
                break;
            }
            const QuerySpec& q = workload.queries[qi];
            std::optional<double> timeout;
            if (auto it = options.timeouts.find(q.query_id); it != options.timeouts.end()) timeout = it->second;
            const std::string key = PlanCache::key(q, plan_signature(*plan), cands[ci]);

            if (auto hit = cache.find(key)) {
                if (!hit->timed_out) {
                    bool over = timeout && hit->runtime > *timeout;
                    cr.runtime[q.query_id] = over ? *timeout : hit->runtime;
                    cr.timed_out[q.query_id] = over;
                    continue;
                }
                if (timeout && *timeout <= hit->runtime) {
                    cr.runtime[q.query_id] = *timeout;
                    cr.timed_out[q.query_id] = true;
                    continue;
                }
            }

            if (budget.exhausted()) {
                complete = false;
                break;
            }
            std::optional<double> limit = timeout;
            bool budget_cut = false;
            if (budget.mode() == Budget::Mode::WallClock && (!limit || budget.remaining() < *limit)) {
                limit = budget.remaining();
                budget_cut = true;
            }
            ExecutionResult r = sim.execute_plan(q, cands[ci], *plan, limit);
            ++cr.fresh_executions;
            ++res.fresh_executions;
            budget.charge(budget.mode() == Budget::Mode::EvalCount ? 1.0 : r.runtime);
            if (r.timed_out && budget_cut) {
                complete = false;
                break;
            }
            cache.put(key, {r.runtime, r.timed_out});
            cr.runtime[q.query_id] = r.runtime;
            cr.timed_out[q.query_id] = r.timed_out;
        }
        if (!complete) {
            res.exhausted = true;
            break;
        }
        if (!feasible) continue;
        for (const auto& [_, rt] : cr.runtime) cr.objective += rt;
        res.evaluated.push_back(std::move(cr));
        const std::size_t idx = res.evaluated.size() - 1;
        if (!res.best || res.evaluated[idx].objective < res.evaluated[*res.best].objective) res.best = idx;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Merge

std::vector<Configuration> merge(const std::map<std::string, Seed>& per_query_seeds) {
    Configuration base;
    std::map<std::string, std::vector<Knob>> values;
    for (const auto& [qid, s] : per_query_seeds) {
        for (const auto& [name, k] : s.system_knob_suggestions) values[name].push_back(k);
        for (const auto& [id, d] : s.indexes) base.indexes.emplace(id, d);
        QueryOptions o = s.options;
        o.query_id = qid;
        if (!o.empty()) base.query_options[qid] = std::move(o);
    }
    for (auto& [_, v] : values)
        std::stable_sort(v.begin(), v.end(), [](const Knob& a, const Knob& b) {
            double x = knob_numeric(a), y = knob_numeric(b);
            if (x != y) return x < y;
            return json(a).dump() < json(b).dump();
        });

    std::vector<Configuration> out;
    for (int agg = 0; agg < 3; ++agg) {
        Configuration c = base;
        for (const auto& [_, v] : values) {
            std::size_t i = agg == 0 ? 0 : agg == 1 ? (v.size() - 1) / 2 : v.size() - 1;
            c.set_knob(v[i]);
        }
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Select

std::string select(BeamState& state, const std::vector<std::string>& query_order, double tolerance) {
    if (query_order.empty()) throw InvalidInput("select needs a non-empty workload");
    const std::string digest = config_digest(strip_query_options(state.current_best));
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::optional<std::string> pick;
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& q : query_order) {
            if (state.selected_history.count({q, digest})) continue;
            double rt = state.per_query_runtime.at(q);
            double est = state.per_query_seed.at(q).est_runtime;
            if (rt > est * (1.0 + tolerance) && rt - est > best) {
                best = rt - est;
                pick = q;
            }
        }
        if (!pick) {
            best = -std::numeric_limits<double>::infinity();
            for (const auto& q : query_order) {
                if (state.selected_history.count({q, digest})) continue;
                double rt = state.per_query_runtime.at(q);
                if (rt > best) {
                    best = rt;
                    pick = q;
                }
            }
        }
        if (pick) {
            state.selected_history.insert({*pick, digest});
            return *pick;
        }
        for (auto it = state.selected_history.begin(); it != state.selected_history.end();)
            it = it->second == digest ? state.selected_history.erase(it) : std::next(it);
    }
    return query_order.front();
}

// ---------------------------------------------------------------------------
// Rollout

std::string_view to_string(Mechanism m) {
    switch (m) {
        case Mechanism::M1: return "M1";
        case Mechanism::M2: return "M2";
        case Mechanism::M3: return "M3";
        case Mechanism::M4: return "M4";
    }
    return "M1";
}

std::optional<Mechanism> parse_mechanism(std::string_view s) {
    std::string u(s);
    std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (u == "M1") return Mechanism::M1;
    if (u == "M2") return Mechanism::M2;
    if (u == "M3") return Mechanism::M3;
    if (u == "M4") return Mechanism::M4;
    return std::nullopt;
}

std::set<Mechanism> parse_mechanisms(const std::string& csv) {
    std::string l = csv;
    std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (l == "all") return {Mechanism::M1, Mechanism::M2, Mechanism::M3, Mechanism::M4};
    if (l == "none" || l.empty()) return {};
    std::set<Mechanism> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        auto end = csv.find(',', start);
        std::string part = csv.substr(start, end == std::string::npos ? std::string::npos : end - start);
        auto m = parse_mechanism(part);
        if (!m) throw InvalidInput("unknown mechanism '" + part + "'");
        out.insert(*m);
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out;
}

namespace {

void add_local(std::vector<RolloutCandidate>& out, std::set<std::string>& seen, const RankedSeed& base,
               QueryOptions options, Mechanism m) {
    options.query_id = base.seed.query_id;
    RankedSeed v = base;
    v.seed.options = std::move(options);
    if (v.seed.options == base.seed.options || !seen.insert(json(v.seed.options).dump()).second) return;
    out.push_back({std::move(v), m});
}

QueryOptions with_flags_off(QueryOptions o, std::initializer_list<std::string_view> names) {
    for (auto n : names) o.optimizer_flags[std::string(n)] = false;
    return o;
}

}  // namespace

std::vector<RolloutStage> rollout(const std::string& query_id, const BeamState& state, const RankedSeeds& ranked,
                                  const Workload& workload, const SimEnv& sim, const std::set<Mechanism>& mechanisms) {
    const QuerySpec* q = workload.find(query_id);
    if (!q) throw InvalidInput("rollout for unknown query " + query_id);
    const RankedSeed& current = state.per_query_seed.at(query_id);
    const QueryOptions& opts = current.seed.options;

    PlanTree holistic;
    try {
        holistic = sim.plan(*q, state.current_best);
    } catch (const Error&) {
    }
    PlanTree seed_plan;
    try {
        seed_plan = sim.plan(*q, current.seed.as_configuration());
    } catch (const Error&) {
        seed_plan = holistic;
    }

    std::vector<RolloutStage> stages;
    RolloutStage local{"local", true, {}};
    std::set<std::string> seen{json(opts).dump()};

    if (mechanisms.count(Mechanism::M1)) {
        QueryOptions defer;
        defer.hidden_indexes = opts.hidden_indexes;
        add_local(local.candidates, seen, current, defer, Mechanism::M1);
        if (!q->joins.empty())
            add_local(local.candidates, seen, current, with_flags_off(opts, {flags::kHashJoin, flags::kMergeJoin}),
                      Mechanism::M1);
        for (const auto& [t, m] : holistic.access_methods())
            for (auto alt : {AccessMethod::Seq, AccessMethod::Index, AccessMethod::Bitmap}) {
                if (alt == m) continue;
                QueryOptions o = opts;
                o.table_access[t] = alt;
                add_local(local.candidates, seen, current, o, Mechanism::M1);
            }
        add_local(local.candidates, seen, current, with_flags_off(opts, {flags::kSort}), Mechanism::M1);
    }

    if (mechanisms.count(Mechanism::M2)) {
        // Disable operators the holistic plan gained relative to the seed plan.
        const auto seed_ops = seed_plan.operators();
        QueryOptions all_off = opts;
        std::size_t n_off = 0;
        for (auto op : holistic.operators()) {
            if (seed_ops.count(op)) continue;
            auto flag = disabling_flag(op);
            if (!flag) continue;
            add_local(local.candidates, seen, current, with_flags_off(opts, {*flag}), Mechanism::M2);
            all_off.optimizer_flags[std::string(*flag)] = false;
            ++n_off;
        }
        if (n_off > 1) add_local(local.candidates, seen, current, all_off, Mechanism::M2);
        // Restore the seed plan's nodes: pin its access methods and join types.
        QueryOptions restore = opts;
        for (const auto& [t, m] : seed_plan.access_methods()) restore.table_access[t] = m;
        restore.join_directives = seed_plan.joins();
        add_local(local.candidates, seen, current, restore, Mechanism::M2);
        // Re-enable every operator the seed plan uses.
        QueryOptions enable = opts;
        for (auto op : seed_ops)
            if (auto flag = disabling_flag(op)) enable.optimizer_flags.erase(std::string(*flag));
        add_local(local.candidates, seen, current, enable, Mechanism::M2);
    }
    if (!local.candidates.empty()) stages.push_back(std::move(local));

    std::vector<RolloutCandidate> physical;
    std::set<std::string> physical_seen{current.seed.digest()};
    auto add_physical = [&](RankedSeed s, Mechanism m) {
        if (!physical_seen.insert(s.seed.digest()).second) return;
        physical.push_back({std::move(s), m});
    };
    if (mechanisms.count(Mechanism::M3)) {
        // Hide indexes other seeds brought in that the query now uses.
        for (const auto& id : holistic.indexes_used()) {
            if (current.seed.indexes.count(id)) continue;
            RankedSeed v = current;
            v.seed.options.hidden_indexes.insert(id);
            add_physical(std::move(v), Mechanism::M3);
        }
        // Omit one of the seed's own indexes; a pin on its table goes too.
        for (const auto& [id, d] : current.seed.indexes) {
            RankedSeed v = current;
            v.seed.indexes.erase(id);
            v.seed.options.table_access.erase(d.table);
            add_physical(std::move(v), Mechanism::M3);
        }
        // Omit one of the seed's system knobs, leaving it to the other seeds.
        for (const auto& [name, _] : current.seed.system_knob_suggestions) {
            RankedSeed v = current;
            v.seed.system_knob_suggestions.erase(name);
            add_physical(std::move(v), Mechanism::M3);
        }
    }
    if (mechanisms.count(Mechanism::M4)) {
        auto it = ranked.find(query_id);
        double now = state.per_query_runtime.at(query_id);
        if (it != ranked.end())
            for (const auto& r : it->second)
                if (r.est_runtime < now) add_physical(r, Mechanism::M4);
    }
    std::stable_sort(physical.begin(), physical.end(), [](const RolloutCandidate& a, const RolloutCandidate& b) {
        if (a.seed.est_runtime != b.seed.est_runtime) return a.seed.est_runtime < b.seed.est_runtime;
        return a.seed.seed.digest() < b.seed.seed.digest();
    });
    const std::size_t n = physical.size();
    std::size_t begin = 0;
    for (int k = 1; k <= 4; ++k) {
        std::size_t end = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * k / 4.0));
        if (end > begin) {
            RolloutStage st{"physical-" + std::to_string(k), false, {}};
            st.candidates.assign(physical.begin() + static_cast<std::ptrdiff_t>(begin),
                                 physical.begin() + static_cast<std::ptrdiff_t>(end));
            stages.push_back(std::move(st));
        }
        begin = std::max(begin, end);
    }
    return stages;
}

// ---------------------------------------------------------------------------
// Compose

namespace {

std::map<std::string, Seed> seeds_of(const BeamState& s) {
    std::map<std::string, Seed> out;
    for (const auto& [q, r] : s.per_query_seed) out[q] = r.seed;
    return out;
}

void adopt(BeamState& state, const CandidateResult& c) {
    state.current_best = c.config;
    state.per_query_runtime = c.runtime;
    state.objective = c.objective;
}

}  // namespace

ComposeResult compose(const Workload& workload, const RankedSeeds& ranked, Budget budget, const SimEnv& sim,
                      const ComposeOptions& options) {
    ComposeResult res;
    std::vector<std::string> order;
    for (const auto& q : workload.queries) {
        auto it = ranked.find(q.query_id);
        if (it == ranked.end() || it->second.empty()) throw InvalidInput("query " + q.query_id + " has no ranked seed");
        res.state.per_query_seed[q.query_id] = it->second.front();
        order.push_back(q.query_id);
    }
    PlanCache cache;
    EvaluateOptions eval_opts;
    eval_opts.kernel = options.kernel;
    auto run = [&](const std::vector<Configuration>& cands, const std::map<std::string, double>& timeouts) {
        eval_opts.timeouts = timeouts;
        EvaluateResult r = evaluate(cands, workload, budget, cache, sim, eval_opts);
        res.evaluations += r.fresh_executions;
        return r;
    };

    auto initial = merge(seeds_of(res.state));
    EvaluateResult first = run(initial, {});
    if (first.best) {
        adopt(res.state, first.evaluated[*first.best]);
        res.initial_evaluated = true;
    } else {
        // Nothing measured: report the first merged configuration at its
        // estimated runtimes.
        res.state.current_best = initial.front();
        for (const auto& [q, r] : res.state.per_query_seed) {
            res.state.per_query_runtime[q] = r.est_runtime;
            res.state.objective += r.est_runtime;
        }
    }
    res.initial_objective = res.state.objective;

    std::set<std::string> unproductive;
    int iteration = 0;
    while (res.initial_evaluated && !budget.exhausted() && iteration < options.max_iterations) {
        const std::string q = select(res.state, order);
        ++iteration;
        IterationRecord rec{iteration, q, "none", 0.0, res.state.objective};
        bool stop = false;
        for (const auto& stage : rollout(q, res.state, ranked, workload, sim, options.mechanisms)) {
            std::vector<Configuration> cands;
            std::vector<std::size_t> owner;
            for (std::size_t i = 0; i < stage.candidates.size(); ++i) {
                const auto& rc = stage.candidates[i];
                if (stage.local) {
                    Configuration c = res.state.current_best;
                    QueryOptions o = rc.seed.seed.options;
                    o.query_id = q;
                    if (o.empty())
                        c.query_options.erase(q);
                    else
                        c.query_options[q] = o;
                    cands.push_back(std::move(c));
                    owner.push_back(i);
                } else {
                    auto seeds = seeds_of(res.state);
                    seeds[q] = rc.seed.seed;
                    for (auto& c : merge(seeds)) {
                        cands.push_back(std::move(c));
                        owner.push_back(i);
                    }
                }
            }
            std::map<std::string, double> timeouts;
            if (stage.local) timeouts[q] = res.state.per_query_runtime.at(q);
            EvaluateResult r = run(cands, timeouts);
            if (r.best && r.evaluated[*r.best].objective < res.state.objective) {
                const CandidateResult& win = r.evaluated[*r.best];
                // Map the winner back to its rollout candidate.
                std::size_t which = 0;
                for (std::size_t i = 0; i < cands.size(); ++i)
                    if (cands[i] == win.config) {
                        which = owner[i];
                        break;
                    }
                rec.stage = stage.name;
                rec.improvement = res.state.objective - win.objective;
                adopt(res.state, win);
                res.state.per_query_seed[q] = stage.candidates[which].seed;
                break;
            }
            if (r.exhausted) {
                stop = true;
                break;
            }
        }
        rec.objective = res.state.objective;
        res.iterations.push_back(rec);
        if (rec.stage == "none") {
            unproductive.insert(q);
            if (unproductive.size() == order.size()) {
                res.converged = true;
                break;
            }
        } else {
            unproductive.clear();
        }
        if (stop) break;
    }
    res.budget = budget;
    res.cache_hits = cache.hits();
    return res;
}

json digest(const ComposeResult& result) {
    json seeds = json::object();
    for (const auto& [q, r] : result.state.per_query_seed)
        seeds[q] = json{{"seed_digest", r.seed.digest()},
                        {"provenance", to_string(r.seed.provenance)},
                        {"rank", r.rank},
                        {"est_runtime", r.est_runtime}};
    json iterations = json::array();
    for (const auto& it : result.iterations)
        iterations.push_back(json{{"iteration", it.iteration},
                                  {"query", it.query},
                                  {"stage", it.stage},
                                  {"improvement", it.improvement},
                                  {"objective", it.objective}});
    return json{{"format", "booster-digest/1"},
                {"configuration", result.state.current_best},
                {"objective", result.state.objective},
                {"initial_objective", result.initial_objective},
                {"initial_evaluated", result.initial_evaluated},
                {"per_query_runtime", result.state.per_query_runtime},
                {"per_query_seed", seeds},
                {"iterations", iterations},
                {"evaluations", result.evaluations},
                {"cache_hits", result.cache_hits},
                {"budget", result.budget},
                {"converged", result.converged}};
}

}  // namespace booster
