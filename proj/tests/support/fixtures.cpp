#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "booster/errors.hpp"

namespace booster::testing {

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double uniform_real(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

SchemaDef random_schema(Rng& rng, int n_tables, int max_columns) {
    SchemaDef s;
    for (int t = 0; t < n_tables; ++t) {
        TableDef td;
        td.name = "t" + std::to_string(t);
        td.row_count = static_cast<std::int64_t>(std::pow(10.0, uniform_real(rng, 2.0, 6.5)));
        int ncols = uniform_int(rng, 2, std::max(2, max_columns));
        for (int c = 0; c < ncols; ++c) {
            ColumnDef cd;
            cd.name = "c" + std::to_string(c);
            cd.distinct_values = std::max<std::int64_t>(
                1, static_cast<std::int64_t>(std::pow(static_cast<double>(td.row_count), uniform_real(rng, 0.1, 1.0))));
            cd.width_bytes = uniform_int(rng, 4, 64);
            td.columns.push_back(cd);
        }
        s.tables.push_back(td);
    }
    return s;
}

namespace {

const std::string& pick_column(Rng& rng, const TableDef& t) {
    return t.columns[uniform_int(rng, 0, static_cast<int>(t.columns.size()) - 1)].name;
}

}  // namespace

QuerySpec random_query(Rng& rng, const SchemaDef& schema, int n_tables, const std::string& id) {
    std::vector<int> order(schema.tables.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(n_tables));

    QuerySpec q;
    q.query_id = id;
    q.template_id = id;
    for (int i = 0; i < n_tables; ++i) {
        const TableDef& t = schema.tables[order[i]];
        q.referenced.push_back({t.name, pick_column(rng, t)});
        if (uniform_int(rng, 0, 2) > 0)
            q.predicates.push_back({t.name, pick_column(rng, t), uniform_real(rng, 0.0005, 0.6)});
        if (i > 0) {
            const TableDef& other = schema.tables[order[uniform_int(rng, 0, i - 1)]];
            q.joins.push_back({{other.name, pick_column(rng, other)}, {t.name, pick_column(rng, t)}});
        }
    }
    if (uniform_int(rng, 0, 2) == 0) {
        const TableDef& t = schema.tables[order[uniform_int(rng, 0, n_tables - 1)]];
        q.order_by = std::vector<ColumnRef>{{t.name, pick_column(rng, t)}};
    }
    q.sql_text = "SELECT * FROM " + schema.tables[order[0]].name;
    return q;
}

std::vector<IndexDef> random_indexes(Rng& rng, const SchemaDef& schema, int n) {
    std::vector<IndexDef> out;
    for (int i = 0; i < n; ++i) {
        const TableDef& t = schema.tables[uniform_int(rng, 0, static_cast<int>(schema.tables.size()) - 1)];
        std::vector<std::string> cols;
        for (const auto& c : t.columns) cols.push_back(c.name);
        std::shuffle(cols.begin(), cols.end(), rng);
        IndexDef d;
        d.table = t.name;
        int nkey = uniform_int(rng, 1, std::min<int>(2, static_cast<int>(cols.size())));
        d.key_columns.assign(cols.begin(), cols.begin() + nkey);
        if (uniform_int(rng, 0, 3) == 0 && static_cast<int>(cols.size()) > nkey) d.include_columns.push_back(cols[nkey]);
        if (uniform_int(rng, 0, 3) == 0) d.fillfactor = uniform_int(rng, 50, 100);
        out.push_back(d);
    }
    return out;
}

QueryOptions random_options(Rng& rng, const QuerySpec& q) {
    QueryOptions o;
    o.query_id = q.query_id;
    for (const auto& f : optimizer_flag_names())
        if (uniform_int(rng, 0, 4) == 0) o.optimizer_flags[f] = false;
    for (const auto& t : q.tables())
        if (uniform_int(rng, 0, 4) == 0)
            o.table_access[t] = static_cast<AccessMethod>(uniform_int(rng, 1, 3));
    if (q.joins.size() >= 1 && uniform_int(rng, 0, 3) == 0) {
        const auto& e = q.joins.front();
        o.join_directives.push_back({{e.left.table, e.right.table}, static_cast<JoinType>(uniform_int(rng, 0, 2))});
    }
    return o;
}

Workload toy_workload() {
    Workload w;
    w.schema.tables.push_back({"orders",
                               2000000,
                               {{"id", 2000000, 8}, {"cust", 50000, 8}, {"item", 20000, 8}, {"day", 3650, 4},
                                {"qty", 100, 4}, {"price", 100000, 8}}});
    w.schema.tables.push_back(
        {"customer", 50000, {{"id", 50000, 8}, {"region", 25, 16}, {"segment", 5, 12}, {"name", 50000, 32}}});
    w.schema.tables.push_back({"item", 20000, {{"id", 20000, 8}, {"category", 40, 16}, {"brand", 500, 16}}});

    QuerySpec q1;
    q1.query_id = "q1";
    q1.template_id = "by_region";
    q1.sql_text = "SELECT o.price FROM orders o JOIN customer c ON o.cust = c.id WHERE c.region = 'EU'";
    q1.referenced = {{"orders", "price"}, {"customer", "region"}};
    q1.predicates = {{"customer", "region", 0.04}};
    q1.joins = {{{"orders", "cust"}, {"customer", "id"}}};

    QuerySpec q2;
    q2.query_id = "q2";
    q2.template_id = "recent_orders";
    q2.sql_text = "SELECT o.id, o.qty FROM orders o WHERE o.day > 3600 ORDER BY o.day";
    q2.referenced = {{"orders", "id"}, {"orders", "qty"}};
    q2.predicates = {{"orders", "day", 0.014}};
    q2.order_by = std::vector<ColumnRef>{{"orders", "day"}};

    QuerySpec q3;
    q3.query_id = "q3";
    q3.template_id = "category_sales";
    q3.sql_text =
        "SELECT i.brand, o.qty FROM orders o JOIN item i ON o.item = i.id WHERE i.category = 'toys' AND o.qty > 90";
    q3.referenced = {{"item", "brand"}, {"orders", "qty"}};
    q3.predicates = {{"item", "category", 0.025}, {"orders", "qty", 0.1}};
    q3.joins = {{{"orders", "item"}, {"item", "id"}}};

    QuerySpec q4;
    q4.query_id = "q4";
    q4.template_id = "customer_lookup";
    q4.sql_text = "SELECT c.name FROM customer c WHERE c.segment = 'retail' AND c.region = 'EU'";
    q4.referenced = {{"customer", "name"}};
    q4.predicates = {{"customer", "segment", 0.2}, {"customer", "region", 0.04}};

    w.queries = {q1, q2, q3, q4};
    return w;
}

std::vector<TrajectoryStep> random_trajectory(Rng& rng, const Workload& w, const SimEnv& sim,
                                              const std::string& trial, int steps, bool gaps) {
    const auto& dict = default_knob_dictionary();
    std::vector<TrajectoryStep> out;
    long index = 0;
    for (int s = 0; s < steps; ++s) {
        TrajectoryStep st;
        st.trial_id = trial;
        st.tuner_id = "synthetic";
        index += uniform_int(rng, 1, 3);
        st.step_index = index;
        st.config.set_knob(*dict.make(knobs::kWorkersPerGather, uniform_int(rng, 0, 8)));
        st.config.set_knob(*dict.make(knobs::kWorkMem, uniform_int(rng, 64, 65536)));
        st.config.set_knob(*dict.make(knobs::kRandomPageCost, uniform_real(rng, 1.0, 4.0)));
        for (const auto& idx : random_indexes(rng, w.schema, uniform_int(rng, 0, 3))) st.config.add_index(idx);
        for (const auto& q : w.queries) {
            if (gaps && s > 0 && uniform_int(rng, 0, 4) == 0) continue;
            ExecutionResult r = sim.execute(q, st.config);
            st.per_query_runtime[q.query_id] = r.runtime;
            st.plans[q.query_id] = r.plan;
        }
        for (const auto& [_, r] : st.per_query_runtime) st.objective += r;
        out.push_back(std::move(st));
    }
    return out;
}

json random_suggestion(Rng& rng, const SchemaDef& schema, const QuerySpec& q) {
    json s = json::object();
    if (uniform_int(rng, 0, 3) > 0) {
        json k = json::object();
        if (uniform_int(rng, 0, 1)) k["max_parallel_workers_per_gather"] = uniform_int(rng, -4, 40);
        if (uniform_int(rng, 0, 1)) k["work_mem"] = uniform_int(rng, 16, 200000);
        if (uniform_int(rng, 0, 1)) k["random_page_cost"] = uniform_real(rng, 0.5, 8.0);
        if (uniform_int(rng, 0, 2) == 0) k["innodb_buffer_pool_size"] = "4G";
        if (uniform_int(rng, 0, 2) == 0) k["enable_hashjoin"] = "off";
        if (uniform_int(rng, 0, 3) == 0) k["work_mem"] = "lots";
        s["system_knobs"] = k;
    }
    if (uniform_int(rng, 0, 3) > 0) {
        json idx = json::array();
        for (const auto& d : random_indexes(rng, schema, uniform_int(rng, 0, 3))) idx.push_back(d.id());
        const auto tables = q.tables();
        const auto& t = tables[uniform_int(rng, 0, static_cast<int>(tables.size()) - 1)];
        if (uniform_int(rng, 0, 1)) {
            const TableDef* td = schema.table(t);
            idx.push_back(json{{"table", t}, {"key_columns", {td->columns[0].name}}});
        }
        if (uniform_int(rng, 0, 2) == 0) idx.push_back(t + "(no_such_column)");
        if (uniform_int(rng, 0, 2) == 0) idx.push_back("ghost(c0)");
        if (uniform_int(rng, 0, 3) == 0) idx.push_back(json{{"table", t}});
        s["indexes"] = idx;
    }
    if (uniform_int(rng, 0, 3) > 0) {
        json o = random_options(rng, q);
        o.erase("query_id");
        if (uniform_int(rng, 0, 2) == 0) o["table_access"]["ghost"] = "Index";
        if (uniform_int(rng, 0, 3) == 0)
            o["join_directives"].push_back(json{{"tables", {"ghost", q.tables()[0]}}, {"join_type", "Hash"}});
        if (uniform_int(rng, 0, 3) == 0) o["optimizer_flags"]["enable_teleport"] = false;
        if (uniform_int(rng, 0, 3) == 0) o["hidden_indexes"] = {"t0(c0)"};
        s["options"] = o;
    }
    return s;
}

QConfig random_reference(Rng& rng, const SimEnv& sim, const QuerySpec& q, const std::string& id) {
    Configuration c;
    const auto& dict = default_knob_dictionary();
    c.set_knob(*dict.make(knobs::kWorkersPerGather, uniform_int(rng, 0, 8)));
    for (const auto& d : random_indexes(rng, sim.schema(), uniform_int(rng, 0, 3))) c.add_index(d);
    if (uniform_int(rng, 0, 1)) {
        QueryOptions o;
        o.query_id = q.query_id;
        for (const auto& f : optimizer_flag_names())
            if (uniform_int(rng, 0, 5) == 0) o.optimizer_flags[f] = false;
        c.query_options[q.query_id] = o;
    }
    QConfig qc;
    qc.qconfig_id = id;
    qc.query = q;
    qc.config_slice = config_slice(c, q);
    try {
        auto r = sim.execute(q, qc.config_slice);
        qc.plan = r.plan;
        qc.runtime = r.runtime;
    } catch (const Error&) {
        qc.config_slice.query_options.clear();
        auto r = sim.execute(q, qc.config_slice);
        qc.plan = r.plan;
        qc.runtime = r.runtime;
    }
    return qc;
}

// ---------------------------------------------------------------------------
// Plan enumeration oracle

namespace {

struct Cand {
    PlanNode node;
    std::optional<ColumnRef> order;  // natural output order
};

PlanNode scan(Operator op, const std::string& t, const std::optional<std::string>& idx = std::nullopt) {
    PlanNode n;
    n.op = op;
    n.relation = t;
    n.index = idx;
    return n;
}

PlanNode wrap(Operator op, std::vector<PlanNode> children) {
    PlanNode n;
    n.op = op;
    n.children = std::move(children);
    return n;
}

struct Enumerator {
    const SimEnv& env;
    const QuerySpec& q;
    const Configuration& config;
    QueryOptions opts;
    std::vector<std::string> tables;
    std::set<ColumnRef> interesting;
    std::map<std::string, std::set<std::string>> pred_cols;

    Enumerator(const SimEnv& e, const QuerySpec& qq, const Configuration& c)
        : env(e), q(qq), config(c), opts(c.options_for(qq.query_id)), tables(qq.tables()) {
        for (const auto& j : q.joins) {
            interesting.insert(j.left);
            interesting.insert(j.right);
        }
        if (q.order_by && !q.order_by->empty()) interesting.insert(q.order_by->front());
        for (const auto& p : q.predicates) pred_cols[p.table].insert(p.column);
    }

    bool on(std::string_view f) const { return opts.flag(f); }
    AccessMethod am(const std::string& t) const {
        auto it = opts.table_access.find(t);
        return it == opts.table_access.end() ? AccessMethod::Any : it->second;
    }
    bool dir_ok(const std::set<std::string>& s, JoinType j) const {
        for (const auto& d : opts.join_directives)
            if (d.tables == s) return d.join_type == j;
        return true;
    }

    std::vector<const IndexDef*> visible(const std::string& t) const {
        std::vector<const IndexDef*> out;
        for (const auto& [id, idx] : config.indexes)
            if (idx.table == t && !opts.hidden_indexes.count(id)) out.push_back(&idx);
        return out;
    }

    bool covering(const IndexDef& idx) const {
        auto cols = idx.all_columns();
        for (const auto& c : q.columns_read())
            if (c.table == idx.table && std::find(cols.begin(), cols.end(), c.column) == cols.end()) return false;
        return true;
    }

    std::vector<Cand> scans(const std::string& t) const {
        std::vector<Cand> out;
        AccessMethod a = am(t);
        if ((a == AccessMethod::Any || a == AccessMethod::Seq) && on(flags::kSeqScan))
            out.push_back({scan(Operator::SeqScan, t), std::nullopt});
        for (const IndexDef* idx : visible(t)) {
            const std::string& lead = idx->key_columns.front();
            bool pred = pred_cols.count(t) && pred_cols.at(t).count(lead);
            bool intr = interesting.count({t, lead}) > 0;
            if ((a == AccessMethod::Any || a == AccessMethod::Index) && on(flags::kIndexScan) &&
                (pred || intr || covering(*idx)))
                out.push_back({scan(Operator::IndexScan, t, idx->id()), ColumnRef{t, lead}});
            if ((a == AccessMethod::Any || a == AccessMethod::Bitmap) && on(flags::kBitmapScan) && pred)
                out.push_back({scan(Operator::BitmapScan, t, idx->id()), std::nullopt});
        }
        return out;
    }

    std::set<std::string> subset(unsigned mask) const {
        std::set<std::string> s;
        for (std::size_t i = 0; i < tables.size(); ++i)
            if (mask & (1u << i)) s.insert(tables[i]);
        return s;
    }

    std::vector<Cand> plans(unsigned mask) const {
        if (std::popcount(mask) == 1) return scans(tables[std::countr_zero(mask)]);
        std::vector<Cand> out;
        auto all = subset(mask);
        for (unsigned left = (mask - 1) & mask; left > 0; left = (left - 1) & mask) {
            unsigned right = mask ^ left;
            auto ls = subset(left), rs = subset(right);
            std::optional<std::pair<ColumnRef, ColumnRef>> edge;
            for (const auto& j : q.joins) {
                if (ls.count(j.left.table) && rs.count(j.right.table)) edge = {{j.left, j.right}};
                else if (ls.count(j.right.table) && rs.count(j.left.table)) edge = {{j.right, j.left}};
                if (edge) break;
            }
            if (!edge) continue;
            auto [lk, rk] = *edge;
            auto lps = plans(left);
            auto rps = plans(right);
            bool right_single = rs.size() == 1;
            for (const auto& lp : lps) {
                for (const auto& rp : rps) {
                    if (on(flags::kHashJoin) && dir_ok(all, JoinType::Hash))
                        out.push_back({wrap(Operator::HashJoin, {lp.node, rp.node}), std::nullopt});
                    bool param = right_single && rp.node.op == Operator::IndexScan && rp.order == rk;
                    if (on(flags::kNestLoop) && dir_ok(all, JoinType::NestLoop) && !param) {
                        out.push_back({wrap(Operator::NestLoopJoin, {lp.node, rp.node}), lp.order});
                        if (on(flags::kMaterial))
                            out.push_back({wrap(Operator::NestLoopJoin,
                                                {lp.node, wrap(Operator::Materialize, {rp.node})}),
                                           lp.order});
                    }
                    if (on(flags::kMergeJoin) && dir_ok(all, JoinType::Merge)) {
                        bool lsorted = lp.order == lk, rsorted = rp.order == rk;
                        if ((lsorted && rsorted) || on(flags::kSort)) {
                            PlanNode l = lsorted ? lp.node : wrap(Operator::Sort, {lp.node});
                            PlanNode r = rsorted ? rp.node : wrap(Operator::Sort, {rp.node});
                            out.push_back({wrap(Operator::MergeJoin, {l, r}), lk});
                        }
                    }
                }
                if (right_single && on(flags::kNestLoop) && dir_ok(all, JoinType::NestLoop) &&
                    on(flags::kIndexScan) && (am(rk.table) == AccessMethod::Any || am(rk.table) == AccessMethod::Index)) {
                    for (const IndexDef* idx : visible(rk.table))
                        if (idx->key_columns.front() == rk.column)
                            out.push_back({wrap(Operator::NestLoopJoin,
                                                {lp.node, scan(Operator::IndexScan, rk.table, idx->id())}),
                                           lp.order});
                }
            }
        }
        return out;
    }
};

}  // namespace

std::optional<OraclePlan> brute_force_plan(const SimEnv& env, const QuerySpec& q, const Configuration& config) {
    Enumerator en(env, q, config);
    auto cands = en.plans((1u << en.tables.size()) - 1);
    std::optional<OraclePlan> best;
    std::size_t count = 0;
    for (auto& c : cands) {
        PlanTree shape;
        if (q.order_by && !q.order_by->empty() && !(q.order_by->size() == 1 && c.order == q.order_by->front())) {
            if (!en.on(flags::kSort)) continue;
            shape.root = wrap(Operator::Sort, {c.node});
        } else {
            shape.root = c.node;
        }
        ++count;
        PlanTree costed = env.cost_plan(q, config, shape);
        double cost = costed.cost();
        if (!best || cost < best->cost ||
            (cost == best->cost && plan_signature(costed) < plan_signature(best->plan)))
            best = OraclePlan{costed, cost, 0};
    }
    if (best) best->shapes = count;
    return best;
}

double reference_runtime(const SimEnv& env, const QuerySpec& q, const Configuration& config,
                         const PlanTree& shape) {
    Configuration truth = config;
    truth.set_knob(default_knob_dictionary()
                       .make(knobs::kRandomPageCost, env.params().true_random_page_cost)
                       .value());
    PlanTree costed = env.cost_plan(q, truth, shape);
    const SimParams& p = env.params();
    int w = env.effective_workers(config);
    double total = 0;
    std::vector<const PlanNode*> stack{&costed.root};
    while (!stack.empty()) {
        const PlanNode* n = stack.back();
        stack.pop_back();
        double child = 0;
        for (const auto& c : n->children) {
            child += c.est_cost;
            stack.push_back(&c);
        }
        double self = n->est_cost - child;
        double secs = self * p.seconds_per_cost_unit * p.latency[static_cast<int>(n->op)];
        bool par = n->op == Operator::SeqScan || n->op == Operator::HashJoin || n->op == Operator::Sort;
        if (par && w > 0 && self >= p.parallel_min_cost) secs = secs / (w + 1) + p.parallel_setup_seconds * w;
        total += secs;
    }
    return total;
}

}  // namespace booster::testing

namespace booster::testing {

QuerySpec scan_query(const std::string& id, const std::vector<Predicate>& predicates,
                     const std::vector<ColumnRef>& reads, std::optional<std::vector<ColumnRef>> order_by) {
    QuerySpec q;
    q.query_id = id;
    q.template_id = id;
    q.referenced = reads;
    q.predicates = predicates;
    q.order_by = std::move(order_by);
    std::string sql = "SELECT ";
    for (std::size_t i = 0; i < reads.size(); ++i) sql += (i ? ", " : "") + reads[i].column;
    sql += " FROM " + (predicates.empty() ? reads.front().table : predicates.front().table) + " WHERE ";
    for (std::size_t i = 0; i < predicates.size(); ++i)
        sql += (i ? " AND " : "") + predicates[i].column + " < " +
               std::to_string(static_cast<long>(std::llround(predicates[i].selectivity * 1e6)));
    q.sql_text = sql;
    return q;
}

Seed make_seed(const std::string& query_id, const std::vector<std::string>& indexes,
               const std::vector<std::pair<std::string, json>>& knobs, Provenance provenance) {
    Seed s;
    s.query_id = query_id;
    s.provenance = provenance;
    s.options.query_id = query_id;
    for (const auto& id : indexes) s.add_index(parse_index_id(id));
    for (const auto& [name, value] : knobs) {
        auto k = default_knob_dictionary().make(name, value);
        if (!k) throw InvalidInput("fixture knob " + name);
        s.system_knob_suggestions[name] = *k;
    }
    return s;
}

namespace {

const QuerySpec& toy_query(const Workload& w, const std::string& id) {
    const QuerySpec* q = w.find(id);
    if (!q) throw UnknownObject(id);
    return *q;
}

Workload with_queries(const Workload& base, std::vector<QuerySpec> queries) {
    Workload w;
    w.schema = base.schema;
    w.queries = std::move(queries);
    return w;
}

}  // namespace

std::vector<ComposeFixture> adversarial_fixtures() {
    const Workload toy = toy_workload();
    const QuerySpec point = scan_query("point", {{"orders", "day", 0.0003}}, {{"orders", "price"}});
    const QuerySpec qty = scan_query("qty", {{"orders", "qty", 0.01}}, {{"orders", "price"}});
    const QuerySpec qty_day =
        scan_query("qty_day", {{"orders", "qty", 0.01}, {"orders", "day", 0.05}}, {{"orders", "price"}});
    const QuerySpec qty_rare = scan_query("qty_rare", {{"orders", "qty", 0.001}}, {{"orders", "price"}});
    const QuerySpec price = scan_query("price", {{"orders", "price", 0.002}}, {{"orders", "id"}});
    const auto filled = Provenance::Filled;
    const std::string workers(knobs::kWorkersPerGather);
    const std::string rpc(knobs::kRandomPageCost);

    std::vector<ComposeFixture> out;
    {
        // The point query's covering index lures the sorted range query into
        // a slower bitmap scan.
        ComposeFixture f{"index-lure", with_queries(toy, {point, toy_query(toy, "q2"), toy_query(toy, "q4"),
                                                          toy_query(toy, "q1")}), {}};
        f.seeds["point"] = {make_seed("point", {"orders(day)INCLUDE(price)"}), make_seed("point", {"orders(day)"}),
                            make_seed("point", {}, {}, filled)};
        f.seeds["q2"] = {make_seed("q2", {}, {}, filled), make_seed("q2", {}, {{workers, 3}})};
        f.seeds["q4"] = {make_seed("q4", {"customer(region,segment)"}), make_seed("q4", {}, {}, filled)};
        f.seeds["q1"] = {make_seed("q1", {}, {}, filled), make_seed("q1", {}, {{workers, 4}})};
        out.push_back(std::move(f));
    }
    {
        // A composite index whose prefix serves a broader predicate badly.
        ComposeFixture f{"composite-prefix", with_queries(toy, {qty_day, qty, price, toy_query(toy, "q4")}), {}};
        f.seeds["qty_day"] = {make_seed("qty_day", {"orders(qty,day)"}), make_seed("qty_day", {}, {}, filled)};
        f.seeds["qty"] = {make_seed("qty", {}, {}, filled), make_seed("qty", {"orders(qty)"})};
        f.seeds["price"] = {make_seed("price", {"orders(price)"}), make_seed("price", {}, {}, filled)};
        f.seeds["q4"] = {make_seed("q4", {"customer(region,segment)"}), make_seed("q4", {}, {}, filled)};
        out.push_back(std::move(f));
    }
    {
        // A cheap random_page_cost from one seed turns another query's scan
        // into an index plan.
        ComposeFixture f{"planner-knob", with_queries(toy, {qty_rare, toy_query(toy, "q3"), point,
                                                            toy_query(toy, "q4")}), {}};
        f.seeds["qty_rare"] = {make_seed("qty_rare", {"orders(qty)"}, {{rpc, 1.1}}),
                               make_seed("qty_rare", {"orders(qty)"}), make_seed("qty_rare", {}, {}, filled)};
        f.seeds["q3"] = {make_seed("q3", {}, {}, filled), make_seed("q3", {"item(category)"})};
        f.seeds["point"] = {make_seed("point", {"orders(day)INCLUDE(price)"}), make_seed("point", {}, {}, filled)};
        f.seeds["q4"] = {make_seed("q4", {"customer(region,segment)"}), make_seed("q4", {}, {}, filled)};
        out.push_back(std::move(f));
    }
    {
        // Two independent index lures in one workload.
        ComposeFixture f{"double-lure", with_queries(toy, {point, toy_query(toy, "q2"), qty_day, qty}), {}};
        f.seeds["point"] = {make_seed("point", {"orders(day)INCLUDE(price)"}), make_seed("point", {}, {}, filled)};
        f.seeds["q2"] = {make_seed("q2", {}, {}, filled), make_seed("q2", {}, {{workers, 4}})};
        f.seeds["qty_day"] = {make_seed("qty_day", {"orders(qty,day)"}), make_seed("qty_day", {}, {}, filled)};
        f.seeds["qty"] = {make_seed("qty", {}, {}, filled), make_seed("qty", {}, {{workers, 4}})};
        out.push_back(std::move(f));
    }
    {
        // A small query's best seed throttles parallelism for everyone else.
        ComposeFixture f{"sole-knob", with_queries(toy, {toy_query(toy, "q1"), toy_query(toy, "q3"),
                                                         toy_query(toy, "q4"), point}), {}};
        f.seeds["q1"] = {make_seed("q1", {}, {}, filled)};
        f.seeds["q3"] = {make_seed("q3", {}, {}, filled)};
        f.seeds["q4"] = {make_seed("q4", {"customer(region,segment)"}, {{workers, 1}}),
                         make_seed("q4", {"customer(region,segment)"}, {}, Provenance::IndexAugmented),
                         make_seed("q4", {}, {}, filled)};
        f.seeds["point"] = {make_seed("point", {"orders(day)INCLUDE(price)"}), make_seed("point", {}, {}, filled)};
        out.push_back(std::move(f));
    }
    return out;
}

double workload_objective(const Workload& workload, const Configuration& config, const SimEnv& sim) {
    double total = 0;
    for (const auto& q : workload.queries) total += sim.runtime_of(q, config, sim.plan(q, config));
    return total;
}

double stock_objective(const Workload& workload, const SimEnv& sim) {
    return workload_objective(workload, Configuration{}, sim);
}

namespace {

// Hiding indexes only changes the hiding query's plan, so each query's best
// hidden subset is independent of the others.
double best_with_hidden_subsets(const QuerySpec& q, const Configuration& config, const SimEnv& sim,
                                std::size_t& evaluated) {
    const auto tables = q.tables();
    const QueryOptions own = config.options_for(q.query_id);
    std::vector<std::string> hideable;
    for (const auto& [id, idx] : config.indexes)
        if (std::find(tables.begin(), tables.end(), idx.table) != tables.end() && !own.hidden_indexes.count(id))
            hideable.push_back(id);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 0; mask < (std::size_t{1} << hideable.size()); ++mask) {
        Configuration c = config;
        QueryOptions o = own;
        o.query_id = q.query_id;
        for (std::size_t i = 0; i < hideable.size(); ++i)
            if (mask >> i & 1) o.hidden_indexes.insert(hideable[i]);
        c.query_options[q.query_id] = o;
        try {
            best = std::min(best, sim.runtime_of(q, c, sim.plan(q, c)));
        } catch (const UnsatisfiableHints&) {
        }
        ++evaluated;
    }
    return best;
}

}  // namespace

BruteForceResult brute_force_compose(const Workload& workload, const RankedSeeds& ranked, const SimEnv& sim) {
    BruteForceResult res;
    res.objective = std::numeric_limits<double>::infinity();
    const std::size_t n = workload.queries.size();
    std::vector<std::size_t> pick(n, 0);
    while (true) {
        std::map<std::string, Seed> assignment;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& id = workload.queries[i].query_id;
            assignment[id] = ranked.at(id)[pick[i]].seed;
        }
        for (const auto& c : merge(assignment)) {
            double total = 0;
            for (const auto& q : workload.queries) total += best_with_hidden_subsets(q, c, sim, res.configurations);
            res.objective = std::min(res.objective, total);
        }
        std::size_t k = 0;
        while (k < n && ++pick[k] == ranked.at(workload.queries[k].query_id).size()) pick[k++] = 0;
        if (k == n) break;
    }
    return res;
}

DriftFixture make_drift_fixture(std::uint64_t seed) {
    Rng rng(seed);
    const Workload toy = toy_workload();
    DriftFixture f;
    // Broad windows before the drift, narrow ones after.
    auto window = [&](const std::string& id, const std::string& column, double sel) {
        QuerySpec q = scan_query(id, {{"orders", column, sel}}, {{"orders", "price"}});
        q.template_id = id + "_window";
        return q;
    };
    const double day_before = uniform_real(rng, 0.15, 0.35);
    const double qty_before = uniform_real(rng, 0.2, 0.4);
    const double day_after = uniform_real(rng, 0.0002, 0.0006);
    const double qty_after = uniform_real(rng, 0.0002, 0.0006);
    QuerySpec region = toy_query(toy, "q1");
    region.predicates[0].selectivity = uniform_real(rng, 0.03, 0.06);
    QuerySpec recent = toy_query(toy, "q2");
    recent.predicates[0].selectivity = uniform_real(rng, 0.01, 0.02);

    f.before = with_queries(toy, {region, recent, window("days", "day", day_before), window("qtys", "qty", qty_before)});
    f.after = with_queries(toy, {region, recent, window("days", "day", day_after), window("qtys", "qty", qty_after)});
    f.changed = {"days", "qtys"};

    // A tuner session on the old workload: parallelism and memory, plus
    // indexes that only the old parameters made look attractive.
    SimEnv sim(toy.schema);
    const auto& dict = default_knob_dictionary();
    long step = 0;
    auto record = [&](Configuration c) {
        TrajectoryStep st;
        st.trial_id = "drift-" + std::to_string(seed);
        st.tuner_id = "synthetic";
        st.step_index = ++step;
        st.config = std::move(c);
        for (const auto& q : f.before.queries) {
            ExecutionResult r = sim.execute(q, st.config);
            st.per_query_runtime[q.query_id] = r.runtime;
            st.plans[q.query_id] = r.plan;
            st.objective += r.runtime;
        }
        f.history.push_back(std::move(st));
    };
    Configuration c;
    record(c);
    c.set_knob(*dict.make(knobs::kWorkersPerGather, uniform_int(rng, 3, 5)));
    record(c);
    c.set_knob(*dict.make(knobs::kWorkMem, uniform_int(rng, 8192, 65536)));
    c.add_index(parse_index_id("customer(region)"));
    record(c);
    c.set_knob(*dict.make(knobs::kWorkersPerGather, uniform_int(rng, 6, 8)));
    record(c);
    return f;
}

}  // namespace booster::testing
