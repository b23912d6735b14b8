#include "booster/sim_env.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <queue>

#include "booster/errors.hpp"

namespace booster {

// ---------------------------------------------------------------------------
// Schema helpers

const ColumnDef* TableDef::column(std::string_view n) const {
    for (const auto& c : columns)
        if (c.name == n) return &c;
    return nullptr;
}

int TableDef::column_index(std::string_view n) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == n) return static_cast<int>(i);
    return -1;
}

const TableDef* SchemaDef::table(std::string_view n) const {
    for (const auto& t : tables)
        if (t.name == n) return &t;
    return nullptr;
}

void SchemaDef::validate() const {
    std::set<std::string> names;
    for (const auto& t : tables) {
        if (t.name.empty()) throw InvalidInput("table with empty name");
        if (!names.insert(t.name).second) throw InvalidInput("duplicate table " + t.name);
        if (t.row_count < 1) throw InvalidInput("table " + t.name + " has row_count < 1");
        std::set<std::string> cols;
        for (const auto& c : t.columns) {
            if (!cols.insert(c.name).second)
                throw InvalidInput("duplicate column " + t.name + "." + c.name);
            if (c.distinct_values < 1 || c.distinct_values > t.row_count)
                throw InvalidInput("column " + t.name + "." + c.name +
                                   " distinct_values outside [1, row_count]");
            if (c.width_bytes < 1) throw InvalidInput("column " + t.name + "." + c.name + " width < 1");
        }
    }
}

std::vector<std::string> QuerySpec::tables() const {
    std::vector<std::string> out;
    auto add = [&](const std::string& t) {
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    };
    for (const auto& r : referenced) add(r.table);
    for (const auto& p : predicates) add(p.table);
    for (const auto& j : joins) {
        add(j.left.table);
        add(j.right.table);
    }
    if (order_by)
        for (const auto& o : *order_by) add(o.table);
    return out;
}

std::set<ColumnRef> QuerySpec::columns_read() const {
    std::set<ColumnRef> out(referenced.begin(), referenced.end());
    for (const auto& p : predicates) out.insert({p.table, p.column});
    for (const auto& j : joins) {
        out.insert(j.left);
        out.insert(j.right);
    }
    if (order_by) out.insert(order_by->begin(), order_by->end());
    return out;
}

const QuerySpec* Workload::find(std::string_view id) const {
    for (const auto& q : queries)
        if (q.query_id == id) return &q;
    return nullptr;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const ColumnDef& c) {
    j = json{{"name", c.name}, {"distinct_values", c.distinct_values}, {"width_bytes", c.width_bytes}};
}
void from_json(const json& j, ColumnDef& c) {
    c.name = j.at("name").get<std::string>();
    c.distinct_values = j.at("distinct_values").get<std::int64_t>();
    c.width_bytes = j.at("width_bytes").get<int>();
}
void to_json(json& j, const TableDef& t) {
    j = json{{"name", t.name}, {"row_count", t.row_count}, {"columns", t.columns}};
}
void from_json(const json& j, TableDef& t) {
    t.name = j.at("name").get<std::string>();
    t.row_count = j.at("row_count").get<std::int64_t>();
    t.columns = j.at("columns").get<std::vector<ColumnDef>>();
}
void to_json(json& j, const SchemaDef& s) { j = json{{"tables", s.tables}}; }
void from_json(const json& j, SchemaDef& s) { s.tables = j.at("tables").get<std::vector<TableDef>>(); }

void to_json(json& j, const ColumnRef& c) { j = json{{"table", c.table}, {"column", c.column}}; }
void from_json(const json& j, ColumnRef& c) {
    if (j.is_array()) {
        if (j.size() != 2) throw InvalidInput("column reference must be [table, column]");
        c.table = j[0].get<std::string>();
        c.column = j[1].get<std::string>();
        return;
    }
    c.table = j.at("table").get<std::string>();
    c.column = j.at("column").get<std::string>();
}

void to_json(json& j, const QuerySpec& q) {
    json preds = json::array();
    for (const auto& p : q.predicates)
        preds.push_back({{"table", p.table}, {"column", p.column}, {"selectivity", p.selectivity}});
    json joins = json::array();
    for (const auto& e : q.joins) joins.push_back({{"left", e.left}, {"right", e.right}});
    j = json{{"query_id", q.query_id},
             {"sql_text", q.sql_text},
             {"template_id", q.template_id},
             {"referenced", q.referenced},
             {"predicates", preds},
             {"joins", joins},
             {"order_by", q.order_by ? json(*q.order_by) : json(nullptr)},
             {"cte_blocks", q.cte_blocks}};
}

void from_json(const json& j, QuerySpec& q) {
    q = QuerySpec{};
    q.query_id = j.at("query_id").get<std::string>();
    q.sql_text = j.value("sql_text", std::string{});
    q.template_id = j.value("template_id", q.query_id);
    if (j.contains("referenced")) q.referenced = j["referenced"].get<std::vector<ColumnRef>>();
    if (j.contains("predicates"))
        for (const auto& p : j["predicates"])
            q.predicates.push_back({p.at("table").get<std::string>(), p.at("column").get<std::string>(),
                                    p.at("selectivity").get<double>()});
    if (j.contains("joins"))
        for (const auto& e : j["joins"])
            q.joins.push_back({e.at("left").get<ColumnRef>(), e.at("right").get<ColumnRef>()});
    if (j.contains("order_by") && !j["order_by"].is_null())
        q.order_by = j["order_by"].get<std::vector<ColumnRef>>();
    q.cte_blocks = j.value("cte_blocks", 0);
}

void to_json(json& j, const Workload& w) { j = json{{"schema", w.schema}, {"queries", w.queries}}; }
void from_json(const json& j, Workload& w) {
    w.schema = j.at("schema").get<SchemaDef>();
    w.queries = j.at("queries").get<std::vector<QuerySpec>>();
}

Workload load_workload(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open workload file " + path.string());
    Workload w;
    try {
        w = json::parse(in).get<Workload>();
    } catch (const json::exception& e) {
        throw InvalidInput("workload " + path.string() + ": " + e.what());
    }
    w.schema.validate();
    SimEnv env(w.schema);
    std::set<std::string> ids;
    for (const auto& q : w.queries) {
        if (!ids.insert(q.query_id).second) throw InvalidInput("duplicate query id " + q.query_id);
        env.validate_query(q);
    }
    return w;
}

void save_workload(const Workload& w, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write workload file " + path.string());
    out << json(w).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Plan helpers

std::string_view to_string(Operator op) {
    switch (op) {
        case Operator::SeqScan: return "SeqScan";
        case Operator::IndexScan: return "IndexScan";
        case Operator::BitmapScan: return "BitmapScan";
        case Operator::NestLoopJoin: return "NestLoopJoin";
        case Operator::HashJoin: return "HashJoin";
        case Operator::MergeJoin: return "MergeJoin";
        case Operator::Sort: return "Sort";
        case Operator::Aggregate: return "Aggregate";
        case Operator::CTEScan: return "CTEScan";
        case Operator::Materialize: return "Materialize";
    }
    return "SeqScan";
}

std::optional<Operator> parse_operator(std::string_view s) {
    for (std::size_t i = 0; i < kOperatorCount; ++i) {
        auto op = static_cast<Operator>(i);
        if (to_string(op) == s) return op;
    }
    return std::nullopt;
}

bool is_scan(Operator op) {
    return op == Operator::SeqScan || op == Operator::IndexScan || op == Operator::BitmapScan;
}

bool is_join(Operator op) {
    return op == Operator::NestLoopJoin || op == Operator::HashJoin || op == Operator::MergeJoin;
}

std::optional<std::string_view> disabling_flag(Operator op) {
    switch (op) {
        case Operator::SeqScan: return flags::kSeqScan;
        case Operator::IndexScan: return flags::kIndexScan;
        case Operator::BitmapScan: return flags::kBitmapScan;
        case Operator::NestLoopJoin: return flags::kNestLoop;
        case Operator::HashJoin: return flags::kHashJoin;
        case Operator::MergeJoin: return flags::kMergeJoin;
        case Operator::Sort: return flags::kSort;
        case Operator::Materialize: return flags::kMaterial;
        default: return std::nullopt;
    }
}

double PlanNode::self_cost() const {
    double c = est_cost;
    for (const auto& ch : children) c -= ch.est_cost;
    return c;
}

namespace {

void walk(const PlanNode& n, const std::function<void(const PlanNode&)>& f) {
    f(n);
    for (const auto& c : n.children) walk(c, f);
}

std::set<std::string> relations_under(const PlanNode& n) {
    std::set<std::string> out;
    walk(n, [&](const PlanNode& x) {
        if (x.relation) out.insert(*x.relation);
    });
    return out;
}

}  // namespace

std::set<std::string> PlanTree::indexes_used() const {
    std::set<std::string> out;
    walk(root, [&](const PlanNode& n) {
        if (n.index) out.insert(*n.index);
    });
    return out;
}

std::set<Operator> PlanTree::operators() const {
    std::set<Operator> out;
    walk(root, [&](const PlanNode& n) { out.insert(n.op); });
    return out;
}

std::map<std::string, AccessMethod> PlanTree::access_methods() const {
    std::map<std::string, AccessMethod> out;
    walk(root, [&](const PlanNode& n) {
        if (!n.relation || !is_scan(n.op)) return;
        out[*n.relation] = n.op == Operator::SeqScan     ? AccessMethod::Seq
                           : n.op == Operator::IndexScan ? AccessMethod::Index
                                                         : AccessMethod::Bitmap;
    });
    return out;
}

std::vector<JoinDirective> PlanTree::joins() const {
    std::vector<JoinDirective> out;
    walk(root, [&](const PlanNode& n) {
        if (!is_join(n.op)) return;
        JoinDirective d;
        d.tables = relations_under(n);
        d.join_type = n.op == Operator::HashJoin    ? JoinType::Hash
                      : n.op == Operator::MergeJoin ? JoinType::Merge
                                                    : JoinType::NestLoop;
        out.push_back(std::move(d));
    });
    return out;
}

std::string plan_signature(const PlanNode& node) {
    std::string out(to_string(node.op));
    out += '(';
    bool first = true;
    auto sep = [&] {
        if (!first) out += ',';
        first = false;
    };
    if (node.relation) {
        sep();
        out += *node.relation;
    }
    if (node.index) {
        sep();
        out += *node.index;
    }
    for (const auto& c : node.children) {
        sep();
        out += plan_signature(c);
    }
    out += ')';
    return out;
}

std::string plan_signature(const PlanTree& plan) { return plan_signature(plan.root); }

void to_json(json& j, const PlanNode& n) {
    j = json{{"operator", to_string(n.op)},
             {"relation", n.relation ? json(*n.relation) : json(nullptr)},
             {"index", n.index ? json(*n.index) : json(nullptr)},
             {"est_cost", n.est_cost},
             {"est_rows", n.est_rows},
             {"children", n.children}};
}

void from_json(const json& j, PlanNode& n) {
    auto op = parse_operator(j.at("operator").get<std::string>());
    if (!op) throw InvalidInput("unknown plan operator " + j.at("operator").dump());
    n.op = *op;
    n.relation = j.contains("relation") && !j["relation"].is_null()
                     ? std::optional<std::string>(j["relation"].get<std::string>())
                     : std::nullopt;
    n.index = j.contains("index") && !j["index"].is_null()
                  ? std::optional<std::string>(j["index"].get<std::string>())
                  : std::nullopt;
    n.est_cost = j.value("est_cost", 0.0);
    n.est_rows = j.value("est_rows", 0.0);
    n.children = j.value("children", std::vector<PlanNode>{});
}

void to_json(json& j, const PlanTree& p) { j = p.root; }
void from_json(const json& j, PlanTree& p) { p.root = j.get<PlanNode>(); }

// ---------------------------------------------------------------------------
// Cost model

double knob_or_default(const Configuration& config, std::string_view name) {
    auto it = config.system_knobs.find(std::string(name));
    if (it != config.system_knobs.end()) return knob_numeric(it->second);
    return knob_numeric(default_knob_dictionary().make_default(name));
}

namespace {

constexpr int kNoOrder = -1;
constexpr int kMaxTables = 10;

struct TableStat {
    const TableDef* def = nullptr;
    double rows = 1;
    double pages = 1;
    double width = 0;
    double out_rows = 1;
    int npreds = 0;
    std::map<std::string, double> col_sel;  // product of predicate selectivities per column
    std::set<std::string> cols_read;
};

struct OrientedEdge {
    int lt;
    std::string lcol;
    int rt;
    std::string rcol;
};

// A costed subplan plus the bookkeeping the planner needs.
struct Sub {
    PlanNode node;
    std::uint32_t mask = 0;
    int order = kNoOrder;
};

class Model {
public:
    Model(const SchemaDef& schema, const QuerySpec& q, double random_page_cost, double work_mem_kb,
          bool pushdown)
        : q_(q), rpc_(random_page_cost), work_mem_bytes_(work_mem_kb * 1024.0), pushdown_(pushdown) {
        names_ = q.tables();
        if (names_.size() > static_cast<std::size_t>(kMaxTables))
            throw InvalidInput("query " + q.query_id + " joins more than 10 tables");
        auto reads = q.columns_read();
        for (const auto& name : names_) {
            TableStat s;
            s.def = schema.table(name);
            if (!s.def) throw UnknownObject("table " + name + " in query " + q.query_id);
            s.rows = static_cast<double>(s.def->row_count);
            s.width = cost::kTupleHeader;
            for (const auto& c : s.def->columns) s.width += c.width_bytes;
            s.pages = std::max(1.0, std::ceil(s.rows * s.width / cost::kPageBytes));
            double sel = 1.0;
            if (pushdown) {
                for (const auto& p : q.predicates) {
                    if (p.table != name) continue;
                    auto [it, fresh] = s.col_sel.emplace(p.column, p.selectivity);
                    if (!fresh) it->second *= p.selectivity;
                    sel *= p.selectivity;
                    ++s.npreds;
                }
            }
            s.out_rows = std::max(1.0, s.rows * sel);
            for (const auto& r : reads)
                if (r.table == name) s.cols_read.insert(r.column);
            tables_.push_back(std::move(s));
        }
        std::size_t n = names_.size();
        card_.assign(std::size_t{1} << n, 0.0);
        width_.assign(std::size_t{1} << n, 0.0);
        for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
            double c = 1.0, w = 0.0;
            for (std::size_t t = 0; t < n; ++t)
                if (mask & (1u << t)) {
                    c *= tables_[t].out_rows;
                    w += tables_[t].width;
                }
            for (const auto& e : q.joins) {
                int l = tid(e.left.table), r = tid(e.right.table);
                if ((mask & (1u << l)) && (mask & (1u << r))) {
                    double dl = static_cast<double>(tables_[l].def->column(e.left.column)->distinct_values);
                    double dr = static_cast<double>(tables_[r].def->column(e.right.column)->distinct_values);
                    c /= std::max(dl, dr);
                }
            }
            card_[mask] = std::max(1.0, c);
            width_[mask] = w;
        }
        if (q.order_by && !q.order_by->empty())
            interesting_.insert(order_key(tid(q.order_by->front().table), q.order_by->front().column));
        for (const auto& e : q.joins) {
            interesting_.insert(order_key(tid(e.left.table), e.left.column));
            interesting_.insert(order_key(tid(e.right.table), e.right.column));
        }
    }

    int size() const { return static_cast<int>(names_.size()); }
    std::uint32_t full_mask() const { return (1u << names_.size()) - 1; }
    const std::string& name(int t) const { return names_[t]; }
    const TableStat& stat(int t) const { return tables_[t]; }
    double card(std::uint32_t mask) const { return card_[mask]; }
    bool pushdown() const { return pushdown_; }
    const QuerySpec& query() const { return q_; }

    int tid(std::string_view name) const {
        for (std::size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return static_cast<int>(i);
        return -1;
    }

    int order_key(int t, std::string_view col) const {
        return t * 1024 + tables_[t].def->column_index(col);
    }
    int interesting(int key) const { return interesting_.count(key) ? key : kNoOrder; }

    int root_order_key() const {
        if (!q_.order_by || q_.order_by->empty()) return kNoOrder;
        return order_key(tid(q_.order_by->front().table), q_.order_by->front().column);
    }
    bool root_order_satisfied(int order) const {
        return q_.order_by && q_.order_by->size() == 1 && order == root_order_key();
    }

    std::optional<OrientedEdge> edge(std::uint32_t left, std::uint32_t right) const {
        for (const auto& e : q_.joins) {
            int l = tid(e.left.table), r = tid(e.right.table);
            if ((left & (1u << l)) && (right & (1u << r))) return OrientedEdge{l, e.left.column, r, e.right.column};
            if ((left & (1u << r)) && (right & (1u << l))) return OrientedEdge{r, e.right.column, l, e.left.column};
        }
        return std::nullopt;
    }

    // ---- index properties

    double index_pages(int t, const IndexDef& idx) const {
        const auto& s = tables_[t];
        double w = cost::kIndexTupleHeader;
        for (const auto& c : idx.all_columns()) w += s.def->column(c)->width_bytes;
        double ff = idx.fillfactor.value_or(cost::kDefaultFillfactor);
        return std::max(1.0, std::ceil(s.rows * w * (100.0 / ff) / cost::kPageBytes));
    }

    bool covering(int t, const IndexDef& idx) const {
        auto cols = idx.all_columns();
        for (const auto& c : tables_[t].cols_read)
            if (std::find(cols.begin(), cols.end(), c) == cols.end()) return false;
        return true;
    }

    bool pred_on_lead(int t, const IndexDef& idx) const {
        return tables_[t].col_sel.count(idx.key_columns.front()) > 0;
    }

    double prefix_sel(int t, const IndexDef& idx) const {
        double sel = 1.0;
        for (const auto& c : idx.key_columns) {
            auto it = tables_[t].col_sel.find(c);
            if (it == tables_[t].col_sel.end()) break;
            sel *= it->second;
        }
        return sel;
    }

    bool index_admissible(int t, const IndexDef& idx) const {
        return pred_on_lead(t, idx) || interesting(order_key(t, idx.key_columns.front())) != kNoOrder ||
               covering(t, idx);
    }

    double descent(double ipages) const { return rpc_ * (1.0 + std::log2(ipages)); }

    // ---- scans

    Sub seq_scan(int t) const {
        const auto& s = tables_[t];
        Sub out = leaf(Operator::SeqScan, t, nullptr);
        out.node.est_cost = s.pages * cost::kSeqPage + s.rows * (cost::kCpuTuple + s.npreds * cost::kCpuOperator);
        out.node.est_rows = s.out_rows;
        return out;
    }

    Sub index_scan(int t, const IndexDef& idx) const {
        const auto& s = tables_[t];
        double ip = index_pages(t, idx);
        double psel = prefix_sel(t, idx);
        double matched = std::max(1.0, s.rows * psel);
        double c = descent(ip) + ip * psel * cost::kSeqPage + matched * cost::kCpuIndexTuple +
                   (covering(t, idx) ? 0.0 : matched * rpc_) +
                   matched * (cost::kCpuTuple + s.npreds * cost::kCpuOperator);
        Sub out = leaf(Operator::IndexScan, t, &idx);
        out.node.est_cost = c;
        out.node.est_rows = s.out_rows;
        out.order = interesting(order_key(t, idx.key_columns.front()));
        return out;
    }

    Sub bitmap_scan(int t, const IndexDef& idx) const {
        const auto& s = tables_[t];
        double ip = index_pages(t, idx);
        double psel = prefix_sel(t, idx);
        double matched = std::max(1.0, s.rows * psel);
        double heap_pages = s.pages * (1.0 - std::exp(-matched / s.pages));
        double c = descent(ip) + ip * psel * cost::kSeqPage + matched * cost::kCpuIndexTuple +
                   heap_pages * (cost::kSeqPage + rpc_) / 2.0 +
                   matched * (cost::kCpuTuple + s.npreds * cost::kCpuOperator);
        Sub out = leaf(Operator::BitmapScan, t, &idx);
        out.node.est_cost = c;
        out.node.est_rows = s.out_rows;
        return out;
    }

    // Inner side of a nested loop, probed once per outer row on the join column.
    Sub param_index_scan(int t, const IndexDef& idx, double outer_rows) const {
        const auto& s = tables_[t];
        double d = static_cast<double>(s.def->column(idx.key_columns.front())->distinct_values);
        double m = std::max(1.0, s.rows / d);
        double per = rpc_ + m * cost::kCpuIndexTuple + (covering(t, idx) ? 0.0 : m * rpc_) +
                     m * (cost::kCpuTuple + s.npreds * cost::kCpuOperator);
        Sub out = leaf(Operator::IndexScan, t, &idx);
        out.node.est_cost = outer_rows * per;
        out.node.est_rows = m * (s.out_rows / s.rows);
        return out;
    }

    // ---- joins and wrappers

    Sub hash_join(const Sub& l, const Sub& r) const {
        std::uint32_t mask = l.mask | r.mask;
        double out_rows = card(mask);
        double c = l.node.est_cost + r.node.est_cost + r.node.est_rows * (cost::kCpuOperator + cost::kCpuTuple) +
                   l.node.est_rows * cost::kCpuOperator + out_rows * cost::kCpuTuple;
        if (r.node.est_rows * width_[r.mask] > work_mem_bytes_)
            c += 2.0 * (l.node.est_rows * width_[l.mask] + r.node.est_rows * width_[r.mask]) /
                 cost::kPageBytes * cost::kSeqPage;
        return join(Operator::HashJoin, l, r, c, kNoOrder);
    }

    Sub nest_loop(const Sub& l, const Sub& r) const {
        double out_rows = card(l.mask | r.mask);
        double c = l.node.est_cost + r.node.est_cost +
                   std::max(0.0, l.node.est_rows - 1.0) * r.node.est_cost +
                   l.node.est_rows * r.node.est_rows * cost::kCpuOperator + out_rows * cost::kCpuTuple;
        return join(Operator::NestLoopJoin, l, r, c, l.order);
    }

    Sub materialize(const Sub& x) const {
        Sub out;
        out.mask = x.mask;
        out.order = x.order;
        out.node.op = Operator::Materialize;
        out.node.est_cost = x.node.est_cost + x.node.est_rows * 2.0 * cost::kCpuOperator;
        out.node.est_rows = x.node.est_rows;
        out.node.children.push_back(x.node);
        return out;
    }

    // r is a Materialize node.
    Sub nest_loop_material(const Sub& l, const Sub& r) const {
        double out_rows = card(l.mask | r.mask);
        double c = l.node.est_cost + r.node.est_cost +
                   std::max(0.0, l.node.est_rows - 1.0) * r.node.est_rows * cost::kCpuOperator +
                   l.node.est_rows * r.node.est_rows * cost::kCpuOperator + out_rows * cost::kCpuTuple;
        return join(Operator::NestLoopJoin, l, r, c, l.order);
    }

    // r is a parameterised index scan already costed for l's row count.
    Sub nest_loop_param(const Sub& l, const Sub& r) const {
        double out_rows = card(l.mask | r.mask);
        double c = l.node.est_cost + r.node.est_cost + out_rows * cost::kCpuTuple;
        return join(Operator::NestLoopJoin, l, r, c, l.order);
    }

    // Both inputs already ordered on the join keys.
    Sub merge_join(const Sub& l, const Sub& r, int out_order) const {
        double out_rows = card(l.mask | r.mask);
        double c = l.node.est_cost + r.node.est_cost +
                   (l.node.est_rows + r.node.est_rows) * cost::kCpuOperator + out_rows * cost::kCpuTuple;
        return join(Operator::MergeJoin, l, r, c, out_order);
    }

    Sub sort(const Sub& x, int key) const {
        double rows = x.node.est_rows;
        double c = x.node.est_cost + 2.0 * cost::kCpuOperator * rows * std::log2(std::max(2.0, rows));
        double bytes = rows * width_[x.mask];
        if (bytes > work_mem_bytes_) c += 2.0 * bytes / cost::kPageBytes * cost::kSeqPage;
        Sub out;
        out.mask = x.mask;
        out.order = key;
        out.node.op = Operator::Sort;
        out.node.est_cost = c;
        out.node.est_rows = rows;
        out.node.children.push_back(x.node);
        return out;
    }

    // Materialised CTE: body written once, read once per reference, with the
    // query's predicates applied on the way out.
    Sub cte_scan(const Sub& body, double final_rows, int total_preds) const {
        double rows = body.node.est_rows;
        int blocks = std::max(1, q_.cte_blocks);
        double c = body.node.est_cost + rows * width_[body.mask] / cost::kPageBytes * cost::kSeqPage +
                   rows * cost::kCpuTuple * (1.0 + blocks) + rows * blocks * total_preds * cost::kCpuOperator;
        Sub out;
        out.mask = body.mask;
        out.order = kNoOrder;
        out.node.op = Operator::CTEScan;
        out.node.est_cost = c;
        out.node.est_rows = final_rows;
        out.node.children.push_back(body.node);
        return out;
    }

private:
    Sub leaf(Operator op, int t, const IndexDef* idx) const {
        Sub out;
        out.mask = 1u << t;
        out.node.op = op;
        out.node.relation = names_[t];
        if (idx) out.node.index = idx->id();
        return out;
    }

    Sub join(Operator op, const Sub& l, const Sub& r, double c, int order) const {
        Sub out;
        out.mask = l.mask | r.mask;
        out.order = order;
        out.node.op = op;
        out.node.est_cost = c;
        out.node.est_rows = card(out.mask);
        out.node.children = {l.node, r.node};
        return out;
    }

    const QuerySpec& q_;
    double rpc_;
    double work_mem_bytes_;
    bool pushdown_;
    std::vector<std::string> names_;
    std::vector<TableStat> tables_;
    std::vector<double> card_;
    std::vector<double> width_;
    std::set<int> interesting_;
};

void scale_costs(PlanNode& n, double factor) {
    n.est_cost *= factor;
    for (auto& c : n.children) scale_costs(c, factor);
}

bool better(const Sub& a, const Sub& b) {
    if (a.node.est_cost != b.node.est_cost) return a.node.est_cost < b.node.est_cost;
    return plan_signature(a.node) < plan_signature(b.node);
}

CteMode effective_cte_mode(const QuerySpec& q, CteMode requested) {
    if (q.cte_blocks <= 0) return CteMode::Default;
    if (requested != CteMode::Default) return requested;
    return q.cte_blocks == 1 ? CteMode::Inline : CteMode::Materialize;
}

int total_predicates(const QuerySpec& q) { return static_cast<int>(q.predicates.size()); }

// Dynamic programming over connected table subsets, keeping the cheapest
// plan per (subset, interesting order).
class Planner {
public:
    Planner(const Model& m, const QueryOptions& opts, std::vector<std::vector<const IndexDef*>> visible)
        : m_(m), opts_(opts), visible_(std::move(visible)), best_(std::size_t{1} << m.size()) {}

    std::optional<Sub> run() {
        int n = m_.size();
        for (int t = 0; t < n; ++t) base(t);
        for (std::uint32_t mask = 1; mask <= m_.full_mask(); ++mask) {
            if (std::popcount(mask) < 2) continue;
            for (std::uint32_t left = (mask - 1) & mask; left > 0; left = (left - 1) & mask) {
                std::uint32_t right = mask ^ left;
                if (best_[left].empty() || best_[right].empty()) continue;
                auto e = m_.edge(left, right);
                if (!e) continue;
                combine(mask, left, right, *e);
            }
        }
        return finish();
    }

private:
    bool allowed(std::string_view flag) const { return opts_.flag(flag); }

    AccessMethod access(int t) const {
        auto it = opts_.table_access.find(m_.name(t));
        return it == opts_.table_access.end() ? AccessMethod::Any : it->second;
    }

    std::optional<JoinType> directive(std::uint32_t mask) const {
        std::set<std::string> tables;
        for (int t = 0; t < m_.size(); ++t)
            if (mask & (1u << t)) tables.insert(m_.name(t));
        for (const auto& d : opts_.join_directives)
            if (d.tables == tables) return d.join_type;
        return std::nullopt;
    }

    void offer(std::uint32_t mask, Sub s) {
        auto& slot = best_[mask];
        auto it = slot.find(s.order);
        if (it == slot.end())
            slot.emplace(s.order, std::move(s));
        else if (better(s, it->second))
            it->second = std::move(s);
    }

    void base(int t) {
        AccessMethod am = access(t);
        std::uint32_t mask = 1u << t;
        if ((am == AccessMethod::Any || am == AccessMethod::Seq) && allowed(flags::kSeqScan))
            offer(mask, m_.seq_scan(t));
        for (const IndexDef* idx : visible_[t]) {
            if ((am == AccessMethod::Any || am == AccessMethod::Index) && allowed(flags::kIndexScan) &&
                m_.index_admissible(t, *idx))
                offer(mask, m_.index_scan(t, *idx));
            if ((am == AccessMethod::Any || am == AccessMethod::Bitmap) && allowed(flags::kBitmapScan) &&
                m_.pred_on_lead(t, *idx))
                offer(mask, m_.bitmap_scan(t, *idx));
        }
    }

    // An index scan on the inner relation keyed on the join column always
    // runs parameterised under a nested loop.
    static bool param_shaped(const Sub& r, const OrientedEdge& e, const std::vector<const IndexDef*>& vis) {
        if (std::popcount(r.mask) != 1 || r.node.op != Operator::IndexScan) return false;
        for (const IndexDef* idx : vis)
            if (idx->id() == *r.node.index) return idx->key_columns.front() == e.rcol;
        return false;
    }

    void combine(std::uint32_t mask, std::uint32_t left, std::uint32_t right, const OrientedEdge& e) {
        auto dir = directive(mask);
        auto permits = [&](JoinType j) { return !dir || *dir == j; };
        bool hash = allowed(flags::kHashJoin) && permits(JoinType::Hash);
        bool nl = allowed(flags::kNestLoop) && permits(JoinType::NestLoop);
        bool merge = allowed(flags::kMergeJoin) && permits(JoinType::Merge);
        bool material = allowed(flags::kMaterial);
        bool sort = allowed(flags::kSort);
        int lkey = m_.order_key(e.lt, e.lcol);
        int rkey = m_.order_key(e.rt, e.rcol);
        bool right_single = std::popcount(right) == 1;

        for (const auto& [lo, lp] : best_[left]) {
            for (const auto& [ro, rp] : best_[right]) {
                if (hash) offer(mask, m_.hash_join(lp, rp));
                if (nl && !(right_single && param_shaped(rp, e, visible_[e.rt]))) {
                    offer(mask, m_.nest_loop(lp, rp));
                    if (material) offer(mask, m_.nest_loop_material(lp, m_.materialize(rp)));
                }
                if (merge) {
                    if (lo != lkey && !sort) continue;
                    if (ro != rkey && !sort) continue;
                    Sub ls = lo == lkey ? lp : m_.sort(lp, lkey);
                    Sub rs = ro == rkey ? rp : m_.sort(rp, rkey);
                    offer(mask, m_.merge_join(ls, rs, m_.interesting(lkey)));
                }
            }
            if (nl && right_single) {
                AccessMethod am = access(e.rt);
                if ((am == AccessMethod::Any || am == AccessMethod::Index) && allowed(flags::kIndexScan)) {
                    for (const IndexDef* idx : visible_[e.rt]) {
                        if (idx->key_columns.front() != e.rcol) continue;
                        offer(mask, m_.nest_loop_param(lp, m_.param_index_scan(e.rt, *idx, lp.node.est_rows)));
                    }
                }
            }
        }
    }

    std::optional<Sub> finish() const {
        std::optional<Sub> best;
        const auto& q = m_.query();
        bool needs_order = q.order_by && !q.order_by->empty();
        for (const auto& [order, p] : best_[m_.full_mask()]) {
            Sub cand = p;
            if (needs_order && !m_.root_order_satisfied(order)) {
                if (!allowed(flags::kSort)) continue;
                cand = m_.sort(p, m_.root_order_key());
            }
            if (!best || better(cand, *best)) best = std::move(cand);
        }
        return best;
    }

    const Model& m_;
    const QueryOptions& opts_;
    std::vector<std::vector<const IndexDef*>> visible_;
    std::vector<std::map<int, Sub>> best_;
};

// Rebuilds a costed Sub from a plan shape using the same node formulas as
// the planner.
class Recoster {
public:
    Recoster(const Model& m, const Configuration& config) : m_(m), config_(config) {}

    Sub node(const PlanNode& n, int sort_key) const {
        switch (n.op) {
            case Operator::SeqScan: return m_.seq_scan(table_of(n));
            case Operator::IndexScan: return m_.index_scan(table_of(n), index_of(n));
            case Operator::BitmapScan: return m_.bitmap_scan(table_of(n), index_of(n));
            case Operator::Sort: {
                expect_children(n, 1);
                return m_.sort(node(n.children[0], kNoOrder), sort_key);
            }
            case Operator::Materialize: {
                expect_children(n, 1);
                return m_.materialize(node(n.children[0], kNoOrder));
            }
            case Operator::HashJoin:
            case Operator::NestLoopJoin:
            case Operator::MergeJoin: return join(n);
            default: throw InvalidInput("operator " + std::string(to_string(n.op)) + " cannot be re-costed here");
        }
    }

private:
    static void expect_children(const PlanNode& n, std::size_t k) {
        if (n.children.size() != k)
            throw InvalidInput(std::string(to_string(n.op)) + " node with wrong child count");
    }

    int table_of(const PlanNode& n) const {
        if (!n.relation) throw InvalidInput("scan node without relation");
        int t = m_.tid(*n.relation);
        if (t < 0) throw UnknownObject("relation " + *n.relation + " not in query");
        return t;
    }

    const IndexDef& index_of(const PlanNode& n) const {
        if (!n.index) throw InvalidInput("index scan without index");
        auto it = config_.indexes.find(*n.index);
        if (it == config_.indexes.end()) throw UnknownObject("index " + *n.index + " not in configuration");
        if (it->second.table != *n.relation)
            throw InvalidInput("index " + *n.index + " is not on " + *n.relation);
        return it->second;
    }

    std::uint32_t mask_of(const PlanNode& n) const {
        std::uint32_t mask = 0;
        for (const auto& r : relations_under(n)) {
            int t = m_.tid(r);
            if (t < 0) throw UnknownObject("relation " + r + " not in query");
            mask |= 1u << t;
        }
        return mask;
    }

    Sub join(const PlanNode& n) const {
        expect_children(n, 2);
        auto e = m_.edge(mask_of(n.children[0]), mask_of(n.children[1]));
        if (!e) throw InvalidInput("join without a connecting predicate");
        int lkey = m_.order_key(e->lt, e->lcol);
        int rkey = m_.order_key(e->rt, e->rcol);
        if (n.op == Operator::MergeJoin) {
            Sub l = node(n.children[0], lkey);
            Sub r = node(n.children[1], rkey);
            return m_.merge_join(l, r, m_.interesting(lkey));
        }
        Sub l = node(n.children[0], kNoOrder);
        if (n.op == Operator::HashJoin) return m_.hash_join(l, node(n.children[1], kNoOrder));
        const PlanNode& inner = n.children[1];
        if (inner.op == Operator::Materialize) return m_.nest_loop_material(l, node(inner, kNoOrder));
        if (inner.op == Operator::IndexScan) {
            const IndexDef& idx = index_of(inner);
            if (table_of(inner) == e->rt && idx.key_columns.front() == e->rcol)
                return m_.nest_loop_param(l, m_.param_index_scan(e->rt, idx, l.node.est_rows));
        }
        return m_.nest_loop(l, node(inner, kNoOrder));
    }

    const Model& m_;
    const Configuration& config_;
};

int count_restrictive_hints(const QueryOptions& o) {
    int n = 0;
    for (const auto& [_, on] : o.optimizer_flags)
        if (!on) ++n;
    for (const auto& [_, am] : o.table_access)
        if (am != AccessMethod::Any) ++n;
    n += static_cast<int>(o.join_directives.size());
    return n;
}

void check_index(const SchemaDef& schema, const IndexDef& idx) {
    const TableDef* t = schema.table(idx.table);
    if (!t) throw UnknownObject("index " + idx.id() + " on unknown table");
    for (const auto& c : idx.all_columns())
        if (!t->column(c)) throw UnknownObject("index " + idx.id() + " on unknown column " + c);
}

void check_options(const QuerySpec& q, const QueryOptions& o) {
    auto tables = q.tables();
    auto in_query = [&](const std::string& t) {
        return std::find(tables.begin(), tables.end(), t) != tables.end();
    };
    for (const auto& [t, _] : o.table_access)
        if (!in_query(t)) throw UnknownObject("access hint for table " + t + " not in query " + q.query_id);
    for (const auto& d : o.join_directives) {
        if (d.tables.size() < 2) throw UnknownObject("join directive with fewer than two tables");
        for (const auto& t : d.tables)
            if (!in_query(t)) throw UnknownObject("join directive table " + t + " not in query " + q.query_id);
    }
    for (const auto& [f, _] : o.optimizer_flags)
        if (!is_optimizer_flag(f)) throw UnknownObject("optimizer flag " + f);
}

}  // namespace

// ---------------------------------------------------------------------------
// SimEnv

SimEnv::SimEnv(SchemaDef schema, SimParams params) : schema_(std::move(schema)), params_(params) {
    schema_.validate();
}

SimEnv::SimEnv(const SimEnv& other) : schema_(other.schema_), params_(other.params_) {}

void SimEnv::validate_query(const QuerySpec& q) const {
    auto check_col = [&](const std::string& t, const std::string& c) {
        const TableDef* td = schema_.table(t);
        if (!td) throw UnknownObject("table " + t + " in query " + q.query_id);
        if (!td->column(c)) throw UnknownObject("column " + t + "." + c + " in query " + q.query_id);
    };
    for (const auto& r : q.referenced) check_col(r.table, r.column);
    for (const auto& p : q.predicates) {
        check_col(p.table, p.column);
        if (!(p.selectivity > 0.0 && p.selectivity <= 1.0))
            throw InvalidInput("selectivity outside (0,1] in query " + q.query_id);
    }
    for (const auto& e : q.joins) {
        check_col(e.left.table, e.left.column);
        check_col(e.right.table, e.right.column);
        if (e.left.table == e.right.table) throw InvalidInput("self join edge in query " + q.query_id);
    }
    if (q.order_by)
        for (const auto& o : *q.order_by) check_col(o.table, o.column);
    if (q.cte_blocks < 0) throw InvalidInput("negative cte_blocks in query " + q.query_id);
    auto tables = q.tables();
    if (tables.empty()) throw InvalidInput("query " + q.query_id + " references no table");
    if (tables.size() > static_cast<std::size_t>(kMaxTables))
        throw InvalidInput("query " + q.query_id + " references more than 10 tables");
    // Join graph must be connected.
    std::set<std::string> seen{tables.front()};
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& e : q.joins) {
            bool l = seen.count(e.left.table), r = seen.count(e.right.table);
            if (l != r) {
                seen.insert(e.left.table);
                seen.insert(e.right.table);
                grew = true;
            }
        }
    }
    if (seen.size() != tables.size()) throw InvalidInput("join graph of query " + q.query_id + " is disconnected");
}

int SimEnv::effective_workers(const Configuration& config) const {
    double per_gather = knob_or_default(config, knobs::kWorkersPerGather);
    double cap = knob_or_default(config, knobs::kMaxWorkers);
    return static_cast<int>(std::max(0.0, std::min(per_gather, cap)));
}

PlanTree SimEnv::plan(const QuerySpec& q, const Configuration& config, const std::set<std::string>& hidden) const {
    validate_query(q);
    for (const auto& [_, idx] : config.indexes) check_index(schema_, idx);
    QueryOptions opts = config.options_for(q.query_id);
    check_options(q, opts);

    CteMode mode = effective_cte_mode(q, opts.cte_mode);
    double rpc = knob_or_default(config, knobs::kRandomPageCost);
    double wm = knob_or_default(config, knobs::kWorkMem);
    Model body(schema_, q, rpc, wm, mode != CteMode::Materialize);

    std::vector<std::vector<const IndexDef*>> visible(body.size());
    for (const auto& [id, idx] : config.indexes) {
        if (hidden.count(id) || opts.hidden_indexes.count(id)) continue;
        int t = body.tid(idx.table);
        if (t >= 0) visible[t].push_back(&idx);
    }

    // Materialised CTEs produce no order, so the planner runs without a root
    // order requirement and the final Sort (if any) goes above the CTEScan.
    std::optional<Sub> best;
    if (mode == CteMode::Materialize) {
        QuerySpec unordered = q;
        unordered.order_by.reset();
        Model m(schema_, unordered, rpc, wm, false);
        Planner planner(m, opts, visible);
        auto p = planner.run();
        if (p) {
            Model pushed(schema_, q, rpc, wm, true);
            Sub cte = m.cte_scan(*p, pushed.card(pushed.full_mask()), total_predicates(q));
            if (q.order_by && !q.order_by->empty()) {
                if (opts.flag(flags::kSort)) best = pushed.sort(cte, pushed.root_order_key());
            } else {
                best = std::move(cte);
            }
        }
    } else {
        Planner planner(body, opts, visible);
        best = planner.run();
    }
    if (!best) throw UnsatisfiableHints("no feasible plan for query " + q.query_id + " under its hints");

    PlanTree out{std::move(best->node)};
    if (mode == CteMode::Inline) scale_costs(out.root, static_cast<double>(q.cte_blocks));
    int restrictive = count_restrictive_hints(opts);
    if (params_.hint_distortion > 0 && restrictive > 0)
        scale_costs(out.root, 1.0 + params_.hint_distortion * restrictive);
    return out;
}

namespace {

PlanTree recost_shape(const SchemaDef& schema, const QuerySpec& q, const Configuration& config,
                      const PlanTree& shape, double rpc) {
    double wm = knob_or_default(config, knobs::kWorkMem);
    Model pushed(schema, q, rpc, wm, true);
    const PlanNode* top = &shape.root;
    bool root_sort = top->op == Operator::Sort;
    const PlanNode* below = root_sort ? &top->children.at(0) : top;

    Sub result;
    if (below->op == Operator::CTEScan) {
        QuerySpec unordered = q;
        unordered.order_by.reset();
        Model m(schema, unordered, rpc, wm, false);
        Recoster rc(m, config);
        if (below->children.size() != 1) throw InvalidInput("CTEScan with wrong child count");
        Sub body = rc.node(below->children[0], kNoOrder);
        result = m.cte_scan(body, pushed.card(pushed.full_mask()), total_predicates(q));
        if (root_sort) result = pushed.sort(result, pushed.root_order_key());
    } else {
        Recoster rc(pushed, config);
        if (root_sort) {
            Sub inner = rc.node(*below, kNoOrder);
            result = pushed.sort(inner, pushed.root_order_key());
        } else {
            result = rc.node(*top, kNoOrder);
        }
        if (q.cte_blocks > 0) scale_costs(result.node, static_cast<double>(q.cte_blocks));
    }
    return PlanTree{std::move(result.node)};
}

}  // namespace

PlanTree SimEnv::cost_plan(const QuerySpec& q, const Configuration& config, const PlanTree& shape) const {
    validate_query(q);
    return recost_shape(schema_, q, config, shape, knob_or_default(config, knobs::kRandomPageCost));
}

double SimEnv::runtime_of(const QuerySpec& q, const Configuration& config, const PlanTree& shape) const {
    validate_query(q);
    PlanTree truth = recost_shape(schema_, q, config, shape, params_.true_random_page_cost);
    int workers = effective_workers(config);
    double total = 0.0;
    std::function<void(const PlanNode&)> visit = [&](const PlanNode& n) {
        double self = std::max(0.0, n.self_cost());
        double t = self * params_.seconds_per_cost_unit * params_.latency[static_cast<std::size_t>(n.op)];
        bool parallel_op = n.op == Operator::SeqScan || n.op == Operator::HashJoin || n.op == Operator::Sort;
        if (parallel_op && workers > 0 && self >= params_.parallel_min_cost)
            t = t / (1.0 + workers) + workers * params_.parallel_setup_seconds;
        total += t;
        for (const auto& c : n.children) visit(c);
    };
    visit(truth.root);
    return total;
}

ExecutionResult SimEnv::execute_plan(const QuerySpec& q, const Configuration& config, const PlanTree& shape,
                                     std::optional<double> timeout) const {
    ++executions_;
    ExecutionResult r;
    r.plan = shape;
    r.indexes_used = shape.indexes_used();
    r.runtime = runtime_of(q, config, shape);
    if (timeout && (r.runtime > *timeout || *timeout <= 0.0)) {
        r.timed_out = true;
        r.runtime = *timeout;
    }
    return r;
}

ExecutionResult SimEnv::execute(const QuerySpec& q, const Configuration& config, std::optional<double> timeout) const {
    return execute_plan(q, config, plan(q, config), timeout);
}

WhatIfResult SimEnv::what_if(const QuerySpec& q, const Configuration& config,
                             const std::vector<IndexDef>& hypothetical) const {
    Configuration extended = config;
    for (const auto& idx : hypothetical) {
        validate_index(idx);
        check_index(schema_, idx);
        extended.add_index(idx);
    }
    WhatIfResult out;
    out.plan = plan(q, extended);
    out.indexes_used = out.plan.indexes_used();
    return out;
}

}  // namespace booster
