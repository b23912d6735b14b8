#include "booster/schematic_embed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <thread>

#include "booster/errors.hpp"
#include "booster/hash.hpp"
#include "http_json.hpp"

namespace booster {

std::string to_string(SchematicType t) {
    std::string s = t.form == QueryForm::SQL ? "sql" : t.form == QueryForm::Template ? "template" : "plan";
    if (t.anonymized) s += "-anon";
    return s;
}

std::optional<SchematicType> parse_schematic_type(std::string_view s) {
    for (auto t : kAllSchematicTypes)
        if (to_string(t) == s) return t;
    return std::nullopt;
}

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string fmt_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Positional renaming of tables and columns for one schematic.
class Renamer {
public:
    Renamer(const QuerySpec& q, const PlanTree& plan, bool active) : active_(active) {
        for (const auto& t : q.tables()) table(t);
        auto note = [&](const ColumnRef& c) { column(c.table, c.column); };
        for (const auto& r : q.referenced) note(r);
        for (const auto& p : q.predicates) note({p.table, p.column});
        for (const auto& j : q.joins) {
            note(j.left);
            note(j.right);
        }
        if (q.order_by)
            for (const auto& o : *q.order_by) note(o);
        std::function<void(const PlanNode&)> walk = [&](const PlanNode& n) {
            if (n.index) {
                try {
                    IndexDef d = parse_index_id(*n.index);
                    table(d.table);
                    for (const auto& c : d.all_columns()) column(d.table, c);
                } catch (const Error&) {
                }
            }
            for (const auto& c : n.children) walk(c);
        };
        walk(plan.root);
    }

    std::string table(const std::string& t) {
        if (!active_) return t;
        auto it = tables_.find(t);
        if (it != tables_.end()) return it->second;
        std::string tok = "T" + std::to_string(tables_.size() + 1);
        tables_.emplace(t, tok);
        return tok;
    }

    std::string column(const std::string& t, const std::string& c) {
        if (!active_) return t + "." + c;
        std::string tt = table(t);
        auto key = std::make_pair(t, c);
        auto it = columns_.find(key);
        if (it != columns_.end()) return it->second;
        int n = ++column_count_[t];
        std::string tok = tt + ".C" + std::to_string(n);
        columns_.emplace(key, tok);
        if (!bare_.count(c)) bare_.emplace(c, tok);
        return tok;
    }

    std::string column_suffix(const std::string& t, const std::string& c) {
        std::string full = column(t, c);
        return full.substr(full.find('.') + 1);
    }

    std::string index(const std::string& id) {
        if (!active_) return id;
        try {
            IndexDef d = parse_index_id(id);
            IndexDef out;
            out.table = table(d.table);
            for (const auto& c : d.key_columns) out.key_columns.push_back(column_suffix(d.table, c));
            for (const auto& c : d.include_columns) out.include_columns.push_back(column_suffix(d.table, c));
            out.fillfactor = d.fillfactor;
            return canonical_index_id(out);
        } catch (const Error&) {
            return "I?";
        }
    }

    // Rewrites identifiers in free text. Dotted names resolve table first;
    // bare names resolve as table, then column. Unknown words pass through.
    std::string text(const std::string& s) {
        if (!active_) return s;
        std::string out;
        std::size_t i = 0;
        while (i < s.size()) {
            char ch = s[i];
            if (ch == '\'') {
                std::size_t j = i + 1;
                while (j < s.size()) {
                    if (s[j] == '\'') {
                        if (j + 1 < s.size() && s[j + 1] == '\'') {
                            j += 2;
                            continue;
                        }
                        break;
                    }
                    ++j;
                }
                out.append(s, i, std::min(j + 1, s.size()) - i);
                i = j + 1;
                continue;
            }
            if (!ident_start(ch) || (i > 0 && ident_char(s[i - 1]))) {
                out += ch;
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < s.size() && ident_char(s[j])) ++j;
            std::string first = s.substr(i, j - i);
            if (j + 1 < s.size() && s[j] == '.' && ident_start(s[j + 1])) {
                std::size_t k = j + 1;
                while (k < s.size() && ident_char(s[k])) ++k;
                std::string second = s.substr(j + 1, k - j - 1);
                auto t = tables_.find(first);
                auto cc = t != tables_.end() ? columns_.find({first, second}) : columns_.end();
                if (cc != columns_.end()) {
                    out += cc->second;
                } else {
                    // An alias qualifier: the column keeps only its own token.
                    out += rename_word(first);
                    out += '.';
                    std::string col = rename_column_word(second);
                    out += col == second ? col : col.substr(col.find('.') + 1);
                }
                i = k;
                continue;
            }
            out += rename_word(first);
            i = j;
        }
        return out;
    }

private:
    std::string rename_word(const std::string& w) {
        auto t = tables_.find(w);
        if (t != tables_.end()) return t->second;
        return rename_column_word(w);
    }
    std::string rename_column_word(const std::string& w) {
        auto c = bare_.find(w);
        return c != bare_.end() ? c->second : w;
    }

    bool active_;
    std::map<std::string, std::string> tables_;
    std::map<std::pair<std::string, std::string>, std::string> columns_;
    std::map<std::string, std::string> bare_;
    std::map<std::string, int> column_count_;
};

std::vector<std::string> indexes_in_order(const PlanNode& root) {
    std::vector<std::string> out;
    std::function<void(const PlanNode&)> walk = [&](const PlanNode& n) {
        if (n.index && std::find(out.begin(), out.end(), *n.index) == out.end()) out.push_back(*n.index);
        for (const auto& c : n.children) walk(c);
    };
    walk(root);
    return out;
}

std::vector<ColumnRef> columns_in_order(const QuerySpec& q) {
    std::vector<ColumnRef> out;
    auto add = [&](const ColumnRef& c) {
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    };
    for (const auto& r : q.referenced) add(r);
    for (const auto& p : q.predicates) add({p.table, p.column});
    for (const auto& j : q.joins) {
        add(j.left);
        add(j.right);
    }
    if (q.order_by)
        for (const auto& o : *q.order_by) add(o);
    return out;
}

void render_plan(const PlanNode& n, int depth, Renamer& rn, std::string& out) {
    out.append(static_cast<std::size_t>(depth) * 2, ' ');
    out += to_string(n.op);
    if (n.relation) out += " on " + rn.table(*n.relation);
    if (n.index) out += " using " + rn.index(*n.index);
    out += '\n';
    for (const auto& c : n.children) render_plan(c, depth + 1, rn, out);
}

}  // namespace

std::string template_text(const std::string& sql) {
    std::string out;
    std::size_t i = 0;
    while (i < sql.size()) {
        char c = sql[i];
        if (c == '\'') {
            std::size_t j = i + 1;
            while (j < sql.size()) {
                if (sql[j] == '\'') {
                    if (j + 1 < sql.size() && sql[j + 1] == '\'') {
                        j += 2;
                        continue;
                    }
                    break;
                }
                ++j;
            }
            out += '?';
            i = j + 1;
            continue;
        }
        bool starts_number = std::isdigit(static_cast<unsigned char>(c)) ||
                             (c == '.' && i + 1 < sql.size() && std::isdigit(static_cast<unsigned char>(sql[i + 1])));
        if (starts_number && (i == 0 || !ident_char(sql[i - 1]))) {
            std::size_t j = i;
            while (j < sql.size() && (std::isdigit(static_cast<unsigned char>(sql[j])) || sql[j] == '.')) ++j;
            if (j < sql.size() && (sql[j] == 'e' || sql[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < sql.size() && (sql[k] == '+' || sql[k] == '-')) ++k;
                if (k < sql.size() && std::isdigit(static_cast<unsigned char>(sql[k]))) {
                    j = k;
                    while (j < sql.size() && std::isdigit(static_cast<unsigned char>(sql[j]))) ++j;
                }
            }
            if (j < sql.size() && ident_char(sql[j])) {  // e.g. 3d: part of a word
                out.append(sql, i, j - i);
            } else {
                out += '?';
            }
            i = j;
            continue;
        }
        out += c;
        ++i;
    }
    return out;
}

std::string query_sql(const QuerySpec& q) {
    if (!q.sql_text.empty()) return q.sql_text;
    std::string s = "SELECT ";
    for (std::size_t i = 0; i < q.referenced.size(); ++i) {
        if (i) s += ", ";
        s += q.referenced[i].table + "." + q.referenced[i].column;
    }
    if (q.referenced.empty()) s += "*";
    s += " FROM ";
    auto tables = q.tables();
    for (std::size_t i = 0; i < tables.size(); ++i) {
        if (i) s += ", ";
        s += tables[i];
    }
    std::vector<std::string> conds;
    for (const auto& j : q.joins)
        conds.push_back(j.left.table + "." + j.left.column + " = " + j.right.table + "." + j.right.column);
    for (const auto& p : q.predicates) conds.push_back(p.table + "." + p.column + " <= " + fmt_number(p.selectivity));
    for (std::size_t i = 0; i < conds.size(); ++i) s += (i ? " AND " : " WHERE ") + conds[i];
    if (q.order_by && !q.order_by->empty()) {
        s += " ORDER BY ";
        for (std::size_t i = 0; i < q.order_by->size(); ++i) {
            if (i) s += ", ";
            s += (*q.order_by)[i].table + "." + (*q.order_by)[i].column;
        }
    }
    return s;
}

std::string plan_text(const PlanNode& root) {
    Renamer rn(QuerySpec{}, PlanTree{root}, false);
    std::string out;
    render_plan(root, 0, rn, out);
    return out;
}

Schematic build_schematic(SchematicType stype, const QuerySpec& q, const SchemaDef& schema, const PlanTree& plan) {
    Renamer rn(q, plan, stype.anonymized);
    std::string text = "-- schema\n";
    auto cols = columns_in_order(q);
    for (const auto& t : q.tables()) {
        const TableDef* td = schema.table(t);
        text += "relation " + rn.table(t);
        if (td) text += " rows=" + std::to_string(td->row_count);
        text += '\n';
        for (const auto& c : cols) {
            if (c.table != t) continue;
            text += "  column " + rn.column(t, c.column);
            if (td)
                if (const ColumnDef* cd = td->column(c.column))
                    text += " distinct=" + std::to_string(cd->distinct_values) + " width=" + std::to_string(cd->width_bytes);
            text += '\n';
        }
    }
    for (const auto& idx : indexes_in_order(plan.root)) text += "index " + rn.index(idx) + '\n';
    text += "-- query\n";
    switch (stype.form) {
        case QueryForm::SQL: text += rn.text(query_sql(q)) + '\n'; break;
        case QueryForm::Template: text += rn.text(template_text(query_sql(q))) + '\n'; break;
        case QueryForm::Plan: render_plan(plan.root, 0, rn, text); break;
    }
    return {stype, text};
}

std::vector<Schematic> build_schematics(const QuerySpec& q, const SchemaDef& schema, const PlanTree& plan) {
    std::vector<Schematic> out;
    for (auto t : kAllSchematicTypes) out.push_back(build_schematic(t, q, schema, plan));
    return out;
}

// ---------------------------------------------------------------------------
// Embedders

void normalize_l2(std::vector<double>& v) {
    double sq = 0;
    for (double x : v) sq += x * x;
    if (sq <= 0 || !std::isfinite(sq)) {
        std::fill(v.begin(), v.end(), 0.0);
        if (!v.empty()) v[0] = 1.0;
        return;
    }
    double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dim_(dimension) {
    if (dim_ == 0) throw InvalidInput("embedding dimension must be positive");
}

std::string HashingEmbedder::id() const { return "hash-fnv1a-d" + std::to_string(dim_); }

std::vector<double> HashingEmbedder::embed_text(const std::string& text) const {
    std::vector<double> v(dim_, 0.0);
    std::string tok;
    auto flush = [&] {
        if (tok.empty()) return;
        std::uint64_t h = fnv1a64(tok);
        std::size_t bucket = static_cast<std::size_t>(h % dim_);
        v[bucket] += (h >> 63) ? -1.0 : 1.0;
        tok.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            tok += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    return v;
}

std::vector<std::vector<double>> HashingEmbedder::embed_batch(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_text(t));
    return out;
}

void to_json(json& j, const EmbedderConfig& c) {
    j = json{{"provider", c.provider},   {"endpoint", c.endpoint},   {"model", c.model},
             {"dimension", c.dimension}, {"api_key_env", c.api_key_env}, {"max_chars", c.max_chars},
             {"attempts", c.attempts},   {"backoff_ms", c.backoff.count()}};
}

void from_json(const json& j, EmbedderConfig& c) {
    c = EmbedderConfig{};
    c.provider = j.value("provider", c.provider);
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.dimension = j.value("dimension", c.dimension);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.max_chars = j.value("max_chars", c.max_chars);
    c.attempts = j.value("attempts", c.attempts);
    c.backoff = std::chrono::milliseconds(j.value("backoff_ms", static_cast<long>(c.backoff.count())));
}

HttpEmbedder::HttpEmbedder(EmbedderConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw InvalidInput("http embedder needs an endpoint");
    if (config_.attempts < 1) config_.attempts = 1;
}

std::string HttpEmbedder::id() const { return "http:" + config_.model + ":d" + std::to_string(config_.dimension); }

std::vector<std::vector<double>> HttpEmbedder::embed_batch(const std::vector<std::string>& texts) {
    std::map<std::string, std::string> headers;
    if (!config_.api_key_env.empty())
        if (const char* key = std::getenv(config_.api_key_env.c_str())) headers["Authorization"] = std::string("Bearer ") + key;
    json body{{"model", config_.model}, {"input", texts}};

    std::string last_error;
    auto delay = config_.backoff;
    for (int attempt = 0; attempt < config_.attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
        try {
            json reply = detail::post_json(config_.endpoint, body, headers, std::chrono::seconds(30));
            const json& data = reply.at("data");
            std::vector<std::vector<double>> out(texts.size());
            for (std::size_t i = 0; i < data.size(); ++i) {
                std::size_t slot = data[i].value("index", i);
                if (slot >= out.size()) throw InvalidInput("embedding index out of range");
                out[slot] = data[i].at("embedding").get<std::vector<double>>();
                if (out[slot].size() != config_.dimension)
                    throw InvalidInput("embedding dimension " + std::to_string(out[slot].size()) + " != " +
                                       std::to_string(config_.dimension));
            }
            for (const auto& v : out)
                if (v.empty()) throw InvalidInput("reply is missing embeddings");
            return out;
        } catch (const std::exception& e) {
            last_error = e.what();
        }
    }
    throw EmbedderUnavailable(config_.endpoint + " after " + std::to_string(config_.attempts) +
                              " attempts: " + last_error);
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
    if (config.provider == "deterministic" || config.provider == "hash") return std::make_unique<HashingEmbedder>(config.dimension);
    if (config.provider == "http") return std::make_unique<HttpEmbedder>(config);
    throw InvalidInput("unknown embedder provider '" + config.provider + "'");
}

std::vector<IdentityVector> embed_all(const std::vector<Schematic>& schematics, Embedder& embedder,
                                      std::size_t max_chars) {
    std::vector<std::string> texts;
    texts.reserve(schematics.size());
    for (const auto& s : schematics) texts.push_back(s.text.size() > max_chars ? s.text.substr(0, max_chars) : s.text);
    auto raw = embedder.embed_batch(texts);
    if (raw.size() != schematics.size()) throw EmbedderUnavailable("embedder returned a short batch");
    std::vector<IdentityVector> out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].size() != embedder.dimension())
            throw EmbedderUnavailable("embedder returned dimension " + std::to_string(raw[i].size()));
        normalize_l2(raw[i]);
        out.push_back({schematics[i].stype, std::move(raw[i]), embedder.id()});
    }
    return out;
}

IdentityVector embed(const Schematic& schematic, Embedder& embedder, std::size_t max_chars) {
    return embed_all({schematic}, embedder, max_chars).front();
}

}  // namespace booster
