#include "booster/vector_store.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>

#include "booster/errors.hpp"
#include "booster/knn_kernel.hpp"

namespace booster {

namespace {

constexpr const char* kStoreFormat = "booster-store/1";

std::string segment_name(const SegmentKey& k) { return to_string(k.stype) + "@" + k.embedder_id; }

}  // namespace

void to_json(json& j, const StoreStats& s) {
    j = json{{"qconfigs", s.qconfigs},
             {"per_query", s.per_query},
             {"segments", s.segments},
             {"links", s.links},
             {"longest_chain", s.longest_chain}};
}

VectorStore::VectorStore(std::string embedder_id, std::vector<SchematicType> types)
    : embedder_id_(std::move(embedder_id)), types_(std::move(types)) {
    if (types_.empty()) throw InvalidInput("vector store needs at least one schematic type");
    for (auto t : types_) segments_[{t, embedder_id_}];
}

VectorStore::VectorStore(const VectorStore& other) {
    std::shared_lock lock(other.mutex_);
    embedder_id_ = other.embedder_id_;
    types_ = other.types_;
    qconfigs_ = other.qconfigs_;
    segments_ = other.segments_;
}

void VectorStore::insert(QConfig qc) {
    std::unique_lock lock(mutex_);
    if (qconfigs_.count(qc.qconfig_id)) throw DuplicateId("qconfig " + qc.qconfig_id);
    for (auto t : types_) {
        auto it = qc.identity_vectors.find(t);
        if (it == qc.identity_vectors.end())
            throw InvalidInput("qconfig " + qc.qconfig_id + " lacks a " + to_string(t) + " vector");
        const Segment& seg = segments_.at({t, embedder_id_});
        if (seg.dim != 0 && it->second.size() != seg.dim)
            throw InvalidInput("qconfig " + qc.qconfig_id + " has a " + std::to_string(it->second.size()) +
                               "-d vector; segment holds " + std::to_string(seg.dim));
        if (it->second.empty()) throw InvalidInput("qconfig " + qc.qconfig_id + " has an empty vector");
        for (double x : it->second)
            if (!std::isfinite(x)) throw InvalidInput("qconfig " + qc.qconfig_id + " has a non-finite vector entry");
    }
    for (auto t : types_) {
        Segment& seg = segments_.at({t, embedder_id_});
        const auto& v = qc.identity_vectors.at(t);
        seg.dim = v.size();
        seg.ids.push_back(qc.qconfig_id);
        seg.data.insert(seg.data.end(), v.begin(), v.end());
    }
    std::string id = qc.qconfig_id;
    qconfigs_.emplace(std::move(id), std::move(qc));
}

void VectorStore::clear() {
    std::unique_lock lock(mutex_);
    qconfigs_.clear();
    for (auto& [_, seg] : segments_) seg = Segment{};
}

bool VectorStore::contains(const std::string& id) const {
    std::shared_lock lock(mutex_);
    return qconfigs_.count(id) > 0;
}

QConfig VectorStore::get(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = qconfigs_.find(id);
    if (it == qconfigs_.end()) throw UnknownId("qconfig " + id);
    return it->second;
}

std::vector<std::string> VectorStore::ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : qconfigs_) out.push_back(id);
    return out;
}

std::size_t VectorStore::size() const {
    std::shared_lock lock(mutex_);
    return qconfigs_.size();
}

std::size_t VectorStore::segment_size(const SegmentKey& key) const {
    std::shared_lock lock(mutex_);
    auto it = segments_.find(key);
    return it == segments_.end() ? 0 : it->second.ids.size();
}

std::vector<Neighbor> VectorStore::knn(const IdentityVector& query, std::size_t n, KnnKernel kernel) const {
    std::shared_lock lock(mutex_);
    return knn_locked(query, n, kernel);
}

std::vector<Neighbor> VectorStore::knn_locked(const IdentityVector& query, std::size_t n, KnnKernel kernel) const {
    if (n == 0) throw InvalidInput("knn needs n >= 1");
    auto it = segments_.find({query.stype, query.embedder_id});
    if (it == segments_.end() || it->second.ids.empty())
        throw EmptySegment(to_string(query.stype) + "@" + query.embedder_id);
    const Segment& seg = it->second;
    if (query.vector.size() != seg.dim)
        throw InvalidInput("query vector has dimension " + std::to_string(query.vector.size()) + ", segment " +
                           std::to_string(seg.dim));
    std::vector<double> sq(seg.ids.size());
    if (kernel == KnnKernel::Parallel)
        kernel::squared_distances_parallel(seg.data.data(), seg.ids.size(), seg.dim, query.vector.data(), sq.data());
    else
        kernel::squared_distances_serial(seg.data.data(), seg.ids.size(), seg.dim, query.vector.data(), sq.data());
    std::vector<Neighbor> out;
    for (const auto& h : kernel::top_k(sq, seg.ids, n)) out.push_back({seg.ids[h.row], h.distance});
    return out;
}

std::string VectorStore::resolve_downstream(const std::string& id) const {
    std::shared_lock lock(mutex_);
    return resolve_locked(id);
}

std::string VectorStore::resolve_locked(const std::string& id) const {
    auto start = qconfigs_.find(id);
    if (start == qconfigs_.end()) throw UnknownId("qconfig " + id);
    const std::string& qid = start->second.query.query_id;

    // Breadth-first over links to QConfigs of the same query; depth is the
    // number of hops from the start.
    std::map<std::string, std::size_t> depth{{id, 0}};
    std::deque<std::string> frontier{id};
    while (!frontier.empty()) {
        std::string cur = frontier.front();
        frontier.pop_front();
        for (const auto& next : qconfigs_.at(cur).links) {
            auto it = qconfigs_.find(next);
            if (it == qconfigs_.end() || it->second.query.query_id != qid || depth.count(next)) continue;
            depth[next] = depth[cur] + 1;
            frontier.push_back(next);
        }
    }
    const std::string* best = nullptr;
    for (const auto& [cand, d] : depth) {
        if (!best) {
            best = &cand;
            continue;
        }
        double rc = qconfigs_.at(cand).runtime, rb = qconfigs_.at(*best).runtime;
        std::size_t db = depth.at(*best);
        if (rc < rb || (rc == rb && (d > db || (d == db && cand < *best)))) best = &cand;
    }
    return *best;
}

std::vector<std::pair<std::string, double>> VectorStore::fused_ranking(const std::vector<IdentityVector>& query) const {
    std::shared_lock lock(mutex_);
    std::map<std::string, double> score;
    bool any = false;
    for (const auto& qv : query) {
        auto it = segments_.find({qv.stype, qv.embedder_id});
        if (it == segments_.end() || it->second.ids.empty()) continue;
        any = true;
        auto ranking = knn_locked(qv, it->second.ids.size(), KnnKernel::Parallel);
        for (std::size_t r = 0; r < ranking.size(); ++r)
            score[ranking[r].qconfig_id] += 1.0 / (kRrfConstant + static_cast<double>(r + 1));
    }
    if (!any) throw EmptySegment("no non-empty segment matches the query vectors");
    std::vector<std::pair<std::string, double>> out(score.begin(), score.end());
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

std::vector<QConfig> VectorStore::retrieve_references(const std::vector<IdentityVector>& query, std::size_t k) const {
    if (k == 0) throw InvalidInput("retrieve_references needs k >= 1");
    auto fused = fused_ranking(query);
    std::shared_lock lock(mutex_);
    std::vector<QConfig> out;
    std::set<std::string> seen;
    for (const auto& [id, _] : fused) {
        std::string resolved = resolve_locked(id);
        if (!seen.insert(resolved).second) continue;
        out.push_back(qconfigs_.at(resolved));
        if (out.size() == k) break;
    }
    return out;
}

StoreStats VectorStore::stats() const {
    std::shared_lock lock(mutex_);
    StoreStats s;
    s.qconfigs = qconfigs_.size();
    for (const auto& [id, qc] : qconfigs_) {
        ++s.per_query[qc.query.query_id];
        s.links += qc.links.size();
    }
    for (const auto& [key, seg] : segments_) s.segments[segment_name(key)] = seg.ids.size();
    // Longest chain: memoised longest path over the (acyclic) link graph.
    std::map<std::string, std::size_t> memo;
    std::set<std::string> active;
    std::function<std::size_t(const std::string&)> longest = [&](const std::string& id) -> std::size_t {
        if (auto it = memo.find(id); it != memo.end()) return it->second;
        if (!active.insert(id).second) return 0;
        std::size_t best = 0;
        for (const auto& next : qconfigs_.at(id).links)
            if (qconfigs_.count(next)) best = std::max(best, longest(next));
        active.erase(id);
        return memo[id] = best + 1;
    };
    for (const auto& [id, _] : qconfigs_) s.longest_chain = std::max(s.longest_chain, longest(id));
    return s;
}

void VectorStore::save(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    json types = json::array();
    for (auto t : types_) types.push_back(to_string(t));
    json qcs = json::array();
    for (const auto& [_, qc] : qconfigs_) qcs.push_back(qc);
    json doc{{"format", kStoreFormat}, {"embedder_id", embedder_id_}, {"types", types}, {"qconfigs", qcs}};
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw InvalidInput("cannot write store file " + tmp.string());
        out << doc.dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
}

VectorStore VectorStore::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open store file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidInput("store file " + path.string() + ": " + e.what());
    }
    if (doc.value("format", std::string{}) != kStoreFormat)
        throw InvalidInput("store file " + path.string() + " has an unknown format");
    std::vector<SchematicType> types;
    for (const auto& t : doc.at("types")) {
        auto st = parse_schematic_type(t.get<std::string>());
        if (!st) throw InvalidInput("unknown schematic type " + t.dump());
        types.push_back(*st);
    }
    VectorStore store(doc.at("embedder_id").get<std::string>(), types);
    for (const auto& qc : doc.at("qconfigs")) store.insert(qc.get<QConfig>());
    return store;
}

void embed_and_insert(VectorStore& store, std::vector<QConfig> qconfigs, const SchemaDef& schema, Embedder& embedder) {
    for (auto& qc : qconfigs) {
        std::vector<Schematic> schematics;
        for (auto t : store.types()) schematics.push_back(build_schematic(t, qc.query, schema, qc.plan));
        for (const auto& v : embed_all(schematics, embedder)) qc.identity_vectors[v.stype] = v.vector;
        store.insert(std::move(qc));
    }
}

}  // namespace booster
