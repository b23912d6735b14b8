#pragma once

// In-memory QConfig store with exact, schematic-typed nearest-neighbour
// search and downstream-link resolution. Readers share, writers exclude.

#include <filesystem>
#include <map>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "booster/artifact_repo.hpp"
#include "booster/schematic_embed.hpp"

namespace booster {

struct Neighbor {
    std::string qconfig_id;
    double distance = 0;
};

struct SegmentKey {
    SchematicType stype;
    std::string embedder_id;
    friend auto operator<=>(const SegmentKey&, const SegmentKey&) = default;
};

struct StoreStats {
    std::size_t qconfigs = 0;
    std::map<std::string, std::size_t> per_query;
    std::map<std::string, std::size_t> segments;  // "<stype>@<embedder>" -> entries
    std::size_t links = 0;
    std::size_t longest_chain = 0;  // nodes on the longest link path
};

void to_json(json& j, const StoreStats& s);

enum class KnnKernel { Serial, Parallel };

class VectorStore {
public:
    // `embedder_id` tags the vectors of inserted QConfigs; `types` lists the
    // schematic types every QConfig must carry.
    explicit VectorStore(std::string embedder_id = "hash-fnv1a-d256",
                         std::vector<SchematicType> types = {kAllSchematicTypes.begin(), kAllSchematicTypes.end()});
    VectorStore(const VectorStore& other);
    VectorStore& operator=(const VectorStore&) = delete;

    const std::string& embedder_id() const { return embedder_id_; }
    const std::vector<SchematicType>& types() const { return types_; }

    // Throws DuplicateId, InvalidInput (missing type, wrong dimension).
    void insert(QConfig qc);
    // Removes every QConfig; used by re-ingestion with --replace.
    void clear();

    bool contains(const std::string& id) const;
    QConfig get(const std::string& id) const;  // UnknownId
    std::vector<std::string> ids() const;
    std::size_t size() const;
    std::size_t segment_size(const SegmentKey& key) const;

    // Exact search within the vector's segment. Throws EmptySegment.
    std::vector<Neighbor> knn(const IdentityVector& query, std::size_t n,
                              KnnKernel kernel = KnnKernel::Parallel) const;

    // Minimum-runtime QConfig reachable through links (including itself);
    // ties by link depth (deeper wins), then id. Throws UnknownId.
    std::string resolve_downstream(const std::string& id) const;

    // Reciprocal-rank fusion across schematic types, resolved downstream and
    // deduplicated. Throws EmptySegment when every queried segment is empty.
    std::vector<QConfig> retrieve_references(const std::vector<IdentityVector>& query, std::size_t k = 2) const;
    std::vector<std::pair<std::string, double>> fused_ranking(const std::vector<IdentityVector>& query) const;

    StoreStats stats() const;

    void save(const std::filesystem::path& path) const;
    static VectorStore load(const std::filesystem::path& path);

    static constexpr double kRrfConstant = 60.0;

private:
    struct Segment {
        std::size_t dim = 0;
        std::vector<std::string> ids;
        std::vector<double> data;  // row-major, ids.size() x dim
    };

    std::vector<Neighbor> knn_locked(const IdentityVector& query, std::size_t n, KnnKernel kernel) const;
    std::string resolve_locked(const std::string& id) const;

    std::string embedder_id_;
    std::vector<SchematicType> types_;
    std::map<std::string, QConfig> qconfigs_;
    std::map<SegmentKey, Segment> segments_;
    mutable std::shared_mutex mutex_;
};

// Computes each QConfig's identity vectors for the store's schematic types
// and inserts it. Throws DuplicateId on the first clash.
void embed_and_insert(VectorStore& store, std::vector<QConfig> qconfigs, const SchemaDef& schema, Embedder& embedder);

}  // namespace booster
