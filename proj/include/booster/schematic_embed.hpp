#pragma once

// Schematic texts (schema metadata + one rendering of the query) and the
// embedders that turn them into identity vectors.

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "booster/schematic_type.hpp"
#include "booster/sim_env.hpp"

namespace booster {

struct Schematic {
    SchematicType stype;
    std::string text;
};

struct IdentityVector {
    SchematicType stype;
    std::vector<double> vector;
    std::string embedder_id;
};

// The six schematics of a query, in kAllSchematicTypes order.
std::vector<Schematic> build_schematics(const QuerySpec& query, const SchemaDef& schema, const PlanTree& plan);
Schematic build_schematic(SchematicType stype, const QuerySpec& query, const SchemaDef& schema, const PlanTree& plan);

// SQL text with string and numeric literals replaced by '?'.
std::string template_text(const std::string& sql);
// SQL for the query: sql_text when present, otherwise synthesised from the
// structured fields.
std::string query_sql(const QuerySpec& query);
// Indented operator tree without costs.
std::string plan_text(const PlanNode& root);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dimension() const = 0;
    // Raw (not necessarily normalised) embeddings, one per text.
    virtual std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) = 0;
};

// Signed feature hashing of lowercase alphanumeric tokens.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dimension = 256);
    std::string id() const override;
    std::size_t dimension() const override { return dim_; }
    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) override;
    std::vector<double> embed_text(const std::string& text) const;

private:
    std::size_t dim_;
};

struct EmbedderConfig {
    std::string provider = "deterministic";  // deterministic | http
    std::string endpoint;                     // e.g. http://localhost:8080/v1/embeddings
    std::string model;
    std::size_t dimension = 256;
    std::string api_key_env;
    std::size_t max_chars = 32768;
    int attempts = 3;
    std::chrono::milliseconds backoff{200};
};

void to_json(json& j, const EmbedderConfig& c);
void from_json(const json& j, EmbedderConfig& c);

// OpenAI-style /embeddings endpoint. Throws EmbedderUnavailable after the
// configured number of attempts.
class HttpEmbedder final : public Embedder {
public:
    explicit HttpEmbedder(EmbedderConfig config);
    std::string id() const override;
    std::size_t dimension() const override { return config_.dimension; }
    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) override;

private:
    EmbedderConfig config_;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config);

// Applies the character cap, embeds, and normalises to unit L2 norm.
IdentityVector embed(const Schematic& schematic, Embedder& embedder, std::size_t max_chars = 32768);
std::vector<IdentityVector> embed_all(const std::vector<Schematic>& schematics, Embedder& embedder,
                                      std::size_t max_chars = 32768);

void normalize_l2(std::vector<double>& v);

}  // namespace booster
