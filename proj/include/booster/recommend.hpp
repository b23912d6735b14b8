#pragma once

// Per-query seed recommendation: prompt assembly around retrieved references,
// pluggable language-model providers, and the sanitizer that turns raw
// suggestions into deployable, minimal seeds.

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "booster/artifact_repo.hpp"
#include "booster/config_model.hpp"
#include "booster/sim_env.hpp"

namespace booster {

class Embedder;
class VectorStore;

// ---------------------------------------------------------------------------
// Prompt

inline constexpr const char* kPromptVersion = "booster-prompt/1";

struct PromptOptions {
    std::size_t context_tokens = 16384;
    std::size_t chars_per_token = 4;
};

struct Prompt {
    std::vector<std::string> instructions;
    std::string output_contract;  // suggestion JSON schema
    std::string target;           // schema metadata, query text, plan (last)
    std::vector<std::string> references;  // rendered, fused-rank order
    std::size_t dropped_references = 0;  // tail references removed for the budget
    std::size_t budget_chars = 0;        // 0 = no cut
    bool truncated = false;              // hard prefix cut applied on render

    std::string render() const;
};

// JSON schema every suggestion must follow. Embedded in the prompt.
const json& suggestion_schema();

Prompt build_prompt(const QuerySpec& query, const PlanTree& plan, const SchemaDef& schema,
                    const std::vector<QConfig>& refs, const PromptOptions& options = {});

// ---------------------------------------------------------------------------
// Providers

struct LlmConfig {
    std::string provider = "mock";  // mock | http
    std::string endpoint;           // e.g. http://localhost:8000/v1/chat/completions
    std::string model;
    std::string api_key_env;
    double temperature = 0.0;
    std::size_t context_tokens = 16384;
    std::size_t max_output_tokens = 4096;
    std::size_t samples = 1;             // suggestions requested per query
    std::size_t max_concurrent_requests = 4;
    std::string mock_responses;          // path to the scripted responses file (mock)
};

void to_json(json& j, const LlmConfig& c);
void from_json(const json& j, LlmConfig& c);

class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    virtual std::string id() const = 0;
    // `n` completions of the prompt. Throws ProviderUnavailable. Must be safe
    // to call from several threads.
    virtual std::vector<std::string> complete(const std::string& prompt, std::size_t n) const = 0;
};

// Scripted responses keyed by the digest of the rendered prompt, with an
// optional fallback.
class MockProvider final : public LlmProvider {
public:
    MockProvider() = default;
    // File layout: {"responses": {"<prompt digest>": <string or JSON>}, "default": <string or JSON>}
    static MockProvider from_file(const std::string& path);

    void script(const std::string& prompt_digest, std::string response) { responses_[prompt_digest] = std::move(response); }
    void set_default(std::string response) { default_ = std::move(response); }
    void set_available(bool available) { available_ = available; }

    std::string id() const override { return "mock"; }
    std::vector<std::string> complete(const std::string& prompt, std::size_t n) const override;

private:
    std::map<std::string, std::string> responses_;
    std::optional<std::string> default_;
    bool available_ = true;
};

// OpenAI-style chat completions endpoint.
class HttpProvider final : public LlmProvider {
public:
    explicit HttpProvider(LlmConfig config);
    std::string id() const override { return "http:" + config_.model; }
    std::vector<std::string> complete(const std::string& prompt, std::size_t n) const override;

private:
    LlmConfig config_;
};

std::unique_ptr<LlmProvider> make_provider(const LlmConfig& config);

// Key used by the mock provider.
std::string prompt_digest(const std::string& rendered_prompt);

// ---------------------------------------------------------------------------
// Suggestions

struct LlmSuggestion {
    std::string raw_json;
    std::optional<json> parsed;  // object with any of system_knobs, indexes, options
    bool valid_json = false;
};

// Parses one completion. Code fences are stripped; a top-level array or a
// {"suggestions": [...]} wrapper yields several suggestions.
std::vector<LlmSuggestion> parse_suggestions(const std::string& completion);

std::vector<LlmSuggestion> suggest(const Prompt& prompt, const LlmProvider& provider, std::size_t n = 1);

// ---------------------------------------------------------------------------
// Sanitizer

enum class PermutationStrategy { None, JoinTypes, AccessMethods, Sort, All };
std::string_view to_string(PermutationStrategy s);
std::optional<PermutationStrategy> parse_permutation_strategy(std::string_view s);

struct SanitizeOptions {
    PermutationStrategy strategy = PermutationStrategy::All;
    // Index augmentation and knob permutation. Off leaves the preliminary
    // candidates alone.
    bool explore = true;
    std::size_t max_fill_ins = 16;
};

// Index candidates from static analysis of the query: one per predicate or
// join column, plus a composite of each table's predicate columns ordered
// by selectivity.
std::vector<IndexDef> static_index_candidates(const QuerySpec& query, const SchemaDef& schema);

// Query-option variants the strategy contributes for a query.
std::vector<QueryOptions> permutation_variants(const QuerySpec& query, PermutationStrategy strategy);

std::vector<Seed> sanitize(const std::vector<LlmSuggestion>& suggestions, const std::vector<QConfig>& refs,
                           const QuerySpec& query, const SimEnv& sim, const SanitizeOptions& options = {});

// A seed rendered back in suggestion form.
json seed_as_suggestion(const Seed& seed);

// ---------------------------------------------------------------------------
// Pipeline

struct RecommendOptions {
    std::size_t k = 2;
    PromptOptions prompt;
    SanitizeOptions sanitize;
    std::size_t samples = 1;
    std::size_t max_concurrent_requests = 4;
};

struct QueryRecommendation {
    std::string query_id;
    std::vector<std::string> reference_ids;
    std::string prompt_digest;
    std::vector<LlmSuggestion> suggestions;
    std::vector<Seed> seeds;
};

// Retrieve, prompt, suggest and sanitize for one query. An empty store
// means no references.
QueryRecommendation recommend_query(const QuerySpec& query, const SimEnv& sim, const VectorStore& store,
                                    Embedder& embedder, const LlmProvider& provider,
                                    const RecommendOptions& options = {});

// Every query of the workload, at most `max_concurrent_requests` at a time.
// Results follow workload order.
std::vector<QueryRecommendation> recommend_workload(const Workload& workload, const SimEnv& sim,
                                                    const VectorStore& store, Embedder& embedder,
                                                    const LlmProvider& provider, const RecommendOptions& options = {});

}  // namespace booster
