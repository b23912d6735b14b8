// booster: ingest tuner artifacts, recommend per-query seeds, and compose
// them into one configuration.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "booster/artifact_repo.hpp"
#include "booster/compose.hpp"
#include "booster/errors.hpp"
#include "booster/hash.hpp"
#include "booster/recommend.hpp"
#include "booster/schematic_embed.hpp"
#include "booster/vector_store.hpp"

namespace fs = std::filesystem;
using namespace booster;

namespace {

enum Exit { kOk = 0, kRuntime = 1, kUsage = 2, kProvider = 3, kBudget = 4 };

constexpr const char* kManifestFormat = "booster-manifest/1";
constexpr const char* kSeedsFormat = "booster-seeds/1";

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw InvalidInput(p.string() + ": " + e.what());
    }
}

void write_json(const fs::path& p, const json& j) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

std::string file_digest(const fs::path& p) { return digest_hex(read_file(p)); }

// ---------------------------------------------------------------------------
// Shared options

struct RepoArgs {
    std::string repo;
    std::string workload;
    std::string embedder_config;
};

fs::path store_path(const std::string& repo) { return fs::path(repo) / "store.json"; }
fs::path manifest_path(const std::string& repo) { return fs::path(repo) / "manifest.json"; }

EmbedderConfig embedder_config(const std::string& path) {
    if (path.empty()) return {};
    return read_json(path).get<EmbedderConfig>();
}

LlmConfig llm_config(const std::string& path) {
    if (path.empty()) return {};
    LlmConfig c = read_json(path).get<LlmConfig>();
    if (!c.mock_responses.empty() && fs::path(c.mock_responses).is_relative())
        c.mock_responses = (fs::path(path).parent_path() / c.mock_responses).string();
    return c;
}

std::unique_ptr<LlmProvider> provider_for(const LlmConfig& c, bool configured) {
    if (!configured) {
        // No model configured: an empty suggestion for every prompt, so
        // seeds come from references and exploration alone.
        auto m = std::make_unique<MockProvider>();
        m->set_default("{}");
        return m;
    }
    return make_provider(c);
}

VectorStore load_store(const std::string& repo) {
    if (!fs::exists(store_path(repo))) return VectorStore(HashingEmbedder().id());
    return VectorStore::load(store_path(repo));
}

json fresh_manifest() {
    return json{{"format", kManifestFormat}, {"store", "store.json"}, {"ingests", json::array()}};
}

json load_manifest(const std::string& repo) {
    if (fs::exists(manifest_path(repo))) return read_json(manifest_path(repo));
    return fresh_manifest();
}

// ---------------------------------------------------------------------------
// ingest

struct IngestArgs {
    RepoArgs repo;
    std::string bundle;
    std::string adapter = "native";
    std::string adapter_file;
    std::string linker = "chronological";
    bool replace = false;
};

int cmd_ingest(const IngestArgs& a) {
    Workload w = load_workload(a.repo.workload);
    SimEnv sim(w.schema);
    AdapterRegistry registry = AdapterRegistry::with_builtins();
    if (!a.adapter_file.empty()) registry.load_file(a.adapter_file);
    const Adapter& adapter = registry.get(a.adapter);
    auto linker = make_link_policy(a.linker);

    std::vector<std::string> known;
    for (const auto& q : w.queries) known.push_back(q.query_id);
    auto steps = parse_artifacts(read_file(a.bundle), adapter, known);
    fill_missing_runtimes(steps, w, sim);
    std::vector<TrajectoryStep> interesting;
    for (const auto& [_, trial] : group_by_trial(steps))
        for (auto& s : interesting_configs(trial)) interesting.push_back(std::move(s));
    auto qconfigs = build_qconfigs(interesting, w, &sim, *linker);

    EmbedderConfig ec = embedder_config(a.repo.embedder_config);
    auto embedder = make_embedder(ec);
    VectorStore store = a.replace || !fs::exists(store_path(a.repo.repo)) ? VectorStore(embedder->id())
                                                                          : VectorStore::load(store_path(a.repo.repo));
    if (store.embedder_id() != embedder->id())
        throw InvalidInput("store was built with embedder " + store.embedder_id() + ", not " + embedder->id());
    const std::size_t added = qconfigs.size();
    embed_and_insert(store, std::move(qconfigs), w.schema, *embedder);
    fs::create_directories(a.repo.repo);
    store.save(store_path(a.repo.repo));

    json manifest = a.replace ? fresh_manifest() : load_manifest(a.repo.repo);
    manifest["embedder"] = ec;
    manifest["ingests"].push_back(json{{"bundle", a.bundle},
                                       {"bundle_digest", file_digest(a.bundle)},
                                       {"adapter", adapter.id},
                                       {"workload", a.repo.workload},
                                       {"workload_digest", file_digest(a.repo.workload)},
                                       {"linker", linker->id()},
                                       {"steps", steps.size()},
                                       {"interesting_steps", interesting.size()},
                                       {"qconfigs", added}});
    manifest["store_digest"] = file_digest(store_path(a.repo.repo));
    write_json(manifest_path(a.repo.repo), manifest);

    json summary = store.stats();
    summary["added"] = added;
    std::cout << summary.dump(2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// store

int cmd_store_stats(const std::string& repo) {
    if (!fs::exists(store_path(repo))) throw InvalidInput("no store in " + repo);
    std::cout << json(VectorStore::load(store_path(repo)).stats()).dump(2) << '\n';
    return kOk;
}

int cmd_store_dump(const std::string& repo, bool vectors) {
    if (!fs::exists(store_path(repo))) throw InvalidInput("no store in " + repo);
    VectorStore store = VectorStore::load(store_path(repo));
    json out = json::array();
    for (const auto& id : store.ids()) {
        json j = store.get(id);
        if (!vectors) j.erase("identity_vectors");
        out.push_back(std::move(j));
    }
    std::cout << out.dump(2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// schematics

int cmd_schematics(const std::string& workload, const std::string& query) {
    Workload w = load_workload(workload);
    SimEnv sim(w.schema);
    json out = json::object();
    for (const auto& q : w.queries) {
        if (!query.empty() && q.query_id != query) continue;
        json per = json::object();
        for (const auto& s : build_schematics(q, w.schema, sim.plan(q, {}))) per[to_string(s.stype)] = s.text;
        out[q.query_id] = per;
    }
    if (!query.empty() && out.empty()) throw InvalidInput("query " + query + " not in the workload");
    std::cout << out.dump(2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// recommend / compose / run

struct PipelineArgs {
    RepoArgs repo;
    std::string llm_config;
    std::size_t k = 2;
    std::string strategy = "All";
    std::string mechanisms = "all";
    std::string budget = "1.5h";
    std::string seeds;      // compose: precomputed seeds
    std::string seeds_out;  // recommend/run: where to write seeds
    std::string out;
    bool serial = false;
};

json recommend_phase(const PipelineArgs& a, const Workload& w, const SimEnv& sim) {
    auto strategy = parse_permutation_strategy(a.strategy);
    if (!strategy) throw InvalidInput("unknown permutation strategy '" + a.strategy + "'");
    if (a.k < 1) throw InvalidInput("k must be at least 1");
    VectorStore store = load_store(a.repo.repo);
    auto embedder = make_embedder(embedder_config(a.repo.embedder_config));
    LlmConfig lc = llm_config(a.llm_config);
    auto provider = provider_for(lc, !a.llm_config.empty());
    RecommendOptions opts;
    opts.k = a.k;
    opts.sanitize.strategy = *strategy;
    opts.samples = lc.samples;
    opts.max_concurrent_requests = lc.max_concurrent_requests;
    opts.prompt.context_tokens = lc.context_tokens;
    json queries = json::object();
    for (const auto& r : recommend_workload(w, sim, store, *embedder, *provider, opts))
        queries[r.query_id] = json{{"prompt_digest", r.prompt_digest},
                                   {"reference_ids", r.reference_ids},
                                   {"suggestions", r.suggestions.size()},
                                   {"seeds", r.seeds}};
    return json{{"format", kSeedsFormat}, {"strategy", to_string(*strategy)}, {"k", a.k}, {"queries", queries}};
}

std::map<std::string, std::vector<Seed>> seeds_from(const json& doc) {
    if (doc.value("format", std::string{}) != kSeedsFormat) throw InvalidInput("seeds file has an unknown format");
    std::map<std::string, std::vector<Seed>> out;
    for (const auto& [q, entry] : doc.at("queries").items()) out[q] = entry.at("seeds").get<std::vector<Seed>>();
    return out;
}

int cmd_recommend(const PipelineArgs& a) {
    Workload w = load_workload(a.repo.workload);
    SimEnv sim(w.schema);
    json seeds = recommend_phase(a, w, sim);
    write_json(a.seeds_out, seeds);
    std::size_t n = 0;
    for (const auto& [_, e] : seeds["queries"].items()) n += e["seeds"].size();
    std::cout << "seeds: " << n << " for " << w.queries.size() << " queries -> " << a.seeds_out << '\n';
    return kOk;
}

int compose_phase(const PipelineArgs& a, bool verbose) {
    Workload w = load_workload(a.repo.workload);
    SimEnv sim(w.schema);
    Budget budget = Budget::parse(a.budget);
    ComposeOptions opts;
    opts.mechanisms = parse_mechanisms(a.mechanisms);
    if (a.serial) opts.kernel = PlanKernel::Serial;

    json seeds_doc;
    if (!a.seeds.empty()) {
        seeds_doc = read_json(a.seeds);
    } else {
        seeds_doc = recommend_phase(a, w, sim);
        if (!a.seeds_out.empty()) write_json(a.seeds_out, seeds_doc);
    }
    auto seeds = seeds_from(seeds_doc);
    for (const auto& q : w.queries)
        if (!seeds.count(q.query_id) || seeds[q.query_id].empty())
            throw InvalidInput("no seeds for query " + q.query_id);

    // Ranking runs ahead of the composition budget.
    RankedSeeds ranked = rank_seeds(seeds, w, sim);
    ComposeResult result = compose(w, ranked, budget, sim, opts);
    json d = digest(result);
    write_json(a.out, d);

    fs::path manifest = fs::path(a.out).replace_extension(".manifest.json");
    write_json(manifest, json{{"format", kManifestFormat},
                              {"budget", a.budget},
                              {"mechanisms", a.mechanisms},
                              {"strategy", a.strategy},
                              {"k", a.k},
                              {"llm", llm_config(a.llm_config)},
                              {"embedder", embedder_config(a.repo.embedder_config)},
                              {"workload_digest", file_digest(a.repo.workload)},
                              {"store_digest", fs::exists(store_path(a.repo.repo))
                                                   ? json(file_digest(store_path(a.repo.repo)))
                                                   : json(nullptr)},
                              {"seeds_digest", digest_hex(seeds_doc.dump())},
                              {"digest_digest", digest_hex(d.dump())}});

    if (verbose) {
        double stock = 0;
        for (const auto& q : w.queries) stock += sim.runtime_of(q, {}, sim.plan(q, {}));
        std::cout << "stock objective:   " << stock << '\n';
        std::cout << "initial objective: " << result.initial_objective
                  << (result.initial_evaluated ? "" : " (estimated, not evaluated)") << '\n';
    }
    std::cout << "objective: " << result.state.objective << "  iterations: " << result.iterations.size()
              << "  evaluations: " << result.evaluations << " -> " << a.out << '\n';
    if (!result.initial_evaluated) {
        std::cerr << "budget exhausted before the first evaluation\n";
        return kBudget;
    }
    return kOk;
}

void add_repo_options(CLI::App* cmd, RepoArgs& r, bool need_repo) {
    auto* repo = cmd->add_option("--repo", r.repo, "Repository directory holding store.json");
    if (need_repo) repo->required();
    cmd->add_option("--workload", r.workload, "Workload JSON (schema and queries)")->required();
    cmd->add_option("--embedder-config", r.embedder_config, "Embedder configuration JSON");
}

void add_pipeline_options(CLI::App* cmd, PipelineArgs& p) {
    cmd->add_option("--llm-config", p.llm_config, "Language-model provider configuration JSON");
    cmd->add_option("--k", p.k, "References per query")->check(CLI::PositiveNumber);
    cmd->add_option("--strategy", p.strategy, "Permutation strategy: None, JoinTypes, AccessMethods, Sort, All");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compose per-query tuning knowledge into a holistic configuration"};
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Parse a tuner artifact bundle into the QConfig store");
    add_repo_options(c_ingest, ingest.repo, true);
    c_ingest->add_option("--bundle", ingest.bundle, "Artifact bundle file")->required();
    c_ingest->add_option("--adapter", ingest.adapter, "Adapter id (native, protox, unitune, lambdatune, dta)");
    c_ingest->add_option("--adapter-file", ingest.adapter_file, "Extra adapter definition JSON");
    c_ingest->add_option("--linker", ingest.linker, "Link policy: chronological or bridge-gaps");
    c_ingest->add_flag("--replace", ingest.replace, "Rebuild the store from this bundle alone");

    std::string store_repo;
    bool dump_vectors = false;
    auto* c_store = app.add_subcommand("store", "Inspect the QConfig store");
    c_store->require_subcommand(1);
    auto* c_stats = c_store->add_subcommand("stats", "Counts per query, segment and link chain");
    c_stats->add_option("--repo", store_repo)->required();
    auto* c_dump = c_store->add_subcommand("dump", "Every QConfig as JSON");
    c_dump->add_option("--repo", store_repo)->required();
    c_dump->add_flag("--vectors", dump_vectors, "Include identity vectors");

    std::string sch_workload, sch_query;
    auto* c_sch = app.add_subcommand("schematics", "Print each query's schematics under the stock plan");
    c_sch->add_option("--workload", sch_workload)->required();
    c_sch->add_option("--query", sch_query);

    PipelineArgs rec;
    rec.seeds_out = "seeds.json";
    auto* c_rec = app.add_subcommand("recommend", "Retrieve references, prompt, and sanitize seeds");
    add_repo_options(c_rec, rec.repo, true);
    add_pipeline_options(c_rec, rec);
    c_rec->add_option("--out", rec.seeds_out, "Seeds output file");

    PipelineArgs comp;
    auto* c_comp = app.add_subcommand("compose", "Rank seeds and compose them under a budget");
    add_repo_options(c_comp, comp.repo, false);
    add_pipeline_options(c_comp, comp);
    c_comp->add_option("--budget", comp.budget, "500evals, 0evals, 1.5h, 90m, 30s");
    c_comp->add_option("--seeds", comp.seeds, "Seeds from `recommend`; recomputed when absent");
    c_comp->add_option("--mechanisms", comp.mechanisms, "Rollout mechanisms, e.g. M1,M3 or all");
    c_comp->add_option("--out", comp.out, "Digest output file")->required();
    c_comp->add_flag("--serial", comp.serial, "Plan candidates with the serial kernel");

    PipelineArgs run;
    auto* c_run = app.add_subcommand("run", "recommend then compose, reporting objectives");
    add_repo_options(c_run, run.repo, true);
    add_pipeline_options(c_run, run);
    c_run->add_option("--budget", run.budget, "500evals, 0evals, 1.5h, 90m, 30s");
    c_run->add_option("--mechanisms", run.mechanisms, "Rollout mechanisms, e.g. M1,M3 or all");
    c_run->add_option("--seeds-out", run.seeds_out, "Also write the seeds here");
    c_run->add_option("--out", run.out, "Digest output file")->required();
    c_run->add_flag("--serial", run.serial, "Plan candidates with the serial kernel");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*c_ingest) return cmd_ingest(ingest);
        if (*c_stats) return cmd_store_stats(store_repo);
        if (*c_dump) return cmd_store_dump(store_repo, dump_vectors);
        if (*c_sch) return cmd_schematics(sch_workload, sch_query);
        if (*c_rec) return cmd_recommend(rec);
        if (*c_comp) return compose_phase(comp, false);
        if (*c_run) return compose_phase(run, true);
    } catch (const ProviderUnavailable& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kProvider;
    } catch (const EmbedderUnavailable& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kProvider;
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const UnknownAdapter& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DuplicateId& e) {
        std::cerr << "error: " << e.what() << " (use --replace to rebuild the store)\n";
        return kUsage;
    } catch (const MalformedArtifact& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const UnknownObject& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kUsage;
}
