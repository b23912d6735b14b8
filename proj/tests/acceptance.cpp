// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <functional>
#include <iostream>
#include <sstream>

#include "booster/compose.hpp"
#include "booster/errors.hpp"
#include "booster/recommend.hpp"
#include "booster/schematic_embed.hpp"
#include "booster/vector_store.hpp"
#include "fixtures.hpp"

using namespace booster;
using namespace booster::testing;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail << "first failure: " << what << "; ";
        pass = pass && ok;
    }
};

constexpr int kDriftSeeds = 5;
constexpr std::uint64_t kComposeEvals = 1000;

// Deterministic stand-in for the model: the same broad suggestion for every
// prompt. Seeds still differ per query through references and exploration.
const char* kMockSuggestion =
    R"json({"system_knobs": {"max_parallel_workers_per_gather": 8, "random_page_cost": 1.1},
        "indexes": ["orders(day)", "orders(cust)", "orders(qty)"]})json";

struct PipelineRun {
    ComposeResult result;
    std::string digest;
    std::uint64_t executions = 0;  // simulator executions during compose
};

struct PipelineOptions {
    PermutationStrategy strategy = PermutationStrategy::All;
    std::set<Mechanism> mechanisms = parse_mechanisms("all");
    Budget budget = Budget::evals(kComposeEvals);
    PlanKernel kernel = PlanKernel::Parallel;
};

// History ingestion, recommendation and composition for the drifted workload.
PipelineRun run_pipeline(const DriftFixture& f, const PipelineOptions& o) {
    SimEnv sim(f.before.schema);
    HashingEmbedder emb(256);
    VectorStore store(emb.id());
    std::vector<TrajectoryStep> interesting;
    for (const auto& [_, trial] : group_by_trial(f.history))
        for (auto& s : interesting_configs(trial)) interesting.push_back(s);
    embed_and_insert(store, build_qconfigs(interesting, f.before, &sim, GapBridgingLinker{}), f.before.schema, emb);

    MockProvider mock;
    mock.set_default(kMockSuggestion);
    RecommendOptions ro;
    ro.sanitize.strategy = o.strategy;
    std::map<std::string, std::vector<Seed>> seeds;
    for (auto& r : recommend_workload(f.after, sim, store, emb, mock, ro)) seeds[r.query_id] = std::move(r.seeds);

    RankedSeeds ranked = rank_seeds(seeds, f.after, sim);
    ComposeOptions co;
    co.mechanisms = o.mechanisms;
    co.kernel = o.kernel;
    const auto before = sim.executions();
    PipelineRun run;
    run.result = compose(f.after, ranked, o.budget, sim, co);
    run.executions = sim.executions() - before;
    run.digest = digest(run.result).dump();
    return run;
}

double best_historical(const DriftFixture& f) {
    SimEnv sim(f.after.schema);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : f.history) best = std::min(best, workload_objective(f.after, s.config, sim));
    return best;
}

// ---------------------------------------------------------------------------

Outcome near_optimality() {
    Outcome o;
    auto fixtures = adversarial_fixtures();
    o.require(fixtures.size() >= 5, "at least five fixtures");
    double worst = 0, slowest = 0;
    std::size_t oracle = 0;
    for (const auto& f : fixtures) {
        o.require(f.workload.queries.size() <= 4, f.name + " has at most four queries");
        for (const auto& [q, list] : f.seeds) o.require(list.size() <= 4, f.name + "/" + q + " has at most four seeds");
        auto t0 = std::chrono::steady_clock::now();
        SimEnv sim(f.workload.schema);
        auto ranked = rank_seeds(f.seeds, f.workload, sim);
        auto res = compose(f.workload, ranked, Budget::evals(kComposeEvals), sim);
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        auto brute = brute_force_compose(f.workload, ranked, sim);
        oracle += brute.configurations;
        double ratio = res.state.objective / brute.objective;
        worst = std::max(worst, ratio);
        slowest = std::max(slowest, secs);
        o.require(ratio <= 1.05, f.name + " within 5% of brute force");
        o.require(secs < 60, f.name + " under 60 s");
    }
    o.detail << fixtures.size() << " fixtures, worst objective/brute-force " << worst << " (oracle timed " << oracle
             << " query configurations), slowest " << slowest << " s";
    return o;
}

Outcome monotone_improvement() {
    Outcome o;
    int checked = 0;
    for (const auto& f : adversarial_fixtures()) {
        SimEnv sim(f.workload.schema);
        auto res = compose(f.workload, rank_seeds(f.seeds, f.workload, sim), Budget::evals(kComposeEvals), sim);
        double stock = stock_objective(f.workload, sim);
        o.require(res.state.objective < res.initial_objective, f.name + ": strict improvement over the merge");
        o.require(res.initial_objective <= stock, f.name + ": merge no worse than stock");
        ++checked;
    }
    for (int s = 0; s < kDriftSeeds; ++s) {
        auto f = make_drift_fixture(static_cast<std::uint64_t>(s));
        auto run = run_pipeline(f, {});
        SimEnv sim(f.after.schema);
        double stock = stock_objective(f.after, sim);
        o.require(run.result.state.objective <= run.result.initial_objective,
                  "drift " + std::to_string(s) + ": digest no worse than merge");
        o.require(run.result.initial_objective <= stock, "drift " + std::to_string(s) + ": merge no worse than stock");
        ++checked;
    }
    o.detail << checked << " fixtures";
    return o;
}

Outcome link_resolution() {
    Outcome o;
    Workload w = toy_workload();
    SimEnv sim(w.schema);
    Rng rng(101);
    HashingEmbedder emb(16);
    std::size_t agree = 0, total = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto steps = random_trajectory(rng, w, sim, "t" + std::to_string(trial), uniform_int(rng, 2, 20), trial % 2 == 0);
        std::unique_ptr<LinkPolicy> linker;
        if (trial % 4 < 2)
            linker = std::make_unique<ChronologicalLinker>();
        else
            linker = std::make_unique<GapBridgingLinker>();
        auto qcs = build_qconfigs(interesting_configs(steps), w, nullptr, *linker);
        VectorStore store(emb.id());
        embed_and_insert(store, qcs, w.schema, emb);
        std::map<std::string, const QConfig*> by_id;
        for (const auto& qc : qcs) by_id[qc.qconfig_id] = &qc;
        for (const auto& [id, _] : by_id) {
            std::set<std::string> reach;
            std::vector<std::string> stack{id};
            while (!stack.empty()) {
                std::string cur = stack.back();
                stack.pop_back();
                if (!reach.insert(cur).second) continue;
                for (const auto& l : by_id.at(cur)->links) stack.push_back(l);
            }
            double best = std::numeric_limits<double>::infinity();
            for (const auto& r : reach) best = std::min(best, by_id.at(r)->runtime);
            std::string got = store.resolve_downstream(id);
            bool ok = reach.count(got) && by_id.at(got)->runtime == best;
            agree += ok;
            ++total;
        }
    }
    o.require(total > 0 && agree == total, "every QConfig resolves to its closure minimum");
    o.detail << agree << "/" << total << " QConfigs over 100 trials";
    return o;
}

Outcome knn_exactness() {
    Outcome o;
    const SchematicType type{QueryForm::SQL, false};
    Rng rng(202);
    std::size_t agree = 0, total = 0;
    for (std::size_t dim : {std::size_t{8}, std::size_t{256}}) {
        for (int round = 0; round < 20; ++round) {
            std::size_t n = round == 0 ? 1000 : static_cast<std::size_t>(uniform_int(rng, 1, 1000));
            VectorStore store("e", {type});
            std::vector<std::vector<double>> rows(n, std::vector<double>(dim));
            for (std::size_t i = 0; i < n; ++i) {
                for (auto& x : rows[i]) x = uniform_real(rng, -1, 1);
                // Duplicated rows exercise the id tie-break.
                if (i > 0 && uniform_int(rng, 0, 19) == 0) rows[i] = rows[i - 1];
                QConfig qc;
                qc.qconfig_id = "r" + std::to_string(i);
                qc.query.query_id = "q";
                qc.identity_vectors[type] = rows[i];
                store.insert(std::move(qc));
            }
            std::vector<double> query(dim);
            for (auto& x : query) x = uniform_real(rng, -1, 1);
            std::vector<std::pair<double, std::string>> expect;
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0;
                for (std::size_t j = 0; j < dim; ++j) acc += (rows[i][j] - query[j]) * (rows[i][j] - query[j]);
                expect.emplace_back(acc, "r" + std::to_string(i));
            }
            std::sort(expect.begin(), expect.end());
            std::size_t k = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<int>(n)));
            for (auto kernel : {KnnKernel::Serial, KnnKernel::Parallel}) {
                auto got = store.knn(IdentityVector{type, query, "e"}, k, kernel);
                bool ok = got.size() == k;
                for (std::size_t i = 0; ok && i < k; ++i) ok = got[i].qconfig_id == expect[i].second;
                agree += ok;
                ++total;
            }
        }
    }
    o.require(agree == total, "knn equals the brute-force sort");
    o.detail << agree << "/" << total << " queries, dims 8 and 256, sizes up to 1000";
    return o;
}

Outcome sanitizer_totality() {
    Outcome o;
    Rng rng(303);
    std::size_t seeds = 0, hidden_checks = 0, fixtures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        SchemaDef schema = random_schema(rng, 4, 4);
        SimEnv sim(schema);
        QuerySpec q = random_query(rng, schema, uniform_int(rng, 1, 3), "q");
        std::vector<LlmSuggestion> sugg;
        for (int i = uniform_int(rng, 0, 3); i > 0; --i) {
            json j = random_suggestion(rng, schema, q);
            sugg.push_back(LlmSuggestion{j.dump(), j, true});
        }
        std::vector<QConfig> refs;
        for (int i = uniform_int(rng, 0, 2); i > 0; --i) refs.push_back(random_reference(rng, sim, q, "r" + std::to_string(i)));
        SanitizeOptions opts;
        opts.strategy = static_cast<PermutationStrategy>(trial % 5);
        std::vector<Seed> out;
        try {
            out = sanitize(sugg, refs, q, sim, opts);
        } catch (const std::exception& e) {
            o.require(false, std::string("sanitize threw: ") + e.what());
            continue;
        }
        ++fixtures;
        o.require(!out.empty(), "at least one seed per fixture");
        for (const auto& s : out) {
            Configuration c = s.as_configuration();
            PlanTree plan;
            try {
                plan = sim.execute(q, c).plan;
            } catch (const std::exception& e) {
                o.require(false, std::string("seed does not deploy: ") + e.what());
                continue;
            }
            for (const auto& [id, _] : s.indexes) {
                bool changed = false;
                try {
                    PlanTree h = sim.plan(q, c, {id});
                    changed = plan_signature(h) != plan_signature(plan) ||
                              sim.undistorted_cost(q, c, h) > sim.undistorted_cost(q, c, plan);
                } catch (const UnsatisfiableHints&) {
                    changed = true;
                }
                o.require(changed, "hiding " + id + " changes the plan or raises its cost");
                ++hidden_checks;
            }
            ++seeds;
        }
    }
    o.detail << fixtures << " fixtures, " << seeds << " seeds, " << hidden_checks << " single-index hides";
    return o;
}

Outcome sensitivity_ordering() {
    Outcome o;
    const std::vector<PermutationStrategy> singles = {PermutationStrategy::JoinTypes, PermutationStrategy::AccessMethods,
                                                      PermutationStrategy::Sort};
    std::map<std::string, double> mean;
    for (int s = 0; s < kDriftSeeds; ++s) {
        auto f = make_drift_fixture(static_cast<std::uint64_t>(s));
        auto strategy = [&](PermutationStrategy st) {
            PipelineOptions po;
            po.strategy = st;
            return run_pipeline(f, po).result.state.objective;
        };
        auto mechanisms = [&](const std::string& m) {
            PipelineOptions po;
            po.mechanisms = parse_mechanisms(m);
            return run_pipeline(f, po).result.state.objective;
        };
        mean["strategy:None"] += strategy(PermutationStrategy::None) / kDriftSeeds;
        mean["strategy:All"] += strategy(PermutationStrategy::All) / kDriftSeeds;
        for (auto st : singles) mean["strategy:" + std::string(to_string(st))] += strategy(st) / kDriftSeeds;
        for (const char* m : {"M1", "M2", "M3", "M4", "all"}) mean[std::string("mechanism:") + m] += mechanisms(m) / kDriftSeeds;
    }
    // Lower objective is better; ties satisfy the ordering.
    const double eps = 1e-9;
    for (auto st : singles) {
        std::string k = "strategy:" + std::string(to_string(st));
        o.require(mean["strategy:All"] <= mean[k] + eps, "All at least as good as " + k);
        o.require(mean[k] <= mean["strategy:None"] + eps, k + " at least as good as None");
    }
    for (const char* m : {"M1", "M2", "M3", "M4"})
        o.require(mean["mechanism:all"] <= mean[std::string("mechanism:") + m] + eps,
                  std::string("all mechanisms at least as good as ") + m);
    o.detail << "mean objectives:";
    for (const auto& [k, v] : mean) o.detail << " " << k << "=" << v;
    return o;
}

Outcome drift_adaptation() {
    Outcome o;
    double worst = 1;
    for (int s = 0; s < kDriftSeeds; ++s) {
        auto f = make_drift_fixture(static_cast<std::uint64_t>(s));
        o.require(f.changed.size() * 2 == f.after.queries.size(), "half the queries drift");
        double hist = best_historical(f);
        double composed = run_pipeline(f, {}).result.state.objective;
        double gain = 1 - composed / hist;
        worst = std::min(worst, gain);
        o.require(gain >= 0.20, "drift seed " + std::to_string(s) + " gains at least 20%");
    }
    o.detail << kDriftSeeds << " fixtures, smallest gain over the best historical configuration "
             << worst * 100 << "%";
    return o;
}

Outcome determinism() {
    Outcome o;
    int pairs = 0;
    for (const auto& f : adversarial_fixtures()) {
        std::string first;
        for (auto kernel : {PlanKernel::Parallel, PlanKernel::Parallel, PlanKernel::Serial}) {
            SimEnv sim(f.workload.schema);
            ComposeOptions co;
            co.kernel = kernel;
            auto d = digest(compose(f.workload, rank_seeds(f.seeds, f.workload, sim), Budget::evals(kComposeEvals), sim, co)).dump();
            if (first.empty())
                first = d;
            else
                o.require(d == first, f.name + " digest is byte-identical");
            ++pairs;
        }
    }
    for (int s = 0; s < kDriftSeeds; ++s) {
        auto f = make_drift_fixture(static_cast<std::uint64_t>(s));
        PipelineOptions serial;
        serial.kernel = PlanKernel::Serial;
        auto a = run_pipeline(f, {}).digest;
        o.require(a == run_pipeline(f, {}).digest, "drift " + std::to_string(s) + " repeat digest");
        o.require(a == run_pipeline(f, serial).digest, "drift " + std::to_string(s) + " serial-kernel digest");
        pairs += 3;
    }
    o.detail << pairs << " runs compared";
    return o;
}

Outcome budget_accounting() {
    Outcome o;
    std::size_t runs = 0;
    const std::vector<std::uint64_t> limits = {0, 1, 2, 3, 5, 8, 13, 21, 50, 100, 1000};
    for (auto limit : limits) {
        for (const auto& f : adversarial_fixtures()) {
            SimEnv sim(f.workload.schema);
            auto ranked = rank_seeds(f.seeds, f.workload, sim);
            const auto before = sim.executions();
            auto res = compose(f.workload, ranked, Budget::evals(limit), sim);
            const auto used = sim.executions() - before;
            o.require(used <= limit, f.name + " stays within " + std::to_string(limit) + " evaluations");
            o.require(res.evaluations == used, f.name + " reports its executions");
            ++runs;
        }
        for (int s = 0; s < kDriftSeeds; ++s) {
            PipelineOptions po;
            po.budget = Budget::evals(limit);
            auto run = run_pipeline(make_drift_fixture(static_cast<std::uint64_t>(s)), po);
            o.require(run.executions <= limit, "drift stays within " + std::to_string(limit) + " evaluations");
            o.require(run.result.evaluations == run.executions, "drift reports its executions");
            ++runs;
        }
    }
    o.detail << runs << " composition runs across " << limits.size() << " limits";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"near-optimality", near_optimality},
        {"monotone-improvement", monotone_improvement},
        {"link-resolution", link_resolution},
        {"knn-exactness", knn_exactness},
        {"sanitizer-totality-minimality", sanitizer_totality},
        {"sensitivity-ordering", sensitivity_ordering},
        {"drift-adaptation", drift_adaptation},
        {"determinism", determinism},
        {"budget-accounting", budget_accounting},
    };
    int failed = 0;
    int n = 0;
    for (const auto& [name, fn] : criteria) {
        ++n;
        bool pass = false;
        std::string detail;
        try {
            Outcome o = fn();
            pass = o.pass;
            detail = o.detail.str();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        failed += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << " " << n << " " << name << ": " << detail << std::endl;
    }
    return failed;
}
