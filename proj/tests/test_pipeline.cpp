#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "synthetic.hpp"
#include "topicrec/pipeline.hpp"

using namespace topicrec;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("topicrec_pipeline_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// One shared synthetic dataset for the whole file; generation is seeded, so
// every run of the binary sees the same bytes.
const synthetic::Dataset& shared_dataset() {
    static const synthetic::Dataset ds =
        synthetic::generate(fresh_dir("data").string(), synthetic::small_spec());
    return ds;
}

// Small but complete configuration: one weight row, one granularity, the two
// cheap post-filtering strategies. Enough to exercise every stage.
RunConfig base_config(const std::string& out_tag) {
    const auto& ds = shared_dataset();
    RunConfig cfg = default_run_config();
    cfg.corpus_path = ds.corpus_path;
    cfg.ne_path = ds.ne_path;
    cfg.dt_path = ds.dt_path;
    cfg.log_path = ds.log_path;
    cfg.output_dir = fresh_dir(out_tag).string();
    cfg.seed = 17;
    ConsensusConfig w;
    w.alpha = 0.5;
    w.beta = 0.25;
    w.theta = 0.25;
    cfg.weights = {w};
    cfg.granularities = {{2, 7}};
    cfg.algorithms = {"weight_pof", "filter_pof"};
    cfg.recsys.candidate_pool = 40;
    cfg.workers = 2;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "cannot open ", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

size_t count_lines(const std::string& text) {
    size_t n = 0;
    for (char c : text) {
        if (c == '\n') ++n;
    }
    return n;
}

bool any_contains(const std::vector<std::string>& msgs, const std::string& needle) {
    for (const auto& m : msgs) {
        if (m.find(needle) != std::string::npos) return true;
    }
    return false;
}

template <typename Fn>
std::string message_of(Fn&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("filled-in default configuration validates cleanly") {
    RunConfig cfg = base_config("valid");
    CHECK(validate_config(cfg).empty());

    RunConfig empty = default_run_config();
    auto bad = validate_config(empty);
    CHECK(!bad.empty());
    CHECK(any_contains(bad, "corpus"));
}

TEST_CASE("validate_config reports every violation, not just the first") {
    RunConfig cfg = base_config("violations");
    cfg.corpus_path += ".missing";
    cfg.ensemble.k_min = 1;
    cfg.ensemble.seeds_per_k = 0;
    ConsensusConfig w;
    w.alpha = 0.5;
    w.beta = 0.4;
    w.theta = 0.3;  // beta + theta != alpha
    cfg.weights = {w};
    cfg.granularities = {{7, 2}};  // min > max
    cfg.algorithms = {"weight_pof", "weight_pof", "mystery"};
    cfg.recsys.tau = 1.5;
    cfg.recsys.candidate_pool = 5;  // < max eval n (10)
    cfg.eval.folds = 1;
    cfg.eval.inner_validation_fraction = 0.0;

    auto bad = validate_config(cfg);
    CHECK(bad.size() >= 10);
    CHECK(any_contains(bad, "corpus path does not exist"));
    CHECK(any_contains(bad, "ensemble.k_min"));
    CHECK(any_contains(bad, "ensemble.seeds_per_k"));
    CHECK(any_contains(bad, "weights[0]:"));
    CHECK(any_contains(bad, "granularities[0]:"));
    CHECK(any_contains(bad, "duplicate algorithm: weight_pof"));
    CHECK(any_contains(bad, "unknown algorithm: mystery"));
    CHECK(any_contains(bad, "recsys.tau"));
    CHECK(any_contains(bad, "recsys.candidate_pool"));
    CHECK(any_contains(bad, "eval.folds"));
    CHECK(any_contains(bad, "inner_validation_fraction"));
}

TEST_CASE("config files round trip every field") {
    RunConfig cfg = base_config("cfgio");
    cfg.stopwords_path = cfg.output_dir + "/stop.txt";
    cfg.seed = 99;
    cfg.ensemble.k_min = 3;
    cfg.ensemble.k_max = 6;
    cfg.ensemble.seeds_per_k = 2;
    ConsensusConfig w1;
    w1.alpha = 0.7;
    w1.beta = 0.7;
    w1.theta = 0.0;
    ConsensusConfig w2;
    w2.alpha = 0.3;
    w2.beta = 0.15;
    w2.theta = 0.15;
    cfg.weights = {w1, w2};
    cfg.granularities = {{2, 7}, {15, 20}};
    cfg.algorithms = kAlgorithms;
    cfg.recsys.k = 3;
    cfg.recsys.tau = 0.25;
    cfg.recsys.candidate_pool = 44;
    cfg.eval.n_values = {3, 5, 10};
    cfg.eval.folds = 4;
    cfg.eval.context_source = ContextSource::hidden_item;
    cfg.eval.inner_validation_fraction = 0.3;
    cfg.eval.inner_f1_n = 7;
    cfg.eval.inner_map_n = 8;
    cfg.label_terms = 7;
    cfg.workers = 3;

    std::string path = cfg.output_dir + "/config.json";
    save_config(cfg, path);
    RunConfig back = load_config(path);

    CHECK(back.corpus_path == cfg.corpus_path);
    CHECK(back.ne_path == cfg.ne_path);
    CHECK(back.dt_path == cfg.dt_path);
    CHECK(back.log_path == cfg.log_path);
    CHECK(back.stopwords_path == cfg.stopwords_path);
    CHECK(back.output_dir == cfg.output_dir);
    CHECK(back.seed == cfg.seed);
    CHECK(back.ensemble.k_min == cfg.ensemble.k_min);
    CHECK(back.ensemble.k_max == cfg.ensemble.k_max);
    CHECK(back.ensemble.seeds_per_k == cfg.ensemble.seeds_per_k);
    REQUIRE(back.weights.size() == cfg.weights.size());
    for (size_t i = 0; i < cfg.weights.size(); ++i) {
        CHECK(back.weights[i].alpha == cfg.weights[i].alpha);
        CHECK(back.weights[i].beta == cfg.weights[i].beta);
        CHECK(back.weights[i].theta == cfg.weights[i].theta);
    }
    REQUIRE(back.granularities.size() == cfg.granularities.size());
    for (size_t i = 0; i < cfg.granularities.size(); ++i) {
        CHECK(back.granularities[i].min_items == cfg.granularities[i].min_items);
        CHECK(back.granularities[i].max_items == cfg.granularities[i].max_items);
    }
    CHECK(back.algorithms == cfg.algorithms);
    CHECK(back.recsys.k == cfg.recsys.k);
    CHECK(back.recsys.tau == cfg.recsys.tau);
    CHECK(back.recsys.candidate_pool == cfg.recsys.candidate_pool);
    CHECK(back.eval.n_values == cfg.eval.n_values);
    CHECK(back.eval.folds == cfg.eval.folds);
    CHECK(back.eval.context_source == cfg.eval.context_source);
    CHECK(back.eval.inner_validation_fraction == cfg.eval.inner_validation_fraction);
    CHECK(back.eval.inner_f1_n == cfg.eval.inner_f1_n);
    CHECK(back.eval.inner_map_n == cfg.eval.inner_map_n);
    CHECK(back.label_terms == cfg.label_terms);
    CHECK(back.workers == cfg.workers);
}

TEST_CASE("config loader rejects unknown keys and unreadable files") {
    fs::path dir = fresh_dir("cfgbad");

    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream out(dir / name);
        out << body;
        return (dir / name).string();
    };

    std::string top = write("top.json", R"({"corpus": "x", "bogus": 1})");
    std::string m1 = message_of([&] { load_config(top); });
    CHECK(m1.find("unknown key 'bogus'") != std::string::npos);

    std::string nested = write("nested.json", R"({"eval": {"n": [5], "foo": 1}})");
    std::string m2 = message_of([&] { load_config(nested); });
    CHECK(m2.find("unknown key 'foo'") != std::string::npos);
    CHECK(m2.find("eval") != std::string::npos);

    std::string broken = write("broken.json", "{\"corpus\": ");
    CHECK_THROWS_AS(load_config(broken), std::exception);

    CHECK_THROWS_AS(load_config((dir / "missing.json").string()), std::exception);
}

TEST_CASE("stages compose through the artifact cache") {
    RunConfig cfg = base_config("staged");

    // Ingest computes the views once; a second call is a pure cache hit.
    PipelineStats s1 = run_ingest(cfg);
    CHECK(s1.computed.at("views") == 1);
    CHECK(s1.total_cache_hits() == 0);
    PipelineStats s1b = run_ingest(cfg);
    CHECK(s1b.total_computed() == 0);
    CHECK(s1b.cache_hits.at("views") == 1);

    // Clustering reuses the views and adds one co-association matrix per view
    // plus one consensus matrix per weight row.
    PipelineStats s2 = run_cluster(cfg);
    CHECK(s2.cache_hits.at("views") == 1);
    CHECK(s2.computed.at("coassoc") == 3);
    CHECK(s2.computed.at("consensus") == 1);

    // Topics add the dendrogram and one model per (weight, granularity).
    PipelineStats s3 = run_topics(cfg);
    CHECK(s3.cache_hits.at("consensus") == 1);
    CHECK(s3.computed.at("dendrogram") == 1);
    CHECK(s3.computed.at("topics") == 1);
    CHECK(s3.total_computed() == 2);

    // The full run only has the evaluation left: the baseline cell plus one
    // cell per contextual strategy.
    PipelineResult r = run_all(cfg);
    CHECK(r.stats.computed.at("evaluate") == 3);
    CHECK(r.stats.computed.count("views") == 0);
    CHECK(r.stats.cache_hits.at("topics") == 1);

    REQUIRE(r.report.baseline.size() == 2);
    for (const auto& b : r.report.baseline) {
        CHECK(b.algorithm == "ibcf");
        CHECK(b.weight_id == "-");
        CHECK(b.granularity_id == "-");
        CHECK(b.error.empty());
        CHECK(b.fold_map.size() == 10);
        CHECK(b.mean >= 0.0);
        CHECK(b.mean <= 1.0);
    }
    REQUIRE(r.report.cells.size() == 4);  // 1 weight x 1 granularity x 2 algos x 2 Ns
    for (const auto& c : r.report.cells) {
        INFO(c.algorithm, " @", c.n);
        CHECK(c.error.empty());
        CHECK(c.weight_id == "a0.5_b0.25_t0.25");
        CHECK(c.granularity_id == "g2-7");
        CHECK((c.algorithm == "weight_pof" || c.algorithm == "filter_pof"));
        CHECK(c.fold_map.size() == 10);
        CHECK(c.p >= 0.0);
        CHECK(c.p <= 1.0);
    }

    // Report artifacts: header plus one row per fold per cell in report.csv,
    // one row per cell in summary.csv.
    std::string rc = slurp(report_csv_path(cfg));
    CHECK(rc.rfind("weight,granularity,algorithm,n,fold,map\n", 0) == 0);
    CHECK(count_lines(rc) == 1 + 2 * 10 + 4 * 10);
    std::string sc = slurp(summary_csv_path(cfg));
    CHECK(sc.rfind(
              "weight,granularity,algorithm,n,mean_map,sd,t_vs_baseline,"
              "p_value,significant,error\n",
              0) == 0);
    CHECK(count_lines(sc) == 1 + 2 + 4);
    std::string rt = slurp(report_txt_path(cfg));
    CHECK(rt.find("TOPIC-AS-CONTEXT RECOMMENDATION REPORT") != std::string::npos);
    CHECK(rt.find("BASELINE ibcf") != std::string::npos);
    CHECK(rt.find("GRANULARITY g2-7") != std::string::npos);
    CHECK(rt.find("Failed cells: (none)") != std::string::npos);

    // Rerun with unchanged inputs: nothing recomputed, same numbers.
    PipelineResult again = run_all(cfg);
    CHECK(again.stats.total_computed() == 0);
    CHECK(again.stats.total_cache_hits() > 0);
    REQUIRE(again.report.cells.size() == r.report.cells.size());
    for (size_t i = 0; i < r.report.cells.size(); ++i) {
        CHECK(again.report.cells[i].fold_map == r.report.cells[i].fold_map);
        CHECK(again.report.cells[i].mean == r.report.cells[i].mean);
        CHECK(again.report.cells[i].t == r.report.cells[i].t);
        CHECK(again.report.cells[i].p == r.report.cells[i].p);
    }

    // Model export is not part of run-all; it writes the per-fold artifacts.
    PipelineStats st = run_train(cfg);
    CHECK(st.computed.at("train") >= 1);
    for (int f = 0; f < 10; ++f) {
        CHECK(fs::exists(fs::path(cfg.output_dir) / "models" /
                         ("ibcf_fold" + std::to_string(f) + ".txt")));
    }
    CHECK(fs::exists(fs::path(cfg.output_dir) / "models" /
                     "prob_a0.5_b0.25_t0.25_g2-7_fold0.txt"));

    // A different seed keeps the seed-independent views cached but invalidates
    // every seeded stage downstream.
    RunConfig flipped = cfg;
    flipped.seed = 18;
    PipelineResult rf = run_all(flipped);
    CHECK(rf.stats.cache_hits.at("views") == 1);
    CHECK(rf.stats.computed.at("coassoc") == 3);
    CHECK(rf.stats.computed.at("evaluate") == 3);
}

TEST_CASE("a fresh output directory reproduces the reports byte for byte") {
    RunConfig cfg1 = base_config("repro1");
    run_all(cfg1);
    RunConfig cfg2 = cfg1;
    cfg2.output_dir = fresh_dir("repro2").string();
    run_all(cfg2);

    CHECK(slurp(report_csv_path(cfg1)) == slurp(report_csv_path(cfg2)));
    CHECK(slurp(summary_csv_path(cfg1)) == slurp(summary_csv_path(cfg2)));
    CHECK(slurp(report_txt_path(cfg1)) == slurp(report_txt_path(cfg2)));
}

TEST_CASE("entry points reject an invalid configuration with the full list") {
    RunConfig cfg = base_config("badrun");
    cfg.corpus_path += ".nope";
    cfg.recsys.tau = -1.0;
    std::string msg = message_of([&] { run_all(cfg); });
    CHECK(msg.find("invalid configuration") != std::string::npos);
    CHECK(msg.find("corpus") != std::string::npos);
    CHECK(msg.find("tau") != std::string::npos);
}
