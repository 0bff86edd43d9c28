#include "topicrec/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace topicrec {

namespace {

std::string fmt17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string hex64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file: " + path);
    uint64_t h = 14695981039346656037ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    return h;
}

bool file_exists(const std::string& path) {
    std::error_code ec;
    return fs::exists(path, ec);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

}  // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.weights = consensus_weight_grid();
    cfg.granularities = {{50, 100}, {15, 20}, {2, 7}};
    cfg.algorithms = kAlgorithms;
    return cfg;
}

namespace {

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            throw std::runtime_error("config: unknown key '" + it.key() + "' in " + where);
        }
    }
}

}  // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("config must be a JSON object");
    check_keys(j, {"corpus", "annotations", "log", "stopwords", "output", "seed",
                   "ensemble", "weights", "granularities", "algorithms", "recsys",
                   "eval", "label_terms", "workers"},
               "top level");

    RunConfig cfg = default_run_config();
    if (j.contains("corpus")) cfg.corpus_path = j.at("corpus").get<std::string>();
    if (j.contains("annotations")) {
        const auto& a = j.at("annotations");
        check_keys(a, {"named_entity", "domain_term"}, "annotations");
        if (a.contains("named_entity")) cfg.ne_path = a.at("named_entity").get<std::string>();
        if (a.contains("domain_term")) cfg.dt_path = a.at("domain_term").get<std::string>();
    }
    if (j.contains("log")) cfg.log_path = j.at("log").get<std::string>();
    if (j.contains("stopwords")) cfg.stopwords_path = j.at("stopwords").get<std::string>();
    if (j.contains("output")) cfg.output_dir = j.at("output").get<std::string>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    if (j.contains("ensemble")) {
        const auto& e = j.at("ensemble");
        check_keys(e, {"k_min", "k_max", "seeds_per_k"}, "ensemble");
        if (e.contains("k_min")) cfg.ensemble.k_min = e.at("k_min").get<int>();
        if (e.contains("k_max")) cfg.ensemble.k_max = e.at("k_max").get<int>();
        if (e.contains("seeds_per_k")) cfg.ensemble.seeds_per_k = e.at("seeds_per_k").get<int>();
    }
    if (j.contains("weights")) {
        cfg.weights.clear();
        for (const auto& w : j.at("weights")) {
            check_keys(w, {"alpha", "beta", "theta"}, "weights entry");
            ConsensusConfig c;
            c.alpha = w.at("alpha").get<double>();
            c.beta = w.at("beta").get<double>();
            c.theta = w.at("theta").get<double>();
            cfg.weights.push_back(c);
        }
    }
    if (j.contains("granularities")) {
        cfg.granularities.clear();
        for (const auto& g : j.at("granularities")) {
            check_keys(g, {"min", "max"}, "granularities entry");
            cfg.granularities.push_back({g.at("min").get<int>(), g.at("max").get<int>()});
        }
    }
    if (j.contains("algorithms")) {
        cfg.algorithms = j.at("algorithms").get<std::vector<std::string>>();
    }
    if (j.contains("recsys")) {
        const auto& r = j.at("recsys");
        check_keys(r, {"k", "tau", "candidate_pool"}, "recsys");
        if (r.contains("k")) cfg.recsys.k = r.at("k").get<int>();
        if (r.contains("tau")) cfg.recsys.tau = r.at("tau").get<double>();
        if (r.contains("candidate_pool")) {
            cfg.recsys.candidate_pool = r.at("candidate_pool").get<int>();
        }
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        check_keys(e, {"n", "folds", "context_source", "inner_validation_fraction",
                       "inner_f1_n", "inner_map_n"},
                   "eval");
        if (e.contains("n")) cfg.eval.n_values = e.at("n").get<std::vector<int>>();
        if (e.contains("folds")) cfg.eval.folds = e.at("folds").get<int>();
        if (e.contains("context_source")) {
            cfg.eval.context_source =
                context_source_from_string(e.at("context_source").get<std::string>());
        }
        if (e.contains("inner_validation_fraction")) {
            cfg.eval.inner_validation_fraction =
                e.at("inner_validation_fraction").get<double>();
        }
        if (e.contains("inner_f1_n")) cfg.eval.inner_f1_n = e.at("inner_f1_n").get<int>();
        if (e.contains("inner_map_n")) cfg.eval.inner_map_n = e.at("inner_map_n").get<int>();
    }
    if (j.contains("label_terms")) cfg.label_terms = j.at("label_terms").get<int>();
    if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
    return cfg;
}

void save_config(const RunConfig& cfg, const std::string& path) {
    json j;
    j["corpus"] = cfg.corpus_path;
    j["annotations"] = {{"named_entity", cfg.ne_path}, {"domain_term", cfg.dt_path}};
    j["log"] = cfg.log_path;
    if (!cfg.stopwords_path.empty()) j["stopwords"] = cfg.stopwords_path;
    j["output"] = cfg.output_dir;
    j["seed"] = cfg.seed;
    j["ensemble"] = {{"k_min", cfg.ensemble.k_min},
                     {"k_max", cfg.ensemble.k_max},
                     {"seeds_per_k", cfg.ensemble.seeds_per_k}};
    j["weights"] = json::array();
    for (const auto& w : cfg.weights) {
        j["weights"].push_back({{"alpha", w.alpha}, {"beta", w.beta}, {"theta", w.theta}});
    }
    j["granularities"] = json::array();
    for (const auto& g : cfg.granularities) {
        j["granularities"].push_back({{"min", g.min_items}, {"max", g.max_items}});
    }
    j["algorithms"] = cfg.algorithms;
    j["recsys"] = {{"k", cfg.recsys.k},
                   {"tau", cfg.recsys.tau},
                   {"candidate_pool", cfg.recsys.candidate_pool}};
    j["eval"] = {{"n", cfg.eval.n_values},
                 {"folds", cfg.eval.folds},
                 {"context_source", context_source_name(cfg.eval.context_source)},
                 {"inner_validation_fraction", cfg.eval.inner_validation_fraction},
                 {"inner_f1_n", cfg.eval.inner_f1_n},
                 {"inner_map_n", cfg.eval.inner_map_n}};
    j["label_terms"] = cfg.label_terms;
    j["workers"] = cfg.workers;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config: " + path);
    out << j.dump(2) << '\n';
}

std::vector<std::string> validate_config(const RunConfig& cfg) {
    std::vector<std::string> bad;
    auto need_file = [&](const std::string& p, const std::string& what) {
        if (p.empty()) bad.push_back(what + " path is empty");
        else if (!file_exists(p)) bad.push_back(what + " path does not exist: " + p);
    };
    need_file(cfg.corpus_path, "corpus");
    need_file(cfg.ne_path, "named-entity annotations");
    need_file(cfg.dt_path, "domain-term annotations");
    need_file(cfg.log_path, "access log");
    if (!cfg.stopwords_path.empty() && !file_exists(cfg.stopwords_path)) {
        bad.push_back("stopwords path does not exist: " + cfg.stopwords_path);
    }
    if (cfg.output_dir.empty()) bad.push_back("output directory is empty");

    if (cfg.ensemble.k_min < 2) bad.push_back("ensemble.k_min must be >= 2");
    if (cfg.ensemble.k_max != 0 && cfg.ensemble.k_max < cfg.ensemble.k_min) {
        bad.push_back("ensemble.k_max must be 0 (auto) or >= k_min");
    }
    if (cfg.ensemble.seeds_per_k < 1) bad.push_back("ensemble.seeds_per_k must be >= 1");

    if (cfg.weights.empty()) bad.push_back("weights grid is empty");
    for (size_t i = 0; i < cfg.weights.size(); ++i) {
        try {
            cfg.weights[i].validate();
        } catch (const std::exception& e) {
            bad.push_back("weights[" + std::to_string(i) + "]: " + e.what());
        }
    }
    if (cfg.granularities.empty()) bad.push_back("granularities list is empty");
    for (size_t i = 0; i < cfg.granularities.size(); ++i) {
        try {
            cfg.granularities[i].validate();
        } catch (const std::exception& e) {
            bad.push_back("granularities[" + std::to_string(i) + "]: " + e.what());
        }
    }
    if (cfg.algorithms.empty()) bad.push_back("algorithms list is empty");
    std::set<std::string> seen;
    for (const auto& a : cfg.algorithms) {
        if (std::find(kAlgorithms.begin(), kAlgorithms.end(), a) == kAlgorithms.end()) {
            bad.push_back("unknown algorithm: " + a);
        } else if (!seen.insert(a).second) {
            bad.push_back("duplicate algorithm: " + a);
        }
    }

    if (cfg.recsys.k < 1) bad.push_back("recsys.k must be >= 1");
    if (cfg.recsys.tau < 0.0 || cfg.recsys.tau > 1.0) {
        bad.push_back("recsys.tau must lie in [0,1]");
    }
    if (cfg.eval.n_values.empty()) bad.push_back("eval.n list is empty");
    int max_n = 1;
    for (int n : cfg.eval.n_values) {
        if (n < 1) bad.push_back("eval.n values must be >= 1");
        max_n = std::max(max_n, n);
    }
    if (cfg.recsys.candidate_pool < max_n) {
        bad.push_back("recsys.candidate_pool must be >= the largest eval.n");
    }
    if (cfg.eval.folds < 2) bad.push_back("eval.folds must be >= 2");
    if (!(cfg.eval.inner_validation_fraction > 0.0 &&
          cfg.eval.inner_validation_fraction < 1.0)) {
        bad.push_back("eval.inner_validation_fraction must lie in (0,1)");
    }
    if (cfg.eval.inner_f1_n < 1) bad.push_back("eval.inner_f1_n must be >= 1");
    if (cfg.eval.inner_map_n < 1) bad.push_back("eval.inner_map_n must be >= 1");
    if (cfg.label_terms < 1) bad.push_back("label_terms must be >= 1");
    if (cfg.workers < 0) bad.push_back("workers must be >= 0");
    return bad;
}

void PipelineStats::merge(const PipelineStats& other) {
    for (const auto& [k, v] : other.computed) computed[k] += v;
    for (const auto& [k, v] : other.cache_hits) cache_hits[k] += v;
}

int PipelineStats::total_computed() const {
    int total = 0;
    for (const auto& [k, v] : computed) total += v;
    return total;
}

int PipelineStats::total_cache_hits() const {
    int total = 0;
    for (const auto& [k, v] : cache_hits) total += v;
    return total;
}

std::string report_csv_path(const RunConfig& cfg) { return cfg.output_dir + "/report.csv"; }
std::string summary_csv_path(const RunConfig& cfg) { return cfg.output_dir + "/summary.csv"; }
std::string report_txt_path(const RunConfig& cfg) { return cfg.output_dir + "/report.txt"; }

namespace {

constexpr const char* kBaselineAlgorithm = "ibcf";

// All orchestration state for one configured run.
class Runner {
public:
    explicit Runner(const RunConfig& cfg) : cfg_(cfg) {
        auto bad = validate_config(cfg_);
        if (!bad.empty()) {
            std::string msg = "invalid configuration:";
            for (const auto& b : bad) msg += "\n  - " + b;
            throw std::runtime_error(msg);
        }
        cache_dir_ = cfg_.output_dir + "/cache";
        ensure_dir(cache_dir_);
        models_dir_ = cfg_.output_dir + "/models";
    }

    PipelineStats stats;

    void stage_views();
    void stage_coassoc_all();
    void stage_consensus_all();
    void stage_topics_all();
    void stage_train_export();
    EvalReport stage_evaluate();

private:
    const RunConfig& cfg_;
    std::string cache_dir_;
    std::string models_dir_;
    std::mutex mu_;  // guards stats and lazy fold data in the parallel phase

    // --- corpus (lazy) ---
    bool corpus_loaded_ = false;
    Corpus corpus_;
    PreprocessOptions prep_;
    const Corpus& corpus();

    // --- views ---
    bool views_done_ = false;
    ViewMatrix tech_, ne_, dt_;
    uint64_t tech_hash_ = 0, ne_hash_ = 0, dt_hash_ = 0;
    std::vector<std::string> y_ids_;  // privileged docs present in all views

    // --- co-association ---
    bool coassoc_done_ = false;
    CoAssocMatrix co_tech_, co_ne_, co_dt_;
    uint64_t co_tech_hash_ = 0, co_ne_hash_ = 0, co_dt_hash_ = 0;

    // --- per weight / per (weight, granularity), memoized ---
    struct ConsensusOut {
        CoAssocMatrix m;
        uint64_t hash = 0;
    };
    struct DendroOut {
        Dendrogram d;
        uint64_t hash = 0;
    };
    struct TopicsOut {
        TopicModel model;
        uint64_t hash = 0;  // combined hash of the topic + context artifacts
    };
    std::map<std::string, ConsensusOut> consensus_;
    std::map<std::string, DendroOut> dendro_;
    std::map<std::string, TopicsOut> topics_;

    const ConsensusOut& consensus(size_t widx);
    const DendroOut& dendrogram(size_t widx);
    const TopicsOut& topics(size_t widx, size_t gidx);

    void bump(const std::string& stage, bool hit) {
        std::lock_guard<std::mutex> lock(mu_);
        if (hit) ++stats.cache_hits[stage];
        else ++stats.computed[stage];
    }

    // --- evaluation fold data (lazy; shared by baseline and all cells) ---
    struct CaseBase {
        std::string user;
        std::set<std::string> observed;
        std::string hidden;
        std::vector<ScoredItem> pooled;  // baseline pooled recommendations
    };
    struct Fold {
        std::set<std::string> test_users;
        std::vector<size_t> train_idx;  // event indices into log_
        std::vector<CaseBase> cases;
    };
    bool folds_built_ = false;
    AccessLog log_;
    std::vector<Fold> folds_;
    void ensure_folds();

    using PerN = std::map<int, std::vector<double>>;
    PerN baseline_cell();
    PerN contextual_cell(size_t widx, size_t gidx, const std::string& algo);

    PerN load_cell_json(const std::string& path) const;
    void save_cell_json(const std::string& path, const std::string& algo,
                        const std::string& wid, const std::string& gid,
                        const PerN& per_n) const;

    uint64_t eval_params_hash() const;
    uint64_t ensemble_params_hash() const;
};

const Corpus& Runner::corpus() {
    if (!corpus_loaded_) {
        corpus_ = load_corpus(cfg_.corpus_path, cfg_.ne_path, cfg_.dt_path);
        if (!cfg_.stopwords_path.empty()) {
            prep_.stopwords = load_stopwords(cfg_.stopwords_path);
        }
        corpus_loaded_ = true;
    }
    return corpus_;
}

void Runner::stage_views() {
    if (views_done_) return;

    std::string desc = "views|corpus:" + hex64(hash_file(cfg_.corpus_path)) +
                       "|ne:" + hex64(hash_file(cfg_.ne_path)) +
                       "|dt:" + hex64(hash_file(cfg_.dt_path)) + "|stop:" +
                       (cfg_.stopwords_path.empty()
                            ? std::string("-")
                            : hex64(hash_file(cfg_.stopwords_path)));
    std::string key = hex64(fnv1a64(desc));
    std::string tech_path = cache_dir_ + "/view_technical_" + key + ".txt";
    std::string ne_path = cache_dir_ + "/view_named_entity_" + key + ".txt";
    std::string dt_path = cache_dir_ + "/view_domain_term_" + key + ".txt";
    std::string skip_path = cache_dir_ + "/skips_" + key + ".txt";

    if (file_exists(tech_path) && file_exists(ne_path) && file_exists(dt_path)) {
        bump("views", true);
    } else {
        const Corpus& c = corpus();
        SkipReport skips;
        ViewMatrix t = build_view_matrix(c, View::technical, prep_, &skips);
        ViewMatrix n = build_view_matrix(c, View::named_entity, prep_, &skips);
        ViewMatrix d = build_view_matrix(c, View::domain_term, prep_, &skips);
        save_view_matrix(t, tech_path);
        save_view_matrix(n, ne_path);
        save_view_matrix(d, dt_path);
        skips.write(skip_path);
        bump("views", false);
    }
    tech_ = load_view_matrix(tech_path);
    ne_ = load_view_matrix(ne_path);
    dt_ = load_view_matrix(dt_path);
    tech_.validate();
    ne_.validate();
    dt_.validate();
    tech_hash_ = hash_file(tech_path);
    ne_hash_ = hash_file(ne_path);
    dt_hash_ = hash_file(dt_path);

    // The clusterable privileged subset: docs holding a row in both
    // privileged views (such rows exist only for docs with technical rows).
    std::set<std::string> ne_rows(ne_.row_ids.begin(), ne_.row_ids.end());
    y_ids_.clear();
    for (const auto& id : dt_.row_ids) {
        if (ne_rows.count(id)) y_ids_.push_back(id);
    }
    std::sort(y_ids_.begin(), y_ids_.end());
    if (y_ids_.size() < 2) {
        throw std::runtime_error(
            "privileged subset too small: only " + std::to_string(y_ids_.size()) +
            " documents carry usable annotations of both kinds");
    }
    views_done_ = true;
}

uint64_t Runner::ensemble_params_hash() const {
    std::string desc = "ens|kmin:" + std::to_string(cfg_.ensemble.k_min) +
                       "|kmax:" + std::to_string(cfg_.ensemble.k_max) +
                       "|spk:" + std::to_string(cfg_.ensemble.seeds_per_k) +
                       "|seed:" + std::to_string(cfg_.seed);
    return fnv1a64(desc);
}

void Runner::stage_coassoc_all() {
    if (coassoc_done_) return;
    stage_views();

    uint64_t y_hash;
    {
        std::string joined;
        for (const auto& id : y_ids_) {
            joined += id;
            joined += '\n';
        }
        y_hash = fnv1a64(joined);
    }

    int k_max = cfg_.ensemble.k_max;
    if (k_max == 0) {
        k_max = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(y_ids_.size()))));
    }
    k_max = std::min<int>(k_max, static_cast<int>(y_ids_.size()));
    if (k_max < cfg_.ensemble.k_min) {
        throw std::runtime_error("ensemble k range is empty: k_min " +
                                 std::to_string(cfg_.ensemble.k_min) + " > k_max " +
                                 std::to_string(k_max));
    }

    std::set<std::string> y_set(y_ids_.begin(), y_ids_.end());
    auto one_view = [&](const ViewMatrix& view, uint64_t view_hash, CoAssocMatrix& out,
                        uint64_t& out_hash) {
        std::string desc = "coassoc|view:" + hex64(view_hash) + "|y:" + hex64(y_hash) +
                           "|" + hex64(ensemble_params_hash()) +
                           "|kmax:" + std::to_string(k_max);
        std::string path = cache_dir_ + "/coassoc_" + view_name(view.view) + "_" +
                           hex64(fnv1a64(desc)) + ".txt";
        if (file_exists(path)) {
            bump("coassoc", true);
        } else {
            ViewMatrix rows = restrict_rows(view, y_set);
            EnsembleSpec spec;
            for (int k = cfg_.ensemble.k_min; k <= k_max; ++k) spec.ks.push_back(k);
            spec.seeds_per_k = cfg_.ensemble.seeds_per_k;
            spec.base_seed = cfg_.seed;
            auto partitions = run_ensemble(rows, spec);
            CoAssocMatrix m = co_association(partitions, y_ids_, view_name(view.view));
            save_coassoc(m, path);
            bump("coassoc", false);
        }
        out = load_coassoc(path, view_name(view.view));
        out_hash = hash_file(path);
    };

    one_view(tech_, tech_hash_, co_tech_, co_tech_hash_);
    one_view(ne_, ne_hash_, co_ne_, co_ne_hash_);
    one_view(dt_, dt_hash_, co_dt_, co_dt_hash_);
    coassoc_done_ = true;
}

const Runner::ConsensusOut& Runner::consensus(size_t widx) {
    const ConsensusConfig& w = cfg_.weights[widx];
    const std::string wid = w.id();
    auto it = consensus_.find(wid);
    if (it != consensus_.end()) return it->second;

    stage_coassoc_all();
    std::string desc = "consensus|t:" + hex64(co_tech_hash_) + "|ne:" + hex64(co_ne_hash_) +
                       "|dt:" + hex64(co_dt_hash_) + "|a:" + fmt17(w.alpha) +
                       "|b:" + fmt17(w.beta) + "|th:" + fmt17(w.theta);
    std::string path = cache_dir_ + "/consensus_" + wid + "_" + hex64(fnv1a64(desc)) + ".txt";
    if (file_exists(path)) {
        bump("consensus", true);
    } else {
        CoAssocMatrix m = combine_consensus(co_tech_, co_ne_, co_dt_, w);
        save_coassoc(m, path);
        bump("consensus", false);
    }
    ConsensusOut out;
    out.m = load_coassoc(path, "consensus/" + wid);
    out.hash = hash_file(path);
    return consensus_.emplace(wid, std::move(out)).first->second;
}

const Runner::DendroOut& Runner::dendrogram(size_t widx) {
    const std::string wid = cfg_.weights[widx].id();
    auto it = dendro_.find(wid);
    if (it != dendro_.end()) return it->second;

    const ConsensusOut& cons = consensus(widx);
    std::string desc = "dendro|c:" + hex64(cons.hash);
    std::string path = cache_dir_ + "/dendro_" + wid + "_" + hex64(fnv1a64(desc)) + ".txt";
    if (file_exists(path)) {
        bump("dendrogram", true);
    } else {
        Dendrogram d = agglomerate(cons.m);
        save_dendrogram(d, path);
        bump("dendrogram", false);
    }
    DendroOut out;
    out.d = load_dendrogram(path);
    out.hash = hash_file(path);
    return dendro_.emplace(wid, std::move(out)).first->second;
}

const Runner::TopicsOut& Runner::topics(size_t widx, size_t gidx) {
    const std::string wid = cfg_.weights[widx].id();
    const Granularity g = cfg_.granularities[gidx];
    const std::string memo_key = wid + "/" + g.id();
    auto it = topics_.find(memo_key);
    if (it != topics_.end()) return it->second;

    const DendroOut& den = dendrogram(widx);
    std::string desc = "topics|d:" + hex64(den.hash) + "|t:" + hex64(tech_hash_) +
                       "|ne:" + hex64(ne_hash_) + "|dt:" + hex64(dt_hash_) +
                       "|corpus:" + hex64(hash_file(cfg_.corpus_path)) + "|g:" + g.id() +
                       "|labels:" + std::to_string(cfg_.label_terms);
    std::string key = hex64(fnv1a64(desc));
    std::string topics_path = cache_dir_ + "/topics_" + wid + "_" + g.id() + "_" + key + ".txt";
    std::string contexts_path =
        cache_dir_ + "/contexts_" + wid + "_" + g.id() + "_" + key + ".txt";

    if (file_exists(topics_path) && file_exists(contexts_path)) {
        bump("topics", true);
    } else {
        TopicModel model = build_topic_model(den.d, g, tech_, cfg_.label_terms);
        std::vector<std::string> remainder;
        for (const auto& d : corpus().docs) {
            if (!model.doc_topic.count(d.doc_id)) remainder.push_back(d.doc_id);
        }
        insert_remainder(model, tech_, remainder);
        save_topic_model(model, topics_path, contexts_path);
        bump("topics", false);
    }
    TopicsOut out;
    out.model = load_topic_model(topics_path, contexts_path);
    out.hash = fnv1a64("pair|" + hex64(hash_file(topics_path)) + "|" +
                       hex64(hash_file(contexts_path)));
    return topics_.emplace(memo_key, std::move(out)).first->second;
}

void Runner::stage_consensus_all() {
    for (size_t w = 0; w < cfg_.weights.size(); ++w) consensus(w);
}

void Runner::stage_topics_all() {
    for (size_t w = 0; w < cfg_.weights.size(); ++w) {
        for (size_t g = 0; g < cfg_.granularities.size(); ++g) topics(w, g);
    }
}

void Runner::ensure_folds() {
    std::lock_guard<std::mutex> lock(mu_);
    if (folds_built_) return;

    log_ = load_access_log(cfg_.log_path);
    auto eligible = eligible_users(log_);
    FoldPlan plan = make_folds(eligible, cfg_.seed, cfg_.eval.folds);

    const uint64_t case_seed = derive_seed(cfg_.seed, "cases");
    folds_.resize(cfg_.eval.folds);
    for (int f = 0; f < cfg_.eval.folds; ++f) {
        Fold& fold = folds_[f];
        fold.test_users = plan.fold_users(f);

        AccessLog train;
        for (size_t i = 0; i < log_.events.size(); ++i) {
            if (!fold.test_users.count(log_.events[i].user)) {
                fold.train_idx.push_back(i);
                train.events.push_back(log_.events[i]);
            }
        }
        SimilarityModel model = build_ibcf(train, cfg_.recsys.k);

        auto cases = make_cases(log_, fold.test_users, case_seed, cfg_.eval.context_source);
        for (auto& c : cases) {
            CaseBase base;
            base.user = c.user;
            base.observed = c.observed;
            base.hidden = c.hidden;
            base.pooled = recommend(model, c.observed, cfg_.recsys.candidate_pool);
            fold.cases.push_back(std::move(base));
        }
        if (fold.cases.empty()) {
            throw std::runtime_error("fold " + std::to_string(f) + " has no usable cases");
        }
    }
    folds_built_ = true;
}

uint64_t Runner::eval_params_hash() const {
    std::string desc = "eval|k:" + std::to_string(cfg_.recsys.k) +
                       "|tau:" + fmt17(cfg_.recsys.tau) +
                       "|pool:" + std::to_string(cfg_.recsys.candidate_pool) + "|n:";
    for (int n : cfg_.eval.n_values) desc += std::to_string(n) + ",";
    desc += "|folds:" + std::to_string(cfg_.eval.folds);
    desc += "|src:" + std::string(context_source_name(cfg_.eval.context_source));
    desc += "|frac:" + fmt17(cfg_.eval.inner_validation_fraction);
    desc += "|f1n:" + std::to_string(cfg_.eval.inner_f1_n);
    desc += "|mapn:" + std::to_string(cfg_.eval.inner_map_n);
    desc += "|seed:" + std::to_string(cfg_.seed);
    return fnv1a64(desc);
}

Runner::PerN Runner::load_cell_json(const std::string& path) const {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open eval cell: " + path);
    json j = json::parse(in);
    PerN per_n;
    for (const auto& [key, values] : j.at("per_n").items()) {
        per_n[std::stoi(key)] = values.get<std::vector<double>>();
    }
    return per_n;
}

void Runner::save_cell_json(const std::string& path, const std::string& algo,
                            const std::string& wid, const std::string& gid,
                            const PerN& per_n) const {
    json j;
    j["algorithm"] = algo;
    j["weight"] = wid;
    j["granularity"] = gid;
    json per;
    for (const auto& [n, values] : per_n) per[std::to_string(n)] = values;
    j["per_n"] = per;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write eval cell: " + path);
    out << j.dump(2) << '\n';
}

Runner::PerN Runner::baseline_cell() {
    std::string desc = "baseline|log:" + hex64(hash_file(cfg_.log_path)) + "|" +
                       hex64(eval_params_hash());
    std::string path = cache_dir_ + "/eval_baseline_" + hex64(fnv1a64(desc)) + ".json";
    if (file_exists(path)) {
        bump("evaluate", true);
        return load_cell_json(path);
    }
    ensure_folds();
    PerN per_n;
    for (int n : cfg_.eval.n_values) {
        std::vector<double>& fold_map = per_n[n];
        for (const auto& fold : folds_) {
            std::vector<RankedCase> ranked;
            for (const auto& c : fold.cases) ranked.push_back({c.pooled, c.hidden});
            fold_map.push_back(map_at_n(ranked, n));
        }
    }
    save_cell_json(path, kBaselineAlgorithm, "-", "-", per_n);
    bump("evaluate", false);
    return load_cell_json(path);
}

Runner::PerN Runner::contextual_cell(size_t widx, size_t gidx, const std::string& algo) {
    const std::string wid = cfg_.weights[widx].id();
    const std::string gid = cfg_.granularities[gidx].id();
    const TopicsOut& ts = topics_.at(wid + "/" + gid);  // prebuilt before parallel phase

    std::string desc = "cell|log:" + hex64(hash_file(cfg_.log_path)) +
                       "|ctx:" + hex64(ts.hash) + "|algo:" + algo + "|" +
                       hex64(eval_params_hash());
    std::string path = cache_dir_ + "/eval_" + algo + "_" + wid + "_" + gid + "_" +
                       hex64(fnv1a64(desc)) + ".json";
    if (file_exists(path)) {
        bump("evaluate", true);
        return load_cell_json(path);
    }

    ensure_folds();
    AccessLog ctx_log = log_;
    attach_contexts(ctx_log, ts.model.doc_topic);

    std::set<std::string> context_set;
    for (const auto& t : ts.model.topics) context_set.insert(t.topic_id);

    const uint64_t case_seed = derive_seed(cfg_.seed, "cases");
    int rec_n = 1;
    for (int n : cfg_.eval.n_values) rec_n = std::max(rec_n, n);

    PerN per_n;
    for (int n : cfg_.eval.n_values) per_n[n] = {};

    for (size_t f = 0; f < folds_.size(); ++f) {
        const Fold& fold = folds_[f];
        AccessLog ctx_train;
        ctx_train.events.reserve(fold.train_idx.size());
        for (size_t idx : fold.train_idx) ctx_train.events.push_back(ctx_log.events[idx]);

        auto cases = make_cases(ctx_log, fold.test_users, case_seed,
                                cfg_.eval.context_source);
        if (cases.size() != fold.cases.size()) {
            throw std::runtime_error("case set mismatch in fold " + std::to_string(f));
        }

        InnerSplit inner;
        inner.validation_fraction = cfg_.eval.inner_validation_fraction;
        inner.f1_n = cfg_.eval.inner_f1_n;
        inner.map_n = cfg_.eval.inner_map_n;
        inner.source = cfg_.eval.context_source;
        inner.seed = derive_seed(cfg_.seed, "inner/" + wid + "/" + gid + "/" + algo +
                                                "/fold" + std::to_string(f));

        std::vector<RankedCase> ranked(cases.size());
        if (algo == "c_reduction") {
            CReductionModel model = train_c_reduction(ctx_train, cfg_.recsys.k, inner);
            for (size_t i = 0; i < cases.size(); ++i) {
                ranked[i] = {predict_c_reduction(model, cases[i].observed,
                                                 cases[i].active_context, rec_n),
                             cases[i].hidden};
            }
        } else if (algo == "davi_best") {
            std::vector<ContextDimension> dims{{"topics", ts.model.doc_topic}};
            DaViModel model = train_davi_best(ctx_train, dims, cfg_.recsys.k, inner);
            for (size_t i = 0; i < cases.size(); ++i) {
                ranked[i] = {predict_davi(model, cases[i].observed, rec_n),
                             cases[i].hidden};
            }
        } else if (algo == "weight_pof" || algo == "filter_pof") {
            ProbabilityTable table =
                estimate_context_probability(ctx_train, context_set, 1.0);
            for (size_t i = 0; i < cases.size(); ++i) {
                if (cases[i].user != fold.cases[i].user) {
                    throw std::runtime_error("case order mismatch in fold " +
                                             std::to_string(f));
                }
                const auto& pooled = fold.cases[i].pooled;
                if (algo == "weight_pof") {
                    ranked[i] = {weight_pof(pooled, table, cases[i].active_context),
                                 cases[i].hidden};
                } else {
                    ranked[i] = {filter_pof(pooled, table, cases[i].active_context,
                                            cfg_.recsys.tau),
                                 cases[i].hidden};
                }
            }
        } else {
            throw std::runtime_error("unknown algorithm: " + algo);
        }

        for (int n : cfg_.eval.n_values) per_n[n].push_back(map_at_n(ranked, n));
    }

    save_cell_json(path, algo, wid, gid, per_n);
    bump("evaluate", false);
    return load_cell_json(path);
}

EvalReport Runner::stage_evaluate() {
    stage_topics_all();

    EvalReport report;
    PerN baseline = baseline_cell();
    for (int n : cfg_.eval.n_values) {
        CellSummary s;
        s.weight_id = "-";
        s.granularity_id = "-";
        s.algorithm = kBaselineAlgorithm;
        s.n = n;
        s.fold_map = baseline.at(n);
        s.mean = mean(s.fold_map);
        s.sd = sample_sd(s.fold_map);
        report.baseline.push_back(std::move(s));
    }

    struct CellJob {
        size_t widx, gidx;
        std::string algo;
        PerN per_n;
        std::string error;
    };
    std::vector<CellJob> jobs;
    for (size_t w = 0; w < cfg_.weights.size(); ++w) {
        for (size_t g = 0; g < cfg_.granularities.size(); ++g) {
            for (const auto& algo : cfg_.algorithms) {
                jobs.push_back({w, g, algo, {}, {}});
            }
        }
    }

    unsigned workers = cfg_.workers > 0 ? static_cast<unsigned>(cfg_.workers)
                                        : std::thread::hardware_concurrency();
    if (workers == 0) workers = 1;
    workers = std::min<unsigned>(workers, 8);
    workers = std::min<unsigned>(workers, static_cast<unsigned>(jobs.size()));
    if (workers == 0) workers = 1;

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= jobs.size()) break;
            try {
                jobs[i].per_n = contextual_cell(jobs[i].widx, jobs[i].gidx, jobs[i].algo);
            } catch (const std::exception& e) {
                jobs[i].error = e.what();
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (const auto& job : jobs) {
        const std::string wid = cfg_.weights[job.widx].id();
        const std::string gid = cfg_.granularities[job.gidx].id();
        for (int n : cfg_.eval.n_values) {
            CellSummary s;
            s.weight_id = wid;
            s.granularity_id = gid;
            s.algorithm = job.algo;
            s.n = n;
            if (!job.error.empty()) {
                s.error = job.error;
            } else {
                s.fold_map = job.per_n.at(n);
                s.mean = mean(s.fold_map);
                s.sd = sample_sd(s.fold_map);
                TTestResult tt = paired_t_test(s.fold_map, baseline.at(n));
                s.t = tt.t;
                s.p = tt.p;
                s.significant = tt.significant;
            }
            report.cells.push_back(std::move(s));
        }
    }
    return report;
}

void Runner::stage_train_export() {
    ensure_folds();
    stage_topics_all();
    ensure_dir(models_dir_);

    for (size_t f = 0; f < folds_.size(); ++f) {
        AccessLog train;
        for (size_t idx : folds_[f].train_idx) train.events.push_back(log_.events[idx]);
        SimilarityModel model = build_ibcf(train, cfg_.recsys.k);
        save_similarity(model, models_dir_ + "/ibcf_fold" + std::to_string(f) + ".txt");
        bump("train", false);
    }

    for (size_t w = 0; w < cfg_.weights.size(); ++w) {
        for (size_t g = 0; g < cfg_.granularities.size(); ++g) {
            const TopicsOut& ts = topics(w, g);
            AccessLog ctx_log = log_;
            attach_contexts(ctx_log, ts.model.doc_topic);
            std::set<std::string> context_set;
            for (const auto& t : ts.model.topics) context_set.insert(t.topic_id);
            for (size_t f = 0; f < folds_.size(); ++f) {
                AccessLog ctx_train;
                for (size_t idx : folds_[f].train_idx) {
                    ctx_train.events.push_back(ctx_log.events[idx]);
                }
                ProbabilityTable table =
                    estimate_context_probability(ctx_train, context_set, 1.0);
                save_probability_table(
                    table, models_dir_ + "/prob_" + cfg_.weights[w].id() + "_" +
                               cfg_.granularities[g].id() + "_fold" + std::to_string(f) +
                               ".txt");
                bump("train", false);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Report rendering.

std::string fmt_map(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

void write_report_files(const RunConfig& cfg, const EvalReport& report) {
    ensure_dir(cfg.output_dir);

    {
        std::ofstream out(report_csv_path(cfg));
        if (!out) throw std::runtime_error("cannot write report.csv");
        out << "weight,granularity,algorithm,n,fold,map\n";
        auto rows = [&](const CellSummary& s) {
            for (size_t f = 0; f < s.fold_map.size(); ++f) {
                out << s.weight_id << ',' << s.granularity_id << ',' << s.algorithm << ','
                    << s.n << ',' << f << ',' << fmt17(s.fold_map[f]) << '\n';
            }
        };
        for (const auto& s : report.baseline) rows(s);
        for (const auto& s : report.cells) {
            if (s.error.empty()) rows(s);
        }
    }

    {
        std::ofstream out(summary_csv_path(cfg));
        if (!out) throw std::runtime_error("cannot write summary.csv");
        out << "weight,granularity,algorithm,n,mean_map,sd,t_vs_baseline,p_value,"
               "significant,error\n";
        for (const auto& s : report.baseline) {
            out << s.weight_id << ',' << s.granularity_id << ',' << s.algorithm << ','
                << s.n << ',' << fmt17(s.mean) << ',' << fmt17(s.sd) << ",,,,\n";
        }
        for (const auto& s : report.cells) {
            out << s.weight_id << ',' << s.granularity_id << ',' << s.algorithm << ','
                << s.n << ',';
            if (s.error.empty()) {
                out << fmt17(s.mean) << ',' << fmt17(s.sd) << ',' << fmt17(s.t) << ','
                    << fmt17(s.p) << ',' << (s.significant ? "true" : "false") << ',';
            } else {
                out << ",,,,," << csv_quote(s.error);
            }
            out << '\n';
        }
    }

    {
        std::ofstream out(report_txt_path(cfg));
        if (!out) throw std::runtime_error("cannot write report.txt");
        out << "TOPIC-AS-CONTEXT RECOMMENDATION REPORT\n";
        out << "======================================\n\n";
        out << "folds=" << cfg.eval.folds << "  k=" << cfg.recsys.k
            << "  tau=" << fmt_map(cfg.recsys.tau)
            << "  pool=" << cfg.recsys.candidate_pool << "  seed=" << cfg.seed
            << "  context=" << context_source_name(cfg.eval.context_source) << "\n\n";

        out << "BASELINE " << kBaselineAlgorithm << "\n";
        for (const auto& s : report.baseline) {
            out << "  MAP@" << s.n << " = " << fmt_map(s.mean) << "  (sd "
                << fmt_map(s.sd) << ")\n";
        }
        out << "\n";

        auto find_cell = [&](const std::string& wid, const std::string& gid,
                             const std::string& algo, int n) -> const CellSummary* {
            for (const auto& s : report.cells) {
                if (s.weight_id == wid && s.granularity_id == gid &&
                    s.algorithm == algo && s.n == n) {
                    return &s;
                }
            }
            return nullptr;
        };

        char buf[64];
        for (const auto& g : cfg.granularities) {
            out << "GRANULARITY " << g.id() << "\n";
            for (int n : cfg.eval.n_values) {
                out << "  N=" << n << "\n";
                std::snprintf(buf, sizeof buf, "    %-22s", "weight");
                out << buf;
                for (const auto& algo : cfg.algorithms) {
                    std::snprintf(buf, sizeof buf, "%-14s", algo.c_str());
                    out << buf;
                }
                out << "\n";
                for (const auto& w : cfg.weights) {
                    std::snprintf(buf, sizeof buf, "    %-22s", w.id().c_str());
                    out << buf;
                    for (const auto& algo : cfg.algorithms) {
                        const CellSummary* s = find_cell(w.id(), g.id(), algo, n);
                        std::string cell;
                        if (!s) {
                            cell = "-";
                        } else if (!s->error.empty()) {
                            cell = "failed";
                        } else {
                            cell = fmt_map(s->mean) + (s->significant ? "*" : "");
                        }
                        std::snprintf(buf, sizeof buf, "%-14s", cell.c_str());
                        out << buf;
                    }
                    out << "\n";
                }
            }
            out << "\n";
        }
        out << "*  p < 0.05 against the baseline (two-sided paired t-test)\n";

        std::vector<const CellSummary*> failed;
        std::set<std::string> seen;
        for (const auto& s : report.cells) {
            if (!s.error.empty()) {
                std::string key = s.weight_id + "/" + s.granularity_id + "/" + s.algorithm;
                if (seen.insert(key).second) failed.push_back(&s);
            }
        }
        out << "\nFailed cells: ";
        if (failed.empty()) {
            out << "(none)\n";
        } else {
            out << failed.size() << "\n";
            for (const auto* s : failed) {
                out << "  " << s->weight_id << " " << s->granularity_id << " "
                    << s->algorithm << ": " << s->error << "\n";
            }
        }
    }
}

}  // namespace

PipelineStats run_ingest(const RunConfig& cfg) {
    Runner r(cfg);
    r.stage_views();
    return r.stats;
}

PipelineStats run_cluster(const RunConfig& cfg) {
    Runner r(cfg);
    r.stage_coassoc_all();
    r.stage_consensus_all();
    return r.stats;
}

PipelineStats run_topics(const RunConfig& cfg) {
    Runner r(cfg);
    r.stage_topics_all();
    return r.stats;
}

PipelineStats run_train(const RunConfig& cfg) {
    Runner r(cfg);
    r.stage_train_export();
    return r.stats;
}

PipelineResult run_evaluate(const RunConfig& cfg) {
    Runner r(cfg);
    PipelineResult result;
    result.report = r.stage_evaluate();
    result.stats = r.stats;
    return result;
}

PipelineResult run_report(const RunConfig& cfg) {
    PipelineResult result = run_evaluate(cfg);
    write_report_files(cfg, result.report);
    return result;
}

PipelineResult run_all(const RunConfig& cfg) {
    return run_report(cfg);
}

}  // namespace topicrec
