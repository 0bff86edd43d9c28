#pragma once

#include <map>
#include <string>
#include <vector>

#include "topicrec/corpus.hpp"
#include "topicrec/ensemble.hpp"
#include "topicrec/eval.hpp"
#include "topicrec/hierarchy.hpp"
#include "topicrec/recsys.hpp"

namespace topicrec {

struct EnsembleConfig {
    int k_min = 2;
    int k_max = 0;  // 0 = ceil(sqrt(|Y|))
    int seeds_per_k = 5;
};

struct RecsysConfig {
    int k = 4;                // neighborhood size
    double tau = 0.1;         // post-filtering threshold
    int candidate_pool = 100; // baseline list length handed to the post-filters
};

struct EvalConfig {
    std::vector<int> n_values{5, 10};
    int folds = 10;
    ContextSource context_source = ContextSource::last_observed;
    double inner_validation_fraction = 0.2;
    int inner_f1_n = 10;
    int inner_map_n = 10;
};

struct RunConfig {
    std::string corpus_path;
    std::string ne_path;
    std::string dt_path;
    std::string log_path;
    std::string stopwords_path;  // optional
    std::string output_dir;
    uint64_t seed = 1;
    EnsembleConfig ensemble;
    std::vector<ConsensusConfig> weights;     // defaults to the canonical grid
    std::vector<Granularity> granularities;   // defaults to {50,100},{15,20},{2,7}
    std::vector<std::string> algorithms;      // defaults to all four strategies
    RecsysConfig recsys;
    EvalConfig eval;
    int label_terms = 5;
    int workers = 0;  // 0 = auto
};

inline const std::vector<std::string> kAlgorithms = {
    "c_reduction", "davi_best", "weight_pof", "filter_pof"};

// Defaults with empty paths; fill the paths and go.
RunConfig default_run_config();

// JSON config file; missing keys fall back to the defaults above.
RunConfig load_config(const std::string& path);
void save_config(const RunConfig& cfg, const std::string& path);

// Every violation, not just the first. Empty result = valid.
std::vector<std::string> validate_config(const RunConfig& cfg);

struct PipelineStats {
    std::map<std::string, int> computed;
    std::map<std::string, int> cache_hits;

    void merge(const PipelineStats& other);
    int total_computed() const;
    int total_cache_hits() const;
};

struct CellSummary {
    std::string weight_id;       // "-" for the baseline
    std::string granularity_id;  // "-" for the baseline
    std::string algorithm;       // "ibcf" or a contextual strategy
    int n = 0;
    std::vector<double> fold_map;
    double mean = 0.0;
    double sd = 0.0;
    double t = 0.0;   // vs baseline; 0 for the baseline itself
    double p = 1.0;
    bool significant = false;
    std::string error;  // non-empty = cell failed, other fields unset
};

struct EvalReport {
    std::vector<CellSummary> baseline;  // one per list size
    std::vector<CellSummary> cells;
};

struct PipelineResult {
    EvalReport report;
    PipelineStats stats;
};

// Stage entry points; each runs its prerequisites through the artifact cache
// (content-hash keyed files under <output>/cache) so reruns skip finished
// work. All of them create the output directory on demand.
PipelineStats run_ingest(const RunConfig& cfg);
PipelineStats run_cluster(const RunConfig& cfg);
PipelineStats run_topics(const RunConfig& cfg);
PipelineStats run_train(const RunConfig& cfg);    // exports fold models
PipelineResult run_evaluate(const RunConfig& cfg);
PipelineResult run_report(const RunConfig& cfg);  // evaluate + report files
PipelineResult run_all(const RunConfig& cfg);

// Paths of the report artifacts inside cfg.output_dir.
std::string report_csv_path(const RunConfig& cfg);
std::string summary_csv_path(const RunConfig& cfg);
std::string report_txt_path(const RunConfig& cfg);

}  // namespace topicrec
