#pragma once

#include <map>
#include <string>
#include <vector>

#include "topicrec/corpus.hpp"
#include "topicrec/rng.hpp"

namespace topicrec {

struct Partition {
    std::map<std::string, int> assignment;  // doc_id -> cluster index
    int k = 0;
    std::string source;  // e.g. "technical/k3/seed1"
};

struct EnsembleSpec {
    std::vector<int> ks;     // each k is run seeds_per_k times
    int seeds_per_k = 5;
    uint64_t base_seed = 0;
};

// k ranges over 2..ceil(sqrt(n_rows)); fewer than 4 rows still get k=2.
EnsembleSpec default_ensemble_spec(size_t n_rows, uint64_t base_seed,
                                   int seeds_per_k = 5);

// Spherical k-means on unit rows: distance 1 - cosine, centroids renormalized
// each round. Deterministic under a fixed seed; ties go to the lowest
// centroid index, and emptied clusters steal the point least similar to its
// own centroid.
Partition spherical_kmeans(const ViewMatrix& m, int k, uint64_t seed,
                           const std::string& source_tag);

std::vector<Partition> run_ensemble(const ViewMatrix& m, const EnsembleSpec& spec);

// Symmetric doc-by-doc matrix with unit diagonal, stored dense.
struct CoAssocMatrix {
    std::vector<std::string> ids;  // sorted
    std::vector<double> values;    // row-major, ids.size() squared
    std::string view_tag;

    double at(size_t i, size_t j) const { return values[i * ids.size() + j]; }
    double& at(size_t i, size_t j) { return values[i * ids.size() + j]; }
    size_t size() const { return ids.size(); }

    void validate() const;
};

// Fraction of ensemble partitions that place each pair together.
CoAssocMatrix co_association(const std::vector<Partition>& partitions,
                             const std::vector<std::string>& ids,
                             const std::string& view_tag);

struct ConsensusConfig {
    double alpha = 0.0;
    double beta = 0.0;
    double theta = 0.0;

    void validate() const;  // alpha in [0,1], beta+theta == alpha (1e-12)
    std::string id() const; // stable label, e.g. "a0.5_b0.25_t0.25"
};

// Canonical weight grid: for each alpha in {0.3, 0.5, 0.7, 1.0}, the three
// splits (beta, theta) in {(a,0), (0,a), (a/2,a/2)}.
std::vector<ConsensusConfig> consensus_weight_grid();

// (1-alpha)*technical + beta*named_entity + theta*domain_term, entrywise.
// All three matrices must share the same id list.
CoAssocMatrix combine_consensus(const CoAssocMatrix& technical,
                                const CoAssocMatrix& named_entity,
                                const CoAssocMatrix& domain_term,
                                const ConsensusConfig& cfg);

// Two-view reduction: (1-alpha)*technical + alpha*privileged.
CoAssocMatrix combine_privileged(const CoAssocMatrix& technical,
                                 const CoAssocMatrix& privileged,
                                 double alpha);

// File format: one header line with the ordered ids (tab-separated), then one
// line per row holding the lower triangle including the diagonal, 9
// significant digits. The view tag is not persisted; pass it on load.
void save_coassoc(const CoAssocMatrix& m, const std::string& path);
CoAssocMatrix load_coassoc(const std::string& path, const std::string& view_tag = "");

}  // namespace topicrec
