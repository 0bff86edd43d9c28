#include "topicrec/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace topicrec {

EnsembleSpec default_ensemble_spec(size_t n_rows, uint64_t base_seed,
                                   int seeds_per_k) {
    if (n_rows < 2) throw std::invalid_argument("ensemble needs at least 2 rows");
    if (seeds_per_k < 1) throw std::invalid_argument("seeds_per_k must be positive");
    int k_max = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_rows))));
    if (k_max < 2) k_max = 2;
    if (static_cast<size_t>(k_max) > n_rows) k_max = static_cast<int>(n_rows);
    EnsembleSpec spec;
    for (int k = 2; k <= k_max; ++k) spec.ks.push_back(k);
    spec.seeds_per_k = seeds_per_k;
    spec.base_seed = base_seed;
    return spec;
}

namespace {

// Dense centroid dotted against a sparse unit row.
double centroid_dot(const std::vector<double>& c, const std::vector<ViewEntry>& row) {
    double dot = 0.0;
    for (const auto& e : row) dot += c[e.term] * e.weight;
    return dot;
}

void renormalize(std::vector<double>& c) {
    double norm2 = 0.0;
    for (double v : c) norm2 += v * v;
    if (norm2 > 0.0) {
        double inv = 1.0 / std::sqrt(norm2);
        for (double& v : c) v *= inv;
    }
}

}  // namespace

Partition spherical_kmeans(const ViewMatrix& m, int k, uint64_t seed,
                           const std::string& source_tag) {
    const size_t n = m.rows.size();
    if (k < 1 || static_cast<size_t>(k) > n) {
        throw std::invalid_argument("spherical_kmeans: k out of range");
    }
    const size_t dim = m.vocabulary.size();
    Rng rng(seed);

    // k-means++ seeding with squared cosine distance.
    std::vector<size_t> centers;
    std::vector<char> chosen(n, 0);
    {
        size_t first = static_cast<size_t>(rng.below(n));
        centers.push_back(first);
        chosen[first] = 1;
        std::vector<double> best_sim(n, -1.0);
        while (centers.size() < static_cast<size_t>(k)) {
            size_t last = centers.back();
            for (size_t i = 0; i < n; ++i) {
                double d = row_dot(m.rows[i], m.rows[last]);
                if (d > best_sim[i]) best_sim[i] = d;
            }
            double total = 0.0;
            std::vector<double> w(n, 0.0);
            for (size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                double dist = 1.0 - best_sim[i];
                if (dist < 0.0) dist = 0.0;
                w[i] = dist * dist;
                total += w[i];
            }
            size_t pick = n;
            if (total > 0.0) {
                double u = rng.uniform01() * total;
                double acc = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    if (chosen[i]) continue;
                    acc += w[i];
                    if (u < acc) { pick = i; break; }
                }
            }
            if (pick == n) {
                // All remaining points coincide with a center; take the
                // lowest index for a deterministic result.
                for (size_t i = 0; i < n; ++i) {
                    if (!chosen[i]) { pick = i; break; }
                }
            }
            centers.push_back(pick);
            chosen[pick] = 1;
        }
    }

    std::vector<std::vector<double>> centroids(k, std::vector<double>(dim, 0.0));
    for (int c = 0; c < k; ++c) {
        for (const auto& e : m.rows[centers[c]]) centroids[c][e.term] = e.weight;
    }

    std::vector<int> assign(n, -1);
    const int kMaxIters = 100;
    for (int iter = 0; iter < kMaxIters; ++iter) {
        bool changed = false;
        std::vector<double> sim_to_own(n, 0.0);
        for (size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_dot = centroid_dot(centroids[0], m.rows[i]);
            for (int c = 1; c < k; ++c) {
                double d = centroid_dot(centroids[c], m.rows[i]);
                if (d > best_dot) { best_dot = d; best = c; }
            }
            sim_to_own[i] = best_dot;
            if (assign[i] != best) { assign[i] = best; changed = true; }
        }

        // Refill any emptied cluster with the point least similar to its
        // current centroid (lowest row index on ties).
        std::vector<int> sizes(k, 0);
        for (size_t i = 0; i < n; ++i) ++sizes[assign[i]];
        for (int c = 0; c < k; ++c) {
            if (sizes[c] > 0) continue;
            size_t worst = n;
            double worst_sim = 2.0;
            for (size_t i = 0; i < n; ++i) {
                if (sizes[assign[i]] <= 1) continue;  // don't empty another
                if (sim_to_own[i] < worst_sim) { worst_sim = sim_to_own[i]; worst = i; }
            }
            if (worst == n) break;  // nothing stealable
            --sizes[assign[worst]];
            assign[worst] = c;
            sizes[c] = 1;
            changed = true;
        }

        if (!changed && iter > 0) break;

        for (auto& c : centroids) std::fill(c.begin(), c.end(), 0.0);
        for (size_t i = 0; i < n; ++i) {
            for (const auto& e : m.rows[i]) centroids[assign[i]][e.term] += e.weight;
        }
        for (auto& c : centroids) renormalize(c);
    }

    Partition p;
    p.k = k;
    p.source = source_tag;
    for (size_t i = 0; i < n; ++i) p.assignment[m.row_ids[i]] = assign[i];
    return p;
}

std::vector<Partition> run_ensemble(const ViewMatrix& m, const EnsembleSpec& spec) {
    std::vector<Partition> out;
    for (int k : spec.ks) {
        if (static_cast<size_t>(k) > m.rows.size()) continue;
        for (int s = 0; s < spec.seeds_per_k; ++s) {
            std::string tag = std::string(view_name(m.view)) + "/k" +
                              std::to_string(k) + "/seed" + std::to_string(s);
            uint64_t seed = derive_seed(spec.base_seed, tag);
            out.push_back(spherical_kmeans(m, k, seed, tag));
        }
    }
    if (out.empty()) throw std::runtime_error("ensemble produced no partitions");
    return out;
}

void CoAssocMatrix::validate() const {
    // Weighted combinations can land one ulp off the ideal values, so the
    // diagonal and the range are held to 1e-12 rather than exact equality.
    constexpr double kTol = 1e-12;
    const size_t n = ids.size();
    if (values.size() != n * n) throw std::runtime_error("co-assoc: bad shape");
    for (size_t i = 0; i < n; ++i) {
        if (std::fabs(at(i, i) - 1.0) > kTol) {
            throw std::runtime_error("co-assoc: diagonal must be 1");
        }
        for (size_t j = 0; j < i; ++j) {
            double v = at(i, j);
            if (v < -kTol || v > 1.0 + kTol) {
                throw std::runtime_error("co-assoc: value outside [0,1]");
            }
            if (v != at(j, i)) throw std::runtime_error("co-assoc: asymmetry");
        }
    }
}

CoAssocMatrix co_association(const std::vector<Partition>& partitions,
                             const std::vector<std::string>& ids,
                             const std::string& view_tag) {
    if (partitions.empty()) throw std::invalid_argument("co_association: no partitions");
    if (ids.empty()) throw std::invalid_argument("co_association: no ids");

    CoAssocMatrix m;
    m.ids = ids;
    std::sort(m.ids.begin(), m.ids.end());
    m.view_tag = view_tag;
    const size_t n = m.ids.size();
    m.values.assign(n * n, 0.0);

    std::vector<int> labels(n);
    for (const auto& p : partitions) {
        for (size_t i = 0; i < n; ++i) {
            auto it = p.assignment.find(m.ids[i]);
            if (it == p.assignment.end()) {
                throw std::runtime_error("co_association: partition " + p.source +
                                         " misses id " + m.ids[i]);
            }
            labels[i] = it->second;
        }
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j <= i; ++j) {
                if (labels[i] == labels[j]) {
                    m.at(i, j) += 1.0;
                }
            }
        }
    }
    const double total = static_cast<double>(partitions.size());
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            double v = m.at(i, j) / total;
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
        m.at(i, i) = 1.0;
    }
    return m;
}

void ConsensusConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("consensus: alpha must lie in [0,1]");
    }
    if (beta < 0.0 || theta < 0.0) {
        throw std::invalid_argument("consensus: beta and theta must be non-negative");
    }
    if (std::fabs(beta + theta - alpha) > 1e-12) {
        throw std::invalid_argument("consensus: beta + theta must equal alpha");
    }
}

std::string ConsensusConfig::id() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "a%g_b%g_t%g", alpha, beta, theta);
    return buf;
}

std::vector<ConsensusConfig> consensus_weight_grid() {
    std::vector<ConsensusConfig> grid;
    for (double a : {0.3, 0.5, 0.7, 1.0}) {
        grid.push_back({a, a, 0.0});
        grid.push_back({a, 0.0, a});
        grid.push_back({a, a / 2.0, a / 2.0});
    }
    return grid;
}

namespace {

void require_same_ids(const CoAssocMatrix& a, const CoAssocMatrix& b) {
    if (a.ids != b.ids) {
        throw std::invalid_argument("consensus combination: id lists differ");
    }
}

}  // namespace

CoAssocMatrix combine_consensus(const CoAssocMatrix& technical,
                                const CoAssocMatrix& named_entity,
                                const CoAssocMatrix& domain_term,
                                const ConsensusConfig& cfg) {
    cfg.validate();
    require_same_ids(technical, named_entity);
    require_same_ids(technical, domain_term);
    CoAssocMatrix out;
    out.ids = technical.ids;
    out.view_tag = "consensus/" + cfg.id();
    out.values.resize(technical.values.size());
    for (size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = (1.0 - cfg.alpha) * technical.values[i] +
                        cfg.beta * named_entity.values[i] +
                        cfg.theta * domain_term.values[i];
    }
    return out;
}

CoAssocMatrix combine_privileged(const CoAssocMatrix& technical,
                                 const CoAssocMatrix& privileged,
                                 double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("combine_privileged: alpha must lie in [0,1]");
    }
    require_same_ids(technical, privileged);
    CoAssocMatrix out;
    out.ids = technical.ids;
    char buf[32];
    std::snprintf(buf, sizeof buf, "privileged/a%g", alpha);
    out.view_tag = buf;
    out.values.resize(technical.values.size());
    for (size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = (1.0 - alpha) * technical.values[i] +
                        alpha * privileged.values[i];
    }
    return out;
}

void save_coassoc(const CoAssocMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write co-assoc matrix: " + path);
    const size_t n = m.ids.size();
    for (size_t i = 0; i < n; ++i) {
        if (i) out << '\t';
        out << m.ids[i];
    }
    out << '\n';
    char buf[48];
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", m.at(i, j));
            if (j) out << '\t';
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

CoAssocMatrix load_coassoc(const std::string& path, const std::string& view_tag) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open co-assoc matrix: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty co-assoc file: " + path);

    CoAssocMatrix m;
    m.view_tag = view_tag;
    {
        std::istringstream ss(line);
        std::string id;
        while (std::getline(ss, id, '\t')) m.ids.push_back(id);
    }
    const size_t n = m.ids.size();
    if (n == 0) throw std::runtime_error("co-assoc header holds no ids: " + path);
    m.values.assign(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) {
            throw std::runtime_error("truncated co-assoc file: " + path);
        }
        std::istringstream ss(line);
        std::string cell;
        for (size_t j = 0; j <= i; ++j) {
            if (!std::getline(ss, cell, '\t')) {
                throw std::runtime_error(path + ": short row " + std::to_string(i));
            }
            double v = std::stod(cell);
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
        if (std::getline(ss, cell, '\t')) {
            throw std::runtime_error(path + ": long row " + std::to_string(i));
        }
    }
    m.validate();
    return m;
}

}  // namespace topicrec
