#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "topicrec/rng.hpp"

namespace topicrec {

struct Event {
    std::string user;
    std::string item;
    std::string context;  // topic id; empty until contexts are attached
};

// Events in file order. Duplicate (user, item) pairs are kept here — they
// collapse only inside the binary rating vectors — and order matters to the
// most-recent-item context rule.
struct AccessLog {
    std::vector<Event> events;

    std::vector<std::string> users() const;  // sorted distinct
    std::vector<std::string> items() const;  // sorted distinct
};

// Log file: user_id <TAB> item_id per line.
AccessLog load_access_log(const std::string& path);

// Joins each event's item against its topic; throws if any item is unmapped.
void attach_contexts(AccessLog& log, const std::map<std::string, std::string>& item_topic);

// Users able to form an all-but-one case: at least 2 distinct items.
std::set<std::string> eligible_users(const AccessLog& log);

// Reserved item-id prefix for context pseudo-items.
inline constexpr const char* kVirtualPrefix = "ctx::";

struct SimilarityModel {
    std::vector<std::string> items;           // sorted
    std::vector<double> sim;                  // dense items x items
    int k = 4;
    std::vector<std::vector<int>> neighbors;  // top-k, sim desc then id asc
    std::vector<char> recommendable;          // real items only

    int item_index(const std::string& item) const;
    double sim_at(size_t i, size_t j) const { return sim[i * items.size() + j]; }
    size_t size() const { return items.size(); }
};

// Item-item cosine over binary user-access vectors; neighborhood size k.
SimilarityModel build_ibcf(const AccessLog& log, int k);

struct ScoredItem {
    std::string item;
    double score = 0.0;
};

// Neighborhood scoring: score(r) = sum of sims to the observed items inside
// r's top-k neighborhood, over the neighborhood's total similarity. Only
// positively scored candidates are returned, ranked by score then item id,
// truncated to n.
std::vector<ScoredItem> recommend(const SimilarityModel& model,
                                  const std::set<std::string>& observed, int n);

// ---------------------------------------------------------------------------
// Evaluation cases (shared with the trainers' inner model selection).

enum class ContextSource { last_observed, hidden_item };

ContextSource context_source_from_string(const std::string& s);
const char* context_source_name(ContextSource src);

struct EvalCase {
    std::string user;
    std::set<std::string> observed;  // O
    std::string hidden;              // H, a singleton
    std::string active_context;
};

// One case per listed user: the hidden item is drawn uniformly from the
// user's distinct items with a per-user seeded generator, the rest is
// observed. Users with fewer than 2 distinct items are skipped (and
// reported through `skipped` when given). The active context is the context
// of the most recent observed event, or of the hidden item's last event
// under ContextSource::hidden_item.
std::vector<EvalCase> make_cases(const AccessLog& log,
                                 const std::set<std::string>& users,
                                 uint64_t seed, ContextSource source,
                                 std::vector<std::string>* skipped = nullptr);

// ---------------------------------------------------------------------------
// Context-aware strategies.

struct InnerSplit {
    double validation_fraction = 0.2;
    uint64_t seed = 0;
    int f1_n = 10;   // list size for the pre-filtering F1 selection
    int map_n = 10;  // list size for the contextual-modeling MAP selection
    ContextSource source = ContextSource::last_observed;
};

// Pre-filtering: per-context segment models kept only where they beat the
// global model's F1 on an inner validation split.
struct CReductionModel {
    SimilarityModel global;
    std::map<std::string, SimilarityModel> segments;  // retained contexts
};

CReductionModel train_c_reduction(const AccessLog& train, int k, const InnerSplit& split);

std::vector<ScoredItem> predict_c_reduction(const CReductionModel& model,
                                            const std::set<std::string>& observed,
                                            const std::string& active_context, int n);

// Contextual modeling: context values joined to user profiles as virtual
// items; the enhanced model is used only if it beat the plain one on the
// inner split, otherwise predictions are exactly the baseline's.
struct ContextDimension {
    std::string name;
    std::map<std::string, std::string> item_context;
};

struct DaViModel {
    SimilarityModel baseline;
    bool use_enhanced = false;
    std::string dimension;
    SimilarityModel enhanced;
    std::map<std::string, std::string> item_context;  // of the chosen dimension
};

DaViModel train_davi_best(const AccessLog& train,
                          const std::vector<ContextDimension>& dims, int k,
                          const InnerSplit& split);

std::vector<ScoredItem> predict_davi(const DaViModel& model,
                                     const std::set<std::string>& observed, int n);

// Post-filtering: Laplace-smoothed P(context | item).
struct ProbabilityTable {
    std::vector<std::string> contexts;                    // sorted
    std::map<std::string, std::vector<double>> item_probs;
    double lambda = 1.0;

    double prob(const std::string& item, const std::string& context) const;
    void validate() const;  // rows sum to 1 within 1e-9
};

ProbabilityTable estimate_context_probability(const AccessLog& log,
                                              const std::set<std::string>& contexts,
                                              double lambda = 1.0);

// Reorder by score * P(c|item); equal products keep their relative order, so
// a uniform table leaves the ranking untouched.
std::vector<ScoredItem> weight_pof(const std::vector<ScoredItem>& baseline,
                                   const ProbabilityTable& table,
                                   const std::string& active_context);

// Keep items with P(c|item) >= tau, original order and scores preserved.
std::vector<ScoredItem> filter_pof(const std::vector<ScoredItem>& baseline,
                                   const ProbabilityTable& table,
                                   const std::string& active_context, double tau);

// Model dumps (triangular similarity text, probability triplet lines).
void save_similarity(const SimilarityModel& m, const std::string& path);
SimilarityModel load_similarity(const std::string& path, int k);
void save_probability_table(const ProbabilityTable& t, const std::string& path);
ProbabilityTable load_probability_table(const std::string& path);

}  // namespace topicrec
