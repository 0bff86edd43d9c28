#include "topicrec/recsys.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace topicrec {

namespace {

bool is_virtual(const std::string& item) {
    return item.rfind(kVirtualPrefix, 0) == 0;
}

}  // namespace

std::vector<std::string> AccessLog::users() const {
    std::set<std::string> s;
    for (const auto& e : events) s.insert(e.user);
    return {s.begin(), s.end()};
}

std::vector<std::string> AccessLog::items() const {
    std::set<std::string> s;
    for (const auto& e : events) s.insert(e.item);
    return {s.begin(), s.end()};
}

AccessLog load_access_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open access log: " + path);
    AccessLog log;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected user_id<TAB>item_id");
        }
        Event e;
        e.user = line.substr(0, tab);
        e.item = line.substr(tab + 1);
        if (is_virtual(e.item)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": item id uses the reserved prefix " +
                                     kVirtualPrefix);
        }
        log.events.push_back(std::move(e));
    }
    if (log.events.empty()) throw std::runtime_error("access log holds no events: " + path);
    return log;
}

void attach_contexts(AccessLog& log, const std::map<std::string, std::string>& item_topic) {
    for (auto& e : log.events) {
        auto it = item_topic.find(e.item);
        if (it == item_topic.end()) {
            throw std::runtime_error("no context for logged item: " + e.item);
        }
        e.context = it->second;
    }
}

std::set<std::string> eligible_users(const AccessLog& log) {
    std::map<std::string, std::set<std::string>> per_user;
    for (const auto& e : log.events) per_user[e.user].insert(e.item);
    std::set<std::string> out;
    for (const auto& [u, items] : per_user) {
        if (items.size() >= 2) out.insert(u);
    }
    return out;
}

int SimilarityModel::item_index(const std::string& item) const {
    auto it = std::lower_bound(items.begin(), items.end(), item);
    if (it == items.end() || *it != item) return -1;
    return static_cast<int>(it - items.begin());
}

SimilarityModel build_ibcf(const AccessLog& log, int k) {
    if (log.events.empty()) throw std::invalid_argument("build_ibcf: empty log");
    if (k < 1) throw std::invalid_argument("build_ibcf: k must be positive");

    SimilarityModel m;
    m.k = k;
    m.items = log.items();
    const size_t n = m.items.size();
    if (n < 2) throw std::invalid_argument("build_ibcf: needs at least 2 items");

    std::map<std::string, int> user_id;
    for (const auto& e : log.events) {
        user_id.emplace(e.user, static_cast<int>(user_id.size()));
    }

    // Binary column vectors: the sorted distinct user set per item.
    std::vector<std::vector<int>> accessed(n);
    for (const auto& e : log.events) {
        int idx = m.item_index(e.item);
        accessed[idx].push_back(user_id.at(e.user));
    }
    for (auto& v : accessed) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }

    m.sim.assign(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        m.sim[i * n + i] = 1.0;
        for (size_t j = 0; j < i; ++j) {
            const auto& a = accessed[i];
            const auto& b = accessed[j];
            size_t p = 0, q = 0, inter = 0;
            while (p < a.size() && q < b.size()) {
                if (a[p] < b[q]) ++p;
                else if (a[p] > b[q]) ++q;
                else { ++inter; ++p; ++q; }
            }
            double s = 0.0;
            if (inter > 0) {
                s = static_cast<double>(inter) /
                    std::sqrt(static_cast<double>(a.size()) * static_cast<double>(b.size()));
            }
            m.sim[i * n + j] = s;
            m.sim[j * n + i] = s;
        }
    }

    m.recommendable.resize(n);
    for (size_t i = 0; i < n; ++i) {
        m.recommendable[i] = is_virtual(m.items[i]) ? 0 : 1;
    }

    // Neighborhoods: every other item ordered by similarity, ties by id.
    m.neighbors.resize(n);
    std::vector<int> order(n);
    for (size_t i = 0; i < n; ++i) {
        order.clear();
        for (size_t j = 0; j < n; ++j) {
            if (j != i) order.push_back(static_cast<int>(j));
        }
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double sa = m.sim_at(i, a), sb = m.sim_at(i, b);
            if (sa != sb) return sa > sb;
            return a < b;
        });
        size_t take = std::min<size_t>(k, order.size());
        m.neighbors[i].assign(order.begin(), order.begin() + take);
    }
    return m;
}

std::vector<ScoredItem> recommend(const SimilarityModel& model,
                                  const std::set<std::string>& observed, int n) {
    if (observed.empty()) throw std::invalid_argument("recommend: empty observed set");
    if (n < 1) throw std::invalid_argument("recommend: n must be positive");

    std::vector<char> in_observed(model.size(), 0);
    for (const auto& o : observed) {
        int idx = model.item_index(o);
        if (idx >= 0) in_observed[idx] = 1;
    }

    std::vector<ScoredItem> scored;
    for (size_t r = 0; r < model.size(); ++r) {
        if (in_observed[r] || !model.recommendable[r]) continue;
        double num = 0.0, den = 0.0;
        for (int nb : model.neighbors[r]) {
            double s = model.sim_at(r, nb);
            den += s;
            if (in_observed[nb]) num += s;
        }
        if (den > 0.0 && num > 0.0) {
            scored.push_back({model.items[r], num / den});
        }
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredItem& a, const ScoredItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.item < b.item;
    });
    if (scored.size() > static_cast<size_t>(n)) scored.resize(n);
    return scored;
}

ContextSource context_source_from_string(const std::string& s) {
    if (s == "last_observed") return ContextSource::last_observed;
    if (s == "hidden_item") return ContextSource::hidden_item;
    throw std::invalid_argument("unknown context source: " + s);
}

const char* context_source_name(ContextSource src) {
    return src == ContextSource::last_observed ? "last_observed" : "hidden_item";
}

std::vector<EvalCase> make_cases(const AccessLog& log,
                                 const std::set<std::string>& users,
                                 uint64_t seed, ContextSource source,
                                 std::vector<std::string>* skipped) {
    // Per-user event positions, in log order.
    std::map<std::string, std::vector<size_t>> positions;
    for (size_t i = 0; i < log.events.size(); ++i) {
        if (users.count(log.events[i].user)) {
            positions[log.events[i].user].push_back(i);
        }
    }

    std::vector<EvalCase> cases;
    for (const auto& user : users) {
        auto pit = positions.find(user);
        std::set<std::string> distinct;
        if (pit != positions.end()) {
            for (size_t pos : pit->second) distinct.insert(log.events[pos].item);
        }
        if (distinct.size() < 2) {
            if (skipped) skipped->push_back(user);
            continue;
        }
        std::vector<std::string> items(distinct.begin(), distinct.end());
        Rng rng(derive_seed(seed, user));
        size_t pick = static_cast<size_t>(rng.below(items.size()));

        EvalCase c;
        c.user = user;
        c.hidden = items[pick];
        for (const auto& it : items) {
            if (it != c.hidden) c.observed.insert(it);
        }
        const auto& pos = pit->second;
        for (auto rit = pos.rbegin(); rit != pos.rend(); ++rit) {
            const Event& e = log.events[*rit];
            bool want = (source == ContextSource::hidden_item) ? (e.item == c.hidden)
                                                               : (e.item != c.hidden);
            if (want) {
                c.active_context = e.context;
                break;
            }
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

namespace {

struct UserSplit {
    std::set<std::string> train_users;
    std::set<std::string> validation_users;
    bool usable = false;
};

UserSplit split_users(const AccessLog& train, const InnerSplit& split) {
    UserSplit out;
    auto users = train.users();
    if (users.size() < 2) return out;
    Rng rng(derive_seed(split.seed, "inner"));
    rng.shuffle(users);
    size_t n_val = static_cast<size_t>(split.validation_fraction *
                                           static_cast<double>(users.size()) + 0.5);
    if (n_val < 1) n_val = 1;
    if (n_val >= users.size()) n_val = users.size() - 1;
    out.validation_users.insert(users.begin(), users.begin() + n_val);
    out.train_users.insert(users.begin() + n_val, users.end());
    out.usable = true;
    return out;
}

AccessLog events_of_users(const AccessLog& log, const std::set<std::string>& users) {
    AccessLog out;
    for (const auto& e : log.events) {
        if (users.count(e.user)) out.events.push_back(e);
    }
    return out;
}

AccessLog events_of_context(const AccessLog& log, const std::string& context) {
    AccessLog out;
    for (const auto& e : log.events) {
        if (e.context == context) out.events.push_back(e);
    }
    return out;
}

size_t distinct_items(const AccessLog& log) {
    std::set<std::string> s;
    for (const auto& e : log.events) s.insert(e.item);
    return s.size();
}

bool hit_in(const std::vector<ScoredItem>& rec, const std::string& hidden) {
    for (const auto& r : rec) {
        if (r.item == hidden) return true;
    }
    return false;
}

// Single relevant item: precision hit/N, recall hit/1.
double f1_single(bool hit, int n) {
    if (!hit) return 0.0;
    double p = 1.0 / static_cast<double>(n);
    return 2.0 * p / (p + 1.0);
}

double ap_single(const std::vector<ScoredItem>& rec, const std::string& hidden) {
    for (size_t i = 0; i < rec.size(); ++i) {
        if (rec[i].item == hidden) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

}  // namespace

CReductionModel train_c_reduction(const AccessLog& train, int k, const InnerSplit& split) {
    CReductionModel model;
    model.global = build_ibcf(train, k);

    auto inner = split_users(train, split);
    if (!inner.usable) return model;
    AccessLog inner_train = events_of_users(train, inner.train_users);
    if (distinct_items(inner_train) < 2) return model;

    SimilarityModel inner_global = build_ibcf(inner_train, k);
    auto cases = make_cases(train, inner.validation_users, split.seed, split.source);
    if (cases.empty()) return model;

    // Validation cases grouped by their active context.
    std::map<std::string, std::vector<const EvalCase*>> by_context;
    for (const auto& c : cases) by_context[c.active_context].push_back(&c);

    std::set<std::string> contexts;
    for (const auto& e : train.events) contexts.insert(e.context);

    std::set<std::string> retained;
    for (const auto& ctx : contexts) {
        auto bit = by_context.find(ctx);
        if (bit == by_context.end()) continue;  // nothing to judge it on

        AccessLog segment = events_of_context(inner_train, ctx);
        if (distinct_items(segment) < 2) continue;
        SimilarityModel seg_model = build_ibcf(segment, k);

        double seg_f1 = 0.0, glob_f1 = 0.0;
        for (const EvalCase* c : bit->second) {
            seg_f1 += f1_single(hit_in(recommend(seg_model, c->observed, split.f1_n),
                                       c->hidden), split.f1_n);
            glob_f1 += f1_single(hit_in(recommend(inner_global, c->observed, split.f1_n),
                                        c->hidden), split.f1_n);
        }
        if (seg_f1 > glob_f1) retained.insert(ctx);
    }

    // Retained segments are refit on the whole training fold.
    for (const auto& ctx : retained) {
        AccessLog segment = events_of_context(train, ctx);
        if (distinct_items(segment) < 2) continue;
        model.segments.emplace(ctx, build_ibcf(segment, k));
    }
    return model;
}

std::vector<ScoredItem> predict_c_reduction(const CReductionModel& model,
                                            const std::set<std::string>& observed,
                                            const std::string& active_context, int n) {
    auto it = model.segments.find(active_context);
    const SimilarityModel& m = (it != model.segments.end()) ? it->second : model.global;
    return recommend(m, observed, n);
}

namespace {

std::string virtual_item(const std::string& dim, const std::string& context) {
    return std::string(kVirtualPrefix) + dim + "::" + context;
}

AccessLog augment_with_virtual(const AccessLog& log, const ContextDimension& dim) {
    AccessLog out;
    out.events.reserve(log.events.size() * 2);
    for (const auto& e : log.events) {
        out.events.push_back(e);
        auto it = dim.item_context.find(e.item);
        if (it == dim.item_context.end()) {
            throw std::runtime_error("dimension " + dim.name +
                                     " misses context for item " + e.item);
        }
        Event v;
        v.user = e.user;
        v.item = virtual_item(dim.name, it->second);
        v.context = e.context;
        out.events.push_back(std::move(v));
    }
    return out;
}

std::set<std::string> extend_observed(const std::set<std::string>& observed,
                                      const std::string& dim_name,
                                      const std::map<std::string, std::string>& item_context) {
    std::set<std::string> ext = observed;
    for (const auto& o : observed) {
        auto it = item_context.find(o);
        if (it == item_context.end()) {
            throw std::runtime_error("dimension " + dim_name +
                                     " misses context for item " + o);
        }
        ext.insert(virtual_item(dim_name, it->second));
    }
    return ext;
}

}  // namespace

DaViModel train_davi_best(const AccessLog& train,
                          const std::vector<ContextDimension>& dims, int k,
                          const InnerSplit& split) {
    DaViModel model;
    model.baseline = build_ibcf(train, k);

    // Dimensions that are constant over the fold's items carry no signal and
    // would only add noise to the inner comparison.
    std::set<std::string> fold_items;
    for (const auto& e : train.events) fold_items.insert(e.item);
    std::vector<const ContextDimension*> live;
    for (const auto& d : dims) {
        std::set<std::string> values;
        for (const auto& item : fold_items) {
            auto it = d.item_context.find(item);
            if (it == d.item_context.end()) {
                throw std::runtime_error("dimension " + d.name +
                                         " misses context for item " + item);
            }
            values.insert(it->second);
        }
        if (values.size() >= 2) live.push_back(&d);
    }
    if (live.empty()) return model;

    auto inner = split_users(train, split);
    if (!inner.usable) return model;
    AccessLog inner_train = events_of_users(train, inner.train_users);
    if (distinct_items(inner_train) < 2) return model;
    auto cases = make_cases(train, inner.validation_users, split.seed, split.source);
    if (cases.empty()) return model;

    SimilarityModel inner_baseline = build_ibcf(inner_train, k);
    double baseline_map = 0.0;
    for (const auto& c : cases) {
        baseline_map += ap_single(recommend(inner_baseline, c.observed, split.map_n),
                                  c.hidden);
    }
    baseline_map /= static_cast<double>(cases.size());

    const ContextDimension* best = nullptr;
    double best_map = baseline_map;
    for (const ContextDimension* d : live) {
        SimilarityModel enhanced = build_ibcf(augment_with_virtual(inner_train, *d), k);
        double dim_map = 0.0;
        for (const auto& c : cases) {
            auto ext = extend_observed(c.observed, d->name, d->item_context);
            dim_map += ap_single(recommend(enhanced, ext, split.map_n), c.hidden);
        }
        dim_map /= static_cast<double>(cases.size());
        if (dim_map > best_map) {
            best_map = dim_map;
            best = d;
        }
    }

    if (best) {
        model.use_enhanced = true;
        model.dimension = best->name;
        model.item_context = best->item_context;
        model.enhanced = build_ibcf(augment_with_virtual(train, *best), k);
    }
    return model;
}

std::vector<ScoredItem> predict_davi(const DaViModel& model,
                                     const std::set<std::string>& observed, int n) {
    if (!model.use_enhanced) return recommend(model.baseline, observed, n);
    auto ext = extend_observed(observed, model.dimension, model.item_context);
    return recommend(model.enhanced, ext, n);
}

double ProbabilityTable::prob(const std::string& item, const std::string& context) const {
    auto cit = std::lower_bound(contexts.begin(), contexts.end(), context);
    if (cit == contexts.end() || *cit != context) {
        throw std::invalid_argument("probability table: unknown context " + context);
    }
    size_t idx = static_cast<size_t>(cit - contexts.begin());
    auto it = item_probs.find(item);
    if (it == item_probs.end()) {
        return 1.0 / static_cast<double>(contexts.size());
    }
    return it->second[idx];
}

void ProbabilityTable::validate() const {
    for (const auto& [item, probs] : item_probs) {
        if (probs.size() != contexts.size()) {
            throw std::runtime_error("probability table: ragged row for " + item);
        }
        double total = 0.0;
        for (double p : probs) {
            if (p < 0.0 || p > 1.0) {
                throw std::runtime_error("probability table: value outside [0,1]");
            }
            total += p;
        }
        if (std::fabs(total - 1.0) > 1e-9) {
            throw std::runtime_error("probability table: row for " + item +
                                     " does not sum to 1");
        }
    }
}

ProbabilityTable estimate_context_probability(const AccessLog& log,
                                              const std::set<std::string>& contexts,
                                              double lambda) {
    if (log.events.empty()) throw std::invalid_argument("probability table: empty log");
    if (contexts.empty()) throw std::invalid_argument("probability table: no contexts");
    if (lambda <= 0.0) throw std::invalid_argument("probability table: lambda must be > 0");

    ProbabilityTable t;
    t.lambda = lambda;
    t.contexts.assign(contexts.begin(), contexts.end());

    std::map<std::string, std::map<std::string, long long>> counts;
    std::map<std::string, long long> totals;
    for (const auto& e : log.events) {
        if (!contexts.count(e.context)) {
            throw std::invalid_argument("probability table: event context '" +
                                        e.context + "' not in the context set");
        }
        ++counts[e.item][e.context];
        ++totals[e.item];
    }

    const double denom_extra = lambda * static_cast<double>(t.contexts.size());
    for (const auto& [item, per_ctx] : counts) {
        std::vector<double> row(t.contexts.size());
        double denom = static_cast<double>(totals[item]) + denom_extra;
        for (size_t i = 0; i < t.contexts.size(); ++i) {
            auto it = per_ctx.find(t.contexts[i]);
            double cnt = (it == per_ctx.end()) ? 0.0 : static_cast<double>(it->second);
            row[i] = (cnt + lambda) / denom;
        }
        t.item_probs.emplace(item, std::move(row));
    }
    t.validate();
    return t;
}

std::vector<ScoredItem> weight_pof(const std::vector<ScoredItem>& baseline,
                                   const ProbabilityTable& table,
                                   const std::string& active_context) {
    std::vector<ScoredItem> out = baseline;
    for (auto& r : out) r.score *= table.prob(r.item, active_context);
    std::stable_sort(out.begin(), out.end(), [](const ScoredItem& a, const ScoredItem& b) {
        return a.score > b.score;
    });
    return out;
}

std::vector<ScoredItem> filter_pof(const std::vector<ScoredItem>& baseline,
                                   const ProbabilityTable& table,
                                   const std::string& active_context, double tau) {
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("filter_pof: tau outside [0,1]");
    std::vector<ScoredItem> out;
    for (const auto& r : baseline) {
        if (table.prob(r.item, active_context) >= tau) out.push_back(r);
    }
    return out;
}

void save_similarity(const SimilarityModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write similarity model: " + path);
    for (size_t i = 0; i < m.items.size(); ++i) {
        if (i) out << '\t';
        out << m.items[i];
    }
    out << '\n';
    char buf[48];
    for (size_t i = 0; i < m.items.size(); ++i) {
        for (size_t j = 0; j <= i; ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", m.sim_at(i, j));
            if (j) out << '\t';
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

SimilarityModel load_similarity(const std::string& path, int k) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open similarity model: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty similarity file: " + path);

    SimilarityModel m;
    m.k = k;
    {
        std::istringstream ss(line);
        std::string id;
        while (std::getline(ss, id, '\t')) m.items.push_back(id);
    }
    const size_t n = m.items.size();
    if (n < 2) throw std::runtime_error(path + ": too few items");
    m.sim.assign(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("truncated: " + path);
        std::istringstream ss(line);
        std::string cell;
        for (size_t j = 0; j <= i; ++j) {
            if (!std::getline(ss, cell, '\t')) {
                throw std::runtime_error(path + ": short row " + std::to_string(i));
            }
            double v = std::stod(cell);
            if (v < 0.0 || v > 1.0) throw std::runtime_error(path + ": sim outside [0,1]");
            m.sim[i * n + j] = v;
            m.sim[j * n + i] = v;
        }
    }

    m.recommendable.resize(n);
    for (size_t i = 0; i < n; ++i) m.recommendable[i] = is_virtual(m.items[i]) ? 0 : 1;
    m.neighbors.resize(n);
    std::vector<int> order;
    for (size_t i = 0; i < n; ++i) {
        order.clear();
        for (size_t j = 0; j < n; ++j) {
            if (j != i) order.push_back(static_cast<int>(j));
        }
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double sa = m.sim_at(i, a), sb = m.sim_at(i, b);
            if (sa != sb) return sa > sb;
            return a < b;
        });
        size_t take = std::min<size_t>(k, order.size());
        m.neighbors[i].assign(order.begin(), order.begin() + take);
    }
    return m;
}

void save_probability_table(const ProbabilityTable& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write probability table: " + path);
    char buf[48];
    for (const auto& [item, probs] : t.item_probs) {
        for (size_t i = 0; i < t.contexts.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", probs[i]);
            out << item << '\t' << t.contexts[i] << '\t' << buf << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

ProbabilityTable load_probability_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open probability table: " + path);
    std::map<std::string, std::map<std::string, double>> raw;
    std::set<std::string> contexts;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string item, ctx, val;
        if (!std::getline(ss, item, '\t') || !std::getline(ss, ctx, '\t') ||
            !std::getline(ss, val, '\t')) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad line");
        }
        raw[item][ctx] = std::stod(val);
        contexts.insert(ctx);
    }
    ProbabilityTable t;
    t.contexts.assign(contexts.begin(), contexts.end());
    for (const auto& [item, per_ctx] : raw) {
        std::vector<double> row(t.contexts.size());
        for (size_t i = 0; i < t.contexts.size(); ++i) {
            auto it = per_ctx.find(t.contexts[i]);
            if (it == per_ctx.end()) {
                throw std::runtime_error(path + ": missing context " + t.contexts[i] +
                                         " for item " + item);
            }
            row[i] = it->second;
        }
        t.item_probs.emplace(item, std::move(row));
    }
    t.validate();
    return t;
}

}  // namespace topicrec
