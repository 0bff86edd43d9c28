#include "topicrec/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace topicrec {

std::vector<std::vector<std::string>> Dendrogram::node_members() const {
    const size_t n = leaves.size();
    std::vector<std::vector<std::string>> members(n + merges.size());
    for (size_t i = 0; i < n; ++i) members[i] = {leaves[i]};
    for (size_t t = 0; t < merges.size(); ++t) {
        const auto& a = members[merges[t].node_a];
        const auto& b = members[merges[t].node_b];
        auto& out = members[n + t];
        out.resize(a.size() + b.size());
        std::merge(a.begin(), a.end(), b.begin(), b.end(), out.begin());
    }
    return members;
}

void Dendrogram::validate() const {
    if (leaves.size() < 2) throw std::runtime_error("dendrogram: needs >= 2 leaves");
    if (merges.size() != leaves.size() - 1) {
        throw std::runtime_error("dendrogram: expected |leaves|-1 merges");
    }
    const int total = static_cast<int>(leaves.size() + merges.size());
    std::vector<char> used(total, 0);
    double prev = -1.0;
    for (size_t t = 0; t < merges.size(); ++t) {
        const auto& m = merges[t];
        int limit = static_cast<int>(leaves.size() + t);
        if (m.node_a < 0 || m.node_b < 0 || m.node_a >= limit || m.node_b >= limit ||
            m.node_a == m.node_b) {
            throw std::runtime_error("dendrogram: bad merge nodes");
        }
        if (used[m.node_a] || used[m.node_b]) {
            throw std::runtime_error("dendrogram: node merged twice");
        }
        used[m.node_a] = used[m.node_b] = 1;
        if (m.height < prev - 1e-12) {
            throw std::runtime_error("dendrogram: heights decrease");
        }
        if (m.height > prev) prev = m.height;
    }
}

Dendrogram agglomerate(const CoAssocMatrix& consensus) {
    consensus.validate();
    const size_t n = consensus.size();
    if (n < 2) throw std::invalid_argument("agglomerate: needs >= 2 docs");

    Dendrogram d;
    d.leaves = consensus.ids;

    // Pair-sum bookkeeping: sums[a][b] holds the total of the original
    // pairwise distances between clusters a and b, so the average linkage is
    // sums / (size_a * size_b) and merging is a plain addition.
    const size_t total = 2 * n - 1;
    std::vector<std::vector<double>> sums(total, std::vector<double>(total, 0.0));
    std::vector<size_t> size(total, 0);
    std::vector<std::string> rep(total);
    std::vector<int> active;

    for (size_t i = 0; i < n; ++i) {
        size[i] = 1;
        rep[i] = consensus.ids[i];
        active.push_back(static_cast<int>(i));
        for (size_t j = 0; j < i; ++j) {
            double dist = 1.0 - consensus.at(i, j);
            sums[i][j] = sums[j][i] = dist;
        }
    }

    for (size_t t = 0; t < n - 1; ++t) {
        int best_p = -1, best_q = -1;
        double best_avg = 0.0;
        const std::string* best_lo = nullptr;
        const std::string* best_hi = nullptr;
        for (size_t ai = 0; ai < active.size(); ++ai) {
            for (size_t aj = 0; aj < ai; ++aj) {
                int p = active[ai], q = active[aj];
                double avg = sums[p][q] /
                             (static_cast<double>(size[p]) * static_cast<double>(size[q]));
                const std::string* lo = &rep[p];
                const std::string* hi = &rep[q];
                if (*hi < *lo) std::swap(lo, hi);
                bool take = false;
                if (best_p < 0 || avg < best_avg) {
                    take = true;
                } else if (avg == best_avg) {
                    take = *lo < *best_lo || (*lo == *best_lo && *hi < *best_hi);
                }
                if (take) {
                    best_p = p;
                    best_q = q;
                    best_avg = avg;
                    best_lo = lo;
                    best_hi = hi;
                }
            }
        }

        int a = best_p, b = best_q;
        if (rep[b] < rep[a]) std::swap(a, b);
        d.merges.push_back({a, b, best_avg});

        const int fresh = static_cast<int>(n + t);
        size[fresh] = size[a] + size[b];
        rep[fresh] = rep[a];  // a holds the smaller representative
        for (int r : active) {
            if (r == best_p || r == best_q) continue;
            double s = sums[a][r] + sums[b][r];
            sums[fresh][r] = sums[r][fresh] = s;
        }
        active.erase(std::remove_if(active.begin(), active.end(),
                                    [&](int x) { return x == best_p || x == best_q; }),
                     active.end());
        active.push_back(fresh);
    }
    return d;
}

void Granularity::validate() const {
    if (min_items < 1) throw std::invalid_argument("granularity: min_items must be >= 1");
    if (max_items < min_items) {
        throw std::invalid_argument("granularity: max_items must be >= min_items");
    }
}

std::string Granularity::id() const {
    return "g" + std::to_string(min_items) + "-" + std::to_string(max_items);
}

namespace {

// Descend the tree: nodes above the max bound are opened, nodes inside the
// band are selected whole, and anything below the min bound joins the pool.
void walk_select(const Dendrogram& d,
                 const std::vector<std::vector<std::string>>& members,
                 int node, Granularity g,
                 std::vector<int>& selected, std::vector<std::string>& pool) {
    const auto& mem = members[node];
    const int sz = static_cast<int>(mem.size());
    if (sz > g.max_items) {
        const size_t n = d.n_leaves();
        const auto& merge = d.merges[node - static_cast<int>(n)];
        walk_select(d, members, merge.node_a, g, selected, pool);
        walk_select(d, members, merge.node_b, g, selected, pool);
    } else if (sz >= g.min_items) {
        selected.push_back(node);
    } else {
        pool.insert(pool.end(), mem.begin(), mem.end());
    }
}

}  // namespace

std::vector<Topic> select_topics(const Dendrogram& dendro, Granularity g) {
    g.validate();
    dendro.validate();
    auto members = dendro.node_members();

    std::vector<int> selected;
    std::vector<std::string> pool;
    walk_select(dendro, members, dendro.root(), g, selected, pool);

    // Order topics by their smallest member (members are sorted already).
    std::sort(selected.begin(), selected.end(), [&](int a, int b) {
        return members[a].front() < members[b].front();
    });

    std::vector<Topic> topics;
    char buf[16];
    for (size_t i = 0; i < selected.size(); ++i) {
        std::snprintf(buf, sizeof buf, "t%04zu", i + 1);
        topics.push_back({buf, members[selected[i]], {}});
    }
    if (!pool.empty()) {
        std::sort(pool.begin(), pool.end());
        topics.push_back({kOverflowTopicId, std::move(pool), {}});
    }
    return topics;
}

std::vector<std::string> label_topic(const std::vector<std::string>& member_ids,
                                     const ViewMatrix& technical, int t) {
    if (t < 1) throw std::invalid_argument("label_topic: label size must be positive");
    std::map<std::string, long long> tally;
    for (const auto& id : member_ids) {
        int row = technical.row_index(id);
        if (row < 0) continue;
        for (const auto& e : technical.rows[row]) {
            tally[technical.vocabulary[e.term]] += e.count;
        }
    }
    if (tally.empty()) return {"∅"};

    std::vector<std::pair<std::string, long long>> ranked(tally.begin(), tally.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> labels;
    for (int i = 0; i < t && i < static_cast<int>(ranked.size()); ++i) {
        labels.push_back(ranked[i].first);
    }
    return labels;
}

const Topic* TopicModel::find_topic(const std::string& topic_id) const {
    for (const auto& t : topics) {
        if (t.topic_id == topic_id) return &t;
    }
    return nullptr;
}

void TopicModel::validate() const {
    granularity.validate();
    std::set<std::string> ids;
    for (const auto& t : topics) {
        if (!ids.insert(t.topic_id).second) {
            throw std::runtime_error("topic model: duplicate topic id " + t.topic_id);
        }
        if (t.label_terms.empty()) {
            throw std::runtime_error("topic model: unlabeled topic " + t.topic_id);
        }
        if (t.topic_id != kOverflowTopicId) {
            int sz = static_cast<int>(t.member_ids.size());
            if (sz < granularity.min_items || sz > granularity.max_items) {
                throw std::runtime_error("topic model: size bound violated by " + t.topic_id);
            }
        }
    }
    for (const auto& [doc, topic] : doc_topic) {
        if (!ids.count(topic)) {
            throw std::runtime_error("topic model: doc " + doc +
                                     " mapped to unknown topic " + topic);
        }
    }
}

TopicModel build_topic_model(const Dendrogram& dendro, Granularity g,
                             const ViewMatrix& technical, int label_size) {
    TopicModel model;
    model.granularity = g;
    model.topics = select_topics(dendro, g);
    for (auto& t : model.topics) {
        t.label_terms = label_topic(t.member_ids, technical, label_size);
        for (const auto& id : t.member_ids) model.doc_topic[id] = t.topic_id;
    }
    return model;
}

void insert_remainder(TopicModel& model, const ViewMatrix& technical,
                      const std::vector<std::string>& remainder_ids) {
    // Privileged rows available for the nearest-neighbor scan, sorted so that
    // similarity ties resolve to the smallest doc_id.
    std::vector<std::pair<std::string, int>> anchors;
    for (const auto& [doc, topic] : model.doc_topic) {
        int row = technical.row_index(doc);
        if (row >= 0) anchors.emplace_back(doc, row);
    }

    bool need_overflow = false;
    for (const auto& id : remainder_ids) {
        if (model.doc_topic.count(id)) {
            throw std::invalid_argument("insert_remainder: " + id + " already assigned");
        }
        int row = technical.row_index(id);
        std::string topic;
        if (row < 0 || anchors.empty()) {
            topic = kOverflowTopicId;
        } else {
            double best = -1.0;
            const std::string* best_doc = nullptr;
            for (const auto& [doc, arow] : anchors) {
                double dot = row_dot(technical.rows[row], technical.rows[arow]);
                if (dot > best) {
                    best = dot;
                    best_doc = &doc;
                }
            }
            topic = model.doc_topic.at(*best_doc);
        }
        if (topic == kOverflowTopicId) need_overflow = true;
        model.doc_topic[id] = topic;
    }

    if (need_overflow && !model.find_topic(kOverflowTopicId)) {
        model.topics.push_back({kOverflowTopicId, {}, {"∅"}});
    }
}

void save_dendrogram(const Dendrogram& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dendrogram: " + path);
    for (size_t i = 0; i < d.leaves.size(); ++i) {
        if (i) out << '\t';
        out << d.leaves[i];
    }
    out << '\n';
    char buf[48];
    for (const auto& m : d.merges) {
        std::snprintf(buf, sizeof buf, "%.17g", m.height);
        out << m.node_a << '\t' << m.node_b << '\t' << buf << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Dendrogram load_dendrogram(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dendrogram: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty dendrogram file: " + path);

    Dendrogram d;
    {
        std::istringstream ss(line);
        std::string id;
        while (std::getline(ss, id, '\t')) d.leaves.push_back(id);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        Merge m;
        if (!(ss >> m.node_a >> m.node_b >> m.height)) {
            throw std::runtime_error(path + ": bad merge line: " + line);
        }
        d.merges.push_back(m);
    }
    d.validate();
    return d;
}

namespace {

std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, sep)) out.push_back(cell);
    return out;
}

}  // namespace

void save_topic_model(const TopicModel& m, const std::string& topics_path,
                      const std::string& contexts_path) {
    {
        std::ofstream out(topics_path);
        if (!out) throw std::runtime_error("cannot write topics: " + topics_path);
        out << "granularity\t" << m.granularity.min_items << '\t'
            << m.granularity.max_items << '\n';
        for (const auto& t : m.topics) {
            out << t.topic_id << '\t' << join(t.label_terms, ' ') << '\t'
                << join(t.member_ids, ' ') << '\n';
        }
        if (!out) throw std::runtime_error("write failed: " + topics_path);
    }
    {
        std::ofstream out(contexts_path);
        if (!out) throw std::runtime_error("cannot write contexts: " + contexts_path);
        for (const auto& [doc, topic] : m.doc_topic) {
            out << doc << '\t' << topic << '\n';
        }
        if (!out) throw std::runtime_error("write failed: " + contexts_path);
    }
}

TopicModel load_topic_model(const std::string& topics_path,
                            const std::string& contexts_path) {
    TopicModel m;
    {
        std::ifstream in(topics_path);
        if (!in) throw std::runtime_error("cannot open topics: " + topics_path);
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error("empty topics file");
        auto head = split(line, '\t');
        if (head.size() != 3 || head[0] != "granularity") {
            throw std::runtime_error(topics_path + ": bad header");
        }
        m.granularity.min_items = std::stoi(head[1]);
        m.granularity.max_items = std::stoi(head[2]);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto cells = split(line, '\t');
            if (cells.size() != 3) throw std::runtime_error(topics_path + ": bad topic line");
            Topic t;
            t.topic_id = cells[0];
            t.label_terms = split(cells[1], ' ');
            if (!cells[2].empty()) t.member_ids = split(cells[2], ' ');
            m.topics.push_back(std::move(t));
        }
    }
    {
        std::ifstream in(contexts_path);
        if (!in) throw std::runtime_error("cannot open contexts: " + contexts_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto tab = line.find('\t');
            if (tab == std::string::npos) {
                throw std::runtime_error(contexts_path + ": bad context line");
            }
            m.doc_topic[line.substr(0, tab)] = line.substr(tab + 1);
        }
    }
    m.validate();
    return m;
}

}  // namespace topicrec
