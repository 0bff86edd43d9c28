#include "topicrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "topicrec/rng.hpp"

namespace topicrec {

std::set<std::string> FoldPlan::fold_users(int fold) const {
    std::set<std::string> out;
    for (const auto& [user, f] : user_fold) {
        if (f == fold) out.insert(user);
    }
    return out;
}

void FoldPlan::validate() const {
    if (n_folds < 2) throw std::runtime_error("fold plan: needs at least 2 folds");
    std::vector<size_t> sizes(n_folds, 0);
    for (const auto& [user, f] : user_fold) {
        if (f < 0 || f >= n_folds) throw std::runtime_error("fold plan: index out of range");
        ++sizes[f];
    }
    auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    if (*hi - *lo > 1) throw std::runtime_error("fold plan: unbalanced folds");
}

FoldPlan make_folds(const std::set<std::string>& eligible_users, uint64_t seed,
                    int n_folds) {
    if (n_folds < 2) throw std::invalid_argument("make_folds: needs at least 2 folds");
    if (eligible_users.size() < static_cast<size_t>(n_folds)) {
        throw std::runtime_error("make_folds: " + std::to_string(eligible_users.size()) +
                                 " eligible users cannot fill " +
                                 std::to_string(n_folds) + " folds");
    }
    std::vector<std::string> users(eligible_users.begin(), eligible_users.end());
    Rng rng(derive_seed(seed, "folds"));
    rng.shuffle(users);

    FoldPlan plan;
    plan.n_folds = n_folds;
    plan.seed = seed;
    for (size_t i = 0; i < users.size(); ++i) {
        plan.user_fold[users[i]] = static_cast<int>(i % n_folds);
    }
    plan.validate();
    return plan;
}

double map_at_n(const std::vector<RankedCase>& cases, int n) {
    if (cases.empty()) throw std::invalid_argument("map_at_n: no cases");
    if (n < 1) throw std::invalid_argument("map_at_n: n must be positive");
    double total = 0.0;
    for (const auto& c : cases) {
        const size_t limit = std::min<size_t>(n, c.ranked.size());
        for (size_t i = 0; i < limit; ++i) {
            if (c.ranked[i].item == c.hidden) {
                total += 1.0 / static_cast<double>(i + 1);
                break;
            }
        }
    }
    return total / static_cast<double>(cases.size());
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("paired_t_test: needs >= 2 pairs");

    std::vector<double> d(a.size());
    for (size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];

    const double m = mean(d);
    const double sd = sample_sd(d);
    const double n = static_cast<double>(d.size());

    TTestResult r;
    if (sd == 0.0) {
        if (m == 0.0) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = (m > 0.0) ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
    } else {
        r.t = m / (sd / std::sqrt(n));
        r.p = student_t_two_sided_p(r.t, n - 1.0);
    }
    r.significant = r.p < 0.05;
    return r;
}

}  // namespace topicrec
