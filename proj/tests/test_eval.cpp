#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "topicrec/eval.hpp"

using namespace topicrec;

namespace {

struct TTestFixture {
    std::vector<double> a;
    std::vector<double> b;
    double t;
    double p;
};

// Frozen reference values for the paired two-sided test, computed once with
// an independent statistics package and pinned here.
const std::vector<TTestFixture> kTTestFixtures = {
{ {0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0}, {0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.0}, 5.7445626465380286, 0.00027819601104818546 },
{ {0.127703,0.284437,0.337943,0.395309,0.406964,0.371909,0.547662,0.427984,0.285165,0.269859}, {0.284645,0.338276,0.486598,0.459642,0.499576,0.446626,0.58805,0.375705,0.359145,0.316527}, -3.7732671209685331, 0.0043943031790536031 },
{ {0.133241,0.17917,0.528173,0.174628,0.269801,0.036762,0.196462,0.632922,-0.018125,0.338015}, {0.15143,0.183999,0.544927,0.166921,0.205125,0.101208,0.317112,0.502447,0.106067,0.419175}, -0.89988465731343303, 0.39162349795457763 },
{ {0.394816,0.4728,0.277987,0.580541,0.27567,0.367663,0.240453,0.574008,0.520234,0.26389}, {0.318454,0.439655,0.32286,0.545112,0.253418,0.223235,0.239725,0.531252,0.543362,0.321867}, 1.2145659849720156, 0.25543604492004895 },
{ {0.580143,0.360135,0.302044,0.438086,0.571622,0.260646,0.325079,0.361185,0.638643,0.301256,0.600213,0.534268}, {0.580554,0.278499,0.251793,0.352406,0.56089,0.226894,0.340579,0.408338,0.563322,0.287587,0.566255,0.442427}, 2.7062431292317126, 0.020427574138545668 },
{ {0.272906,0.615709,0.625862,0.530661,0.588837,0.336548,0.549731,0.307381,0.423524}, {0.246571,0.541275,0.491658,0.446849,0.448708,0.266329,0.43082,0.30154,0.415721}, 4.2622394505953682, 0.002753009481265686 },
{ {0.184943,0.369344,0.402583,0.32697,0.215358}, {0.230045,0.546888,0.468043,0.414895,0.27667}, -3.7166441307491684, 0.020534557587113287 },
{ {0.198238,0.179111,0.434947,0.075455,0.533535,0.350564,0.415553,0.142171,0.242061,0.207021,0.413788}, {0.207144,0.202331,0.495951,0.122383,0.567703,0.347837,0.425252,0.28394,0.321311,0.278395,0.493098}, -3.9531263633312905, 0.0027164992440433088 },
{ {0.191544,0.529471,0.492502,0.580137,0.354874}, {0.160769,0.533716,0.485262,0.51065,0.347141}, 1.6920837487340903, 0.16588710303334842 },
{ {0.621753,0.326718,0.183538,0.577952,0.451202,0.308917}, {0.586177,0.192654,0.136992,0.562776,0.459466,0.279768}, 2.1065528334827248, 0.089010179257801428 },
{ {0.349865,0.575356,0.421431,0.341811,0.145064,0.276308}, {0.332474,0.451464,0.442376,0.328282,0.133205,0.361957}, 0.36046122641340606, 0.73322954120324235 },
{ {0.395333,0.386895,0.33283,0.262223,0.427618,0.216529,0.472815}, {0.533786,0.448455,0.416774,0.37546,0.524085,0.274314,0.590287}, -8.4659731932286029, 0.00014842218065414531 },
{ {0.505074,0.252104,0.368979,0.153695,0.177837,0.202106,0.372239,0.135242,0.286053,0.291527,0.05884,0.219974}, {0.496496,0.163063,0.296575,0.27013,0.241833,0.263089,0.363156,0.169783,0.192703,0.258168,0.135206,0.266065}, -0.38523757913278628, 0.70740649538331724 },
{ {0.509499,0.463418,0.101792,0.374095,0.291966,0.384457,0.204996,0.081789,0.307226,0.327671,0.424665}, {0.536659,0.392103,0.187394,0.437556,0.205516,0.336861,0.238534,0.141214,0.204707,0.357513,0.3836}, 0.22578437534757895, 0.82591682682327106 },
{ {0.360896,0.548552,0.52434,0.220487,0.508284,0.109644,0.18429,0.615761,0.476824,0.361371,0.607114}, {0.319759,0.458338,0.501309,0.217646,0.520375,0.181354,0.192003,0.557656,0.431139,0.271006,0.480753}, 2.0665876318828609, 0.065658325149951999 },
{ {0.471296,0.436504,0.608394,0.35806,0.715212,0.270618,0.307455,0.240471,0.305096,0.257747}, {0.427541,0.48847,0.495159,0.25285,0.56138,0.227118,0.159924,0.206446,0.242218,0.207749}, 3.6033222187217837, 0.0057185808240058601 },
{ {0.209474,0.271599,0.553551,0.281597,0.162816,0.08278,0.250927}, {0.41672,0.32265,0.585519,0.412662,0.244008,0.160984,0.341774}, -4.3651348519577216, 0.0047439889379066605 },
{ {0.336886,0.584862,0.456398,0.171208,0.149587,0.448658,0.165734,0.145233}, {0.311245,0.597104,0.429662,0.20241,0.157043,0.484605,0.224979,0.224061}, -1.6265715283610773, 0.14785425820887177 },
{ {0.2,0.25,0.3,0.35,0.4}, {0.22,0.27,0.33,0.36,0.45}, -3.8334908600273279, 0.018562564501560432 },
{ {0.9,0.8,0.7,0.6,0.5,0.4}, {0.85,0.82,0.65,0.61,0.52,0.38}, 0.86294892726269268, 0.42760890311427813 },
};

std::vector<ScoredItem> ranked_list(const std::vector<std::string>& items) {
    std::vector<ScoredItem> out;
    double score = 1.0;
    for (const auto& i : items) {
        out.push_back({i, score});
        score -= 0.01;
    }
    return out;
}

}  // namespace

TEST_CASE("fold assignment is balanced, seeded and complete") {
    std::set<std::string> users;
    for (int i = 0; i < 37; ++i) users.insert("u" + std::to_string(100 + i));

    FoldPlan plan = make_folds(users, 42, 10);
    plan.validate();
    CHECK(plan.user_fold.size() == 37);

    std::vector<int> sizes(10, 0);
    for (const auto& [u, f] : plan.user_fold) {
        REQUIRE(f >= 0);
        REQUIRE(f < 10);
        ++sizes[f];
    }
    int lo = sizes[0], hi = sizes[0];
    for (int s : sizes) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    CHECK(hi - lo <= 1);

    FoldPlan again = make_folds(users, 42, 10);
    CHECK(again.user_fold == plan.user_fold);
    FoldPlan other = make_folds(users, 43, 10);
    CHECK(other.user_fold != plan.user_fold);

    std::set<std::string> few{"a", "b", "c"};
    CHECK_THROWS_AS(make_folds(few, 1, 10), std::runtime_error);
}

TEST_CASE("mean average precision is the mean reciprocal rank of the hidden item") {
    std::vector<RankedCase> cases;
    cases.push_back({ranked_list({"a", "b", "c"}), "a"});   // AP 1
    cases.push_back({ranked_list({"a", "b", "c"}), "c"});   // AP 1/3
    cases.push_back({ranked_list({"a", "b", "c"}), "zz"});  // miss
    CHECK(map_at_n(cases, 3) == doctest::Approx((1.0 + 1.0 / 3.0) / 3.0).epsilon(1e-12));
    // Tightening the cutoff drops the rank-3 hit.
    CHECK(map_at_n(cases, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // The cutoff never increases the score.
    for (int n = 1; n < 6; ++n) {
        CHECK(map_at_n(cases, n) <= map_at_n(cases, n + 1) + 1e-15);
    }

    for (const auto& c : cases) {
        CHECK(oracles::ap_at_n(c.ranked, c.hidden, 2) ==
              map_at_n(std::vector<RankedCase>{c}, 2));
    }

    CHECK_THROWS_AS(map_at_n({}, 5), std::invalid_argument);
    CHECK_THROWS_AS(map_at_n(cases, 0), std::invalid_argument);
}

TEST_CASE("paired t-test reproduces frozen reference values") {
    for (const auto& f : kTTestFixtures) {
        TTestResult r = paired_t_test(f.a, f.b);
        CHECK(std::fabs(r.t - f.t) < 1e-8);
        CHECK(std::fabs(r.p - f.p) < 1e-6);
        CHECK(r.significant == (f.p < 0.05));
    }
}

TEST_CASE("paired t-test handles degenerate inputs") {
    // Identical samples: no evidence, p = 1.
    std::vector<double> x{0.25, 0.5, 0.75, 1.0};
    TTestResult same = paired_t_test(x, x);
    CHECK(same.t == 0.0);
    CHECK(same.p == 1.0);
    CHECK_FALSE(same.significant);

    // Constant non-zero difference: infinite statistic, certain difference.
    // (A dyadic shift keeps every pairwise difference exactly equal.)
    std::vector<double> y{0.5, 0.75, 1.0, 1.25};
    TTestResult shifted = paired_t_test(y, x);
    CHECK(std::isinf(shifted.t));
    CHECK(shifted.t > 0.0);
    CHECK(shifted.p == 0.0);
    CHECK(shifted.significant);
    CHECK(paired_t_test(x, y).t < 0.0);

    CHECK_THROWS_AS(paired_t_test({1.0}, {2.0}), std::invalid_argument);
    CHECK_THROWS_AS(paired_t_test({1.0, 2.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("t distribution tail accuracy holds far out") {
    // Large statistic, small df: the regularized incomplete beta must not
    // underflow or lose digits. Reference: scipy.stats.t.sf(9, 4) * 2.
    double p = student_t_two_sided_p(9.0, 4);
    CHECK(std::fabs(p - 0.0008438325176012782) < 1e-12);
    // Symmetric in the sign of t.
    CHECK(student_t_two_sided_p(-9.0, 4) == p);
    // t = 0 is certain null.
    CHECK(student_t_two_sided_p(0.0, 7) == 1.0);
}
