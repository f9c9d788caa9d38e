#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "privgap/metrics.hpp"

#ifdef PRIVGAP_HAVE_BOOST_MATH
#include <boost/math/distributions/students_t.hpp>
#endif

using namespace privgap;
using testing::error_of;

namespace {

using U8 = std::vector<std::uint8_t>;

struct Instance {
  std::vector<double> s;
  U8 y;
};

Instance random_instance(oracle::Lcg& g, int max_n = 200) {
  Instance in;
  const int n = 2 + g.below(max_n - 1);
  const int levels = 1 + g.below(12);  // few levels force ties
  for (int i = 0; i < n; ++i) {
    in.s.push_back(g.uniform() < 0.5 ? static_cast<double>(g.below(levels)) : g.normal());
    in.y.push_back(static_cast<std::uint8_t>(g.below(2)));
  }
  in.y[0] = 1;
  in.y[1] = 0;
  return in;
}

// Clean-room resampler: SplitMix64 seeding of mt19937_64, rejection draws,
// brute-force AUC, interpolated percentiles at q * (B - 1).
std::pair<double, double> oracle_bootstrap(const std::vector<double>& s, const U8& y, int B,
                                           std::uint64_t seed) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::mt19937_64 eng(splitmix(seed));
  const std::uint64_t n = s.size();
  const std::uint64_t limit = n * (UINT64_MAX / n);
  std::vector<double> aucs;
  while (static_cast<int>(aucs.size()) < B) {
    std::vector<double> rs;
    U8 ry;
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint64_t x;
      do x = eng(); while (x >= limit);
      rs.push_back(s[x % n]);
      ry.push_back(y[x % n]);
    }
    const auto pos = std::count(ry.begin(), ry.end(), 1);
    if (pos == 0 || pos == static_cast<long>(n)) continue;
    aucs.push_back(oracle::pairwise_auc(rs, ry));
  }
  std::sort(aucs.begin(), aucs.end());
  auto q = [&](double p) {
    const double h = p * (B - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, aucs.size() - 1);
    return aucs[lo] + (h - static_cast<double>(lo)) * (aucs[hi] - aucs[lo]);
  };
  return {q(0.025), q(0.975)};
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("auc examples") {
    CHECK(auc(std::vector<double>{0.9, 0.8, 0.3, 0.1}, U8{1, 1, 0, 0}) == 1.0);
    CHECK(auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, U8{1, 0, 1, 0}) == 0.5);
    CHECK(auc(std::vector<double>{0.9, 0.5, 0.3}, U8{1, 0, 1}) == 0.5);
    CHECK(error_of([] { auc(std::vector<double>{0.1, 0.2}, U8{1, 1}); }) == ErrorCode::SingleClass);
    CHECK(error_of([] { auc(std::vector<double>{0.1, 0.2}, U8{1}); }) == ErrorCode::LengthMismatch);
  }

  TEST_CASE("auc matches the pairwise oracle, with ties") {
    oracle::Lcg g(2024);
    for (int t = 0; t < 200; ++t) {
      const Instance in = random_instance(g);
      CHECK(std::abs(auc(in.s, in.y) - oracle::pairwise_auc(in.s, in.y)) <= 1e-12);
    }
  }

  TEST_CASE("auc is invariant to strictly increasing transforms and flips under negation") {
    oracle::Lcg g(99);
    for (int t = 0; t < 50; ++t) {
      Instance in = random_instance(g);
      for (auto& v : in.s) v = g.normal();  // continuous, so no ties
      std::vector<double> mono(in.s.size()), neg(in.s.size());
      std::transform(in.s.begin(), in.s.end(), mono.begin(), [](double v) { return std::exp(3 * v) + 2; });
      std::transform(in.s.begin(), in.s.end(), neg.begin(), [](double v) { return -v; });
      CHECK(auc(mono, in.y) == auc(in.s, in.y));
      CHECK(auc(neg, in.y) == doctest::Approx(1.0 - auc(in.s, in.y)).epsilon(1e-14));
    }
  }

  TEST_CASE("auc_subset equals auc on the gathered rows") {
    const std::vector<double> s{0.1, 0.9, 0.4, 0.3, 0.8, 0.2};
    const U8 y{0, 1, 1, 0, 0, 1};
    const std::vector<std::size_t> idx{1, 3, 4, 5};
    CHECK(auc_subset(s, y, idx) == auc(std::vector<double>{0.9, 0.3, 0.8, 0.2}, U8{1, 0, 0, 1}));
  }

  TEST_CASE("bootstrap examples") {
    const std::vector<double> s{0.9, 0.8, 0.7, 0.3, 0.2, 0.1};
    const U8 y{1, 1, 1, 0, 0, 0};
    const auto ci = bootstrap_ci(s, y, 1000, 3);
    CHECK(ci.first == 1.0);
    CHECK(ci.second == 1.0);
    CHECK(bootstrap_ci(s, y, 200, 17) == bootstrap_ci(s, y, 200, 17));
    CHECK(error_of([&] { bootstrap_ci(s, U8(6, 1), 10, 0); }) == ErrorCode::SingleClass);
  }

  TEST_CASE("bootstrap matches a clean-room resampler") {
    oracle::Lcg g(40);
    std::vector<double> s;
    U8 y;
    for (int i = 0; i < 40; ++i) {
      y.push_back(static_cast<std::uint8_t>(i % 3 == 0));
      s.push_back(g.normal() + (y.back() ? 0.8 : 0.0));
    }
    for (std::uint64_t seed : {0ULL, 7ULL, 123456789ULL}) {
      const auto mine = bootstrap_ci(s, y, 1000, seed);
      const auto ref = oracle_bootstrap(s, y, 1000, seed);
      CHECK(mine.first == doctest::Approx(ref.first).epsilon(1e-12));
      CHECK(mine.second == doctest::Approx(ref.second).epsilon(1e-12));
    }
  }

  TEST_CASE("bootstrap bounds stay in [0,1] and ordered") {
    oracle::Lcg g(8);
    for (int t = 0; t < 30; ++t) {
      const Instance in = random_instance(g, 60);
      const auto est = estimate_auc(in.s, in.y, 200, static_cast<std::uint64_t>(t));
      CHECK(est.ci_low >= 0.0);
      CHECK(est.ci_high <= 1.0);
      CHECK(est.ci_low <= est.ci_high);
      CHECK(est.n_pos + est.n_neg == in.s.size());
    }
  }

  TEST_CASE("paired t-test") {
    const std::vector<double> a{0.5, 0.6, 0.7};
    CHECK(paired_t_test(a, a) == 1.0);
    const std::vector<double> d{0.02, 0.01, 0.03, 0.02, 0.02};
    const std::vector<double> zero(5, 0.0);
    // t = 0.02 / (sqrt(0.00005) / sqrt(5)) = 6.324555..., df = 4
    CHECK(paired_t_test(d, zero) == doctest::Approx(0.0031982).epsilon(1e-4));
    CHECK(paired_t_test(std::vector<double>{0.03, 0.03, 0.03}, std::vector<double>{0.0, 0.0, 0.0}) == 0.0);
    CHECK(error_of([] { paired_t_test(std::vector<double>{1.0}, std::vector<double>{0.0}); }) ==
          ErrorCode::TooFewFolds);
    CHECK(error_of([] { paired_t_test(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0}); }) ==
          ErrorCode::LengthMismatch);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK(paired_t_test(std::vector<double>{0.02, nan, 0.01, 0.03, 0.02, 0.02},
                        std::vector<double>{0.0, 0.5, 0.0, 0.0, 0.0, 0.0}) ==
          doctest::Approx(0.0031982).epsilon(1e-4));
  }

  TEST_CASE("student t against reference values") {
    CHECK(stats::student_t_quantile(0.975, 9) == doctest::Approx(2.2621571628).epsilon(1e-9));
    CHECK(stats::student_t_quantile(0.975, 4) == doctest::Approx(2.7764451052).epsilon(1e-9));
    CHECK(stats::student_t_two_sided_p(6.324555320336759, 4) == doctest::Approx(0.0031982).epsilon(1e-4));
    CHECK(stats::student_t_cdf(0.0, 3) == doctest::Approx(0.5));
#ifdef PRIVGAP_HAVE_BOOST_MATH
    for (double df : {1.0, 2.0, 4.0, 9.0, 29.0, 120.0}) {
      boost::math::students_t dist(df);
      for (double t : {-8.0, -2.5, -0.3, 0.0, 0.7, 1.9, 4.4, 12.0}) {
        CHECK(stats::student_t_cdf(t, df) == doctest::Approx(boost::math::cdf(dist, t)).epsilon(1e-10));
      }
      for (double p : {0.6, 0.9, 0.975, 0.995}) {
        CHECK(stats::student_t_quantile(p, df) == doctest::Approx(boost::math::quantile(dist, p)).epsilon(1e-8));
      }
    }
#endif
  }

  TEST_CASE("t interval") {
    const std::vector<double> v{0.70, 0.72, 0.68, 0.71, 0.69, 0.73, 0.70, 0.72, 0.71, 0.69};
    const auto s = stats::summarize(v);
    const auto ci = stats::t_interval(v);
    const double half = 2.2621571628 * s.sd / std::sqrt(10.0);
    CHECK(ci.first == doctest::Approx(s.mean - half).epsilon(1e-9));
    CHECK(ci.second == doctest::Approx(s.mean + half).epsilon(1e-9));
  }

  TEST_CASE("holm hand-walked example") {
    const auto r = holm_correct(std::vector<double>{0.01, 0.04, 0.03}, 0.05);
    CHECK(r.adjusted_reject == std::vector<bool>{true, false, false});
    CHECK(r.adjusted_p[0] == doctest::Approx(0.03));
    CHECK(r.adjusted_p[2] == doctest::Approx(0.06));
    CHECK(r.adjusted_p[1] == doctest::Approx(0.06));
    CHECK(holm_correct(std::vector<double>{1.0, 1.0, 1.0}).adjusted_reject == std::vector<bool>(3, false));
    CHECK(holm_correct(std::vector<double>{0.04}).adjusted_reject == std::vector<bool>{true});
    CHECK(holm_correct(std::vector<double>{}).adjusted_reject.empty());
  }

  TEST_CASE("holm matches the textbook procedure, dominates Bonferroni, is monotone") {
    oracle::Lcg g(31);
    for (int t = 0; t < 1000; ++t) {
      const int m = 1 + g.below(15);
      std::vector<double> p;
      for (int i = 0; i < m; ++i) p.push_back(g.uniform() < 0.3 ? g.uniform() * 0.02 : g.uniform());
      const auto r = holm_correct(p, 0.05);
      CHECK(r.adjusted_reject == oracle::holm_reject(p, 0.05));
      for (int i = 0; i < m; ++i) {
        if (p[static_cast<std::size_t>(i)] <= 0.05 / m) CHECK(r.adjusted_reject[static_cast<std::size_t>(i)]);
        for (int j = 0; j < m; ++j) {
          if (r.adjusted_reject[static_cast<std::size_t>(i)] && p[static_cast<std::size_t>(j)] < p[static_cast<std::size_t>(i)]) {
            CHECK(r.adjusted_reject[static_cast<std::size_t>(j)]);
          }
        }
        CHECK(r.adjusted_reject[static_cast<std::size_t>(i)] == (r.adjusted_p[static_cast<std::size_t>(i)] <= 0.05));
      }
    }
  }

  TEST_CASE("premium gap and gap closed") {
    CHECK(premium_gap(0.75, std::vector<double>{0.70, 0.73}) == doctest::Approx(0.02));
    CHECK(premium_gap(0.7, std::vector<double>{0.7}) == 0.0);
    CHECK(error_of([] { premium_gap(0.7, std::vector<double>{}); }) == ErrorCode::EmptyExternalSet);
    CHECK(gap_closed_pct(0.9, 0.8) == doctest::Approx(50.0));
    CHECK(std::abs(gap_closed_pct(0.7554, 0.7385) - 6.5) <= 0.1);
    CHECK(std::round((0.7554 - 0.7385) * 1000) / 1000 == doctest::Approx(0.017));
    CHECK(error_of([] { gap_closed_pct(0.9, 1.0); }) == ErrorCode::DegenerateBaseline);
  }
}
