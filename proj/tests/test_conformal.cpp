#include "quantgrid/conformal.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace quantgrid;

namespace {

const Timestamp kT0 = parse_timestamp("2018-01-01T00:00");

Timestamp at(int step) { return kT0 + std::chrono::minutes(30) * step; }

std::vector<double> iota_scores(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 1.0);
  return v;
}

// ceil((1 - j/1000)(n + 1)) in integers
double sort_oracle(std::vector<double> s, int permille) {
  std::sort(s.begin(), s.end());
  const auto n = static_cast<long>(s.size());
  const long k = std::max(1L, ((1000 - permille) * (n + 1) + 999) / 1000);
  return k > n ? s.back() : s[static_cast<std::size_t>(k - 1)];
}

}  // namespace

TEST_SUITE("conformal") {
  TEST_CASE("nonconformity examples") {
    CHECK(nonconformity(3, 7, 5) == -2.0);
    CHECK(nonconformity(3, 7, 8) == 1.0);
    CHECK(nonconformity(3, 7, 3) == 0.0);
    CHECK_THROWS_AS(nonconformity(3, std::numeric_limits<double>::infinity(), 3), std::invalid_argument);
  }

  TEST_CASE("conformal quantile examples") {
    const auto ten = iota_scores(10);
    CHECK(conformal_quantile(ten, 0.1).value == 10.0);
    CHECK_FALSE(conformal_quantile(ten, 0.1).window_too_small);
    const auto ninety_nine = iota_scores(99);
    CHECK(conformal_quantile(ninety_nine, 0.1).value == 90.0);
    const std::vector<double> one{4.5};
    const auto q = conformal_quantile(one, 0.1);
    CHECK(q.value == 4.5);
    CHECK(q.window_too_small);
    CHECK_THROWS_AS(conformal_quantile(std::span<const double>{}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(conformal_quantile(ten, 1.0), std::invalid_argument);
    CHECK(conformal_rank(100, 0.1) == 91);
    CHECK(conformal_rank(9, 0.1) == 9);
  }

  TEST_CASE("200 random windows match the sort oracle bitwise") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> size(1, 500), level(1, 999);
    std::normal_distribution<double> score(0.0, 2.0);
    for (int c = 0; c < 200; ++c) {
      std::vector<double> s(static_cast<std::size_t>(size(rng)));
      for (auto& v : s) v = score(rng);
      if (c % 4 == 0) {
        for (std::size_t i = 1; i < s.size(); i += 3) s[i] = s[i - 1];  // ties
      }
      const int permille = level(rng);
      const double got = conformal_quantile(s, permille / 1000.0).value;
      CHECK(got == sort_oracle(s, permille));
    }
  }

  TEST_CASE("interval construction") {
    const auto a = construct_interval(3, 7, 0.5);
    CHECK(a.low == 2.5);
    CHECK(a.high == 7.5);
    const auto b = construct_interval(3, 7, 0.0);
    CHECK(b.low == 3.0);
    CHECK(b.high == 7.0);
    const auto c = construct_interval(3, 7, -1.0);
    CHECK(c.low == 4.0);
    CHECK(c.high == 6.0);
    CHECK_FALSE(c.clamped);
    const auto d = construct_interval(3, 7, -3.0);
    CHECK(d.clamped);
    CHECK(d.low == 5.0);
    CHECK(d.high == 5.0);
    const auto crossed = construct_interval(7, 3, 0.5);
    CHECK(crossed.low == 2.5);
    CHECK(crossed.high == 7.5);
  }

  TEST_CASE("calibrate") {
    const std::vector<double> none;
    CHECK_THROWS_AS(calibrate(none, none, none), std::invalid_argument);
    const std::vector<double> lo{1, 2, 3, 4}, up{3, 4, 5, 6}, mid{2, 3, 4, 5};
    const auto w = calibrate(lo, up, mid);
    CHECK(w.size() == 4);
    for (double s : w.scores()) CHECK(s == -1.0);
    const std::vector<double> short_y{1, 2};
    CHECK_THROWS_AS(calibrate(lo, up, short_y), std::invalid_argument);
    // crossed quantiles are swapped before scoring
    CHECK(calibrate(up, lo, mid).scores() == w.scores());
  }

  TEST_CASE("stream examples") {
    ScqrStream empty(NonconformityWindow({1, 2, 3}), 0.2);
    CHECK(empty.process({}).empty());
    CHECK(empty.windows().front().scores() == std::vector<double>{1, 2, 3});

    ScqrStream constant(NonconformityWindow(std::vector<double>(20, 0.5)), 0.1);
    std::vector<StreamItem> items;
    for (int t = 0; t < 10; ++t) items.push_back({at(t), 0, 3.0, 7.0, 7.5});
    for (const auto& o : constant.process(items)) {
      CHECK(o.q == 0.5);
      CHECK(o.interval.low == 2.5);
      CHECK(o.interval.high == 7.5);
    }
  }

  TEST_CASE("three-step stream matches a hand simulation") {
    // alpha 0.5 on 5 scores: rank ceil(0.5 * 6) = 3
    ScqrStream s(NonconformityWindow({0.5, -1, 2, 0.1, 1}), 0.5);
    const std::vector<StreamItem> items{{at(0), 0, 3, 7, 10.0}, {at(1), 0, 3, 7, 5.0}, {at(2), 0, 0, 4, 1.0}};
    const auto out = s.process(items);
    REQUIRE(out.size() == 3);
    CHECK(out[0].q == 0.5);
    CHECK(out[0].interval.low == 2.5);
    CHECK(out[0].interval.high == 7.5);
    CHECK(out[1].q == 1.0);
    CHECK(out[1].interval.low == 2.0);
    CHECK(out[1].interval.high == 8.0);
    CHECK(out[2].q == 1.0);
    CHECK(out[2].interval.low == -1.0);
    CHECK(out[2].interval.high == 5.0);
    CHECK(s.windows().front().scores() == std::vector<double>{0.1, 1, 3, -2, -1});
    CHECK(s.cursor() == 3);
  }

  TEST_CASE("window keeps the newest scores after the surviving tail") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z(0, 1);
    std::vector<double> initial(50);
    for (auto& v : initial) v = z(rng);
    for (int k : {0, 1, 17, 50, 73}) {
      ScqrStream s(NonconformityWindow(initial), 0.1);
      std::vector<StreamItem> items;
      std::vector<double> scores;
      for (int t = 0; t < k; ++t) {
        const double lo = z(rng), y = z(rng);
        items.push_back({at(t), 0, lo, lo + 1.0, y});
        scores.push_back(nonconformity(lo, lo + 1.0, y));
      }
      s.process(items);
      std::vector<double> want;
      for (std::size_t i = static_cast<std::size_t>(std::min(k, 50)); i < initial.size(); ++i) want.push_back(initial[i]);
      for (std::size_t i = scores.size() - std::min<std::size_t>(scores.size(), 50); i < scores.size(); ++i) want.push_back(scores[i]);
      CHECK(s.windows().front().scores() == want);
      CHECK(s.windows().front().size() == 50);
    }
  }

  TEST_CASE("one timestamp forms one step") {
    ScqrStream s(NonconformityWindow({0, 0, 0, 0}), 0.2);
    // both items see the pre-step window, even though the first one misses badly
    const std::vector<StreamItem> items{{at(0), 0, 0, 1, 50.0}, {at(0), 1, 0, 1, 0.5}};
    const auto out = s.process(items);
    CHECK(out[0].q == out[1].q);
    CHECK(s.cursor() == 1);
    CHECK(s.windows().front().scores() == std::vector<double>{0, 0, 49, -0.5});
  }

  TEST_CASE("out-of-order timestamps are rejected") {
    ScqrStream s(NonconformityWindow({1, 2}), 0.2);
    const std::vector<StreamItem> items{{at(2), 0, 0, 1, 0.5}, {at(1), 0, 0, 1, 0.5}};
    CHECK_THROWS_AS(s.process(items), std::invalid_argument);
    const std::vector<StreamItem> again{{at(2), 0, 0, 1, 0.5}};
    CHECK_THROWS_AS(s.process(again), std::invalid_argument);
  }

  TEST_CASE("enlarging a score never lowers Q") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> z(0, 1);
    std::uniform_real_distribution<double> a(0.02, 0.5);
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> s(1 + rng() % 80);
      for (auto& v : s) v = z(rng);
      const double alpha = a(rng);
      const double before = conformal_quantile(s, alpha).value;
      s[rng() % s.size()] += std::abs(z(rng));
      CHECK(conformal_quantile(s, alpha).value >= before);
    }
  }

  TEST_CASE("width decomposes into band plus twice Q") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> z(0, 1);
    std::vector<double> init(100);
    for (auto& v : init) v = z(rng);
    ScqrStream s(NonconformityWindow(init), 0.1);
    std::vector<StreamItem> items;
    for (int t = 0; t < 300; ++t) {
      const double lo = z(rng);
      items.push_back({at(t), 0, lo, lo + 1.5 + std::abs(z(rng)), z(rng)});
    }
    const auto out = s.process(items);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i].interval.clamped) continue;
      CHECK(out[i].interval.high - out[i].interval.low ==
            doctest::Approx((items[i].q_up - items[i].q_lo) + 2 * out[i].q).epsilon(1e-12));
    }
  }

  TEST_CASE("static mode never updates the window") {
    ScqrStream s(NonconformityWindow({1, 2, 3, 4}), 0.2, UpdateMode::Static);
    const std::vector<StreamItem> items{{at(0), 0, 0, 1, 100.0}, {at(1), 0, 0, 1, 100.0}};
    const auto out = s.process(items);
    CHECK(out[0].q == out[1].q);
    CHECK(s.windows().front().scores() == std::vector<double>{1, 2, 3, 4});
  }

  TEST_CASE("items without an observation do not update") {
    ScqrStream s(NonconformityWindow({1, 2, 3}), 0.2);
    const std::vector<StreamItem> items{{at(0), 0, 0, 1, std::nullopt}};
    s.process(items);
    CHECK(s.windows().front().scores() == std::vector<double>{1, 2, 3});
  }

  TEST_CASE("per-user windows stay separate") {
    ScqrStream s(std::vector<NonconformityWindow>{NonconformityWindow({0, 0, 0}), NonconformityWindow({5, 5, 5})}, 0.4);
    const std::vector<StreamItem> items{{at(0), 0, 0, 1, 3.0}, {at(0), 1, 0, 1, 0.5}};
    const auto out = s.process(items);
    CHECK(out[0].q == 0.0);
    CHECK(out[1].q == 5.0);
    CHECK(s.windows()[0].scores() == std::vector<double>{0, 0, 2});
    CHECK(s.windows()[1].scores() == std::vector<double>{5, 5, -0.5});
    const std::vector<StreamItem> stranger{{at(1), 2, 0, 1, 0.5}};
    CHECK_THROWS_AS(s.process(stranger), std::out_of_range);
  }

  TEST_CASE("a checkpointed stream resumes bit-exactly") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z(0, 1);
    std::vector<double> init(64);
    for (auto& v : init) v = z(rng) * 0.37;
    std::vector<StreamItem> items;
    for (int t = 0; t < 200; ++t) {
      for (Index u = 0; u < 3; ++u) {
        const double lo = z(rng) / 3.0;
        items.push_back({at(t), u, lo, lo + 0.7, z(rng) / 7.0});
      }
    }
    ScqrStream whole(NonconformityWindow(init), 0.1);
    const auto all = whole.process(items);

    ScqrStream first(NonconformityWindow(init), 0.1);
    const std::span<const StreamItem> span(items);
    auto a = first.process(span.first(300));
    ScqrStream resumed = ScqrStream::from_json(nlohmann::json::parse(first.to_json().dump()));
    CHECK(resumed.cursor() == 100);
    const auto b = resumed.process(span.subspan(300));
    a.insert(a.end(), b.begin(), b.end());
    REQUIRE(a.size() == all.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].interval.low == all[i].interval.low);
      CHECK(a[i].interval.high == all[i].interval.high);
    }
    CHECK(resumed.windows().front().scores() == whole.windows().front().scores());
    CHECK_THROWS_AS(resumed.process(span.first(1)), std::invalid_argument);
    CHECK_THROWS_AS(ScqrStream::from_json(nlohmann::json{{"format", "other"}}), std::invalid_argument);
  }

  TEST_CASE("exchangeable residuals reach the target coverage") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> z(0, 1);
    double total = 0.0;
    const int seeds = 5;
    for (int seed = 0; seed < seeds; ++seed) {
      std::vector<double> lo, up, y;
      for (int i = 0; i < 500; ++i) {
        lo.push_back(-1.0);
        up.push_back(1.0);
        y.push_back(z(rng) * 1.3);
      }
      ScqrStream s(calibrate(lo, up, y), 0.1);
      std::vector<StreamItem> items;
      for (int t = 0; t < 2000; ++t) items.push_back({at(t), 0, -1.0, 1.0, z(rng) * 1.3});
      const auto out = s.process(items);
      int hit = 0;
      for (std::size_t i = 0; i < out.size(); ++i) hit += (*items[i].y >= out[i].interval.low && *items[i].y <= out[i].interval.high);
      total += hit / 2000.0;
    }
    CHECK(total / seeds >= 0.87);
    CHECK(total / seeds <= 0.94);
  }
}
