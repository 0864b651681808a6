#include <cmath>
#include <random>

#include "altinc/error.hpp"
#include "altinc/source_select.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace altinc;
namespace S = altinc::select;

TEST_CASE("dissimilarity from per-image means") {
  std::vector<double> ones{1.0, 1.0};
  CHECK(S::dissimilarity_from_means(ones) == 0.0);
  std::vector<double> half{0.5, 0.5, 0.5};
  CHECK(S::dissimilarity_from_means(half) == 0.5);
  std::vector<double> three{0.8, 0.6, 0.7};
  CHECK(S::dissimilarity_from_means(three) == doctest::Approx(0.3));
  std::vector<double> none;
  CHECK_THROWS_AS(S::dissimilarity_from_means(none), ValueError);
}

TEST_CASE("dissimilarity through a discriminator with a constant head") {
  SegNet seg(3, 1);
  Discriminator d(3, 2);
  for (auto& p : d.params()) {
    if (p.name == "head.weight") p.value = Tensor(p.value.shape(), 0.0);
  }
  std::mt19937_64 rng(3);
  std::vector<Tensor> imgs{oracle::random_tensor(rng, {3, 8, 8}, 0, 1), oracle::random_tensor(rng, {3, 8, 8}, 0, 1)};
  CHECK(S::dissimilarity(seg, d, imgs) == doctest::Approx(0.5).epsilon(1e-15));
  for (auto& p : d.params()) {
    if (p.name == "head.bias") p.value = Tensor(p.value.shape(), 50.0);
  }
  CHECK(S::dissimilarity(seg, d, imgs) < 1e-15);
  CHECK(S::mean_source_probability(seg, d, imgs[0]) == doctest::Approx(1.0));
}

TEST_CASE("best source argmin") {
  std::vector<double> a{0.4, 0.1, 0.3};
  CHECK(S::select_best_source(a) == 1);
  std::vector<double> tie{0.2, 0.2};
  CHECK(S::select_best_source(tie) == 0);
  std::vector<double> one{0.3};
  CHECK_THROWS_AS(S::select_best_source(one), ValueError);
  std::vector<double> nan{0.3, std::nan("")};
  CHECK_THROWS_AS(S::select_best_source(nan), ValueError);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> d(4), e(4);
    for (std::size_t i = 0; i < 4; ++i) {
      d[i] = u(rng);
      e[i] = std::exp(3.0 * d[i]) + 7.0;
    }
    CHECK(S::select_best_source(d) == S::select_best_source(e));
  }
}

TEST_CASE("distillation weights") {
  std::vector<double> d{0.0, 0.2, 0.4};
  auto w = S::distillation_weights(d, 0, 5.0);
  REQUIRE(w.size() == 2);
  const double z = std::exp(-1.0) + std::exp(-2.0);
  CHECK(w[0] == doctest::Approx(std::exp(-1.0) / z).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(std::exp(-2.0) / z).epsilon(1e-12));
  CHECK(w[0] == doctest::Approx(0.7311).epsilon(1e-4));

  std::vector<double> eq{0.1, 0.3, 0.3};
  auto we = S::distillation_weights(eq, 0, 5.0);
  CHECK(we[0] == doctest::Approx(0.5));
  CHECK(we[1] == doctest::Approx(0.5));

  auto tiny = S::distillation_weights(d, 0, 1e-12);
  CHECK(tiny[0] == doctest::Approx(0.5));

  std::vector<double> two{0.1, 0.9};
  auto w1 = S::distillation_weights(two, 0, 5.0);
  REQUIRE(w1.size() == 1);
  CHECK(w1[0] == 1.0);

  for (double di : {0.35, 0.3, 0.1, 0.0}) {
    std::vector<double> dd{0.0, di, 0.4, 0.2};
    std::vector<double> lower{0.0, di - 0.05, 0.4, 0.2};
    CHECK(S::distillation_weights(lower, 0, 5.0)[0] > S::distillation_weights(dd, 0, 5.0)[0]);
  }
  CHECK_THROWS_AS(S::distillation_weights(d, 0, 0.0), ValueError);
  CHECK_THROWS_AS(S::distillation_weights(d, 3, 5.0), ValueError);
}

TEST_CASE("report construction and json round-trip") {
  auto r = S::make_report({0.5, 0.2, 0.4}, 5.0, 12);
  CHECK(r.best_source == 1);
  CHECK(r.teachers == std::vector<std::size_t>{0, 2});
  double s = 0;
  for (double w : r.weights) s += w;
  CHECK(std::abs(s - 1.0) <= 1e-9);
  CHECK(r.weights[1] > r.weights[0]);
  CHECK(S::report_from_json(S::report_to_json(r)) == r);
  CHECK_THROWS_AS(S::report_from_json("{\"nope\": 1}"), FormatError);
  CHECK_THROWS_AS(S::report_from_json("not json"), FormatError);
}
