#include "cvrl/distributions.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace cvrl;
using test::grad_check;
using test::random_mat;

TEST_CASE("rng streams are deterministic and independent of platform state") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(124);
  CHECK(c.next_u64() != Rng(123).next_u64());
}

TEST_CASE("uniform_int is in range and roughly uniform") {
  Rng rng(7);
  int counts[10] = {0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const uint64_t v = rng.uniform_int(10);
    REQUIRE(v < 10);
    ++counts[v];
  }
  for (int c : counts) CHECK(std::abs(c - n / 10) < 5 * std::sqrt(n / 10.0));
}

TEST_CASE("normal sampler matches moments within 4 standard errors") {
  Rng rng(8);
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("reparameterized sampling matches parameters within 4 standard errors") {
  Rng rng(9);
  DiagGaussian g{Vec::Constant(1, 0.7), Vec::Constant(1, 1.3)};
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_gaussian(g, rng)[0];
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean - 0.7) < 4.0 * 1.3 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(sd - 1.3) < 4.0 * 1.3 * std::sqrt(0.5 / n));
}

TEST_CASE("gaussian kl identities") {
  DiagGaussian p{Vec::Zero(1), Vec::Ones(1)};
  DiagGaussian q{Vec::Constant(1, 1.0), Vec::Ones(1)};
  CHECK(gaussian_kl(p, p) == 0.0);
  CHECK(gaussian_kl(q, p) == doctest::Approx(0.5));
}

TEST_CASE("gaussian kl is nonnegative and zero only at equality") {
  Rng rng(10);
  for (int i = 0; i < 200; ++i) {
    DiagGaussian q{random_mat(4, 1, rng).col(0),
                   (random_mat(4, 1, rng).array().abs() + 0.1).matrix().col(0)};
    DiagGaussian p{random_mat(4, 1, rng).col(0),
                   (random_mat(4, 1, rng).array().abs() + 0.1).matrix().col(0)};
    CHECK(gaussian_kl(q, p) >= 0.0);
  }
}

TEST_CASE("kl matches a monte-carlo estimate within 3 standard errors") {
  Rng rng(11);
  DiagGaussian q{Vec::Constant(2, 0.3), Vec::Constant(2, 0.8)};
  DiagGaussian p{Vec::Constant(2, -0.2), Vec::Constant(2, 1.4)};
  const double exact = gaussian_kl(q, p);

  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec x = sample_gaussian(q, rng);
    const double d = gaussian_log_prob(q, x) - gaussian_log_prob(p, x);
    sum += d;
    sq += d * d;
  }
  const double mc = sum / n;
  const double se = std::sqrt((sq / n - mc * mc) / n);
  CHECK(std::abs(mc - exact) < 3.0 * se);
}

TEST_CASE("log_prob of a unit gaussian at its mean is the density constant") {
  DiagGaussianVar g{Var(Mat::Constant(1, 1, 2.5)), Var(Mat::Ones(1, 1))};
  CHECK(g.log_prob(Var(Mat::Constant(1, 1, 2.5))).item() ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)));
}

TEST_CASE("gradcheck: kl and log_prob through both parameter sets") {
  Rng rng(12);
  Var qm(random_mat(3, 2, rng), true), qs_raw(random_mat(3, 2, rng), true);
  Var pm(random_mat(3, 2, rng), true), ps_raw(random_mat(3, 2, rng), true);
  Var x(random_mat(3, 2, rng), true);
  std::vector<Var> params{qm, qs_raw, pm, ps_raw, x};
  auto f = [&] {
    DiagGaussianVar q{qm, softplus_(qs_raw) + 1e-4};
    DiagGaussianVar p{pm, softplus_(ps_raw) + 1e-4};
    return mean_all(gaussian_kl(q, p)) + mean_all(q.log_prob(x));
  };
  CHECK(grad_check(f, params, 1e-5) < 1e-6);
}

TEST_CASE("derive_seed separates purposes") {
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "a", 3) == derive_seed(1, "a", 3));
}
