#include <doctest.h>

#include <cmath>
#include <random>

#include "depthbnn/dist.hpp"
#include "depthbnn/errors.hpp"
#include "oracles.hpp"

using namespace depthbnn;

TEST_CASE("std_normal_cdf") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(std_normal_cdf(8.0) - 1.0) < 1e-12);
  // Quadrature oracle, frozen: 0.8077 at 0.8696.
  const double quad = oracle::std_normal_cdf(0.8696);
  CHECK(quad == doctest::Approx(0.8077).epsilon(1e-4));
  CHECK(std::abs(std_normal_cdf(0.8696) - quad) < 1e-12);
  CHECK_THROWS_AS(std_normal_cdf(std::nan("")), DomainError);
  CHECK_THROWS_AS(std_normal_cdf(INFINITY), DomainError);

  double prev = 0.0;
  for (double x = -10.0; x <= 10.0; x += 0.01) {
    const double v = std_normal_cdf(x);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("log survival stays finite deep in the tail") {
  CHECK(std::isfinite(log_std_normal_sf(40.0)));
  CHECK(log_std_normal_sf(40.0) < log_std_normal_sf(39.0));
  // Asymptotic branch agrees with erfc just below the switch point.
  const double direct = std::log(0.5 * std::erfc(34.9 / std::sqrt(2.0)));
  CHECK(log_std_normal_sf(34.9) == doctest::Approx(direct).epsilon(1e-12));
  const double lo = log_std_normal_sf(35.0 - 1e-9);
  const double hi = log_std_normal_sf(35.0 + 1e-9);
  CHECK(std::abs(lo - hi) < 1e-6);
}

TEST_CASE("trunc_normal_depth_pmf matches quadrature") {
  const TruncNormalDepth prior{0.0, 1.15, 0.0, 1.0};
  CHECK(trunc_normal_depth_pmf(prior, 0) == doctest::Approx(0.615).epsilon(1e-3));
  CHECK(std::abs(trunc_normal_depth_pmf(prior, 0) - oracle::trunc_normal_cell(0.0, 1.15, 0)) < 1e-10);

  double total = 0.0;
  for (int L = 0; L <= 50; ++L) total += trunc_normal_depth_pmf(prior, L);
  CHECK(std::abs(total - 1.0) < 1e-9);

  for (double mu : {-1.5, 0.7, 3.3}) {
    for (double sigma : {0.6, 1.4, 2.9}) {
      for (int L : {0, 2, 7}) {
        CHECK(std::abs(trunc_normal_depth_pmf({mu, sigma, 0.0, 1.0}, L) - oracle::trunc_normal_cell(mu, sigma, L)) <
              1e-8);
      }
    }
  }
  CHECK_THROWS_AS(trunc_normal_depth_pmf({0.0, 0.0, 0.0, 1.0}, 0), ParameterError);
  CHECK_THROWS_AS(trunc_normal_depth_pmf({0.0, -1.0, 0.0, 1.0}, 0), ParameterError);
  CHECK(trunc_normal_depth_pmf(prior, -1) == 0.0);
}

TEST_CASE("quantile truncation zeroes depths outside the support") {
  const TruncNormalDepth q{0.0, 1.8, 0.025, 0.975};
  const DepthRange s = depth_support(q);
  for (int L = 0; L <= 30; ++L) {
    if (!s.contains(L)) CHECK(trunc_normal_depth_pmf(q, L) == 0.0);
  }
  const TruncNormalDepth shifted{6.0, 0.7, 0.1, 0.9};
  const DepthRange s2 = depth_support(shifted);
  CHECK(s2.lo > 0);
  CHECK(trunc_normal_depth_pmf(shifted, 0) == 0.0);
  double total = 0.0;
  for (int L = s2.lo; L <= s2.hi; ++L) total += trunc_normal_depth_pmf(shifted, L);
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("depth_support") {
  // Poisson(1) cumulative: 0.3679, 0.7358, 0.9197, 0.9810.
  CHECK(oracle::poisson_pmf(1.0, 0) + oracle::poisson_pmf(1.0, 1) + oracle::poisson_pmf(1.0, 2) < 0.95);
  CHECK(depth_support(PoissonDepth{1.0, 0.95}) == DepthRange{0, 3});

  // 0.975-quantile of the half-normal with sigma 1.8, bisection oracle on the
  // quadrature CDF: about 4.03.
  auto cdf = [](double x) { return oracle::normal_mass(0.0, 1.8, 0.0, x) / 0.5; };
  double lo = 0.0, hi = 20.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < 0.975 ? lo : hi) = mid;
  }
  CHECK(lo == doctest::Approx(4.0346).epsilon(1e-3));
  const DepthRange s = depth_support(TruncNormalDepth{0.0, 1.8, 0.025, 0.975});
  CHECK(s.lo == 0);
  CHECK(s.hi >= 3);
  CHECK(s.hi == static_cast<int>(std::ceil(lo)) - 1);

  CHECK(depth_support(TruncNormalDepth{0.0, 1.15, 0.0, 1.0}).lo == 0);
}

TEST_CASE("depth_pmf") {
  const DepthPMF po = depth_pmf(PoissonDepth{0.5, 1.0});
  CHECK(po.support.hi <= 30);
  double total = 0.0;
  for (double p : po.probs) total += p;
  CHECK(std::abs(total - 1.0) < 1e-9);

  const TruncNormalDepth full{0.0, 1.15, 0.0, 1.0};
  const DepthPMF tn = depth_pmf(full);
  for (int L = tn.support.lo; L <= tn.support.hi; ++L) {
    CHECK(std::abs(tn.prob(L) - trunc_normal_depth_pmf(full, L)) < 1e-12);
  }

  const DepthPMF trunc = depth_pmf(PoissonDepth{1.0, 0.95});
  CHECK(std::abs(trunc.prob(0) / trunc.prob(1) - 1.0) < 1e-9);

  // Large depths stay finite via log-gamma.
  const DepthPMF big = depth_pmf(PoissonDepth{200.0, 0.95});
  CHECK(std::isfinite(big.mean()));
  CHECK(big.mean() > 150.0);
}

TEST_CASE("gaussian_kl") {
  CHECK(gaussian_kl({0, 1, 0, 1}) == 0.0);
  CHECK(gaussian_kl({1, 1, 0, 1}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(gaussian_kl({0, 2, 0, 1}) == doctest::Approx(0.8069).epsilon(1e-4));
  CHECK_THROWS_AS(gaussian_kl({0, 0, 0, 1}), ParameterError);
  CHECK_THROWS_AS(gaussian_kl({0, 1, 0, -1}), ParameterError);

  // Monte Carlo E_q[ln q - ln p] with 10^6 draws.
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  double acc = 0.0;
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i) {
    const double x = 2.0 * n01(rng);
    acc += std::log(oracle::normal_pdf(x, 0.0, 2.0)) - std::log(oracle::normal_pdf(x, 0.0, 1.0));
  }
  CHECK(acc / draws == doctest::Approx(gaussian_kl({0, 2, 0, 1})).epsilon(5e-3));
}

TEST_CASE("gaussian_kl is non-negative and zero only at identity") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mean(-3.0, 3.0), sd(0.05, 4.0);
  for (int i = 0; i < 2000; ++i) {
    const GaussianPair g{mean(rng), sd(rng), mean(rng), sd(rng)};
    CHECK(gaussian_kl(g) >= 0.0);
    CHECK(std::abs(gaussian_kl({g.q_mean, g.q_std, g.q_mean, g.q_std})) < 1e-12);
    CHECK(gaussian_kl(g) > 0.0);
  }
}

TEST_CASE("gaussian_kl_grad matches the closed form derivative") {
  const GaussianPair g{0.3, 0.7, -0.2, 1.3};
  const auto grad = gaussian_kl_grad(g);
  CHECK(grad[0] == doctest::Approx(oracle::derivative([&](double m) { return gaussian_kl({m, g.q_std, g.p_mean, g.p_std}); }, g.q_mean)).epsilon(1e-8));
  CHECK(grad[1] == doctest::Approx(oracle::derivative([&](double s) { return gaussian_kl({g.q_mean, s, g.p_mean, g.p_std}); }, g.q_std)).epsilon(1e-8));
}

TEST_CASE("softplus") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::abs(softplus_inverse(softplus(5.3)) - 5.3) < 1e-9);
  CHECK(softplus(-40.0) > 0.0);
  CHECK(softplus(-40.0) == doctest::Approx(std::exp(-40.0)).epsilon(1e-12));
  CHECK(softplus(50.0) == doctest::Approx(50.0).epsilon(1e-15));
  CHECK_THROWS_AS(softplus_inverse(0.0), DomainError);
  CHECK_THROWS_AS(softplus_inverse(-1.0), DomainError);
  for (double x = -35.0; x <= 35.0; x += 0.37) {
    CHECK(std::abs(softplus_inverse(softplus(x)) - x) <= 1e-9 * std::max(1.0, std::abs(x)));
  }
}

TEST_CASE("depth_kl") {
  const TruncNormalDepth prior{0.0, 1.15, 0.0, 1.0};
  CHECK(std::abs(depth_kl(depth_pmf(prior), prior)) < 1e-12);

  const DepthPMF point{{2, 2}, {1.0}};
  CHECK(depth_kl(point, prior) == doctest::Approx(-std::log(oracle::trunc_normal_cell(0.0, 1.15, 2))).epsilon(1e-9));

  // Hand summation over {0..3}: q proportional to 1, 1, 1/2, 1/6.
  const DepthPMF q = depth_pmf(PoissonDepth{1.0, 0.95});
  const double w[] = {1.0, 1.0, 0.5, 1.0 / 6.0};
  const double z = w[0] + w[1] + w[2] + w[3];
  double hand = 0.0;
  for (int k = 0; k < 4; ++k) hand += w[k] / z * std::log((w[k] / z) / oracle::poisson_pmf(0.5, k));
  const double kl = depth_kl(q, PoissonDepth{0.5, 1.0});
  CHECK(kl > 0.0);
  CHECK(kl == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("normalization over random parameters") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mu(-2.0, 8.0), sigma(0.3, 4.0), lq(0.0, 0.4), uq(0.6, 1.0),
      rate(0.05, 20.0);
  for (int i = 0; i < 300; ++i) {
    const DepthPMF a = depth_pmf(TruncNormalDepth{mu(rng), sigma(rng), lq(rng), uq(rng)});
    const DepthPMF b = depth_pmf(PoissonDepth{rate(rng), uq(rng)});
    for (const auto* p : {&a, &b}) {
      double total = 0.0;
      for (double v : p->probs) {
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("shrinking the quantile band never enlarges the support") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mu(-2.0, 6.0), sigma(0.3, 3.0), u(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    const double m = mu(rng), s = sigma(rng);
    const double l1 = 0.3 * u(rng), u1 = 0.7 + 0.3 * u(rng);
    const double l2 = l1 + (0.5 - l1) * u(rng) * 0.9, u2 = u1 - (u1 - 0.5) * u(rng) * 0.9;
    const DepthRange wide = depth_support(TruncNormalDepth{m, s, l1, u1});
    const DepthRange narrow = depth_support(TruncNormalDepth{m, s, l2, u2});
    CHECK(narrow.lo >= wide.lo);
    CHECK(narrow.hi <= wide.hi);
  }
}

TEST_CASE("log pmf gradient matches central differences") {
  for (const TruncNormalDepth d : {TruncNormalDepth{0.4, 1.3, 0.0, 1.0}, TruncNormalDepth{2.5, 1.1, 0.025, 0.975},
                                   TruncNormalDepth{-1.0, 2.2, 0.0, 1.0}, TruncNormalDepth{4.2, 0.8, 0.05, 0.95}}) {
    const DepthRange s = depth_support(d);
    for (int L = s.lo; L <= std::min(s.hi, s.lo + 6); ++L) {
      const auto g = trunc_normal_depth_log_pmf_grad(d, L);
      auto f_mu = [&](double m) { return std::log(trunc_normal_depth_pmf({m, d.sigma, d.lower_q, d.upper_q}, L)); };
      auto f_sd = [&](double v) { return std::log(trunc_normal_depth_pmf({d.mu, v, d.lower_q, d.upper_q}, L)); };
      const double n_mu = oracle::derivative(f_mu, d.mu);
      const double n_sd = oracle::derivative(f_sd, d.sigma);
      CHECK(std::abs(g[0] - n_mu) <= 1e-4 * std::max(1.0, std::abs(n_mu)));
      CHECK(std::abs(g[1] - n_sd) <= 1e-4 * std::max(1.0, std::abs(n_sd)));
    }
  }
}

TEST_CASE("pmf jacobian matches central differences on a frozen support") {
  const DepthRange s{0, 4};
  const TruncNormalDepth d{0.3, 1.7, 0.025, 0.975};
  const auto jac = depth_pmf_jacobian(d, s);
  for (int L = 0; L <= 4; ++L) {
    auto f_mu = [&](double m) { return depth_pmf(TruncNormalDepth{m, d.sigma, d.lower_q, d.upper_q}, s).prob(L); };
    auto f_sd = [&](double v) { return depth_pmf(TruncNormalDepth{d.mu, v, d.lower_q, d.upper_q}, s).prob(L); };
    CHECK(jac[0][static_cast<std::size_t>(L)] == doctest::Approx(oracle::derivative(f_mu, d.mu)).epsilon(1e-6));
    CHECK(jac[1][static_cast<std::size_t>(L)] == doctest::Approx(oracle::derivative(f_sd, d.sigma)).epsilon(1e-6));
  }
  const auto pj = depth_pmf_jacobian(PoissonDepth{1.3, 0.95}, s);
  for (int L = 0; L <= 4; ++L) {
    auto f = [&](double r) { return depth_pmf(PoissonDepth{r, 0.95}, s).prob(L); };
    CHECK(pj[0][static_cast<std::size_t>(L)] == doctest::Approx(oracle::derivative(f, 1.3)).epsilon(1e-6));
  }
}

TEST_CASE("discrete truncated normal decouples mean and variance") {
  bool under = false, over = false;
  for (double mu = -2.0; mu <= 8.0; mu += 0.5) {
    for (double sigma = 0.3; sigma <= 4.0; sigma += 0.3) {
      const DepthPMF p = depth_pmf(TruncNormalDepth{mu, sigma, 0.0, 1.0});
      under = under || p.variance() < p.mean();
      over = over || p.variance() > p.mean();
    }
  }
  CHECK(under);
  CHECK(over);
}
