#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "depthbnn/errors.hpp"
#include "depthbnn/optim.hpp"

using namespace depthbnn;

namespace {

ParameterStore single(double value) {
  ParameterStore s;
  const auto g = s.add_group("p");
  s.allocate(g, 1, value);
  return s;
}

}  // namespace

TEST_CASE("first Adam step moves by about lr") {
  auto store = single(1.0);
  Adam adam({0.005});
  const double g[] = {1.0};
  adam.step(store, g);
  CHECK(store[0] == doctest::Approx(1.0 - 0.005).epsilon(1e-9));
  CHECK(adam.step_count() == 1);
}

TEST_CASE("zero gradient leaves parameters alone") {
  auto store = single(0.37);
  Adam adam;
  const double g[] = {0.0};
  for (int i = 0; i < 50; ++i) adam.step(store, g);
  CHECK(store[0] == 0.37);
}

TEST_CASE("group learning rate overrides") {
  ParameterStore store;
  const auto depth = store.add_group("depth", 0.0005);
  const auto weights = store.add_group("weights");
  store.allocate(depth, 2, 0.0);
  store.allocate(weights, 3, 0.0);
  Adam adam({0.005});
  const std::vector<double> g(5, 1.0);
  adam.step(store, g);
  CHECK(std::abs(store[2] / store[0] - 10.0) < 1e-6);
  CHECK(store.group("depth").count() == 2);
  CHECK(store.group("weights").contains(4));
  CHECK_FALSE(store.group("weights").contains(1));
}

TEST_CASE("groups partition the store") {
  ParameterStore store;
  const auto a = store.add_group("a");
  const auto b = store.add_group("b");
  store.allocate(a, 3);
  store.allocate(b, 2);
  store.allocate(a, 4);
  store.allocate(b, 1);
  for (std::size_t i = 0; i < store.size(); ++i) {
    int owners = 0;
    for (const auto& g : store.groups()) owners += g.contains(i) ? 1 : 0;
    CHECK(owners == 1);
  }
  CHECK(store.group("a").count() + store.group("b").count() == store.size());
  CHECK_THROWS_AS(store.group("c"), ContractViolation);
}

TEST_CASE("Adam rejects non-finite gradients without side effects") {
  ParameterStore store;
  store.allocate(store.add_group("p"), 3, 1.0);
  Adam adam;
  const double ok[] = {0.1, 0.2, 0.3};
  adam.step(store, ok);
  const auto before = std::vector<double>(store.values().begin(), store.values().end());
  const auto m_before = adam.first_moment();
  const double bad[] = {0.1, std::nan(""), 0.3};
  try {
    adam.step(store, bad);
    FAIL("expected NonFiniteGradient");
  } catch (const NonFiniteGradient& e) {
    CHECK(e.index() == 1);
  }
  CHECK(std::vector<double>(store.values().begin(), store.values().end()) == before);
  CHECK(adam.first_moment() == m_before);
  CHECK(adam.step_count() == 1);
  const double inf[] = {INFINITY, 0.0, 0.0};
  CHECK_THROWS_AS(adam.step(store, inf), NonFiniteGradient);
}

TEST_CASE("Adam with lr 0 is the identity") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 50; ++trial) {
    ParameterStore store;
    const auto g = store.add_group("p");
    const std::size_t n = 1 + rng() % 20;
    store.allocate(g, n);
    for (std::size_t i = 0; i < n; ++i) store[i] = n01(rng);
    const auto before = std::vector<double>(store.values().begin(), store.values().end());
    Adam adam({0.0});
    std::vector<double> grad(n);
    for (int s = 0; s < 10; ++s) {
      for (auto& v : grad) v = 10.0 * n01(rng);
      adam.step(store, grad);
    }
    CHECK(std::vector<double>(store.values().begin(), store.values().end()) == before);
    for (double v : adam.second_moment()) CHECK(v >= 0.0);
  }
}

TEST_CASE("moments grow with the store") {
  ParameterStore store;
  const auto g = store.add_group("p");
  store.allocate(g, 2, 0.0);
  Adam adam;
  const double g2[] = {1.0, 1.0};
  adam.step(store, g2);
  store.allocate(g, 2, 0.0);
  const double g4[] = {1.0, 1.0, 1.0, 1.0};
  adam.step(store, g4);
  REQUIRE(adam.first_moment().size() == 4);
  CHECK(adam.first_moment()[2] == doctest::Approx(0.1));
  CHECK(adam.first_moment()[0] == doctest::Approx(0.19));
}

TEST_CASE("softplus std is positive after arbitrary steps") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n01;
  ParameterStore store;
  store.allocate(store.add_group("rho"), 8, -3.0);
  Adam adam({0.5});
  std::vector<double> grad(8);
  for (int s = 0; s < 500; ++s) {
    for (auto& v : grad) v = 100.0 * n01(rng) + 50.0;
    adam.step(store, grad);
    for (double rho : store.values()) CHECK(VariationalWeight{0.0, rho, 0.0, 1.0}.std() > 0.0);
  }
}

TEST_CASE("finite_diff_check") {
  SUBCASE("quadratic") {
    const double x[] = {3.0};
    const double a[] = {6.0};
    const auto r = finite_diff_check([](std::span<const double> p) { return p[0] * p[0]; }, x, a, 1e-5, 1e-8);
    CHECK(std::abs(r.numeric[0] - 6.0) < 1e-6);
    CHECK(r.passed());
  }
  SUBCASE("gaussian KL term") {
    const double x[] = {0.4, 0.2};
    auto f = [](std::span<const double> p) { return gaussian_kl({p[0], softplus(p[1]), 0.0, 1.0}); };
    const auto g = gaussian_kl_grad({0.4, softplus(0.2), 0.0, 1.0});
    const double a[] = {g[0], g[1] * sigmoid(0.2)};
    CHECK(finite_diff_check(f, x, a, 1e-5, 1e-7).passed());
  }
  SUBCASE("corrupted entry is flagged") {
    const double x[] = {0.5, -1.0, 2.0, 0.3};
    auto f = [](std::span<const double> p) { return p[0] * p[1] + std::sin(p[2]) + p[3] * p[3] * p[3]; };
    std::vector<double> a = {x[1], x[0], std::cos(x[2]), 3.0 * x[3] * x[3]};
    CHECK(finite_diff_check(f, x, a, 1e-5, 1e-6).passed());
    a[2] *= 2.0;
    const auto r = finite_diff_check(f, x, a, 1e-5, 1e-6);
    CHECK(r.failing == std::vector<std::size_t>{2});
    CHECK(r.max_rel_error > 0.4);
  }
  SUBCASE("constant coordinate") {
    const double x[] = {1.0, 2.0};
    const double a[] = {2.0, 0.0};
    const auto r = finite_diff_check([](std::span<const double> p) { return p[0] * p[0]; }, x, a, 1e-5, 1e-6);
    CHECK(r.numeric[1] == 0.0);
    CHECK(r.passed());
  }
  SUBCASE("non-finite objective is reported") {
    const double x[] = {1e-6, 1.0};
    const double a[] = {1e6, 1.0};
    auto f = [](std::span<const double> p) { return std::log(p[0]) + p[1]; };
    const auto r = finite_diff_check(f, x, a, 1e-5, 1e-6);
    CHECK(r.non_finite == std::vector<std::size_t>{0});
    CHECK_FALSE(r.passed());
  }
  CHECK_THROWS_AS(finite_diff_check([](std::span<const double>) { return 0.0; }, std::vector<double>{1.0},
                                    std::vector<double>{0.0}, 0.0, 1e-6),
                  ParameterError);
}

TEST_CASE("checkpoint round trip") {
  Checkpoint c;
  c.config_text = "seed = 4\nomega = 1.5\n";
  c.config_hash = fnv1a(c.config_text);
  c.epoch = 123;
  c.depth_kind = "poisson";
  c.depth_params = {0.1 / 3.0};
  c.layout = {2, 32, 2, 3, 1};
  c.params = {1.0, -2.5, 1e-300, 3.141592653589793, -0.0};
  c.adam_steps = 77;
  c.adam_m = {0.1, 0.2, 0.3, 0.4, 0.5};
  c.adam_v = {1e-9, 2e-9, 3e-9, 4e-9, 5e-9};

  const auto dir = std::filesystem::temp_directory_path() / "depthbnn_test_optim";
  std::filesystem::create_directories(dir);
  const auto path = dir / "ckpt.bin";
  save_checkpoint(path, c);
  CHECK_FALSE(std::filesystem::exists(dir / "ckpt.bin.tmp"));
  const Checkpoint r = load_checkpoint(path);
  CHECK(r.config_text == c.config_text);
  CHECK(r.config_hash == c.config_hash);
  CHECK(r.epoch == c.epoch);
  CHECK(r.depth_kind == c.depth_kind);
  CHECK(r.depth_params == c.depth_params);
  CHECK(r.layout == c.layout);
  CHECK(r.params == c.params);
  CHECK(std::signbit(r.params[4]));
  CHECK(r.adam_steps == c.adam_steps);
  CHECK(r.adam_m == c.adam_m);
  CHECK(r.adam_v == c.adam_v);

  c.config_hash ^= 1;
  save_checkpoint(path, c);
  CHECK_THROWS(load_checkpoint(path));
  CHECK_THROWS(load_checkpoint(dir / "missing.bin"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("fnv1a") {
  CHECK(fnv1a("") == 14695981039346656037ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
}
