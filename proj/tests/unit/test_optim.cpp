#include <cmath>
#include <vector>

#include "atk/error.hpp"
#include "atk/model.hpp"
#include "atk/optim.hpp"
#include "doctest.h"

using namespace atk;

namespace {

Classifier tiny_model() {
  ArchDescriptor desc;
  desc.height = 2;
  desc.width = 2;
  desc.channels = 1;
  desc.widths = {2};
  desc.num_classes = 2;
  return Classifier::init(desc, 7);
}

void fill_params(Classifier& m, double value) {
  for (auto& p : m.params) std::fill(p->data.begin(), p->data.end(), value);
}

void fill_grads(Classifier& m, double value) {
  for (auto& p : m.params) p->grad.assign(p->data.size(), value);
}

}  // namespace

TEST_CASE("nesterov matches a hand-computed trajectory") {
  auto m = tiny_model();
  fill_params(m, 1.0);
  OptimConfig cfg;
  cfg.lr = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  SgdState sgd(m, cfg);

  // g = 0.5, v = 0.5, p -= 0.1 * (0.5 + 0.9 * 0.5) = 0.095
  fill_grads(m, 0.5);
  sgd.step(m, 0.1);
  for (const auto& p : m.params)
    for (double v : p->data) CHECK(v == doctest::Approx(0.905).epsilon(1e-13));

  // g = 0.2, v = 0.9 * 0.5 + 0.2 = 0.65, p -= 0.1 * (0.2 + 0.9 * 0.65) = 0.0785
  fill_grads(m, 0.2);
  sgd.step(m, 0.1);
  for (const auto& p : m.params)
    for (double v : p->data) CHECK(v == doctest::Approx(0.8265).epsilon(1e-13));
}

TEST_CASE("zero momentum reduces to plain gradient descent") {
  auto m = tiny_model();
  fill_params(m, 1.0);
  OptimConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  SgdState sgd(m, cfg);
  fill_grads(m, 0.5);
  sgd.step(m, 0.1);
  for (const auto& p : m.params)
    for (double v : p->data) CHECK(v == doctest::Approx(0.95).epsilon(1e-13));
  fill_grads(m, 0.5);
  sgd.step(m, 0.1);
  for (const auto& p : m.params)
    for (double v : p->data) CHECK(v == doctest::Approx(0.90).epsilon(1e-13));
}

TEST_CASE("weight decay pulls parameters toward zero with no gradient") {
  auto m = tiny_model();
  fill_params(m, 1.0);
  OptimConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.1;
  SgdState sgd(m, cfg);
  fill_grads(m, 0.0);
  sgd.step(m, 0.1);
  // g = 0 + 0.1 * 1 = 0.1, p -= 0.1 * 0.1
  for (const auto& p : m.params)
    for (double v : p->data) CHECK(v == doctest::Approx(0.99).epsilon(1e-13));
}

TEST_CASE("a divergent step leaves weights and momentum untouched") {
  auto m = tiny_model();
  fill_params(m, 1.0);
  OptimConfig cfg;
  cfg.lr = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  SgdState sgd(m, cfg);

  fill_grads(m, 0.5);
  m.params[2]->grad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sgd.step(m, 0.1), DivergenceError);
  CHECK_THROWS_WITH(sgd.step(m, 0.1), doctest::Contains(m.param_names[2].c_str()));
  for (const auto& p : m.params)
    for (double v : p->data) CHECK(v == 1.0);

  // momentum must still be zero: the next valid step behaves like a first step
  fill_grads(m, 0.5);
  sgd.step(m, 0.1);
  for (const auto& p : m.params)
    for (double v : p->data) CHECK(v == doctest::Approx(0.905).epsilon(1e-13));

  SUBCASE("infinite gradients are rejected the same way") {
    fill_grads(m, 0.5);
    m.params[0]->grad[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(sgd.step(m, 0.1), DivergenceError);
  }
}

TEST_CASE("step rejects models without gradients") {
  auto m = tiny_model();
  OptimConfig cfg;
  SgdState sgd(m, cfg);
  CHECK_THROWS_WITH_AS(sgd.step(m, 0.1), doctest::Contains("conv0.kernel"), ConfigError);

  SUBCASE("negative learning rates are rejected") {
    fill_grads(m, 0.0);
    CHECK_THROWS_AS(sgd.step(m, -0.1), ConfigError);
  }
  SUBCASE("a mismatched model is rejected") {
    ArchDescriptor other;
    other.height = 4;
    other.width = 4;
    other.channels = 1;
    other.widths = {2};
    other.num_classes = 3;
    auto m2 = Classifier::init(other, 1);
    fill_grads(m2, 0.0);
    CHECK_THROWS_AS(sgd.step(m2, 0.1), ConfigError);
  }
}

TEST_CASE("optimizer config validation") {
  OptimConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.momentum = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.weight_decay = -1e-9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.ema_tau = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("cosine schedule endpoints and shape") {
  CHECK(cosine_lr(0.2, 0, 100) == 0.2);
  CHECK(std::fabs(cosine_lr(0.2, 100, 100)) <= 1e-15);
  CHECK(cosine_lr(0.2, 50, 100) == doctest::Approx(0.1).epsilon(1e-13));
  for (int t = 1; t <= 100; ++t)
    CHECK(cosine_lr(0.2, t, 100) < cosine_lr(0.2, t - 1, 100));
  CHECK_THROWS_AS(cosine_lr(0.2, -1, 100), ConfigError);
  CHECK_THROWS_AS(cosine_lr(0.2, 101, 100), ConfigError);
  CHECK_THROWS_AS(cosine_lr(0.2, 0, 0), ConfigError);
}

TEST_CASE("ema follows the geometric closed form") {
  auto m = tiny_model();
  fill_params(m, 1.0);
  const double tau = 0.995;
  EmaState ema(m, tau);

  // shadow starts at the live weights
  for (const auto& s : ema.shadow())
    for (double v : s) CHECK(v == 1.0);

  // hold the weights at c: after n updates shadow = c + (w0 - c) * tau^n
  const double c = 3.0;
  fill_params(m, c);
  const int n = 57;
  for (int i = 0; i < n; ++i) ema.update(m);
  const double expect = c + (1.0 - c) * std::pow(tau, n);
  for (const auto& s : ema.shadow())
    for (double v : s) CHECK(std::fabs(v - expect) <= 1e-12);
}

TEST_CASE("ema snapshot carries shadow weights and stays frozen") {
  auto m = tiny_model();
  EmaState ema(m, 0.9);
  fill_params(m, 2.0);
  ema.update(m);

  auto snap = ema.snapshot(m);
  CHECK(snap.desc == m.desc);
  for (size_t t = 0; t < snap.params.size(); ++t) {
    CHECK_FALSE(snap.params[t]->requires_grad);
    CHECK(snap.params[t]->data == ema.shadow()[t]);
  }
  // the live model keeps its own weights
  for (const auto& p : m.params)
    for (double v : p->data) CHECK(v == 2.0);

  SUBCASE("restore swaps the shadow in place") {
    auto saved = ema.shadow();
    ema.update(m);
    ema.restore(saved);
    CHECK(ema.shadow() == saved);
  }
  SUBCASE("mismatched models are rejected") {
    ArchDescriptor other;
    other.height = 4;
    other.width = 4;
    other.channels = 1;
    other.widths = {2};
    other.num_classes = 3;
    auto m2 = Classifier::init(other, 1);
    CHECK_THROWS_AS(ema.update(m2), ConfigError);
  }
}
