#include <cmath>
#include <cstdio>
#include <filesystem>

#include "atk/error.hpp"
#include "atk/model.hpp"
#include "doctest.h"
#include "oracles.hpp"

using atk::ArchDescriptor;
using atk::Classifier;
using atk::ConfigError;
using atk::IoError;
using atk::make_tensor;
using atk::Tape;
using atk::TensorPtr;

namespace {

ArchDescriptor small_desc() {
  ArchDescriptor d;
  d.height = 16;
  d.width = 16;
  d.channels = 3;
  d.widths = {8, 16};
  d.num_classes = 10;
  return d;
}

double swish_ref(double v) { return v / (1.0 + std::exp(-v)); }

}  // namespace

TEST_CASE("parameter count matches the closed form") {
  auto m = Classifier::init(small_desc(), 1);
  // 3x3x3x8 + 8 + 3x3x8x16 + 16 + 256x16 + 16 + 16x10 + 10
  CHECK(m.param_count() == 216 + 8 + 1152 + 16 + 4096 + 16 + 160 + 10);
  CHECK(m.param_count() == 5674);
  CHECK(m.param_names.front() == "conv0.kernel");
  CHECK(m.param_names.back() == "head.bias");
}

TEST_CASE("init is a deterministic function of the seed") {
  auto a = Classifier::init(small_desc(), 7);
  auto b = Classifier::init(small_desc(), 7);
  auto c = Classifier::init(small_desc(), 8);
  bool same = true, diff = false;
  for (size_t i = 0; i < a.params.size(); ++i) {
    same = same && (a.params[i]->data == b.params[i]->data);
    diff = diff || (a.params[i]->data != c.params[i]->data);
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("weights respect fan-in bounds and biases start at zero") {
  auto m = Classifier::init(small_desc(), 3);
  for (size_t i = 0; i < m.params.size(); ++i) {
    const auto& name = m.param_names[i];
    const auto& p = m.params[i];
    if (name.find("bias") != std::string::npos) {
      for (double v : p->data) CHECK(v == 0.0);
      continue;
    }
    double fan_in = 0.0;
    if (name.find("kernel") != std::string::npos)
      fan_in = 9.0 * p->shape[2];
    else
      fan_in = p->shape[0];
    const double bound = std::sqrt(6.0 / fan_in);
    double mx = 0.0;
    for (double v : p->data) mx = std::max(mx, std::fabs(v));
    CHECK(mx <= bound);
    CHECK(mx > 0.5 * bound);  // draws actually span the interval
  }
}

TEST_CASE("forward output shapes and feature dim") {
  auto m = Classifier::init(small_desc(), 5);
  auto batch = oracles::random_tensor({4, 16, 16, 3}, 50, 0.0, 1.0, false);
  Tape tape;
  auto [logits, feat] = m.forward(tape, batch);
  CHECK(logits->shape == std::vector<int>{4, 10});
  CHECK(feat->shape == std::vector<int>{4, 16});
  CHECK(m.desc.feature_dim() == 16);
  CHECK(tape.size() > 0);  // live parameters are recorded

  auto frozen = m.clone(false);
  Tape quiet;
  auto out = frozen.forward(quiet, batch);
  CHECK(quiet.size() == 0);  // inference on frozen weights records nothing
  for (int i = 0; i < 40; ++i) CHECK(out.first->data[i] == logits->data[i]);
}

TEST_CASE("forward matches a loop-written reference network") {
  ArchDescriptor d;
  d.height = 4;
  d.width = 4;
  d.channels = 1;
  d.widths = {2};
  d.num_classes = 3;
  auto m = Classifier::init(d, 11);
  auto x = oracles::random_tensor({1, 4, 4, 1}, 51, 0.0, 1.0, false);

  Tape tape;
  auto [logits, feat] = m.forward(tape, x);

  const auto& K = m.params[0]->data;   // [3,3,1,2]
  const auto& kb = m.params[1]->data;  // [2]
  const auto& W = m.params[2]->data;   // [8,2]
  const auto& wb = m.params[3]->data;  // [2]
  const auto& H = m.params[4]->data;   // [2,3]
  const auto& hb = m.params[5]->data;  // [3]

  double act[4][4][2];
  for (int oy = 0; oy < 4; ++oy)
    for (int ox = 0; ox < 4; ++ox)
      for (int co = 0; co < 2; ++co) {
        double acc = kb[co];
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            int iy = oy + ky - 1, ix = ox + kx - 1;
            if (iy < 0 || iy >= 4 || ix < 0 || ix >= 4) continue;
            acc += 2.0 * (x->data[(iy * 4 + ix)] - 0.5) * K[(ky * 3 + kx) * 2 + co];
          }
        act[oy][ox][co] = swish_ref(acc);
      }
  double flat[8];
  for (int py = 0; py < 2; ++py)
    for (int px = 0; px < 2; ++px)
      for (int co = 0; co < 2; ++co)
        flat[(py * 2 + px) * 2 + co] =
            0.25 * (act[2 * py][2 * px][co] + act[2 * py][2 * px + 1][co] +
                    act[2 * py + 1][2 * px][co] + act[2 * py + 1][2 * px + 1][co]);
  double hidden[2];
  for (int j = 0; j < 2; ++j) {
    double acc = wb[j];
    for (int i = 0; i < 8; ++i) acc += flat[i] * W[i * 2 + j];
    hidden[j] = swish_ref(acc);
  }
  for (int j = 0; j < 2; ++j) CHECK(feat->data[j] == doctest::Approx(hidden[j]).epsilon(1e-12));
  for (int c = 0; c < 3; ++c) {
    double acc = hb[c];
    for (int j = 0; j < 2; ++j) acc += hidden[j] * H[j * 3 + c];
    CHECK(logits->data[c] == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("full model gradcheck against finite differences") {
  ArchDescriptor d;
  d.height = 4;
  d.width = 4;
  d.channels = 2;
  d.widths = {3};
  d.num_classes = 4;
  auto m = Classifier::init(d, 21);
  auto x = oracles::random_tensor({2, 4, 4, 2}, 52, 0.0, 1.0, true);
  auto w = oracles::random_tensor({2, 4}, 53, -1.0, 1.0, false);
  auto fn = [&](Tape& t) {
    auto lp = t.log_softmax(m.logits(t, x));
    return t.scale(t.sum(t.mul(lp, w)), -0.25);
  };
  CHECK(oracles::gradcheck(fn, x).ok);
  for (auto& p : m.params) CHECK(oracles::gradcheck(fn, p).ok);
}

TEST_CASE("batch shape mismatches are rejected") {
  auto m = Classifier::init(small_desc(), 1);
  Tape tape;
  CHECK_THROWS_AS(m.logits(tape, make_tensor({2, 8, 16, 3}, 0.5)), ConfigError);
  CHECK_THROWS_AS(m.logits(tape, make_tensor({2, 16, 16, 1}, 0.5)), ConfigError);
  CHECK_THROWS_AS(m.logits(tape, make_tensor({16, 16, 3}, 0.5)), ConfigError);
}

TEST_CASE("descriptor validation") {
  ArchDescriptor d = small_desc();
  d.widths = {8, 16, 32, 64, 128};  // 16 cannot halve five times
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d = small_desc();
  d.widths.clear();
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d = small_desc();
  d.num_classes = 1;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d = small_desc();
  d.height = 15;
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("clone isolates storage and can freeze gradients") {
  auto m = Classifier::init(small_desc(), 2);
  auto frozen = m.clone(false);
  for (size_t i = 0; i < m.params.size(); ++i) {
    CHECK(frozen.params[i]->data == m.params[i]->data);
    CHECK_FALSE(frozen.params[i]->requires_grad);
    CHECK(m.params[i]->requires_grad);
  }
  m.params[0]->data[0] += 1.0;
  CHECK(frozen.params[0]->data[0] != m.params[0]->data[0]);
}

TEST_CASE("checkpoint round trip is bit exact") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "atk_model_test";
  fs::create_directories(dir);
  auto path = (dir / "model.ckpt").string();

  auto m = Classifier::init(small_desc(), 9);
  m.params[0]->data[5] = 0.1 + 0.2;  // a value with a messy binary expansion
  atk::save_checkpoint(m, path);
  auto r = atk::load_checkpoint(path);
  CHECK(r.desc == m.desc);
  for (size_t i = 0; i < m.params.size(); ++i) CHECK(r.params[i]->data == m.params[i]->data);

  SUBCASE("bad magic is rejected") {
    auto bad = (dir / "bad.ckpt").string();
    FILE* f = fopen(bad.c_str(), "wb");
    fwrite("NOPE", 1, 4, f);
    fclose(f);
    CHECK_THROWS_AS(atk::load_checkpoint(bad), IoError);
  }
  SUBCASE("truncated file is rejected") {
    auto trunc = (dir / "trunc.ckpt").string();
    fs::copy_file(path, trunc, fs::copy_options::overwrite_existing);
    fs::resize_file(trunc, fs::file_size(trunc) - 16);
    CHECK_THROWS_AS(atk::load_checkpoint(trunc), IoError);
  }
  SUBCASE("trailing bytes are rejected") {
    auto fat = (dir / "fat.ckpt").string();
    fs::copy_file(path, fat, fs::copy_options::overwrite_existing);
    FILE* f = fopen(fat.c_str(), "ab");
    fwrite("x", 1, 1, f);
    fclose(f);
    CHECK_THROWS_AS(atk::load_checkpoint(fat), IoError);
  }
  SUBCASE("missing file is rejected") {
    CHECK_THROWS_AS(atk::load_checkpoint((dir / "nothere.ckpt").string()), IoError);
  }
}
