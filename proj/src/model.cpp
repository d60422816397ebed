#include "atk/model.hpp"

#include <cmath>

#include "atk/error.hpp"
#include "atk/rng.hpp"
#include "serial.hpp"

namespace atk {

void ArchDescriptor::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0)
    throw ConfigError("descriptor: image dims must be positive");
  if (num_classes < 2) throw ConfigError("descriptor: need at least two classes");
  if (widths.empty()) throw ConfigError("descriptor: widths must be nonempty");
  if (widths.size() > 6) throw ConfigError("descriptor: too many conv blocks");
  for (int w : widths)
    if (w <= 0) throw ConfigError("descriptor: widths must be positive");
  int h = height, w = width;
  for (size_t i = 0; i < widths.size(); ++i) {
    if (h % 2 != 0 || w % 2 != 0)
      throw ConfigError("descriptor: spatial dims must halve once per block, got " +
                        std::to_string(height) + "x" + std::to_string(width) + " with " +
                        std::to_string(widths.size()) + " blocks");
    h /= 2;
    w /= 2;
  }
}

Classifier Classifier::init(const ArchDescriptor& desc, uint64_t seed) {
  desc.validate();
  Classifier m;
  m.desc = desc;
  Rng rng(seed);

  auto push = [&](const std::string& name, std::vector<int> shape, double bound) {
    auto t = make_tensor(std::move(shape), 0.0, true);
    if (bound > 0.0)
      for (auto& v : t->data) v = rng.uniform(-bound, bound);
    m.param_names.push_back(name);
    m.params.push_back(std::move(t));
  };

  int cin = desc.channels;
  for (size_t i = 0; i < desc.widths.size(); ++i) {
    const int cout = desc.widths[i];
    const std::string prefix = "conv" + std::to_string(i);
    push(prefix + ".kernel", {3, 3, cin, cout}, std::sqrt(6.0 / (9.0 * cin)));
    push(prefix + ".bias", {cout}, 0.0);
    cin = cout;
  }
  const int ph = desc.height >> desc.widths.size();
  const int pw = desc.width >> desc.widths.size();
  const int flat = ph * pw * desc.widths.back();
  const int hidden = desc.widths.back();
  push("dense.weight", {flat, hidden}, std::sqrt(6.0 / flat));
  push("dense.bias", {hidden}, 0.0);
  push("head.weight", {hidden, desc.num_classes}, std::sqrt(6.0 / hidden));
  push("head.bias", {desc.num_classes}, 0.0);
  return m;
}

int64_t Classifier::param_count() const {
  int64_t n = 0;
  for (const auto& p : params) n += p->numel();
  return n;
}

Classifier Classifier::clone(bool requires_grad) const {
  Classifier m;
  m.desc = desc;
  m.param_names = param_names;
  m.params.reserve(params.size());
  for (const auto& p : params) {
    auto t = make_tensor(p->shape, 0.0, requires_grad);
    t->data = p->data;
    m.params.push_back(std::move(t));
  }
  return m;
}

std::vector<std::vector<double>> Classifier::param_values() const {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p->data);
  return out;
}

void Classifier::set_param_values(const std::vector<std::vector<double>>& values) {
  if (values.size() != params.size())
    throw ConfigError("set_param_values: expected " + std::to_string(params.size()) +
                      " tensors, got " + std::to_string(values.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    if (values[i].size() != params[i]->data.size())
      throw ConfigError("set_param_values: size mismatch for " + param_names[i]);
    params[i]->data = values[i];
  }
}

std::pair<TensorPtr, TensorPtr> Classifier::forward(Tape& tape, const TensorPtr& batch) const {
  if (batch->shape.size() != 4 || batch->shape[1] != desc.height ||
      batch->shape[2] != desc.width || batch->shape[3] != desc.channels)
    throw ConfigError("forward: batch shape " + shape_str(batch->shape) +
                      " does not match descriptor " +
                      shape_str({-1, desc.height, desc.width, desc.channels}));
  // center pixels to [-1,1]; keeps early activations from drifting one-sided
  auto half = make_tensor(batch->shape, 0.5, false);
  TensorPtr x = tape.scale(tape.sub(batch, half), 2.0);
  size_t pi = 0;
  for (size_t i = 0; i < desc.widths.size(); ++i) {
    const auto& kernel = params[pi++];
    const auto& bias = params[pi++];
    x = tape.avg_pool2(tape.swish(tape.add(tape.conv2d(x, kernel, 1), bias)));
  }
  auto flat = tape.flatten(x);
  auto feat = tape.swish(tape.add(tape.matmul(flat, params[pi]), params[pi + 1]));
  auto logits = tape.add(tape.matmul(feat, params[pi + 2]), params[pi + 3]);
  return {logits, feat};
}

TensorPtr Classifier::logits(Tape& tape, const TensorPtr& batch) const {
  return forward(tape, batch).first;
}

TensorPtr Classifier::features(Tape& tape, const TensorPtr& batch) const {
  return forward(tape, batch).second;
}

static const char kCheckpointMagic[4] = {'A', 'T', 'C', 'K'};
static const uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Classifier& model, const std::string& path) {
  auto os = open_output(path);
  os.write(kCheckpointMagic, 4);
  write_le<uint32_t>(os, kCheckpointVersion);
  write_le<uint16_t>(os, static_cast<uint16_t>(model.desc.height));
  write_le<uint16_t>(os, static_cast<uint16_t>(model.desc.width));
  write_le<uint8_t>(os, static_cast<uint8_t>(model.desc.channels));
  write_le<uint16_t>(os, static_cast<uint16_t>(model.desc.num_classes));
  write_le<uint8_t>(os, static_cast<uint8_t>(model.desc.widths.size()));
  for (int w : model.desc.widths) write_le<uint32_t>(os, static_cast<uint32_t>(w));
  for (const auto& p : model.params)
    for (double v : p->data) write_le<double>(os, v);
  if (!os) throw IoError("write failed: " + path);
}

Classifier load_checkpoint(const std::string& path) {
  auto is = open_input(path);
  expect_magic(is, kCheckpointMagic, path);
  const auto version = read_le<uint32_t>(is, "checkpoint version");
  if (version != kCheckpointVersion)
    throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  ArchDescriptor desc;
  desc.height = read_le<uint16_t>(is, "height");
  desc.width = read_le<uint16_t>(is, "width");
  desc.channels = read_le<uint8_t>(is, "channels");
  desc.num_classes = read_le<uint16_t>(is, "num_classes");
  const int nblocks = read_le<uint8_t>(is, "block count");
  desc.widths.clear();
  for (int i = 0; i < nblocks; ++i)
    desc.widths.push_back(static_cast<int>(read_le<uint32_t>(is, "width")));
  desc.validate();
  Classifier model = Classifier::init(desc, 0);
  for (auto& p : model.params)
    for (auto& v : p->data) v = read_le<double>(is, "parameter data");
  expect_eof(is, path);
  return model;
}

}  // namespace atk
