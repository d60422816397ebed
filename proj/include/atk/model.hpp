#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "atk/tensor.hpp"

namespace atk {

// Compact convolutional classifier: per width entry one block of
// 3x3 conv (pad 1) -> bias -> swish -> 2x2 average pool, then a dense
// swish layer of the last width (the feature embedding) and a linear head.
struct ArchDescriptor {
  int height = 16;
  int width = 16;
  int channels = 3;
  std::vector<int> widths = {8, 16};
  int num_classes = 10;

  void validate() const;
  int feature_dim() const { return widths.back(); }
  bool operator==(const ArchDescriptor&) const = default;
};

struct Classifier {
  ArchDescriptor desc;
  std::vector<std::string> param_names;
  std::vector<TensorPtr> params;

  // fan-in scaled uniform weights, zero biases; draws happen in declaration
  // order from a single stream seeded with `seed`
  static Classifier init(const ArchDescriptor& desc, uint64_t seed);

  int64_t param_count() const;
  Classifier clone(bool requires_grad) const;

  std::vector<std::vector<double>> param_values() const;
  void set_param_values(const std::vector<std::vector<double>>& values);

  TensorPtr logits(Tape& tape, const TensorPtr& batch) const;
  TensorPtr features(Tape& tape, const TensorPtr& batch) const;
  // {logits, features} sharing one pass
  std::pair<TensorPtr, TensorPtr> forward(Tape& tape, const TensorPtr& batch) const;
};

void save_checkpoint(const Classifier& model, const std::string& path);
Classifier load_checkpoint(const std::string& path);

}  // namespace atk
