#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atk/model.hpp"
#include "atk/tensor.hpp"

namespace atk {

enum class DataSource : uint8_t { original = 0, generated = 1 };

struct LabeledDataset {
  int height = 0;
  int width = 0;
  int channels = 0;
  int num_classes = 0;
  DataSource source = DataSource::original;
  std::vector<double> images;  // N*H*W*C row-major, values in [0,1]
  std::vector<uint16_t> labels;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t sample_elems() const {
    return static_cast<int64_t>(height) * width * channels;
  }
  void validate() const;
  TensorPtr gather(const std::vector<int64_t>& indices) const;
  TensorPtr slice(int64_t begin, int64_t count) const;
  std::vector<uint16_t> label_slice(int64_t begin, int64_t count) const;
};

// Procedural class-conditional oriented gratings. quality interpolates
// between the class prototype (1.0) and per-pixel uniform noise (0.0);
// noise adds Gaussian jitter on top. Pixels are quantized to the u8 grid
// so in-memory data round-trips through dataset files bit-exactly.
struct GeneratorConfig {
  int num_classes = 10;
  int height = 16;
  int width = 16;
  int channels = 3;
  double quality = 1.0;
  double noise = 0.1;
  DataSource source = DataSource::generated;
  void validate() const;
};

LabeledDataset generate(const GeneratorConfig& cfg, int per_class, uint64_t seed);

void save_dataset(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

struct SelectionConfig {
  double keep_fraction = 0.2;
  void validate() const;
};

struct SelectionReport {
  std::vector<int64_t> pool_per_class;  // predicted-class histogram
  std::vector<int64_t> kept_per_class;
  std::vector<double> min_conf, median_conf, max_conf;  // over kept samples
};

// Relabels the pool with the scorer's argmax, ranks each predicted class by
// confidence, and keeps the top ceil(keep_fraction * class count); ties break
// toward the lower pool index. Output is ordered class 0..K-1, rank order.
LabeledDataset pseudo_label_select(const LabeledDataset& pool, const Classifier& scorer,
                                   const SelectionConfig& cfg,
                                   SelectionReport* report = nullptr);

struct MixConfig {
  double ratio = 0.3;  // fraction of each batch drawn from original data
  int batch_size = 64;
  void validate() const;
};

struct Batch {
  TensorPtr images;
  std::vector<uint16_t> labels;
  std::vector<uint8_t> is_original;
};

// Fixed-composition batches: round(ratio * batch_size) original slots, the
// rest generated. Epoch length is ceil(originals / batch_size) batches no
// matter how large the generated pool is. Originals are drawn without
// replacement per epoch; the generated stream cycles across epochs and
// reshuffles when exhausted. If originals run out inside the final batch the
// batch is short on the original side.
class MixedBatchStream {
 public:
  MixedBatchStream(const LabeledDataset* original, const LabeledDataset* generated,
                   const MixConfig& cfg, uint64_t seed);
  int64_t batches_per_epoch() const { return batches_per_epoch_; }
  int originals_per_batch() const { return n_original_; }
  void begin_epoch(int64_t epoch);
  Batch next();

 private:
  const LabeledDataset* original_;
  const LabeledDataset* generated_;
  MixConfig cfg_;
  uint64_t seed_;
  int n_original_ = 0;
  int64_t batches_per_epoch_ = 0;
  std::vector<int64_t> orig_order_;
  std::vector<int64_t> gen_order_;
  int64_t orig_pos_ = 0;
  int64_t gen_pos_ = 0;
  int64_t gen_shuffles_ = 0;
  int64_t remaining_in_epoch_ = 0;
};

// Zero-pad by `pad`, crop back to the input size at a uniform offset, then
// flip horizontally with probability one half. Per-image draws come from
// derive(seed, image index): row offset, column offset, flip. Images with a
// zero mask entry pass through untouched (mask may be null).
TensorPtr augment_crop_flip(const TensorPtr& images, int pad, uint64_t seed,
                            const std::vector<uint8_t>* mask = nullptr);

// Masks a hole x hole square (clipped at the border) to 0.5; the center is
// uniform over the image. hole == 0 is the identity.
TensorPtr cutout(const TensorPtr& images, int hole, uint64_t seed,
                 const std::vector<uint8_t>* mask = nullptr);

}  // namespace atk
