#include "atk/data.hpp"

#include <algorithm>
#include <cmath>

#include "atk/error.hpp"
#include "atk/rng.hpp"
#include "serial.hpp"

namespace atk {

void LabeledDataset::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0)
    throw ConfigError("dataset: image dims must be positive");
  if (num_classes < 2) throw ConfigError("dataset: need at least two classes");
  if (static_cast<int64_t>(images.size()) != size() * sample_elems())
    throw ConfigError("dataset: pixel buffer size does not match sample count");
  for (uint16_t y : labels)
    if (y >= num_classes)
      throw ConfigError("dataset: label " + std::to_string(y) + " out of range for " +
                        std::to_string(num_classes) + " classes");
}

TensorPtr LabeledDataset::gather(const std::vector<int64_t>& indices) const {
  if (indices.empty()) throw ConfigError("dataset: cannot assemble an empty batch");
  const int64_t d = sample_elems();
  auto out = make_tensor({static_cast<int>(indices.size()), height, width, channels});
  for (size_t i = 0; i < indices.size(); ++i) {
    const int64_t idx = indices[i];
    if (idx < 0 || idx >= size())
      throw ConfigError("dataset: sample index " + std::to_string(idx) + " out of range");
    std::copy(images.begin() + idx * d, images.begin() + (idx + 1) * d,
              out->data.begin() + static_cast<int64_t>(i) * d);
  }
  return out;
}

TensorPtr LabeledDataset::slice(int64_t begin, int64_t count) const {
  if (begin < 0 || count <= 0 || begin + count > size())
    throw ConfigError("dataset: slice [" + std::to_string(begin) + "," +
                      std::to_string(begin + count) + ") out of range");
  const int64_t d = sample_elems();
  auto out = make_tensor({static_cast<int>(count), height, width, channels});
  std::copy(images.begin() + begin * d, images.begin() + (begin + count) * d,
            out->data.begin());
  return out;
}

std::vector<uint16_t> LabeledDataset::label_slice(int64_t begin, int64_t count) const {
  if (begin < 0 || count <= 0 || begin + count > size())
    throw ConfigError("dataset: label slice out of range");
  return {labels.begin() + begin, labels.begin() + begin + count};
}

void GeneratorConfig::validate() const {
  if (num_classes < 2) throw ConfigError("generator: need at least two classes");
  if (height <= 0 || width <= 0 || channels <= 0)
    throw ConfigError("generator: image dims must be positive");
  if (quality < 0.0 || quality > 1.0)
    throw ConfigError("generator: quality must lie in [0,1]");
  if (noise < 0.0) throw ConfigError("generator: noise must be nonnegative");
}

LabeledDataset generate(const GeneratorConfig& cfg, int per_class, uint64_t seed) {
  cfg.validate();
  if (per_class < 1) throw ConfigError("generator: per_class must be at least 1");
  LabeledDataset ds;
  ds.height = cfg.height;
  ds.width = cfg.width;
  ds.channels = cfg.channels;
  ds.num_classes = cfg.num_classes;
  ds.source = cfg.source;
  const int64_t d = ds.sample_elems();
  ds.images.resize(static_cast<int64_t>(cfg.num_classes) * per_class * d);
  ds.labels.resize(static_cast<int64_t>(cfg.num_classes) * per_class);

  const double scale = static_cast<double>(std::max(cfg.height, cfg.width));
  const double two_pi = 6.283185307179586476925286766559;
  int64_t n = 0;
  // A class is a band of spatial frequencies: class c is a grating of
  // frequency lo + c * step cycles per image, while orientation, phase and
  // spatial shift vary freely per sample. Neighbouring classes are a fixed
  // frequency step apart, so difficulty is graded and uniform, and each class
  // is a rich family of images that small training sets cannot cover.
  const double freq_lo = 2.0;
  const double freq_step = cfg.num_classes > 1 ? 3.6 / (cfg.num_classes - 1) : 0.0;
  const double gain = 0.8;
  for (int c = 0; c < cfg.num_classes; ++c) {
    const double freq = freq_lo + freq_step * c;
    for (int j = 0; j < per_class; ++j, ++n) {
      Rng rng(derive_seed(seed, static_cast<uint64_t>(c), static_cast<uint64_t>(j)));
      const double phase = rng.uniform(0.0, two_pi);
      const double sx = rng.uniform(0.0, cfg.width);
      const double sy = rng.uniform(0.0, cfg.height);
      const double theta = rng.uniform(0.0, M_PI);
      const double ct = std::cos(theta), st = std::sin(theta);
      double* img = ds.images.data() + n * d;
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x) {
          const double u = (x + sx) * ct + (y + sy) * st;
          const double wave = std::sin(two_pi * freq * u / scale + phase);
          const double proto = 0.5 + 0.5 * gain * wave;
          for (int ch = 0; ch < cfg.channels; ++ch) {
            const double mix = cfg.quality * proto + (1.0 - cfg.quality) * rng.next_double();
            double v = mix + cfg.noise * rng.next_normal();
            v = std::min(std::max(v, 0.0), 1.0);
            img[(static_cast<int64_t>(y) * cfg.width + x) * cfg.channels + ch] =
                std::round(v * 255.0) / 255.0;
          }
        }
      ds.labels[n] = static_cast<uint16_t>(c);
    }
  }
  return ds;
}

static const char kDatasetMagic[4] = {'A', 'T', 'D', 'S'};
static const uint32_t kDatasetVersion = 1;

void save_dataset(const LabeledDataset& ds, const std::string& path) {
  ds.validate();
  auto os = open_output(path);
  os.write(kDatasetMagic, 4);
  write_le<uint32_t>(os, kDatasetVersion);
  write_le<uint32_t>(os, static_cast<uint32_t>(ds.size()));
  write_le<uint16_t>(os, static_cast<uint16_t>(ds.height));
  write_le<uint16_t>(os, static_cast<uint16_t>(ds.width));
  write_le<uint8_t>(os, static_cast<uint8_t>(ds.channels));
  write_le<uint16_t>(os, static_cast<uint16_t>(ds.num_classes));
  write_le<uint8_t>(os, static_cast<uint8_t>(ds.source));
  std::vector<unsigned char> row(ds.images.size());
  for (size_t i = 0; i < ds.images.size(); ++i) {
    double v = std::round(ds.images[i] * 255.0);
    v = std::min(std::max(v, 0.0), 255.0);
    row[i] = static_cast<unsigned char>(v);
  }
  os.write(reinterpret_cast<const char*>(row.data()), row.size());
  for (uint16_t y : ds.labels) write_le<uint16_t>(os, y);
  if (!os) throw IoError("write failed: " + path);
}

LabeledDataset load_dataset(const std::string& path) {
  auto is = open_input(path);
  expect_magic(is, kDatasetMagic, path);
  const auto version = read_le<uint32_t>(is, "dataset version");
  if (version != kDatasetVersion)
    throw IoError(path + ": unsupported dataset version " + std::to_string(version));
  LabeledDataset ds;
  const int64_t n = read_le<uint32_t>(is, "sample count");
  ds.height = read_le<uint16_t>(is, "height");
  ds.width = read_le<uint16_t>(is, "width");
  ds.channels = read_le<uint8_t>(is, "channels");
  ds.num_classes = read_le<uint16_t>(is, "num_classes");
  const auto source = read_le<uint8_t>(is, "source");
  if (source > 1) throw IoError(path + ": invalid source tag");
  ds.source = static_cast<DataSource>(source);
  const int64_t total = n * ds.sample_elems();
  std::vector<unsigned char> pixels(total);
  is.read(reinterpret_cast<char*>(pixels.data()), total);
  if (!is) throw IoError("truncated file while reading pixels: " + path);
  ds.images.resize(total);
  for (int64_t i = 0; i < total; ++i) ds.images[i] = pixels[i] / 255.0;
  ds.labels.resize(n);
  for (int64_t i = 0; i < n; ++i) ds.labels[i] = read_le<uint16_t>(is, "label");
  expect_eof(is, path);
  ds.validate();
  return ds;
}

void SelectionConfig::validate() const {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
    throw ConfigError("selection: keep_fraction must lie in (0,1]");
}

LabeledDataset pseudo_label_select(const LabeledDataset& pool, const Classifier& scorer,
                                   const SelectionConfig& cfg, SelectionReport* report) {
  cfg.validate();
  pool.validate();
  if (pool.size() == 0) throw ConfigError("selection: pool is empty");
  if (pool.height != scorer.desc.height || pool.width != scorer.desc.width ||
      pool.channels != scorer.desc.channels)
    throw ConfigError("selection: pool image dims do not match the scorer");
  if (pool.num_classes != scorer.desc.num_classes)
    throw ConfigError("selection: pool has " + std::to_string(pool.num_classes) +
                      " classes, scorer " + std::to_string(scorer.desc.num_classes));

  const int k = scorer.desc.num_classes;
  auto frozen = scorer.clone(false);
  struct Scored {
    double conf;
    int64_t index;
  };
  std::vector<std::vector<Scored>> by_class(k);

  const int64_t chunk = 256;
  for (int64_t begin = 0; begin < pool.size(); begin += chunk) {
    const int64_t count = std::min(chunk, pool.size() - begin);
    Tape tape;
    auto logits = frozen.logits(tape, pool.slice(begin, count));
    for (int64_t i = 0; i < count; ++i) {
      const double* row = logits->data.data() + i * k;
      int arg = 0;
      for (int j = 1; j < k; ++j)
        if (row[j] > row[arg]) arg = j;
      double m = row[arg], sum = 0.0;
      for (int j = 0; j < k; ++j) sum += std::exp(row[j] - m);
      by_class[arg].push_back({1.0 / sum, begin + i});
    }
  }

  LabeledDataset out;
  out.height = pool.height;
  out.width = pool.width;
  out.channels = pool.channels;
  out.num_classes = pool.num_classes;
  out.source = DataSource::generated;
  const int64_t d = pool.sample_elems();

  if (report) {
    report->pool_per_class.assign(k, 0);
    report->kept_per_class.assign(k, 0);
    report->min_conf.assign(k, 0.0);
    report->median_conf.assign(k, 0.0);
    report->max_conf.assign(k, 0.0);
  }

  for (int c = 0; c < k; ++c) {
    auto& bucket = by_class[c];
    std::sort(bucket.begin(), bucket.end(), [](const Scored& a, const Scored& b) {
      if (a.conf != b.conf) return a.conf > b.conf;
      return a.index < b.index;
    });
    const int64_t kept =
        static_cast<int64_t>(std::ceil(cfg.keep_fraction * static_cast<double>(bucket.size())));
    for (int64_t r = 0; r < kept; ++r) {
      const int64_t idx = bucket[r].index;
      out.images.insert(out.images.end(), pool.images.begin() + idx * d,
                        pool.images.begin() + (idx + 1) * d);
      out.labels.push_back(static_cast<uint16_t>(c));
    }
    if (report) {
      report->pool_per_class[c] = static_cast<int64_t>(bucket.size());
      report->kept_per_class[c] = kept;
      if (kept > 0) {
        report->max_conf[c] = bucket[0].conf;
        report->min_conf[c] = bucket[kept - 1].conf;
        report->median_conf[c] = bucket[(kept - 1) / 2].conf;
      }
    }
  }
  if (out.size() == 0) throw ConfigError("selection: nothing kept, pool too small");
  return out;
}

void MixConfig::validate() const {
  if (batch_size < 1) throw ConfigError("mix: batch_size must be at least 1");
  if (ratio < 0.0 || ratio > 1.0) throw ConfigError("mix: ratio must lie in [0,1]");
}

namespace {

std::vector<int64_t> shuffled_indices(int64_t n, uint64_t seed) {
  std::vector<int64_t> order(n);
  for (int64_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (int64_t i = n - 1; i > 0; --i) {
    const int64_t j = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(i + 1)));
    std::swap(order[i], order[j]);
  }
  return order;
}

}  // namespace

MixedBatchStream::MixedBatchStream(const LabeledDataset* original,
                                   const LabeledDataset* generated, const MixConfig& cfg,
                                   uint64_t seed)
    : original_(original), generated_(generated), cfg_(cfg), seed_(seed) {
  cfg.validate();
  if (!original_ || original_->size() == 0)
    throw ConfigError("mix: original dataset must be nonempty");
  n_original_ = static_cast<int>(std::floor(cfg.ratio * cfg.batch_size + 0.5));
  const int n_gen = cfg.batch_size - n_original_;
  if (n_gen > 0) {
    if (!generated_ || generated_->size() == 0)
      throw ConfigError("mix: ratio " + std::to_string(cfg.ratio) +
                        " needs a nonempty generated dataset");
    if (generated_->height != original_->height || generated_->width != original_->width ||
        generated_->channels != original_->channels)
      throw ConfigError("mix: original and generated image dims differ");
    if (generated_->num_classes != original_->num_classes)
      throw ConfigError("mix: original and generated label spaces differ");
  }
  if (n_original_ == 0 && n_gen == 0)
    throw ConfigError("mix: batch composition came out empty");
  batches_per_epoch_ = (original_->size() + cfg.batch_size - 1) / cfg.batch_size;
  if (n_gen > 0) {
    gen_order_ = shuffled_indices(generated_->size(), derive_seed(seed_, 2, 0));
    gen_shuffles_ = 1;
  }
}

void MixedBatchStream::begin_epoch(int64_t epoch) {
  orig_order_ = shuffled_indices(original_->size(), derive_seed(seed_, 1, epoch));
  orig_pos_ = 0;
  remaining_in_epoch_ = batches_per_epoch_;
}

Batch MixedBatchStream::next() {
  if (remaining_in_epoch_ <= 0)
    throw ConfigError("mix: epoch exhausted; call begin_epoch before drawing more batches");
  --remaining_in_epoch_;

  const int n_gen = cfg_.batch_size - n_original_;
  std::vector<int64_t> orig_take;
  for (int i = 0; i < n_original_ && orig_pos_ < original_->size(); ++i)
    orig_take.push_back(orig_order_[orig_pos_++]);

  Batch batch;
  const int bsz = static_cast<int>(orig_take.size()) + n_gen;
  batch.images = make_tensor({bsz, original_->height, original_->width, original_->channels});
  batch.labels.resize(bsz);
  batch.is_original.resize(bsz);
  const int64_t d = original_->sample_elems();
  int64_t row = 0;
  for (int64_t idx : orig_take) {
    std::copy(original_->images.begin() + idx * d, original_->images.begin() + (idx + 1) * d,
              batch.images->data.begin() + row * d);
    batch.labels[row] = original_->labels[idx];
    batch.is_original[row] = 1;
    ++row;
  }
  for (int i = 0; i < n_gen; ++i) {
    if (gen_pos_ >= static_cast<int64_t>(gen_order_.size())) {
      gen_order_ =
          shuffled_indices(generated_->size(), derive_seed(seed_, 2, gen_shuffles_++));
      gen_pos_ = 0;
    }
    const int64_t idx = gen_order_[gen_pos_++];
    std::copy(generated_->images.begin() + idx * d,
              generated_->images.begin() + (idx + 1) * d,
              batch.images->data.begin() + row * d);
    batch.labels[row] = generated_->labels[idx];
    batch.is_original[row] = 0;
    ++row;
  }
  return batch;
}

TensorPtr augment_crop_flip(const TensorPtr& images, int pad, uint64_t seed,
                            const std::vector<uint8_t>* mask) {
  if (images->shape.size() != 4)
    throw ConfigError("augment: batch must be [B,H,W,C], got " + shape_str(images->shape));
  if (pad < 0) throw ConfigError("augment: pad must be nonnegative");
  const int bsz = images->shape[0], h = images->shape[1], w = images->shape[2],
            c = images->shape[3];
  if (mask && static_cast<int>(mask->size()) != bsz)
    throw ConfigError("augment: mask size does not match batch");
  auto out = make_tensor(images->shape);
  const int64_t d = static_cast<int64_t>(h) * w * c;
  for (int b = 0; b < bsz; ++b) {
    const double* src = images->data.data() + b * d;
    double* dst = out->data.data() + b * d;
    if (mask && !(*mask)[b]) {
      std::copy(src, src + d, dst);
      continue;
    }
    Rng rng(derive_seed(seed, static_cast<uint64_t>(b)));
    const int oy = static_cast<int>(rng.next_below(2 * pad + 1));
    const int ox = static_cast<int>(rng.next_below(2 * pad + 1));
    const bool flip = rng.next_below(2) == 1;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int iy = y + oy - pad;
        const int ix = x + ox - pad;
        const int tx = flip ? w - 1 - x : x;
        double* cell = dst + (static_cast<int64_t>(y) * w + tx) * c;
        if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
          for (int ch = 0; ch < c; ++ch) cell[ch] = 0.0;
        } else {
          const double* from = src + (static_cast<int64_t>(iy) * w + ix) * c;
          for (int ch = 0; ch < c; ++ch) cell[ch] = from[ch];
        }
      }
  }
  return out;
}

TensorPtr cutout(const TensorPtr& images, int hole, uint64_t seed,
                 const std::vector<uint8_t>* mask) {
  if (images->shape.size() != 4)
    throw ConfigError("cutout: batch must be [B,H,W,C], got " + shape_str(images->shape));
  const int bsz = images->shape[0], h = images->shape[1], w = images->shape[2],
            c = images->shape[3];
  if (hole < 0 || hole > std::min(h, w))
    throw ConfigError("cutout: hole must lie in [0, min(H,W)]");
  if (mask && static_cast<int>(mask->size()) != bsz)
    throw ConfigError("cutout: mask size does not match batch");
  auto out = make_tensor(images->shape);
  out->data = images->data;
  if (hole == 0) return out;
  const int64_t d = static_cast<int64_t>(h) * w * c;
  for (int b = 0; b < bsz; ++b) {
    if (mask && !(*mask)[b]) continue;
    Rng rng(derive_seed(seed, static_cast<uint64_t>(b)));
    const int cy = static_cast<int>(rng.next_below(h));
    const int cx = static_cast<int>(rng.next_below(w));
    const int top = std::max(0, cy - hole / 2);
    const int bottom = std::min(h, cy - hole / 2 + hole);
    const int left = std::max(0, cx - hole / 2);
    const int right = std::min(w, cx - hole / 2 + hole);
    double* img = out->data.data() + b * d;
    for (int y = top; y < bottom; ++y)
      for (int x = left; x < right; ++x) {
        double* cell = img + (static_cast<int64_t>(y) * w + x) * c;
        for (int ch = 0; ch < c; ++ch) cell[ch] = 0.5;
      }
  }
  return out;
}

}  // namespace atk
