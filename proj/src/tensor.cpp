#include "atk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "atk/error.hpp"
#include "atk/parallel.hpp"

namespace atk {

int Tape::workers = 1;

Tensor::Tensor(std::vector<int> shp, double fill, bool req_grad) : shape(std::move(shp)) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ConfigError("tensor: nonpositive dimension in shape " + shape_str(shape));
    n *= d;
  }
  if (shape.empty()) throw ConfigError("tensor: empty shape");
  data.assign(n, fill);
  requires_grad = req_grad;
}

TensorPtr make_tensor(std::vector<int> shape, double fill, bool requires_grad) {
  return std::make_shared<Tensor>(std::move(shape), fill, requires_grad);
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  auto t = std::make_shared<Tensor>(std::move(shape), 0.0, requires_grad);
  if (static_cast<int64_t>(values.size()) != t->numel())
    throw ConfigError("tensor: value count " + std::to_string(values.size()) +
                      " does not match shape " + shape_str(t->shape));
  t->data = std::move(values);
  return t;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

void require_same_shape(const char* op, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape)
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                      shape_str(b->shape));
}

}  // namespace

TensorPtr Tape::emit(TensorPtr out, std::vector<TensorPtr> inputs, std::function<void()> pull) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in->requires_grad;
  out->requires_grad = needs;
  if (needs) nodes_.push_back(Node{out, std::move(inputs), std::move(pull)});
  return out;
}

TensorPtr Tape::add(const TensorPtr& a, const TensorPtr& b) {
  const bool bias = b->shape.size() == 1 && a->shape.size() > 1 && a->shape.back() == b->shape[0];
  if (!bias) require_same_shape("add", a, b);
  auto out = make_tensor(a->shape);
  const int64_t n = a->numel();
  if (bias) {
    const int64_t c = b->shape[0];
    for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i % c];
  } else {
    for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  }
  return emit(out, {a, b}, [a, b, out, bias, n]() {
    const auto& g = out->grad;
    if (a->requires_grad)
      for (int64_t i = 0; i < n; ++i) a->grad[i] += g[i];
    if (b->requires_grad) {
      if (bias) {
        const int64_t c = b->shape[0];
        for (int64_t i = 0; i < n; ++i) b->grad[i % c] += g[i];
      } else {
        for (int64_t i = 0; i < n; ++i) b->grad[i] += g[i];
      }
    }
  });
}

TensorPtr Tape::sub(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape("sub", a, b);
  auto out = make_tensor(a->shape);
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] - b->data[i];
  return emit(out, {a, b}, [a, b, out, n]() {
    const auto& g = out->grad;
    if (a->requires_grad)
      for (int64_t i = 0; i < n; ++i) a->grad[i] += g[i];
    if (b->requires_grad)
      for (int64_t i = 0; i < n; ++i) b->grad[i] -= g[i];
  });
}

TensorPtr Tape::mul(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape("mul", a, b);
  auto out = make_tensor(a->shape);
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
  return emit(out, {a, b}, [a, b, out, n]() {
    const auto& g = out->grad;
    if (a->requires_grad)
      for (int64_t i = 0; i < n; ++i) a->grad[i] += g[i] * b->data[i];
    if (b->requires_grad)
      for (int64_t i = 0; i < n; ++i) b->grad[i] += g[i] * a->data[i];
  });
}

TensorPtr Tape::scale(const TensorPtr& a, double c) {
  auto out = make_tensor(a->shape);
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = c * a->data[i];
  return emit(out, {a}, [a, out, c, n]() {
    if (!a->requires_grad) return;
    const auto& g = out->grad;
    for (int64_t i = 0; i < n; ++i) a->grad[i] += c * g[i];
  });
}

TensorPtr Tape::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    throw ConfigError("matmul: incompatible shapes " + shape_str(a->shape) + " vs " +
                      shape_str(b->shape));
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = make_tensor({m, n});
  parallel_for(m, workers, [&](int64_t i) {
    double* orow = out->data.data() + i * n;
    const double* arow = a->data.data() + i * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b->data.data() + p * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  });
  return emit(out, {a, b}, [a, b, out, m, k, n]() {
    const auto& g = out->grad;
    if (a->requires_grad) {
      parallel_for(m, workers, [&](int64_t i) {
        double* da = a->grad.data() + i * k;
        const double* grow = g.data() + i * n;
        for (int p = 0; p < k; ++p) {
          const double* brow = b->data.data() + p * n;
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          da[p] += acc;
        }
      });
    }
    if (b->requires_grad) {
      parallel_for(k, workers, [&](int64_t p) {
        double* db = b->grad.data() + p * n;
        for (int i = 0; i < m; ++i) {
          const double av = a->data[i * k + p];
          const double* grow = g.data() + i * n;
          for (int j = 0; j < n; ++j) db[j] += av * grow[j];
        }
      });
    }
  });
}

TensorPtr Tape::conv2d(const TensorPtr& x, const TensorPtr& kern, int pad) {
  if (x->shape.size() != 4)
    throw ConfigError("conv2d: input must be [B,H,W,C], got " + shape_str(x->shape));
  if (kern->shape.size() != 4)
    throw ConfigError("conv2d: kernel must be [KH,KW,Cin,Cout], got " + shape_str(kern->shape));
  if (pad < 0) throw ConfigError("conv2d: negative padding");
  const int bsz = x->shape[0], h = x->shape[1], w = x->shape[2], cin = x->shape[3];
  const int kh = kern->shape[0], kw = kern->shape[1], cout = kern->shape[3];
  if (kern->shape[2] != cin)
    throw ConfigError("conv2d: channel mismatch, input " + shape_str(x->shape) + " vs kernel " +
                      shape_str(kern->shape));
  const int oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
  if (oh <= 0 || ow <= 0)
    throw ConfigError("conv2d: kernel " + shape_str(kern->shape) + " too large for input " +
                      shape_str(x->shape) + " with pad " + std::to_string(pad));
  auto out = make_tensor({bsz, oh, ow, cout});
  const double* xd = x->data.data();
  const double* kd = kern->data.data();
  parallel_for(bsz, workers, [&](int64_t b) {
    double* od = out->data.data() + b * static_cast<int64_t>(oh) * ow * cout;
    const double* xb = xd + b * static_cast<int64_t>(h) * w * cin;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double* acc = od + (static_cast<int64_t>(oy) * ow + ox) * cout;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox + kx - pad;
            if (ix < 0 || ix >= w) continue;
            const double* xp = xb + (static_cast<int64_t>(iy) * w + ix) * cin;
            const double* kp = kd + (static_cast<int64_t>(ky) * kw + kx) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
              const double xv = xp[ci];
              const double* kr = kp + ci * cout;
              for (int co = 0; co < cout; ++co) acc[co] += xv * kr[co];
            }
          }
        }
      }
    }
  });
  return emit(out, {x, kern}, [x, kern, out, pad, bsz, h, w, cin, kh, kw, cout, oh, ow]() {
    const double* g = out->grad.data();
    if (x->requires_grad) {
      const double* kd = kern->data.data();
      parallel_for(bsz, workers, [&](int64_t b) {
        double* dx = x->grad.data() + b * static_cast<int64_t>(h) * w * cin;
        const double* gb = g + b * static_cast<int64_t>(oh) * ow * cout;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            const double* gp = gb + (static_cast<int64_t>(oy) * ow + ox) * cout;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy + ky - pad;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox + kx - pad;
                if (ix < 0 || ix >= w) continue;
                double* dxp = dx + (static_cast<int64_t>(iy) * w + ix) * cin;
                const double* kp = kd + (static_cast<int64_t>(ky) * kw + kx) * cin * cout;
                for (int ci = 0; ci < cin; ++ci) {
                  const double* kr = kp + ci * cout;
                  double acc = 0.0;
                  for (int co = 0; co < cout; ++co) acc += gp[co] * kr[co];
                  dxp[ci] += acc;
                }
              }
            }
          }
        }
      });
    }
    if (kern->requires_grad) {
      const double* xd = x->data.data();
      parallel_for(static_cast<int64_t>(kh) * kw * cin, workers, [&](int64_t slot) {
        const int ci = static_cast<int>(slot % cin);
        const int kx = static_cast<int>((slot / cin) % kw);
        const int ky = static_cast<int>(slot / (static_cast<int64_t>(cin) * kw));
        double* dk = kern->grad.data() + slot * cout;
        for (int b = 0; b < bsz; ++b) {
          const double* xb = xd + b * static_cast<int64_t>(h) * w * cin;
          const double* gb = g + b * static_cast<int64_t>(oh) * ow * cout;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox + kx - pad;
              if (ix < 0 || ix >= w) continue;
              const double xv = xb[(static_cast<int64_t>(iy) * w + ix) * cin + ci];
              const double* gp = gb + (static_cast<int64_t>(oy) * ow + ox) * cout;
              for (int co = 0; co < cout; ++co) dk[co] += xv * gp[co];
            }
          }
        }
      });
    }
  });
}

TensorPtr Tape::swish(const TensorPtr& x) {
  auto out = make_tensor(x->shape);
  const int64_t n = x->numel();
  for (int64_t i = 0; i < n; ++i) {
    const double v = x->data[i];
    out->data[i] = v / (1.0 + std::exp(-v));
  }
  return emit(out, {x}, [x, out, n]() {
    if (!x->requires_grad) return;
    const auto& g = out->grad;
    for (int64_t i = 0; i < n; ++i) {
      const double v = x->data[i];
      const double s = 1.0 / (1.0 + std::exp(-v));
      x->grad[i] += g[i] * s * (1.0 + v * (1.0 - s));
    }
  });
}

namespace {

// rows/cols view of the last axis for the softmax family
inline void last_axis(const TensorPtr& t, int64_t& rows, int64_t& cols) {
  cols = t->shape.back();
  rows = t->numel() / cols;
}

}  // namespace

TensorPtr Tape::softmax_logits(const TensorPtr& z) {
  auto out = make_tensor(z->shape);
  int64_t rows, cols;
  last_axis(z, rows, cols);
  for (int64_t r = 0; r < rows; ++r) {
    const double* zr = z->data.data() + r * cols;
    double* pr = out->data.data() + r * cols;
    double m = zr[0];
    for (int64_t j = 1; j < cols; ++j) m = std::max(m, zr[j]);
    double s = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      pr[j] = std::exp(zr[j] - m);
      s += pr[j];
    }
    for (int64_t j = 0; j < cols; ++j) pr[j] /= s;
  }
  return emit(out, {z}, [z, out, rows, cols]() {
    if (!z->requires_grad) return;
    for (int64_t r = 0; r < rows; ++r) {
      const double* pr = out->data.data() + r * cols;
      const double* gr = out->grad.data() + r * cols;
      double dot = 0.0;
      for (int64_t j = 0; j < cols; ++j) dot += gr[j] * pr[j];
      double* dz = z->grad.data() + r * cols;
      for (int64_t j = 0; j < cols; ++j) dz[j] += pr[j] * (gr[j] - dot);
    }
  });
}

TensorPtr Tape::log_softmax(const TensorPtr& z) {
  auto out = make_tensor(z->shape);
  int64_t rows, cols;
  last_axis(z, rows, cols);
  for (int64_t r = 0; r < rows; ++r) {
    const double* zr = z->data.data() + r * cols;
    double* yr = out->data.data() + r * cols;
    double m = zr[0];
    for (int64_t j = 1; j < cols; ++j) m = std::max(m, zr[j]);
    double s = 0.0;
    for (int64_t j = 0; j < cols; ++j) s += std::exp(zr[j] - m);
    const double lse = m + std::log(s);
    for (int64_t j = 0; j < cols; ++j) yr[j] = zr[j] - lse;
  }
  return emit(out, {z}, [z, out, rows, cols]() {
    if (!z->requires_grad) return;
    for (int64_t r = 0; r < rows; ++r) {
      const double* yr = out->data.data() + r * cols;
      const double* gr = out->grad.data() + r * cols;
      double gsum = 0.0;
      for (int64_t j = 0; j < cols; ++j) gsum += gr[j];
      double* dz = z->grad.data() + r * cols;
      for (int64_t j = 0; j < cols; ++j) dz[j] += gr[j] - std::exp(yr[j]) * gsum;
    }
  });
}

TensorPtr Tape::pad2d(const TensorPtr& x, int pad) {
  if (x->shape.size() != 4)
    throw ConfigError("pad2d: input must be [B,H,W,C], got " + shape_str(x->shape));
  if (pad < 0) throw ConfigError("pad2d: negative padding");
  const int bsz = x->shape[0], h = x->shape[1], w = x->shape[2], c = x->shape[3];
  const int oh = h + 2 * pad, ow = w + 2 * pad;
  auto out = make_tensor({bsz, oh, ow, c});
  for (int b = 0; b < bsz; ++b)
    for (int y = 0; y < h; ++y) {
      const double* src = x->data.data() + ((static_cast<int64_t>(b) * h + y) * w) * c;
      double* dst =
          out->data.data() + ((static_cast<int64_t>(b) * oh + y + pad) * ow + pad) * c;
      std::copy(src, src + static_cast<int64_t>(w) * c, dst);
    }
  return emit(out, {x}, [x, out, pad, bsz, h, w, c]() {
    if (!x->requires_grad) return;
    const int oh = h + 2 * pad, ow = w + 2 * pad;
    for (int b = 0; b < bsz; ++b)
      for (int y = 0; y < h; ++y) {
        double* dst = x->grad.data() + ((static_cast<int64_t>(b) * h + y) * w) * c;
        const double* src =
            out->grad.data() + ((static_cast<int64_t>(b) * oh + y + pad) * ow + pad) * c;
        for (int64_t i = 0; i < static_cast<int64_t>(w) * c; ++i) dst[i] += src[i];
      }
  });
}

TensorPtr Tape::crop2d(const TensorPtr& x, int top, int left, int out_h, int out_w) {
  if (x->shape.size() != 4)
    throw ConfigError("crop2d: input must be [B,H,W,C], got " + shape_str(x->shape));
  const int bsz = x->shape[0], h = x->shape[1], w = x->shape[2], c = x->shape[3];
  if (top < 0 || left < 0 || out_h <= 0 || out_w <= 0 || top + out_h > h || left + out_w > w)
    throw ConfigError("crop2d: window " + std::to_string(top) + "+" + std::to_string(out_h) +
                      " x " + std::to_string(left) + "+" + std::to_string(out_w) +
                      " outside input " + shape_str(x->shape));
  auto out = make_tensor({bsz, out_h, out_w, c});
  for (int b = 0; b < bsz; ++b)
    for (int y = 0; y < out_h; ++y) {
      const double* src =
          x->data.data() + ((static_cast<int64_t>(b) * h + top + y) * w + left) * c;
      double* dst = out->data.data() + (static_cast<int64_t>(b) * out_h + y) * out_w * c;
      std::copy(src, src + static_cast<int64_t>(out_w) * c, dst);
    }
  return emit(out, {x}, [x, out, top, left, out_h, out_w, bsz, h, w, c]() {
    if (!x->requires_grad) return;
    for (int b = 0; b < bsz; ++b)
      for (int y = 0; y < out_h; ++y) {
        double* dst = x->grad.data() + ((static_cast<int64_t>(b) * h + top + y) * w + left) * c;
        const double* src =
            out->grad.data() + (static_cast<int64_t>(b) * out_h + y) * out_w * c;
        for (int64_t i = 0; i < static_cast<int64_t>(out_w) * c; ++i) dst[i] += src[i];
      }
  });
}

TensorPtr Tape::avg_pool2(const TensorPtr& x) {
  if (x->shape.size() != 4)
    throw ConfigError("avg_pool2: input must be [B,H,W,C], got " + shape_str(x->shape));
  const int bsz = x->shape[0], h = x->shape[1], w = x->shape[2], c = x->shape[3];
  if (h % 2 != 0 || w % 2 != 0)
    throw ConfigError("avg_pool2: spatial dims must be even, got " + shape_str(x->shape));
  const int oh = h / 2, ow = w / 2;
  auto out = make_tensor({bsz, oh, ow, c});
  for (int b = 0; b < bsz; ++b)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const int64_t base = (static_cast<int64_t>(b) * h + 2 * oy) * w;
        const double* r0 = x->data.data() + (base + 2 * ox) * c;
        const double* r1 = x->data.data() + (base + w + 2 * ox) * c;
        double* dst = out->data.data() + ((static_cast<int64_t>(b) * oh + oy) * ow + ox) * c;
        for (int ch = 0; ch < c; ++ch)
          dst[ch] = 0.25 * (r0[ch] + r0[c + ch] + r1[ch] + r1[c + ch]);
      }
  return emit(out, {x}, [x, out, bsz, h, w, c]() {
    if (!x->requires_grad) return;
    const int oh = h / 2, ow = w / 2;
    for (int b = 0; b < bsz; ++b)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const double* gp =
              out->grad.data() + ((static_cast<int64_t>(b) * oh + oy) * ow + ox) * c;
          const int64_t base = (static_cast<int64_t>(b) * h + 2 * oy) * w;
          double* r0 = x->grad.data() + (base + 2 * ox) * c;
          double* r1 = x->grad.data() + (base + w + 2 * ox) * c;
          for (int ch = 0; ch < c; ++ch) {
            const double gv = 0.25 * gp[ch];
            r0[ch] += gv;
            r0[c + ch] += gv;
            r1[ch] += gv;
            r1[c + ch] += gv;
          }
        }
  });
}

TensorPtr Tape::flatten(const TensorPtr& x) {
  if (x->shape.size() < 2)
    throw ConfigError("flatten: input must have a batch axis, got " + shape_str(x->shape));
  const int bsz = x->shape[0];
  const int feat = static_cast<int>(x->numel() / bsz);
  auto out = make_tensor({bsz, feat});
  out->data = x->data;
  return emit(out, {x}, [x, out]() {
    if (!x->requires_grad) return;
    const int64_t n = x->numel();
    for (int64_t i = 0; i < n; ++i) x->grad[i] += out->grad[i];
  });
}

TensorPtr Tape::sum(const TensorPtr& x) {
  auto out = make_tensor({1});
  double acc = 0.0;
  const int64_t n = x->numel();
  for (int64_t i = 0; i < n; ++i) acc += x->data[i];
  out->data[0] = acc;
  return emit(out, {x}, [x, out, n]() {
    if (!x->requires_grad) return;
    const double g = out->grad[0];
    for (int64_t i = 0; i < n; ++i) x->grad[i] += g;
  });
}

TensorPtr Tape::mean(const TensorPtr& x) {
  auto out = make_tensor({1});
  double acc = 0.0;
  const int64_t n = x->numel();
  for (int64_t i = 0; i < n; ++i) acc += x->data[i];
  out->data[0] = acc / static_cast<double>(n);
  return emit(out, {x}, [x, out, n]() {
    if (!x->requires_grad) return;
    const double g = out->grad[0] / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) x->grad[i] += g;
  });
}

void Tape::backward(const TensorPtr& loss) {
  if (!loss->is_scalar())
    throw ConfigError("backward: loss must be a scalar, got " + shape_str(loss->shape));
  if (consumed_at_ == nodes_.size())
    throw ConfigError("backward: tape already consumed; run a fresh forward pass first");
  bool found = false;
  for (const auto& node : nodes_)
    if (node.output == loss) {
      found = true;
      break;
    }
  if (!found)
    throw ConfigError("backward: loss was not produced by an operation recorded on this tape");
  for (auto& node : nodes_) {
    node.output->ensure_zero_grad();
    for (auto& in : node.inputs)
      if (in->requires_grad) in->ensure_zero_grad();
  }
  loss->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->pull();
  consumed_at_ = nodes_.size();
}

void Tape::reset() {
  nodes_.clear();
  consumed_at_ = static_cast<size_t>(-1);
}

}  // namespace atk
