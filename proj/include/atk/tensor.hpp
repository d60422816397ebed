#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace atk {

// Dense row-major f64 tensor. Image batches use NHWC layout.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward touches it
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<int> shp, double fill, bool req_grad);

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  bool is_scalar() const { return numel() == 1; }
  void ensure_zero_grad() { grad.assign(data.size(), 0.0); }
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, double fill = 0.0, bool requires_grad = false);
TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);

std::string shape_str(const std::vector<int>& shape);

// Records forward operations and replays them in reverse for gradients.
// Gradients accumulate into every reachable tensor with requires_grad set;
// operations whose inputs all have requires_grad == false are not recorded.
class Tape {
 public:
  // elementwise; b may also be rank-1 matching a's last axis (bias broadcast)
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr scale(const TensorPtr& a, double c);

  // a: [M,K], b: [K,N]
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);

  // x: [B,H,W,Cin], k: [KH,KW,Cin,Cout], stride 1, explicit zero padding
  TensorPtr conv2d(const TensorPtr& x, const TensorPtr& k, int pad);

  // x * sigmoid(x)
  TensorPtr swish(const TensorPtr& x);

  // softmax / log-softmax over the last axis, computed via a shifted log-sum-exp
  TensorPtr softmax_logits(const TensorPtr& z);
  TensorPtr log_softmax(const TensorPtr& z);

  // spatial zero padding / cropping on NHWC batches
  TensorPtr pad2d(const TensorPtr& x, int pad);
  TensorPtr crop2d(const TensorPtr& x, int top, int left, int out_h, int out_w);

  // 2x2 average pooling, stride 2; spatial dims must be even
  TensorPtr avg_pool2(const TensorPtr& x);

  // [B, ...] -> [B, F]
  TensorPtr flatten(const TensorPtr& x);

  // full reductions to a [1] scalar, accumulated in row-major order
  TensorPtr sum(const TensorPtr& x);
  TensorPtr mean(const TensorPtr& x);

  // loss must be a scalar produced by an operation recorded on this tape
  void backward(const TensorPtr& loss);

  void reset();
  size_t size() const { return nodes_.size(); }

  static int workers;  // worker count for the heavy kernels (conv2d, matmul)

 private:
  struct Node {
    TensorPtr output;
    std::vector<TensorPtr> inputs;
    std::function<void()> pull;
  };

  TensorPtr emit(TensorPtr out, std::vector<TensorPtr> inputs, std::function<void()> pull);

  std::vector<Node> nodes_;
  size_t consumed_at_ = static_cast<size_t>(-1);
};

}  // namespace atk
