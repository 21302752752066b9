#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "wm/tensor.hpp"

namespace wm {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}
  void zero_grad() { grad.zero(); }
};

// LIFO store for activations saved during a traced forward pass.
// Each layer pushes what its backward needs and pops it back in reverse
// order, so one network can hold several live traces at once (the shared
// decoder is invoked twice per training step).
class Trace {
 public:
  void push(Tensor t) { stack_.push_back(std::move(t)); }
  Tensor pop();
  bool empty() const { return stack_.empty(); }
  void clear() { stack_.clear(); }

 private:
  std::vector<Tensor> stack_;
};

using Rng = std::mt19937_64;

class Layer {
 public:
  virtual ~Layer() = default;
  // trace == nullptr runs inference-style (nothing saved, no running-stat
  // updates); `training` selects batch statistics in BatchNorm.
  virtual Tensor forward(const Tensor& x, Trace* trace, bool training) = 0;
  // Pops this layer's cache from `trace`, accumulates parameter gradients
  // and returns the gradient w.r.t. the layer input.
  virtual Tensor backward(const Tensor& grad_out, Trace& trace) = 0;
  virtual void collect_params(std::vector<Param*>& out) {}
};

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, std::size_t cin, std::size_t cout, std::size_t k,
         std::size_t stride, std::size_t pad, Rng& rng);
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  std::size_t cin_, cout_, k_, stride_, pad_;
  Param weight_, bias_;
};

// Kernel-2 stride-2 transposed convolution (exact ×2 upsampling).
class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(std::string name, std::size_t cin, std::size_t cout, Rng& rng);
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  std::size_t cin_, cout_;
  Param weight_, bias_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(std::string name, std::size_t channels);
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
  void collect_params(std::vector<Param*>& out) override;

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  std::size_t channels_;
  Param gamma_, beta_;
  Param running_mean_, running_var_;  // not optimized, but checkpointed
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
};

class Linear : public Layer {
 public:
  Linear(std::string name, std::size_t din, std::size_t dout, Rng& rng);
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  std::size_t din_, dout_;
  Param weight_, bias_;
};

// Squeeze-and-excitation channel gate: global average pool, two fully
// connected layers with a reduction bottleneck, sigmoid, channel scaling.
class SEGate : public Layer {
 public:
  SEGate(std::string name, std::size_t channels, std::size_t reduction, Rng& rng);
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  std::size_t channels_, reduced_;
  Param fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

class UpsampleNearest2x : public Layer {
 public:
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
};

// ×2 unpooling with locations sampled once at construction and frozen for
// the model's lifetime: every input element lands in one of the four slots
// of its 2×2 output block, the rest are zero.
class Unpool2x : public Layer {
 public:
  Unpool2x(std::string name, std::size_t c, std::size_t h_in, std::size_t w_in, Rng& rng);
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
  void collect_params(std::vector<Param*>& out) override;

 private:
  std::size_t c_, h_, w_;
  Param locations_;  // codes in {0,1,2,3}, frozen (non-trainable)
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
};

class Flatten : public Layer {
 public:
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
};

class Sequential : public Layer {
 public:
  Sequential() = default;
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  template <typename T, typename... Args>
  T* emplace(Args&&... args) {
    auto p = std::make_unique<T>(std::forward<Args>(args)...);
    T* raw = p.get();
    layers_.push_back(std::move(p));
    return raw;
  }
  Tensor forward(const Tensor& x, Trace* trace, bool training) override;
  Tensor backward(const Tensor& grad_out, Trace& trace) override;
  void collect_params(std::vector<Param*>& out) override;
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Column-wise concat of two (N,D) tensors.
Tensor concat_cols(const Tensor& a, const Tensor& b);
void split_cols(const Tensor& joined, std::size_t da, Tensor& ga, Tensor& gb);
// Channel-wise concat of two (N,C,H,W) tensors.
Tensor concat_channels(const Tensor& a, const Tensor& b);

}  // namespace wm
