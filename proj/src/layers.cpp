#include "wm/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "wm/kernels.hpp"

namespace wm {

namespace {

const kernels::Ops& K() { return kernels::ops(); }

void check_rank4(const Tensor& x, const char* who) {
  if (x.rank() != 4) throw std::invalid_argument(std::string(who) + ": expected N×C×H×W input");
}

Tensor kaiming_tensor(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
  return t;
}

// Zero padding on both spatial axes.
Tensor pad2d(const Tensor& x, std::size_t p) {
  if (p == 0) return x;
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, h + 2 * p, w + 2 * p});
  const std::size_t wp = w + 2 * p;
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = x.data() + (i * h + y) * w;
      double* dst = out.data() + (i * (h + 2 * p) + y + p) * wp + p;
      for (std::size_t xcol = 0; xcol < w; ++xcol) dst[xcol] = src[xcol];
    }
  return out;
}

Tensor unpad2d(const Tensor& xp, std::size_t p) {
  if (p == 0) return xp;
  const std::size_t n = xp.dim(0), c = xp.dim(1), hp = xp.dim(2), wp = xp.dim(3);
  const std::size_t h = hp - 2 * p, w = wp - 2 * p;
  Tensor out({n, c, h, w});
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = xp.data() + (i * hp + y + p) * wp + p;
      double* dst = out.data() + (i * h + y) * w;
      for (std::size_t xcol = 0; xcol < w; ++xcol) dst[xcol] = src[xcol];
    }
  return out;
}

}  // namespace

Tensor Trace::pop() {
  if (stack_.empty()) throw std::logic_error("trace underflow");
  Tensor t = std::move(stack_.back());
  stack_.pop_back();
  return t;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, std::size_t cin, std::size_t cout, std::size_t k,
               std::size_t stride, std::size_t pad, Rng& rng)
    : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad),
      weight_(name + ".weight", kaiming_tensor({cout, cin, k, k}, cin * k * k, rng)),
      bias_(name + ".bias", Tensor({cout})) {}

Tensor Conv2d::forward(const Tensor& x, Trace* trace, bool) {
  check_rank4(x, "Conv2d");
  if (x.dim(1) != cin_) throw std::invalid_argument("Conv2d: channel mismatch");
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t hp = h + 2 * pad_, wp = w + 2 * pad_;
  if (hp < k_ || wp < k_) throw std::invalid_argument("Conv2d: input smaller than kernel");
  const std::size_t ho = (hp - k_) / stride_ + 1, wo = (wp - k_) / stride_ + 1;

  Tensor xp = pad2d(x, pad_);
  Tensor y({n, cout_, ho, wo});
  for (std::size_t in = 0; in < n; ++in) {
    for (std::size_t co = 0; co < cout_; ++co) {
      double* ybase = y.data() + ((in * cout_ + co) * ho) * wo;
      const double b = bias_.value[co];
      for (std::size_t i = 0; i < ho * wo; ++i) ybase[i] = b;
      for (std::size_t ci = 0; ci < cin_; ++ci) {
        const double* xbase = xp.data() + ((in * cin_ + ci) * hp) * wp;
        for (std::size_t ky = 0; ky < k_; ++ky)
          for (std::size_t kx = 0; kx < k_; ++kx) {
            const double wgt = weight_.value[((co * cin_ + ci) * k_ + ky) * k_ + kx];
            if (stride_ == 1) {
              for (std::size_t oy = 0; oy < ho; ++oy)
                K().axpy(wgt, xbase + (oy + ky) * wp + kx, ybase + oy * wo, wo);
            } else {
              for (std::size_t oy = 0; oy < ho; ++oy) {
                const double* xrow = xbase + (oy * stride_ + ky) * wp + kx;
                double* yrow = ybase + oy * wo;
                for (std::size_t ox = 0; ox < wo; ++ox) yrow[ox] += wgt * xrow[ox * stride_];
              }
            }
          }
      }
    }
  }
  if (trace) {
    trace->push(std::move(xp));
    trace->push(Tensor::scalar(double(h)));
    trace->push(Tensor::scalar(double(w)));
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& g, Trace& trace) {
  const std::size_t w = std::size_t(trace.pop()[0]);
  const std::size_t h = std::size_t(trace.pop()[0]);
  Tensor xp = trace.pop();
  const std::size_t n = g.dim(0), ho = g.dim(2), wo = g.dim(3);
  const std::size_t hp = h + 2 * pad_, wp = w + 2 * pad_;

  Tensor gxp({n, cin_, hp, wp});
  for (std::size_t in = 0; in < n; ++in) {
    for (std::size_t co = 0; co < cout_; ++co) {
      const double* gbase = g.data() + ((in * cout_ + co) * ho) * wo;
      bias_.grad[co] += K().sum(gbase, ho * wo);
      for (std::size_t ci = 0; ci < cin_; ++ci) {
        const double* xbase = xp.data() + ((in * cin_ + ci) * hp) * wp;
        double* gxbase = gxp.data() + ((in * cin_ + ci) * hp) * wp;
        for (std::size_t ky = 0; ky < k_; ++ky)
          for (std::size_t kx = 0; kx < k_; ++kx) {
            const std::size_t widx = ((co * cin_ + ci) * k_ + ky) * k_ + kx;
            const double wgt = weight_.value[widx];
            double dw = 0.0;
            if (stride_ == 1) {
              for (std::size_t oy = 0; oy < ho; ++oy) {
                dw += K().dot(xbase + (oy + ky) * wp + kx, gbase + oy * wo, wo);
                K().axpy(wgt, gbase + oy * wo, gxbase + (oy + ky) * wp + kx, wo);
              }
            } else {
              for (std::size_t oy = 0; oy < ho; ++oy) {
                const double* xrow = xbase + (oy * stride_ + ky) * wp + kx;
                double* gxrow = gxbase + (oy * stride_ + ky) * wp + kx;
                const double* grow = gbase + oy * wo;
                for (std::size_t ox = 0; ox < wo; ++ox) {
                  dw += xrow[ox * stride_] * grow[ox];
                  gxrow[ox * stride_] += wgt * grow[ox];
                }
              }
            }
            weight_.grad[widx] += dw;
          }
      }
    }
  }
  return unpad2d(gxp, pad_);
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// ConvTranspose2d (k=2, stride=2)

ConvTranspose2d::ConvTranspose2d(std::string name, std::size_t cin, std::size_t cout, Rng& rng)
    : cin_(cin), cout_(cout),
      weight_(name + ".weight", kaiming_tensor({cin, cout, 2, 2}, cin * 4, rng)),
      bias_(name + ".bias", Tensor({cout})) {}

Tensor ConvTranspose2d::forward(const Tensor& x, Trace* trace, bool) {
  check_rank4(x, "ConvTranspose2d");
  if (x.dim(1) != cin_) throw std::invalid_argument("ConvTranspose2d: channel mismatch");
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor y({n, cout_, 2 * h, 2 * w});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t co = 0; co < cout_; ++co) {
      double* ybase = y.data() + ((in * cout_ + co) * 2 * h) * 2 * w;
      const double b = bias_.value[co];
      for (std::size_t i = 0; i < 4 * h * w; ++i) ybase[i] = b;
      for (std::size_t ci = 0; ci < cin_; ++ci) {
        const double* xbase = x.data() + ((in * cin_ + ci) * h) * w;
        for (std::size_t ky = 0; ky < 2; ++ky)
          for (std::size_t kx = 0; kx < 2; ++kx) {
            const double wgt = weight_.value[((ci * cout_ + co) * 2 + ky) * 2 + kx];
            for (std::size_t iy = 0; iy < h; ++iy) {
              const double* xrow = xbase + iy * w;
              double* yrow = ybase + (2 * iy + ky) * 2 * w + kx;
              for (std::size_t ix = 0; ix < w; ++ix) yrow[2 * ix] += wgt * xrow[ix];
            }
          }
      }
    }
  if (trace) trace->push(x);
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& g, Trace& trace) {
  Tensor x = trace.pop();
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor gx({n, cin_, h, w});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t co = 0; co < cout_; ++co) {
      const double* gbase = g.data() + ((in * cout_ + co) * 2 * h) * 2 * w;
      bias_.grad[co] += K().sum(gbase, 4 * h * w);
      for (std::size_t ci = 0; ci < cin_; ++ci) {
        const double* xbase = x.data() + ((in * cin_ + ci) * h) * w;
        double* gxbase = gx.data() + ((in * cin_ + ci) * h) * w;
        for (std::size_t ky = 0; ky < 2; ++ky)
          for (std::size_t kx = 0; kx < 2; ++kx) {
            const std::size_t widx = ((ci * cout_ + co) * 2 + ky) * 2 + kx;
            const double wgt = weight_.value[widx];
            double dw = 0.0;
            for (std::size_t iy = 0; iy < h; ++iy) {
              const double* grow = gbase + (2 * iy + ky) * 2 * w + kx;
              const double* xrow = xbase + iy * w;
              double* gxrow = gxbase + iy * w;
              for (std::size_t ix = 0; ix < w; ++ix) {
                dw += xrow[ix] * grow[2 * ix];
                gxrow[ix] += wgt * grow[2 * ix];
              }
            }
            weight_.grad[widx] += dw;
          }
      }
    }
  return gx;
}

void ConvTranspose2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, std::size_t channels)
    : channels_(channels),
      gamma_(name + ".gamma", Tensor::full({channels}, 1.0)),
      beta_(name + ".beta", Tensor({channels})),
      running_mean_(name + ".running_mean", Tensor({channels}), false),
      running_var_(name + ".running_var", Tensor::full({channels}, 1.0), false) {}

Tensor BatchNorm2d::forward(const Tensor& x, Trace* trace, bool training) {
  check_rank4(x, "BatchNorm2d");
  if (x.dim(1) != channels_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t m = n * h * w;  // elements per channel
  const std::size_t plane = h * w;

  Tensor mean({channels_}), var({channels_});
  if (training) {
    for (std::size_t c = 0; c < channels_; ++c) {
      double s = 0.0;
      for (std::size_t in = 0; in < n; ++in)
        s += K().sum(x.data() + ((in * channels_ + c) * plane), plane);
      mean[c] = s / double(m);
      double sq = 0.0;
      for (std::size_t in = 0; in < n; ++in) {
        const double* base = x.data() + ((in * channels_ + c) * plane);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = base[i] - mean[c];
          sq += d * d;
        }
      }
      var[c] = sq / double(m);
    }
    if (trace) {
      // Running statistics track the training distribution (unbiased var).
      const double unbias = m > 1 ? double(m) / double(m - 1) : 1.0;
      for (std::size_t c = 0; c < channels_; ++c) {
        running_mean_.value[c] = (1.0 - kMomentum) * running_mean_.value[c] + kMomentum * mean[c];
        running_var_.value[c] =
            (1.0 - kMomentum) * running_var_.value[c] + kMomentum * var[c] * unbias;
      }
    }
  } else {
    mean = running_mean_.value;
    var = running_var_.value;
  }

  Tensor xhat(x.shape());
  Tensor inv_std({channels_});
  Tensor y(x.shape());
  for (std::size_t c = 0; c < channels_; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + kEps);
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t c = 0; c < channels_; ++c) {
      const double* base = x.data() + ((in * channels_ + c) * plane);
      double* xh = xhat.data() + ((in * channels_ + c) * plane);
      double* yb = y.data() + ((in * channels_ + c) * plane);
      const double mu = mean[c], is = inv_std[c], gm = gamma_.value[c], bt = beta_.value[c];
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (base[i] - mu) * is;
        yb[i] = gm * xh[i] + bt;
      }
    }
  if (trace) {
    trace->push(std::move(xhat));
    trace->push(std::move(inv_std));
    trace->push(Tensor::scalar(training ? 1.0 : 0.0));
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& g, Trace& trace) {
  const bool training = trace.pop()[0] != 0.0;
  Tensor inv_std = trace.pop();
  Tensor xhat = trace.pop();
  const std::size_t n = g.dim(0), h = g.dim(2), w = g.dim(3);
  const std::size_t plane = h * w;
  const double m = double(n * plane);

  Tensor gx(g.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double dgamma = 0.0, dbeta = 0.0;
    for (std::size_t in = 0; in < n; ++in) {
      const double* gb = g.data() + ((in * channels_ + c) * plane);
      const double* xh = xhat.data() + ((in * channels_ + c) * plane);
      dgamma += K().dot(gb, xh, plane);
      dbeta += K().sum(gb, plane);
    }
    gamma_.grad[c] += dgamma;
    beta_.grad[c] += dbeta;
    const double scale = gamma_.value[c] * inv_std[c];
    for (std::size_t in = 0; in < n; ++in) {
      const double* gb = g.data() + ((in * channels_ + c) * plane);
      const double* xh = xhat.data() + ((in * channels_ + c) * plane);
      double* gxb = gx.data() + ((in * channels_ + c) * plane);
      if (training) {
        for (std::size_t i = 0; i < plane; ++i)
          gxb[i] = scale * (gb[i] - dbeta / m - xh[i] * dgamma / m);
      } else {
        for (std::size_t i = 0; i < plane; ++i) gxb[i] = scale * gb[i];
      }
    }
  }
  return gx;
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::forward(const Tensor& x, Trace* trace, bool) {
  Tensor y = x;
  Tensor mask(x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) {
    if (y[i] > 0.0) {
      mask[i] = 1.0;
    } else {
      y[i] = 0.0;
    }
  }
  if (trace) trace->push(std::move(mask));
  return y;
}

Tensor ReLU::backward(const Tensor& g, Trace& trace) {
  Tensor gx = g;
  Tensor mask = trace.pop();
  K().mul(mask.data(), gx.data(), gx.numel());
  return gx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, std::size_t din, std::size_t dout, Rng& rng)
    : din_(din), dout_(dout),
      weight_(name + ".weight", kaiming_tensor({dout, din}, din, rng)),
      bias_(name + ".bias", Tensor({dout})) {}

Tensor Linear::forward(const Tensor& x, Trace* trace, bool) {
  if (x.rank() != 2 || x.dim(1) != din_)
    throw std::invalid_argument("Linear: expected N×" + std::to_string(din_) + " input");
  const std::size_t n = x.dim(0);
  Tensor y({n, dout_});
  for (std::size_t in = 0; in < n; ++in) {
    const double* xr = x.data() + in * din_;
    double* yr = y.data() + in * dout_;
    for (std::size_t k = 0; k < dout_; ++k)
      yr[k] = K().dot(weight_.value.data() + k * din_, xr, din_) + bias_.value[k];
  }
  if (trace) trace->push(x);
  return y;
}

Tensor Linear::backward(const Tensor& g, Trace& trace) {
  Tensor x = trace.pop();
  const std::size_t n = x.dim(0);
  Tensor gx({n, din_});
  for (std::size_t in = 0; in < n; ++in) {
    const double* xr = x.data() + in * din_;
    const double* gr = g.data() + in * dout_;
    double* gxr = gx.data() + in * din_;
    for (std::size_t k = 0; k < dout_; ++k) {
      const double gk = gr[k];
      bias_.grad[k] += gk;
      K().axpy(gk, xr, weight_.grad.data() + k * din_, din_);
      K().axpy(gk, weight_.value.data() + k * din_, gxr, din_);
    }
  }
  return gx;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// SEGate

SEGate::SEGate(std::string name, std::size_t channels, std::size_t reduction, Rng& rng)
    : channels_(channels), reduced_(std::max<std::size_t>(1, channels / reduction)),
      fc1_w_(name + ".fc1.weight", kaiming_tensor({reduced_, channels}, channels, rng)),
      fc1_b_(name + ".fc1.bias", Tensor({reduced_})),
      fc2_w_(name + ".fc2.weight", kaiming_tensor({channels, reduced_}, reduced_, rng)),
      fc2_b_(name + ".fc2.bias", Tensor({channels})) {}

Tensor SEGate::forward(const Tensor& x, Trace* trace, bool) {
  check_rank4(x, "SEGate");
  if (x.dim(1) != channels_) throw std::invalid_argument("SEGate: channel mismatch");
  const std::size_t n = x.dim(0), plane = x.dim(2) * x.dim(3);

  Tensor s({n, channels_}), a1({n, reduced_}), hrelu({n, reduced_}), gate({n, channels_});
  for (std::size_t in = 0; in < n; ++in) {
    double* sr = s.data() + in * channels_;
    for (std::size_t c = 0; c < channels_; ++c)
      sr[c] = K().sum(x.data() + ((in * channels_ + c) * plane), plane) / double(plane);
    double* a1r = a1.data() + in * reduced_;
    double* hr = hrelu.data() + in * reduced_;
    for (std::size_t k = 0; k < reduced_; ++k) {
      a1r[k] = K().dot(fc1_w_.value.data() + k * channels_, sr, channels_) + fc1_b_.value[k];
      hr[k] = a1r[k] > 0.0 ? a1r[k] : 0.0;
    }
    double* gr = gate.data() + in * channels_;
    for (std::size_t c = 0; c < channels_; ++c) {
      const double a2 = K().dot(fc2_w_.value.data() + c * reduced_, hr, reduced_) + fc2_b_.value[c];
      gr[c] = 1.0 / (1.0 + std::exp(-a2));
    }
  }

  Tensor y(x.shape());
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t c = 0; c < channels_; ++c) {
      const double gc = gate[in * channels_ + c];
      const double* xb = x.data() + ((in * channels_ + c) * plane);
      double* yb = y.data() + ((in * channels_ + c) * plane);
      for (std::size_t i = 0; i < plane; ++i) yb[i] = gc * xb[i];
    }
  if (trace) {
    trace->push(x);
    trace->push(std::move(s));
    trace->push(std::move(a1));
    trace->push(std::move(hrelu));
    trace->push(std::move(gate));
  }
  return y;
}

Tensor SEGate::backward(const Tensor& g, Trace& trace) {
  Tensor gate = trace.pop();
  Tensor hrelu = trace.pop();
  Tensor a1 = trace.pop();
  Tensor s = trace.pop();
  Tensor x = trace.pop();
  const std::size_t n = x.dim(0), plane = x.dim(2) * x.dim(3);

  Tensor gx(x.shape());
  for (std::size_t in = 0; in < n; ++in) {
    const double* sr = s.data() + in * channels_;
    const double* hr = hrelu.data() + in * reduced_;
    const double* a1r = a1.data() + in * reduced_;
    const double* gr = gate.data() + in * channels_;

    // Direct path plus gradient on the per-channel gate.
    std::vector<double> dgate(channels_);
    for (std::size_t c = 0; c < channels_; ++c) {
      const double* gb = g.data() + ((in * channels_ + c) * plane);
      const double* xb = x.data() + ((in * channels_ + c) * plane);
      double* gxb = gx.data() + ((in * channels_ + c) * plane);
      K().axpy(gr[c], gb, gxb, plane);
      dgate[c] = K().dot(gb, xb, plane);
    }

    std::vector<double> da2(channels_), dh(reduced_, 0.0), ds(channels_, 0.0);
    for (std::size_t c = 0; c < channels_; ++c) {
      da2[c] = dgate[c] * gr[c] * (1.0 - gr[c]);
      fc2_b_.grad[c] += da2[c];
      K().axpy(da2[c], hr, fc2_w_.grad.data() + c * reduced_, reduced_);
      K().axpy(da2[c], fc2_w_.value.data() + c * reduced_, dh.data(), reduced_);
    }
    for (std::size_t k = 0; k < reduced_; ++k) {
      const double da1 = a1r[k] > 0.0 ? dh[k] : 0.0;
      fc1_b_.grad[k] += da1;
      K().axpy(da1, sr, fc1_w_.grad.data() + k * channels_, channels_);
      K().axpy(da1, fc1_w_.value.data() + k * channels_, ds.data(), channels_);
    }
    for (std::size_t c = 0; c < channels_; ++c) {
      double* gxb = gx.data() + ((in * channels_ + c) * plane);
      const double spread = ds[c] / double(plane);
      for (std::size_t i = 0; i < plane; ++i) gxb[i] += spread;
    }
  }
  return gx;
}

void SEGate::collect_params(std::vector<Param*>& out) {
  out.push_back(&fc1_w_);
  out.push_back(&fc1_b_);
  out.push_back(&fc2_w_);
  out.push_back(&fc2_b_);
}

// ---------------------------------------------------------------------------
// Upsampling

Tensor UpsampleNearest2x::forward(const Tensor& x, Trace* trace, bool) {
  check_rank4(x, "UpsampleNearest2x");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, c, 2 * h, 2 * w});
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t iy = 0; iy < h; ++iy) {
      const double* xrow = x.data() + (i * h + iy) * w;
      double* y0 = y.data() + (i * 2 * h + 2 * iy) * 2 * w;
      double* y1 = y0 + 2 * w;
      for (std::size_t ix = 0; ix < w; ++ix) {
        const double v = xrow[ix];
        y0[2 * ix] = v;
        y0[2 * ix + 1] = v;
        y1[2 * ix] = v;
        y1[2 * ix + 1] = v;
      }
    }
  return y;
}

Tensor UpsampleNearest2x::backward(const Tensor& g, Trace&) {
  const std::size_t n = g.dim(0), c = g.dim(1), h2 = g.dim(2), w2 = g.dim(3);
  const std::size_t h = h2 / 2, w = w2 / 2;
  Tensor gx({n, c, h, w});
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t iy = 0; iy < h; ++iy) {
      const double* g0 = g.data() + (i * h2 + 2 * iy) * w2;
      const double* g1 = g0 + w2;
      double* gxrow = gx.data() + (i * h + iy) * w;
      for (std::size_t ix = 0; ix < w; ++ix)
        gxrow[ix] = g0[2 * ix] + g0[2 * ix + 1] + g1[2 * ix] + g1[2 * ix + 1];
    }
  return gx;
}

Unpool2x::Unpool2x(std::string name, std::size_t c, std::size_t h_in, std::size_t w_in, Rng& rng)
    : c_(c), h_(h_in), w_(w_in),
      locations_(name + ".locations", Tensor({c, h_in, w_in}), false) {
  std::uniform_int_distribution<int> slot(0, 3);
  for (std::size_t i = 0; i < locations_.value.numel(); ++i)
    locations_.value[i] = double(slot(rng));
}

Tensor Unpool2x::forward(const Tensor& x, Trace* trace, bool) {
  check_rank4(x, "Unpool2x");
  if (x.dim(1) != c_ || x.dim(2) != h_ || x.dim(3) != w_)
    throw std::invalid_argument("Unpool2x: shape mismatch with frozen locations");
  const std::size_t n = x.dim(0);
  Tensor y({n, c_, 2 * h_, 2 * w_});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t c = 0; c < c_; ++c)
      for (std::size_t iy = 0; iy < h_; ++iy)
        for (std::size_t ix = 0; ix < w_; ++ix) {
          const int code = int(locations_.value[(c * h_ + iy) * w_ + ix]);
          const std::size_t oy = 2 * iy + std::size_t(code / 2);
          const std::size_t ox = 2 * ix + std::size_t(code % 2);
          y[((in * c_ + c) * 2 * h_ + oy) * 2 * w_ + ox] =
              x[((in * c_ + c) * h_ + iy) * w_ + ix];
        }
  return y;
}

Tensor Unpool2x::backward(const Tensor& g, Trace&) {
  const std::size_t n = g.dim(0);
  Tensor gx({n, c_, h_, w_});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t c = 0; c < c_; ++c)
      for (std::size_t iy = 0; iy < h_; ++iy)
        for (std::size_t ix = 0; ix < w_; ++ix) {
          const int code = int(locations_.value[(c * h_ + iy) * w_ + ix]);
          const std::size_t oy = 2 * iy + std::size_t(code / 2);
          const std::size_t ox = 2 * ix + std::size_t(code % 2);
          gx[((in * c_ + c) * h_ + iy) * w_ + ix] =
              g[((in * c_ + c) * 2 * h_ + oy) * 2 * w_ + ox];
        }
  return gx;
}

void Unpool2x::collect_params(std::vector<Param*>& out) { out.push_back(&locations_); }

// ---------------------------------------------------------------------------
// Pooling / reshape

Tensor GlobalAvgPool::forward(const Tensor& x, Trace* trace, bool) {
  check_rank4(x, "GlobalAvgPool");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (std::size_t i = 0; i < n * c; ++i)
    y[i] = K().sum(x.data() + i * plane, plane) / double(plane);
  if (trace) {
    trace->push(Tensor::scalar(double(x.dim(2))));
    trace->push(Tensor::scalar(double(x.dim(3))));
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& g, Trace& trace) {
  const std::size_t w = std::size_t(trace.pop()[0]);
  const std::size_t h = std::size_t(trace.pop()[0]);
  const std::size_t n = g.dim(0), c = g.dim(1), plane = h * w;
  Tensor gx({n, c, h, w});
  for (std::size_t i = 0; i < n * c; ++i) {
    const double v = g[i] / double(plane);
    double* base = gx.data() + i * plane;
    for (std::size_t j = 0; j < plane; ++j) base[j] = v;
  }
  return gx;
}

Tensor Flatten::forward(const Tensor& x, Trace* trace, bool) {
  const std::size_t n = x.dim(0);
  if (trace) {
    Tensor shape({x.rank()});
    for (std::size_t i = 0; i < x.rank(); ++i) shape[i] = double(x.dim(i));
    trace->push(std::move(shape));
  }
  return x.reshaped({n, x.numel() / n});
}

Tensor Flatten::backward(const Tensor& g, Trace& trace) {
  Tensor shape = trace.pop();
  std::vector<std::size_t> dims(shape.numel());
  for (std::size_t i = 0; i < dims.size(); ++i) dims[i] = std::size_t(shape[i]);
  return g.reshaped(dims);
}

// ---------------------------------------------------------------------------
// Sequential

Tensor Sequential::forward(const Tensor& x, Trace* trace, bool training) {
  Tensor cur = x;
  for (auto& layer : layers_) cur = layer->forward(cur, trace, training);
  return cur;
}

Tensor Sequential::backward(const Tensor& g, Trace& trace) {
  Tensor cur = g;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    cur = (*it)->backward(cur, trace);
  return cur;
}

void Sequential::collect_params(std::vector<Param*>& out) {
  for (auto& layer : layers_) layer->collect_params(out);
}

// ---------------------------------------------------------------------------
// Concatenation helpers

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw std::invalid_argument("concat_cols: expects (N,Da) and (N,Db)");
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor out({n, da + db});
  for (std::size_t in = 0; in < n; ++in) {
    double* dst = out.data() + in * (da + db);
    const double* ar = a.data() + in * da;
    const double* br = b.data() + in * db;
    for (std::size_t i = 0; i < da; ++i) dst[i] = ar[i];
    for (std::size_t i = 0; i < db; ++i) dst[da + i] = br[i];
  }
  return out;
}

void split_cols(const Tensor& joined, std::size_t da, Tensor& ga, Tensor& gb) {
  const std::size_t n = joined.dim(0), d = joined.dim(1), db = d - da;
  ga = Tensor({n, da});
  gb = Tensor({n, db});
  for (std::size_t in = 0; in < n; ++in) {
    const double* src = joined.data() + in * d;
    for (std::size_t i = 0; i < da; ++i) ga[in * da + i] = src[i];
    for (std::size_t i = 0; i < db; ++i) gb[in * db + i] = src[da + i];
  }
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3))
    throw std::invalid_argument("concat_channels: incompatible shapes");
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = a.dim(2) * a.dim(3);
  Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t in = 0; in < n; ++in) {
    double* dst = out.data() + in * (ca + cb) * plane;
    const double* ar = a.data() + in * ca * plane;
    const double* br = b.data() + in * cb * plane;
    for (std::size_t i = 0; i < ca * plane; ++i) dst[i] = ar[i];
    for (std::size_t i = 0; i < cb * plane; ++i) dst[ca * plane + i] = br[i];
  }
  return out;
}

}  // namespace wm
