#include "hood/tensor.hpp"

#include <Eigen/Dense>
#include <cstring>
#include <cmath>
#include <sstream>

namespace hood {

namespace {

using RowMat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

}  // namespace

long shape_numel(const Shape& s) {
  long n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

void TensorNode::accumulate(const Eigen::ArrayXf& g) {
  if (!grad)
    grad = g;
  else
    *grad += g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

static detail::NodePtr make_node(Shape shape, Eigen::ArrayXf values) {
  long n = shape_numel(shape);
  for (int d : shape)
    if (d < 0) throw ConfigError("tensor: negative dimension in " + shape_str(shape));
  if (values.size() != n)
    throw ConfigError("tensor: shape " + shape_str(shape) + " expects " +
                      std::to_string(n) + " values, got " +
                      std::to_string(values.size()));
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  return node;
}

Tensor Tensor::zeros(Shape shape) {
  long n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), Eigen::ArrayXf::Zero(n)));
}

Tensor Tensor::full(Shape shape, float value) {
  long n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), Eigen::ArrayXf::Constant(n, value)));
}

Tensor Tensor::from_array(Shape shape, Eigen::ArrayXf values) {
  return Tensor(make_node(std::move(shape), std::move(values)));
}

Tensor Tensor::from_values(Shape shape, const std::vector<float>& values) {
  Eigen::ArrayXf a(static_cast<long>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) a[static_cast<long>(i)] = values[i];
  return Tensor(make_node(std::move(shape), std::move(a)));
}

Tensor Tensor::param(Shape shape, Eigen::ArrayXf values) {
  Tensor t(make_node(std::move(shape), std::move(values)));
  t.n_->requires_grad = true;
  return t;
}

const Eigen::ArrayXf& Tensor::grad() const {
  if (!n_ || !n_->grad)
    throw UsageError("tensor: gradient requested but none present");
  return *n_->grad;
}

Tensor Tensor::detached() const {
  return Tensor(make_node(n_->shape, n_->values));
}

float Tensor::scalar() const {
  if (!n_ || n_->values.size() != 1)
    throw UsageError("tensor: scalar() on non-scalar tensor");
  return n_->values[0];
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw UsageError("backward: loss must be a defined scalar tensor");
  auto node = loss.node();
  if (!node->participates()) return;  // detached loss: no grads, no error
  Tape& tape = Tape::active();
  if (tape.consumed_)
    throw UsageError(
        "backward: tape already consumed; reset the tape before reusing it");
  node->grad = Eigen::ArrayXf::Ones(1);
  for (auto it = tape.steps_.rbegin(); it != tape.steps_.rend(); ++it) (*it)();
  tape.consumed_ = true;
}

// Records a backward step when any input participates; marks the output as
// tracked so downstream ops keep recording.
template <typename Fn>
static void maybe_record(std::initializer_list<detail::NodePtr> inputs,
                         const detail::NodePtr& out, Fn&& fn) {
  Tape& tape = Tape::active();
  if (!tape.enabled()) return;
  bool any = false;
  for (const auto& in : inputs) any = any || in->participates();
  if (!any) return;
  out->tracked = true;
  tape.record(std::forward<Fn>(fn));
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

static void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op, bool config_error) {
  if (a.shape() != b.shape()) {
    std::string msg = std::string(op) + ": shape mismatch " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape());
    if (config_error) throw ConfigError(msg);
    throw InputError(msg);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add", true);
  Tensor out = Tensor::from_array(a.shape(), a.values() + b.values());
  auto an = a.node(), bn = b.node(), on = out.node();
  maybe_record({an, bn}, on, [an, bn, on] {
    if (!on->grad) return;
    if (an->participates()) an->accumulate(*on->grad);
    if (bn->participates()) bn->accumulate(*on->grad);
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul", true);
  Tensor out = Tensor::from_array(a.shape(), a.values() * b.values());
  auto an = a.node(), bn = b.node(), on = out.node();
  maybe_record({an, bn}, on, [an, bn, on] {
    if (!on->grad) return;
    if (an->participates()) an->accumulate(*on->grad * bn->values);
    if (bn->participates()) bn->accumulate(*on->grad * an->values);
  });
  return out;
}

Tensor scale(const Tensor& a, float c) {
  Tensor out = Tensor::from_array(a.shape(), a.values() * c);
  auto an = a.node(), on = out.node();
  maybe_record({an}, on, [an, on, c] {
    if (!on->grad) return;
    if (an->participates()) an->accumulate(*on->grad * c);
  });
  return out;
}

static Tensor reduce_all(const Tensor& a, bool take_mean, const char* op) {
  if (a.numel() == 0) throw InputError(std::string(op) + ": empty tensor");
  double acc = a.values().cast<double>().sum();
  if (take_mean) acc /= static_cast<double>(a.numel());
  Tensor out = Tensor::from_array({1}, Eigen::ArrayXf::Constant(1, static_cast<float>(acc)));
  auto an = a.node(), on = out.node();
  float inv = take_mean ? 1.0f / static_cast<float>(a.numel()) : 1.0f;
  maybe_record({an}, on, [an, on, inv] {
    if (!on->grad) return;
    if (an->participates())
      an->accumulate(Eigen::ArrayXf::Constant(an->values.size(), (*on->grad)[0] * inv));
  });
  return out;
}

Tensor sum(const Tensor& a) { return reduce_all(a, false, "sum"); }
Tensor mean(const Tensor& a) { return reduce_all(a, true, "mean"); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ConfigError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                      shape_str(shape));
  Tensor out = Tensor::from_array(std::move(shape), a.values());
  auto an = a.node(), on = out.node();
  maybe_record({an}, on, [an, on] {
    if (!on->grad) return;
    if (an->participates()) an->accumulate(*on->grad);  // flat layouts agree
  });
  return out;
}

static void softmax_rows(const Eigen::ArrayXf& x, long rows, long cols,
                         Eigen::ArrayXf& y) {
  for (long r = 0; r < rows; ++r) {
    auto row = x.segment(r * cols, cols);
    float m = row.maxCoeff();
    Eigen::ArrayXf e = (row - m).exp();
    y.segment(r * cols, cols) = e / e.sum();  // sum >= 1 after max-subtraction
  }
}

Tensor activation(const Tensor& a, Activation kind) {
  auto an = a.node();
  switch (kind) {
    case Activation::relu: {
      Tensor out = Tensor::from_array(a.shape(), a.values().max(0.0f));
      auto on = out.node();
      maybe_record({an}, on, [an, on] {
        if (!on->grad) return;
        if (an->participates())
          an->accumulate((an->values > 0.0f).select(*on->grad, 0.0f));
      });
      return out;
    }
    case Activation::tanh: {
      Tensor out = Tensor::from_array(a.shape(), a.values().tanh());
      auto on = out.node();
      maybe_record({an}, on, [an, on] {
        if (!on->grad) return;
        if (an->participates())
          an->accumulate(*on->grad * (1.0f - on->values.square()));
      });
      return out;
    }
    case Activation::softmax_lastdim: {
      if (a.rank() < 1 || a.dim(a.rank() - 1) < 1)
        throw ConfigError("softmax: last dimension must be >= 1, shape " +
                          shape_str(a.shape()));
      long cols = a.dim(a.rank() - 1);
      long rows = a.numel() / cols;
      Eigen::ArrayXf y(a.numel());
      softmax_rows(a.values(), rows, cols, y);
      Tensor out = Tensor::from_array(a.shape(), std::move(y));
      auto on = out.node();
      maybe_record({an}, on, [an, on, rows, cols] {
        if (!on->grad) return;
        if (!an->participates()) return;
        Eigen::ArrayXf gx(an->values.size());
        for (long r = 0; r < rows; ++r) {
          auto y_r = on->values.segment(r * cols, cols);
          auto g_r = on->grad->segment(r * cols, cols);
          float dot = (g_r * y_r).sum();
          gx.segment(r * cols, cols) = y_r * (g_r - dot);
        }
        an->accumulate(gx);
      });
      return out;
    }
  }
  throw ConfigError("activation: unknown kind");
}

// ---------------------------------------------------------------------------
// dense / channel_bias
// ---------------------------------------------------------------------------

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || bias.rank() != 1 ||
      input.dim(1) != weights.dim(0) || weights.dim(1) != bias.dim(0))
    throw ConfigError("dense: incompatible shapes input " +
                      shape_str(input.shape()) + ", weights " +
                      shape_str(weights.shape()) + ", bias " +
                      shape_str(bias.shape()));
  long n = input.dim(0), d = input.dim(1), m = weights.dim(1);
  Tensor out = Tensor::zeros({static_cast<int>(n), static_cast<int>(m)});
  {
    ConstRowMap x(input.values().data(), n, d);
    ConstRowMap w(weights.values().data(), d, m);
    RowMap o(out.mutable_values().data(), n, m);
    o.noalias() = x * w;
    o.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.values().data(), m);
  }
  auto xn = input.node(), wn = weights.node(), bn = bias.node(), on = out.node();
  maybe_record({xn, wn, bn}, on, [xn, wn, bn, on, n, d, m] {
    if (!on->grad) return;
    ConstRowMap g(on->grad->data(), n, m);
    if (xn->participates()) {
      Eigen::ArrayXf gx(n * d);
      RowMap(gx.data(), n, d).noalias() =
          g * ConstRowMap(wn->values.data(), d, m).transpose();
      xn->accumulate(gx);
    }
    if (wn->participates()) {
      Eigen::ArrayXf gw(d * m);
      RowMap(gw.data(), d, m).noalias() =
          ConstRowMap(xn->values.data(), n, d).transpose() * g;
      wn->accumulate(gw);
    }
    if (bn->participates()) {
      Eigen::ArrayXf gb(m);
      Eigen::Map<Eigen::RowVectorXf>(gb.data(), m) =
          g.cast<double>().colwise().sum().cast<float>();
      bn->accumulate(gb);
    }
  });
  return out;
}

Tensor channel_bias(const Tensor& input, const Tensor& bias) {
  if (input.rank() != 4 || bias.rank() != 1 || bias.dim(0) != input.dim(1))
    throw ConfigError("channel_bias: input " + shape_str(input.shape()) +
                      " incompatible with bias " + shape_str(bias.shape()));
  long n = input.dim(0), c = input.dim(1);
  long plane = static_cast<long>(input.dim(2)) * input.dim(3);
  Eigen::ArrayXf y = input.values();
  for (long i = 0; i < n; ++i)
    for (long ch = 0; ch < c; ++ch)
      y.segment((i * c + ch) * plane, plane) += bias.values()[ch];
  Tensor out = Tensor::from_array(input.shape(), std::move(y));
  auto xn = input.node(), bn = bias.node(), on = out.node();
  maybe_record({xn, bn}, on, [xn, bn, on, n, c, plane] {
    if (!on->grad) return;
    if (xn->participates()) xn->accumulate(*on->grad);
    if (bn->participates()) {
      Eigen::ArrayXf gb(c);
      for (long ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (long i = 0; i < n; ++i)
          acc += on->grad->segment((i * c + ch) * plane, plane).cast<double>().sum();
        gb[ch] = static_cast<float>(acc);
      }
      bn->accumulate(gb);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Convolution kernels: batched im2col + GEMM, single-threaded, fixed
// accumulation order.
// ---------------------------------------------------------------------------

namespace {

struct ConvGeom {
  long n, c, h, w;    // image side: N x C x H x W
  long o, kh, kw;     // kernel: O x C x KH x KW
  long stride, pad;
  long oh, ow;        // conv-output side: N x O x OH x OW
  long ckk() const { return c * kh * kw; }
  long opix() const { return oh * ow; }
  long ipix() const { return h * w; }
};

// Grow-only scratch buffers: conv workspaces are reused across calls instead
// of bouncing multi-megabyte allocations off mmap on every step.
Eigen::Map<RowMat> workspace(int which, long rows, long cols) {
  thread_local std::vector<float> bufs[3];
  auto& buf = bufs[which];
  std::size_t need = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (buf.size() < need) buf.resize(need);
  return {buf.data(), rows, cols};
}

// In-bounds output range [lo, hi) for one kernel tap: lo/hi are the ow (or
// oh) values whose source index ow*stride - pad + k stays inside [0, w).
inline void tap_range(long k, long w, long ow, long stride, long pad, long& lo,
                      long& hi) {
  long off = k - pad;  // source index at ow = 0
  lo = off < 0 ? (-off + stride - 1) / stride : 0;
  hi = (w - 1 - off) / stride + 1;
  if (hi > ow) hi = ow;
  if (lo > hi) lo = hi;
}

// Columns of `col` are conv-output positions of samples [n0, n0+cnt);
// rows enumerate (c, kh, kw). Interior spans are branch-free; stride-1 taps
// degrade to flat copies.
void im2col(const ConvGeom& g, const float* x, long n0, long cnt,
            Eigen::Map<RowMat>& col) {
  for (long c = 0; c < g.c; ++c) {
    for (long kh = 0; kh < g.kh; ++kh) {
      for (long kw = 0; kw < g.kw; ++kw) {
        long row = (c * g.kh + kh) * g.kw + kw;
        float* dst = col.data() + row * col.cols();
        long wlo, whi;
        tap_range(kw, g.w, g.ow, g.stride, g.pad, wlo, whi);
        for (long i = 0; i < cnt; ++i) {
          const float* img = x + ((n0 + i) * g.c + c) * g.ipix();
          for (long oh = 0; oh < g.oh; ++oh, dst += g.ow) {
            long ih = oh * g.stride - g.pad + kh;
            if (ih < 0 || ih >= g.h) {
              std::fill(dst, dst + g.ow, 0.0f);
              continue;
            }
            const float* src = img + ih * g.w - g.pad + kw;
            std::fill(dst, dst + wlo, 0.0f);
            if (g.stride == 1) {
              std::memcpy(dst + wlo, src + wlo,
                          static_cast<std::size_t>(whi - wlo) * sizeof(float));
            } else {
              for (long ow = wlo; ow < whi; ++ow) dst[ow] = src[ow * g.stride];
            }
            std::fill(dst + whi, dst + g.ow, 0.0f);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into images [n0, n0+cnt).
void col2im(const ConvGeom& g, const Eigen::Map<RowMat>& col, long n0, long cnt,
            float* x) {
  for (long c = 0; c < g.c; ++c) {
    for (long kh = 0; kh < g.kh; ++kh) {
      for (long kw = 0; kw < g.kw; ++kw) {
        long row = (c * g.kh + kh) * g.kw + kw;
        const float* src = col.data() + row * col.cols();
        long wlo, whi;
        tap_range(kw, g.w, g.ow, g.stride, g.pad, wlo, whi);
        for (long i = 0; i < cnt; ++i) {
          float* img = x + ((n0 + i) * g.c + c) * g.ipix();
          for (long oh = 0; oh < g.oh; ++oh, src += g.ow) {
            long ih = oh * g.stride - g.pad + kh;
            if (ih < 0 || ih >= g.h) continue;
            float* dst = img + ih * g.w - g.pad + kw;
            if (g.stride == 1) {
              for (long ow = wlo; ow < whi; ++ow) dst[ow] += src[ow];
            } else {
              for (long ow = wlo; ow < whi; ++ow) dst[ow * g.stride] += src[ow];
            }
          }
        }
      }
    }
  }
}

// Caps the im2col chunk so it stays cache-resident for its GEMM; chunk
// boundaries depend only on shapes, so accumulation order is reproducible.
long chunk_samples(const ConvGeom& g) {
  const long budget = 128 * 1024;  // floats (~64 MB)
  long per_sample = g.ckk() * g.opix();
  long cnt = per_sample > 0 ? budget / per_sample : g.n;
  if (cnt < 1) cnt = 1;
  return cnt < g.n ? cnt : g.n;
}

// out[n] (O x OH x OW) = kernel (O x CKK) * im2col(x[n])
void conv_forward(const ConvGeom& g, const float* x, const float* k, float* out) {
  ConstRowMap kmat(k, g.o, g.ckk());
  long step = chunk_samples(g);
  for (long n0 = 0; n0 < g.n; n0 += step) {
    long cnt = std::min(step, g.n - n0);
    auto col = workspace(0, g.ckk(), cnt * g.opix());
    im2col(g, x, n0, cnt, col);
    auto prod = workspace(1, g.o, cnt * g.opix());
    prod.noalias() = kmat * col;
    for (long i = 0; i < cnt; ++i)
      RowMap(out + (n0 + i) * g.o * g.opix(), g.o, g.opix()) =
          prod.middleCols(i * g.opix(), g.opix());
  }
}

// gx[n] += col2im(kernel^T * gout[n]); gx must be zero-initialized.
void conv_backward_data(const ConvGeom& g, const float* gout, const float* k,
                        float* gx) {
  ConstRowMap kmat(k, g.o, g.ckk());
  long step = chunk_samples(g);
  for (long n0 = 0; n0 < g.n; n0 += step) {
    long cnt = std::min(step, g.n - n0);
    auto gmat = workspace(1, g.o, cnt * g.opix());
    for (long i = 0; i < cnt; ++i)
      gmat.middleCols(i * g.opix(), g.opix()) =
          ConstRowMap(gout + (n0 + i) * g.o * g.opix(), g.o, g.opix());
    auto gcol = workspace(0, g.ckk(), cnt * g.opix());
    gcol.noalias() = kmat.transpose() * gmat;
    col2im(g, gcol, n0, cnt, gx);
  }
}

// gk (O x CKK) += sum_n gout[n] * im2col(x[n])^T; gk must be zero-initialized.
void conv_backward_kernel(const ConvGeom& g, const float* x, const float* gout,
                          float* gk) {
  RowMap gkmat(gk, g.o, g.ckk());
  long step = chunk_samples(g);
  for (long n0 = 0; n0 < g.n; n0 += step) {
    long cnt = std::min(step, g.n - n0);
    auto col = workspace(0, g.ckk(), cnt * g.opix());
    im2col(g, x, n0, cnt, col);
    auto gmat = workspace(1, g.o, cnt * g.opix());
    for (long i = 0; i < cnt; ++i)
      gmat.middleCols(i * g.opix(), g.opix()) =
          ConstRowMap(gout + (n0 + i) * g.o * g.opix(), g.o, g.opix());
    gkmat.noalias() += gmat * col.transpose();
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride,
              int padding) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ConfigError("conv2d: expected rank-4 input and kernel, got input " +
                      shape_str(input.shape()) + ", kernel " +
                      shape_str(kernel.shape()));
  if (stride < 1) throw ConfigError("conv2d: stride must be positive");
  if (padding < 0) throw ConfigError("conv2d: padding must be non-negative");
  if (input.dim(1) != kernel.dim(1))
    throw ConfigError("conv2d: input channels " + std::to_string(input.dim(1)) +
                      " != kernel input channels " +
                      std::to_string(kernel.dim(1)) + " (input " +
                      shape_str(input.shape()) + ", kernel " +
                      shape_str(kernel.shape()) + ")");
  ConvGeom g;
  g.n = input.dim(0); g.c = input.dim(1); g.h = input.dim(2); g.w = input.dim(3);
  g.o = kernel.dim(0); g.kh = kernel.dim(2); g.kw = kernel.dim(3);
  g.stride = stride; g.pad = padding;
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw)
    throw ConfigError("conv2d: padded input " + shape_str(input.shape()) +
                      " smaller than kernel " + shape_str(kernel.shape()));
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

  // conv_forward overwrites every output element; no zero-init needed.
  Tensor out = Tensor::from_array(
      {static_cast<int>(g.n), static_cast<int>(g.o), static_cast<int>(g.oh),
       static_cast<int>(g.ow)},
      Eigen::ArrayXf(g.n * g.o * g.opix()));
  conv_forward(g, input.values().data(), kernel.values().data(),
               out.mutable_values().data());
  auto xn = input.node(), kn = kernel.node(), on = out.node();
  maybe_record({xn, kn}, on, [xn, kn, on, g] {
    if (!on->grad) return;
    if (xn->participates()) {
      Eigen::ArrayXf gx = Eigen::ArrayXf::Zero(xn->values.size());
      conv_backward_data(g, on->grad->data(), kn->values.data(), gx.data());
      xn->accumulate(gx);
    }
    if (kn->participates()) {
      Eigen::ArrayXf gk = Eigen::ArrayXf::Zero(kn->values.size());
      conv_backward_kernel(g, xn->values.data(), on->grad->data(), gk.data());
      kn->accumulate(gk);
    }
  });
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride,
                        int padding) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ConfigError(
        "conv_transpose2d: expected rank-4 input and kernel, got input " +
        shape_str(input.shape()) + ", kernel " + shape_str(kernel.shape()));
  if (stride < 1) throw ConfigError("conv_transpose2d: stride must be positive");
  if (padding < 0)
    throw ConfigError("conv_transpose2d: padding must be non-negative");
  if (input.dim(1) != kernel.dim(0))
    throw ConfigError("conv_transpose2d: input channels " +
                      std::to_string(input.dim(1)) +
                      " != kernel input channels " +
                      std::to_string(kernel.dim(0)) + " (input " +
                      shape_str(input.shape()) + ", kernel " +
                      shape_str(kernel.shape()) + ")");
  // The conv-output side of the geometry is this op's input.
  ConvGeom g;
  g.n = input.dim(0);
  g.o = input.dim(1);                       // = kernel I
  g.oh = input.dim(2); g.ow = input.dim(3);
  g.c = kernel.dim(1);                      // transposed-conv output channels
  g.kh = kernel.dim(2); g.kw = kernel.dim(3);
  g.stride = stride; g.pad = padding;
  g.h = (g.oh - 1) * g.stride - 2 * g.pad + g.kh;
  g.w = (g.ow - 1) * g.stride - 2 * g.pad + g.kw;
  if (g.h < 1 || g.w < 1)
    throw ConfigError("conv_transpose2d: degenerate output " +
                      std::to_string(g.h) + "x" + std::to_string(g.w) +
                      " for input " + shape_str(input.shape()) + ", kernel " +
                      shape_str(kernel.shape()));

  Tensor out = Tensor::zeros({static_cast<int>(g.n), static_cast<int>(g.c),
                              static_cast<int>(g.h), static_cast<int>(g.w)});
  conv_backward_data(g, input.values().data(), kernel.values().data(),
                     out.mutable_values().data());
  auto xn = input.node(), kn = kernel.node(), on = out.node();
  maybe_record({xn, kn}, on, [xn, kn, on, g] {
    if (!on->grad) return;
    if (xn->participates()) {
      Eigen::ArrayXf gx = Eigen::ArrayXf::Zero(xn->values.size());
      conv_forward(g, on->grad->data(), kn->values.data(), gx.data());
      xn->accumulate(gx);
    }
    if (kn->participates()) {
      Eigen::ArrayXf gk = Eigen::ArrayXf::Zero(kn->values.size());
      conv_backward_kernel(g, on->grad->data(), xn->values.data(), gk.data());
      kn->accumulate(gk);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw ConfigError("cross_entropy: logits must be N x C, got " +
                      shape_str(logits.shape()));
  long n = logits.dim(0), c = logits.dim(1);
  if (static_cast<long>(labels.size()) != n)
    throw InputError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  for (long i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= c)
      throw InputError("cross_entropy: label " + std::to_string(labels[i]) +
                       " at row " + std::to_string(i) + " outside [0, " +
                       std::to_string(c) + ")");
  if (n == 0) throw InputError("cross_entropy: empty batch");

  double acc = 0.0;
  for (long i = 0; i < n; ++i) {
    auto row = logits.values().segment(i * c, c);
    float m = row.maxCoeff();
    double lse = static_cast<double>(m) +
                 std::log((row - m).exp().cast<double>().sum());
    acc += lse - static_cast<double>(row[labels[i]]);
  }
  Tensor out = Tensor::from_array(
      {1}, Eigen::ArrayXf::Constant(1, static_cast<float>(acc / n)));
  auto ln = logits.node(), on = out.node();
  maybe_record({ln}, on, [ln, on, labels, n, c] {
    if (!on->grad || !ln->participates()) return;
    Eigen::ArrayXf gx(n * c);
    softmax_rows(ln->values, n, c, gx);
    for (long i = 0; i < n; ++i) gx[i * c + labels[i]] -= 1.0f;
    ln->accumulate(gx * ((*on->grad)[0] / static_cast<float>(n)));
  });
  return out;
}

Tensor weighted_mse(const Tensor& pred, const Tensor& target,
                    const Tensor& weight) {
  require_same_shape(pred, target, "weighted_mse", true);
  require_same_shape(pred, weight, "weighted_mse", true);
  if (pred.numel() == 0) throw InputError("weighted_mse: empty tensors");
  if (weight.values().minCoeff() < 0.0f)
    throw ConfigError("weighted_mse: weight must be non-negative elementwise");

  long n = pred.numel();
  double acc = (weight.values().cast<double>() *
                (pred.values() - target.values()).cast<double>().square())
                   .sum();
  Tensor out = Tensor::from_array(
      {1}, Eigen::ArrayXf::Constant(1, static_cast<float>(acc / n)));
  auto pn = pred.node(), tn = target.node(), wn = weight.node(), on = out.node();
  maybe_record({pn, tn, wn}, on, [pn, tn, wn, on, n] {
    if (!on->grad) return;
    float s = (*on->grad)[0] / static_cast<float>(n);
    Eigen::ArrayXf diff = pn->values - tn->values;
    if (pn->participates()) pn->accumulate(2.0f * s * wn->values * diff);
    if (tn->participates()) tn->accumulate(-2.0f * s * wn->values * diff);
    if (wn->participates()) wn->accumulate(s * diff.square());
  });
  return out;
}

}  // namespace hood
