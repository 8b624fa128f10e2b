#include "csal/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "csal/parallel.hpp"

namespace csal {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w;
  std::size_t out_c, k_h, k_w;
  std::size_t stride, pad_h, pad_w;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_c * k_h * k_w; }
  std::size_t pixels() const { return out_h * out_w; }
  bool pointwise() const { return k_h == 1 && k_w == 1 && stride == 1 && pad_h == 0 && pad_w == 0; }
};

// Valid output columns [lo, hi) for a kernel column offset `shift` = kw - pad_w.
inline std::pair<std::size_t, std::size_t> valid_columns(long shift, std::size_t in_w, std::size_t out_w) {
  const long lo = std::max<long>(0, -shift);
  const long hi = std::min<long>(static_cast<long>(out_w), static_cast<long>(in_w) - shift);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t P = g.pixels();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    const T* plane = x + c * g.in_h * g.in_w;
    for (std::size_t kh = 0; kh < g.k_h; ++kh) {
      for (std::size_t kw = 0; kw < g.k_w; ++kw) {
        T* row = col + ((c * g.k_h + kh) * g.k_w + kw) * P;
        const long shift = static_cast<long>(kw) - static_cast<long>(g.pad_w);
        const auto [lo, hi] = g.stride == 1 ? valid_columns(shift, g.in_w, g.out_w) : std::pair<std::size_t, std::size_t>{0, 0};
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + kh) - static_cast<long>(g.pad_h);
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * g.in_w;
          if (g.stride == 1) {
            std::fill(dst, dst + lo, T{0});
            std::copy(src + (static_cast<long>(lo) + shift), src + (static_cast<long>(hi) + shift), dst + lo);
            std::fill(dst + hi, dst + g.out_w, T{0});
            continue;
          }
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kw) - static_cast<long>(g.pad_w);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.in_w)) ? T{0}
                                                                    : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t P = g.pixels();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    T* plane = dx + c * g.in_h * g.in_w;
    for (std::size_t kh = 0; kh < g.k_h; ++kh) {
      for (std::size_t kw = 0; kw < g.k_w; ++kw) {
        const T* row = col + ((c * g.k_h + kh) * g.k_w + kw) * P;
        const long shift = static_cast<long>(kw) - static_cast<long>(g.pad_w);
        const auto [lo, hi] = g.stride == 1 ? valid_columns(shift, g.in_w, g.out_w) : std::pair<std::size_t, std::size_t>{0, 0};
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + kh) - static_cast<long>(g.pad_h);
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * g.in_w;
          const T* src = row + oh * g.out_w;
          if (g.stride == 1) {
            T* d = dst + (static_cast<long>(lo) + shift);
            for (std::size_t ow = lo; ow < hi; ++ow) d[ow - lo] += src[ow];
            continue;
          }
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kw) - static_cast<long>(g.pad_w);
            if (iw >= 0 && iw < static_cast<long>(g.in_w)) dst[static_cast<std::size_t>(iw)] += src[ow];
          }
        }
      }
    }
  }
}

// Direct stride-1 convolution over a zero-padded copy of the input. Used for
// single-channel heads, where im2col + GEMM degenerates to a matrix-vector product.
constexpr std::size_t kDirectBlock = 4;

template <typename T>
void pad_planes(const T* x, const ConvGeometry& g, std::vector<T>& xp) {
  const std::size_t hp = g.in_h + 2 * g.pad_h, wp = g.in_w + 2 * g.pad_w;
  xp.assign(g.in_c * hp * wp, T{0});
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t r = 0; r < g.in_h; ++r) {
      const T* src = x + (c * g.in_h + r) * g.in_w;
      std::copy(src, src + g.in_w, xp.data() + (c * hp + r + g.pad_h) * wp + g.pad_w);
    }
  }
}

template <typename T>
void direct_forward(const T* xp, const T* w, const T* bias, const ConvGeometry& g, T* y) {
  const std::size_t hp = g.in_h + 2 * g.pad_h, wp = g.in_w + 2 * g.pad_w;
  const std::size_t W = g.out_w, taps = g.k_h * g.k_w;
  std::vector<T> acc(kDirectBlock * W);
  for (std::size_t o0 = 0; o0 < g.out_c; o0 += kDirectBlock) {
    const std::size_t ob = std::min(kDirectBlock, g.out_c - o0);
    for (std::size_t r = 0; r < g.out_h; ++r) {
      for (std::size_t b = 0; b < ob; ++b) std::fill_n(acc.data() + b * W, W, bias[o0 + b]);
      for (std::size_t c = 0; c < g.in_c; ++c) {
        for (std::size_t kh = 0; kh < g.k_h; ++kh) {
          const T* xr = xp + (c * hp + r + kh) * wp;
          for (std::size_t kw = 0; kw < g.k_w; ++kw) {
            const T* __restrict src = xr + kw;
            for (std::size_t b = 0; b < ob; ++b) {
              const T wv = w[((o0 + b) * g.in_c + c) * taps + kh * g.k_w + kw];
              T* __restrict a = acc.data() + b * W;
              for (std::size_t j = 0; j < W; ++j) a[j] += wv * src[j];
            }
          }
        }
      }
      for (std::size_t b = 0; b < ob; ++b) std::copy_n(acc.data() + b * W, W, y + ((o0 + b) * g.out_h + r) * W);
    }
  }
}

template <typename T>
void direct_backward_input(const T* dy, const T* w, const ConvGeometry& g, T* dx) {
  const std::size_t wp = g.in_w + 2 * g.pad_w;
  const std::size_t W = g.out_w, taps = g.k_h * g.k_w;
  std::vector<T> row(kDirectBlock * wp);
  for (std::size_t c0 = 0; c0 < g.in_c; c0 += kDirectBlock) {
    const std::size_t cb = std::min(kDirectBlock, g.in_c - c0);
    for (std::size_t ih = 0; ih < g.in_h; ++ih) {
      std::fill(row.begin(), row.end(), T{0});
      const std::size_t R = ih + g.pad_h;  // padded row
      for (std::size_t kh = 0; kh < g.k_h; ++kh) {
        if (R < kh || R - kh >= g.out_h) continue;
        const std::size_t r = R - kh;
        for (std::size_t o = 0; o < g.out_c; ++o) {
          const T* __restrict d = dy + (o * g.out_h + r) * W;
          for (std::size_t b = 0; b < cb; ++b) {
            const T* wk = w + ((o * g.in_c + c0 + b) * taps) + kh * g.k_w;
            for (std::size_t kw = 0; kw < g.k_w; ++kw) {
              const T wv = wk[kw];
              T* __restrict a = row.data() + b * wp + kw;
              for (std::size_t j = 0; j < W; ++j) a[j] += wv * d[j];
            }
          }
        }
      }
      for (std::size_t b = 0; b < cb; ++b) {
        T* dst = dx + ((c0 + b) * g.in_h + ih) * g.in_w;
        const T* src = row.data() + b * wp + g.pad_w;
        for (std::size_t j = 0; j < g.in_w; ++j) dst[j] += src[j];
      }
    }
  }
}

// dW[o][c][kh][kw] += sum_{r,j} dy[o][r][j] * xp[c][r+kh][kw+j]; elementwise
// partial sums over rows first, one horizontal sum per weight.
template <typename T>
void direct_backward_weight(const T* dy, const T* xp, const ConvGeometry& g, T* dw, T* db) {
  const std::size_t hp = g.in_h + 2 * g.pad_h, wp = g.in_w + 2 * g.pad_w;
  const std::size_t W = g.out_w, taps = g.k_h * g.k_w;
  std::vector<T> acc(taps * W);
  for (std::size_t o = 0; o < g.out_c; ++o) {
    T bsum{0};
    for (std::size_t i = 0; i < g.out_h * W; ++i) bsum += dy[o * g.out_h * W + i];
    db[o] += bsum;
    for (std::size_t c = 0; c < g.in_c; ++c) {
      std::fill(acc.begin(), acc.end(), T{0});
      for (std::size_t r = 0; r < g.out_h; ++r) {
        const T* __restrict d = dy + (o * g.out_h + r) * W;
        for (std::size_t kh = 0; kh < g.k_h; ++kh) {
          const T* xr = xp + (c * hp + r + kh) * wp;
          for (std::size_t kw = 0; kw < g.k_w; ++kw) {
            T* __restrict a = acc.data() + (kh * g.k_w + kw) * W;
            const T* __restrict src = xr + kw;
            for (std::size_t j = 0; j < W; ++j) a[j] += d[j] * src[j];
          }
        }
      }
      T* out = dw + (o * g.in_c + c) * taps;
      for (std::size_t t = 0; t < taps; ++t) {
        T s{0};
        for (std::size_t j = 0; j < W; ++j) s += acc[t * W + j];
        out[t] += s;
      }
    }
  }
}

bool use_direct(const ConvGeometry& g) {
  if (g.stride != 1 || g.pointwise()) return false;
  return g.out_c <= 2 && g.out_w >= 16;
}

template <typename T>
std::vector<T>& scratch() {
  thread_local std::vector<T> buffer;
  return buffer;
}

void require_same_grid(const Shape& a, const Shape& b, const char* what) {
  if (a.size() != 4 || b.size() != 4 || a[0] != b[0] || a[2] != b[2] || a[3] != b[3]) {
    throw ShapeError(std::string(what) + ": spatial/batch mismatch between " + to_string(a) +
                     " and " + to_string(b));
  }
}

template <typename T>
TensorPtr<T> make_output(Shape shape, std::initializer_list<const Tensor<T>*> inputs) {
  auto out = make_tensor<T>(std::move(shape));
  out->set_requires_grad(any_requires_grad<T>(inputs));
  return out;
}

void check_pool_target(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w,
                       const char* what) {
  if (out_h == 0 || out_w == 0) throw ShapeError(std::string(what) + ": output size must be positive");
  if (out_h > in_h || out_w > in_w) {
    throw ShapeError(std::string(what) + ": output " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " exceeds input " + std::to_string(in_h) + "x" +
                     std::to_string(in_w));
  }
}

}  // namespace

std::pair<std::size_t, std::size_t> adaptive_window(std::size_t i, std::size_t in, std::size_t out) {
  const std::size_t begin = (i * in) / out;
  const std::size_t end = ((i + 1) * in + out - 1) / out;
  return {begin, end};
}

std::vector<LinearTap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(std::floor(src));
    if (lo >= in - 1) {
      taps[i] = {in - 1, in - 1, 0.0};
      continue;
    }
    taps[i] = {lo, lo + 1, src - static_cast<double>(lo)};
  }
  return taps;
}

template <typename T>
LayerParams<T> LayerParams<T>::zeros(std::size_t out_channels, std::size_t in_channels,
                                     std::size_t kernel_h, std::size_t kernel_w) {
  if (kernel_h % 2 == 0 || kernel_w % 2 == 0) {
    throw ShapeError("layer kernel dims must be odd, got " + std::to_string(kernel_h) + "x" +
                     std::to_string(kernel_w));
  }
  LayerParams p;
  p.weight = make_tensor<T>({out_channels, in_channels, kernel_h, kernel_w});
  p.bias = make_tensor<T>({out_channels});
  p.weight->set_requires_grad(true);
  p.bias->set_requires_grad(true);
  return p;
}

template <typename T>
void init_he_uniform(LayerParams<T>& p, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(p.in_channels() * p.kernel_h() * p.kernel_w());
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& w : p.weight->data()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
    w = static_cast<T>((2.0 * u - 1.0) * bound);
  }
  std::fill(p.bias->data().begin(), p.bias->data().end(), T{0});
}

template <typename T>
TensorPtr<T> conv2d(Graph<T>& graph, const TensorPtr<T>& x, const LayerParams<T>& p,
                    ConvOptions opts) {
  require_nchw(*x, "conv2d");
  const auto& ws = p.weight->shape();
  if (ws.size() != 4 || p.bias->size() != ws[0]) {
    throw ShapeError("conv2d: malformed parameters, weight " + to_string(ws) + " bias " +
                     to_string(p.bias->shape()));
  }
  if (ws[1] != x->dim(1)) {
    throw ShapeError("conv2d: input " + to_string(x->shape()) + " has " +
                     std::to_string(x->dim(1)) + " channels but weight " + to_string(ws) +
                     " expects " + std::to_string(ws[1]));
  }
  if (opts.stride == 0) throw ShapeError("conv2d: stride must be positive");

  ConvGeometry geo{};
  geo.batch = x->dim(0);
  geo.in_c = x->dim(1);
  geo.in_h = x->dim(2);
  geo.in_w = x->dim(3);
  geo.out_c = ws[0];
  geo.k_h = ws[2];
  geo.k_w = ws[3];
  geo.stride = opts.stride;
  if (opts.padding) {
    geo.pad_h = geo.pad_w = *opts.padding;
  } else {
    if (geo.k_h % 2 == 0 || geo.k_w % 2 == 0) {
      throw ShapeError("conv2d: same padding needs odd kernel, got " + to_string(ws));
    }
    geo.pad_h = (geo.k_h - 1) / 2;
    geo.pad_w = (geo.k_w - 1) / 2;
  }
  if (geo.in_h + 2 * geo.pad_h < geo.k_h || geo.in_w + 2 * geo.pad_w < geo.k_w) {
    throw ShapeError("conv2d: kernel " + to_string(ws) + " larger than padded input " +
                     to_string(x->shape()));
  }
  geo.out_h = (geo.in_h + 2 * geo.pad_h - geo.k_h) / geo.stride + 1;
  geo.out_w = (geo.in_w + 2 * geo.pad_w - geo.k_w) / geo.stride + 1;

  auto out = make_output<T>({geo.batch, geo.out_c, geo.out_h, geo.out_w},
                            {x.get(), p.weight.get(), p.bias.get()});
  const std::size_t K = geo.patch();
  const std::size_t P = geo.pixels();
  const std::size_t in_stride = geo.in_c * geo.in_h * geo.in_w;
  const std::size_t out_stride = geo.out_c * P;

  const bool direct = use_direct(geo);
  parallel_for(geo.batch, [&](std::size_t n) {
    const T* xn = x->data().data() + n * in_stride;
    if (direct) {
      auto& xp = scratch<T>();
      pad_planes(xn, geo, xp);
      direct_forward(xp.data(), p.weight->data().data(), p.bias->data().data(), geo,
                     out->data().data() + n * out_stride);
      return;
    }
    const T* colp = xn;
    if (!geo.pointwise()) {
      auto& buf = scratch<T>();
      buf.resize(K * P);
      im2col(xn, geo, buf.data());
      colp = buf.data();
    }
    ConstMatMap<T> wmat(p.weight->data().data(), static_cast<Eigen::Index>(geo.out_c),
                        static_cast<Eigen::Index>(K));
    ConstMatMap<T> col(colp, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    MatMap<T> y(out->data().data() + n * out_stride, static_cast<Eigen::Index>(geo.out_c),
                static_cast<Eigen::Index>(P));
    y.noalias() = wmat * col;
    for (std::size_t o = 0; o < geo.out_c; ++o) {
      y.row(static_cast<Eigen::Index>(o)).array() += (*p.bias)[o];
    }
  });

  graph.record("conv2d", out, [x, p, out, geo, K, P, in_stride, out_stride, direct] {
    const bool want_w = p.weight->requires_grad() || p.bias->requires_grad();
    const bool want_x = x->requires_grad();
    const std::size_t wsize = geo.out_c * K;
    std::vector<T> partial(want_w ? geo.batch * (wsize + geo.out_c) : 0);
    const T* dy_all = out->grad().data();
    T* dx_all = want_x ? x->grad().data() : nullptr;
    const T* w_all = p.weight->data().data();

    parallel_for(geo.batch, [&](std::size_t n) {
      const T* xn = x->data().data() + n * in_stride;
      ConstMatMap<T> dy(dy_all + n * out_stride, static_cast<Eigen::Index>(geo.out_c),
                        static_cast<Eigen::Index>(P));
      if (direct) {
        if (want_w) {
          auto& xp = scratch<T>();
          pad_planes(xn, geo, xp);
          T* slot = partial.data() + n * (wsize + geo.out_c);
          direct_backward_weight(dy_all + n * out_stride, xp.data(), geo, slot, slot + wsize);
        }
        if (want_x) direct_backward_input(dy_all + n * out_stride, w_all, geo, dx_all + n * in_stride);
        return;
      }
      if (want_w) {
        const T* colp = xn;
        if (!geo.pointwise()) {
          auto& buf = scratch<T>();
          buf.resize(K * P);
          im2col(xn, geo, buf.data());
          colp = buf.data();
        }
        ConstMatMap<T> col(colp, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
        T* slot = partial.data() + n * (wsize + geo.out_c);
        MatMap<T> dw(slot, static_cast<Eigen::Index>(geo.out_c), static_cast<Eigen::Index>(K));
        dw.noalias() = dy * col.transpose();
        // Plain loop: Eigen's vectorized sum peels by address alignment.
        for (std::size_t o = 0; o < geo.out_c; ++o) {
          const T* row = dy_all + n * out_stride + o * P;
          T acc = 0;
          for (std::size_t i = 0; i < P; ++i) acc += row[i];
          slot[wsize + o] = acc;
        }
      }
      if (want_x) {
        ConstMatMap<T> wmat(w_all, static_cast<Eigen::Index>(geo.out_c), static_cast<Eigen::Index>(K));
        T* dxn = dx_all + n * in_stride;
        if (geo.pointwise()) {
          MatMap<T> dx(dxn, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
          dx.noalias() += wmat.transpose() * dy;
        } else {
          thread_local std::vector<T> dcol_buf;
          dcol_buf.resize(K * P);
          MatMap<T> dcol(dcol_buf.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
          dcol.noalias() = wmat.transpose() * dy;
          col2im_add(dcol_buf.data(), geo, dxn);
        }
      }
    });

    if (want_w) {
      auto dw = p.weight->grad();
      auto db = p.bias->grad();
      for (std::size_t n = 0; n < geo.batch; ++n) {
        const T* slot = partial.data() + n * (wsize + geo.out_c);
        for (std::size_t i = 0; i < wsize; ++i) dw[i] += slot[i];
        for (std::size_t o = 0; o < geo.out_c; ++o) db[o] += slot[wsize + o];
      }
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> relu(Graph<T>& graph, const TensorPtr<T>& x) {
  auto out = make_output<T>(x->shape(), {x.get()});
  auto xs = x->data();
  auto ys = out->data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] > T{0} ? xs[i] : T{0};
  graph.record("relu", out, [x, out] {
    auto dy = out->grad();
    auto dx = x->grad();
    auto xs = x->data();
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (xs[i] > T{0}) dx[i] += dy[i];
    }
  });
  return out;
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
TensorPtr<T> sigmoid(Graph<T>& graph, const TensorPtr<T>& x) {
  auto out = make_output<T>(x->shape(), {x.get()});
  auto xs = x->data();
  auto ys = out->data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = stable_sigmoid(xs[i]);
  graph.record("sigmoid", out, [x, out] {
    auto dy = out->grad();
    auto dx = x->grad();
    auto ys = out->data();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * ys[i] * (T{1} - ys[i]);
  });
  return out;
}

template <typename T>
TensorPtr<T> maxpool2d(Graph<T>& graph, const TensorPtr<T>& x, std::size_t out_h, std::size_t out_w) {
  require_nchw(*x, "maxpool2d");
  const std::size_t N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
  check_pool_target(H, W, out_h, out_w, "maxpool2d");
  auto out = make_output<T>({N, C, out_h, out_w}, {x.get()});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out->size());
  auto xs = x->data();
  auto ys = out->data();
  std::size_t k = 0;
  for (std::size_t plane = 0; plane < N * C; ++plane) {
    const std::size_t base = plane * H * W;
    for (std::size_t i = 0; i < out_h; ++i) {
      const auto [r0, r1] = adaptive_window(i, H, out_h);
      for (std::size_t j = 0; j < out_w; ++j, ++k) {
        const auto [c0, c1] = adaptive_window(j, W, out_w);
        std::size_t best = base + r0 * W + c0;
        for (std::size_t r = r0; r < r1; ++r) {
          for (std::size_t c = c0; c < c1; ++c) {
            const std::size_t idx = base + r * W + c;
            if (xs[idx] > xs[best]) best = idx;
          }
        }
        ys[k] = xs[best];
        (*argmax)[k] = best;
      }
    }
  }
  graph.record("maxpool2d", out, [x, out, argmax] {
    auto dy = out->grad();
    auto dx = x->grad();
    for (std::size_t k = 0; k < dy.size(); ++k) dx[(*argmax)[k]] += dy[k];
  });
  return out;
}

template <typename T>
TensorPtr<T> avgpool2d(Graph<T>& graph, const TensorPtr<T>& x, std::size_t out_h, std::size_t out_w) {
  require_nchw(*x, "avgpool2d");
  const std::size_t N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
  check_pool_target(H, W, out_h, out_w, "avgpool2d");
  auto out = make_output<T>({N, C, out_h, out_w}, {x.get()});
  auto xs = x->data();
  auto ys = out->data();
  std::size_t k = 0;
  for (std::size_t plane = 0; plane < N * C; ++plane) {
    const std::size_t base = plane * H * W;
    for (std::size_t i = 0; i < out_h; ++i) {
      const auto [r0, r1] = adaptive_window(i, H, out_h);
      for (std::size_t j = 0; j < out_w; ++j, ++k) {
        const auto [c0, c1] = adaptive_window(j, W, out_w);
        T acc{0};
        for (std::size_t r = r0; r < r1; ++r) {
          for (std::size_t c = c0; c < c1; ++c) acc += xs[base + r * W + c];
        }
        ys[k] = acc / static_cast<T>((r1 - r0) * (c1 - c0));
      }
    }
  }
  graph.record("avgpool2d", out, [x, out, N, C, H, W, out_h, out_w] {
    auto dy = out->grad();
    auto dx = x->grad();
    std::size_t k = 0;
    for (std::size_t plane = 0; plane < N * C; ++plane) {
      const std::size_t base = plane * H * W;
      for (std::size_t i = 0; i < out_h; ++i) {
        const auto [r0, r1] = adaptive_window(i, H, out_h);
        for (std::size_t j = 0; j < out_w; ++j, ++k) {
          const auto [c0, c1] = adaptive_window(j, W, out_w);
          const T share = dy[k] / static_cast<T>((r1 - r0) * (c1 - c0));
          for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t c = c0; c < c1; ++c) dx[base + r * W + c] += share;
          }
        }
      }
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> upsample_bilinear(Graph<T>& graph, const TensorPtr<T>& x, std::size_t out_h,
                               std::size_t out_w) {
  require_nchw(*x, "upsample_bilinear");
  if (out_h == 0 || out_w == 0) throw ShapeError("upsample_bilinear: output size must be positive");
  const std::size_t N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
  auto out = make_output<T>({N, C, out_h, out_w}, {x.get()});
  auto rows = std::make_shared<std::vector<LinearTap>>(bilinear_taps(H, out_h));
  auto cols = std::make_shared<std::vector<LinearTap>>(bilinear_taps(W, out_w));
  auto xs = x->data();
  auto ys = out->data();
  std::size_t k = 0;
  for (std::size_t plane = 0; plane < N * C; ++plane) {
    const T* src = xs.data() + plane * H * W;
    for (const auto& r : *rows) {
      const T fy = static_cast<T>(r.frac);
      const T* lo = src + r.lo * W;
      const T* hi = src + r.hi * W;
      for (const auto& c : *cols) {
        const T fx = static_cast<T>(c.frac);
        const T top = (T{1} - fx) * lo[c.lo] + fx * lo[c.hi];
        const T bottom = (T{1} - fx) * hi[c.lo] + fx * hi[c.hi];
        ys[k++] = (T{1} - fy) * top + fy * bottom;
      }
    }
  }
  graph.record("upsample_bilinear", out, [x, out, rows, cols, N, C, H, W] {
    auto dy = out->grad();
    auto dx = x->grad();
    std::size_t k = 0;
    for (std::size_t plane = 0; plane < N * C; ++plane) {
      T* dst = dx.data() + plane * H * W;
      for (const auto& r : *rows) {
        const T fy = static_cast<T>(r.frac);
        T* lo = dst + r.lo * W;
        T* hi = dst + r.hi * W;
        for (const auto& c : *cols) {
          const T fx = static_cast<T>(c.frac);
          const T g = dy[k++];
          lo[c.lo] += (T{1} - fy) * (T{1} - fx) * g;
          lo[c.hi] += (T{1} - fy) * fx * g;
          hi[c.lo] += fy * (T{1} - fx) * g;
          hi[c.hi] += fy * fx * g;
        }
      }
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> concat_channels(Graph<T>& graph, const std::vector<TensorPtr<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  for (const auto& x : xs) {
    require_nchw(*x, "concat_channels");
    require_same_grid(xs.front()->shape(), x->shape(), "concat_channels");
  }
  const std::size_t N = xs[0]->dim(0), H = xs[0]->dim(2), W = xs[0]->dim(3);
  std::size_t C = 0;
  bool grad = false;
  for (const auto& x : xs) {
    C += x->dim(1);
    grad = grad || x->requires_grad();
  }
  auto out = make_tensor<T>({N, C, H, W});
  out->set_requires_grad(grad);
  const std::size_t plane = H * W;
  auto ys = out->data();
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t offset = 0;
    for (const auto& x : xs) {
      const std::size_t cx = x->dim(1);
      const T* src = x->data().data() + n * cx * plane;
      std::copy(src, src + cx * plane, ys.data() + (n * C + offset) * plane);
      offset += cx;
    }
  }
  graph.record("concat_channels", out, [xs, out, N, C, plane] {
    auto dy = out->grad();
    for (std::size_t n = 0; n < N; ++n) {
      std::size_t offset = 0;
      for (const auto& x : xs) {
        const std::size_t cx = x->dim(1);
        if (x->requires_grad()) {
          auto dx = x->grad();
          const T* src = dy.data() + (n * C + offset) * plane;
          T* dst = dx.data() + n * cx * plane;
          for (std::size_t i = 0; i < cx * plane; ++i) dst[i] += src[i];
        }
        offset += cx;
      }
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> add(Graph<T>& graph, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape() != b->shape()) {
    throw ShapeError("add: shape mismatch " + to_string(a->shape()) + " vs " + to_string(b->shape()));
  }
  auto out = make_output<T>(a->shape(), {a.get(), b.get()});
  auto as = a->data();
  auto bs = b->data();
  auto ys = out->data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = as[i] + bs[i];
  graph.record("add", out, [a, b, out] {
    auto dy = out->grad();
    for (const auto& t : {a, b}) {
      if (!t->requires_grad()) continue;
      auto dt = t->grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dt[i] += dy[i];
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> mul_broadcast_channel(Graph<T>& graph, const TensorPtr<T>& x, const TensorPtr<T>& map) {
  require_nchw(*x, "mul_broadcast_channel");
  require_nchw(*map, "mul_broadcast_channel");
  require_same_grid(x->shape(), map->shape(), "mul_broadcast_channel");
  if (map->dim(1) != 1) {
    throw ShapeError("mul_broadcast_channel: map must have one channel, got " +
                     to_string(map->shape()));
  }
  const std::size_t N = x->dim(0), C = x->dim(1), plane = x->dim(2) * x->dim(3);
  auto out = make_output<T>(x->shape(), {x.get(), map.get()});
  auto xs = x->data();
  auto ms = map->data();
  auto ys = out->data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) ys[base + i] = xs[base + i] * ms[n * plane + i];
    }
  }
  graph.record("mul_broadcast_channel", out, [x, map, out, N, C, plane] {
    auto dy = out->grad();
    auto xs = x->data();
    auto ms = map->data();
    if (x->requires_grad()) {
      auto dx = x->grad();
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t base = (n * C + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) dx[base + i] += dy[base + i] * ms[n * plane + i];
        }
      }
    }
    if (map->requires_grad()) {
      auto dm = map->grad();
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t base = (n * C + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) dm[n * plane + i] += dy[base + i] * xs[base + i];
        }
      }
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> sum(Graph<T>& graph, const TensorPtr<T>& x) {
  auto out = make_output<T>({1}, {x.get()});
  T acc{0};
  for (T v : x->data()) acc += v;
  (*out)[0] = acc;
  graph.record("sum", out, [x, out] {
    const T g = out->grad()[0];
    for (auto& d : x->grad()) d += g;
  });
  return out;
}

template <typename T>
TensorPtr<T> weighted_sum(Graph<T>& graph, const std::vector<TensorPtr<T>>& terms,
                          const std::vector<T>& weights) {
  if (terms.size() != weights.size()) {
    throw ShapeError("weighted_sum: " + std::to_string(terms.size()) + " terms but " +
                     std::to_string(weights.size()) + " weights");
  }
  auto out = make_tensor<T>({1});
  T acc{0};
  bool grad = false;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (terms[k]->size() != 1) {
      throw ShapeError("weighted_sum: term " + std::to_string(k) + " is not scalar: " +
                       to_string(terms[k]->shape()));
    }
    acc += weights[k] * (*terms[k])[0];
    grad = grad || terms[k]->requires_grad();
  }
  (*out)[0] = acc;
  out->set_requires_grad(grad);
  graph.record("weighted_sum", out, [terms, weights, out] {
    const T g = out->grad()[0];
    for (std::size_t k = 0; k < terms.size(); ++k) {
      if (terms[k]->requires_grad()) terms[k]->grad()[0] += weights[k] * g;
    }
  });
  return out;
}

#define CSAL_INSTANTIATE_OPS(T)                                                                  \
  template struct LayerParams<T>;                                                                \
  template void init_he_uniform(LayerParams<T>&, std::mt19937_64&);                              \
  template TensorPtr<T> conv2d(Graph<T>&, const TensorPtr<T>&, const LayerParams<T>&,            \
                               ConvOptions);                                                     \
  template TensorPtr<T> relu(Graph<T>&, const TensorPtr<T>&);                                    \
  template T stable_sigmoid(T);                                                                  \
  template TensorPtr<T> sigmoid(Graph<T>&, const TensorPtr<T>&);                                 \
  template TensorPtr<T> maxpool2d(Graph<T>&, const TensorPtr<T>&, std::size_t, std::size_t);     \
  template TensorPtr<T> avgpool2d(Graph<T>&, const TensorPtr<T>&, std::size_t, std::size_t);     \
  template TensorPtr<T> upsample_bilinear(Graph<T>&, const TensorPtr<T>&, std::size_t,           \
                                          std::size_t);                                          \
  template TensorPtr<T> concat_channels(Graph<T>&, const std::vector<TensorPtr<T>>&);            \
  template TensorPtr<T> add(Graph<T>&, const TensorPtr<T>&, const TensorPtr<T>&);                \
  template TensorPtr<T> mul_broadcast_channel(Graph<T>&, const TensorPtr<T>&,                    \
                                              const TensorPtr<T>&);                              \
  template TensorPtr<T> sum(Graph<T>&, const TensorPtr<T>&);                                     \
  template TensorPtr<T> weighted_sum(Graph<T>&, const std::vector<TensorPtr<T>>&,                \
                                     const std::vector<T>&);

CSAL_INSTANTIATE_OPS(float)
CSAL_INSTANTIATE_OPS(double)

}  // namespace csal
