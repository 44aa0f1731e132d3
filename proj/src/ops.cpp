#include "spikegrid/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <thread>

namespace spikegrid::ops {

namespace {

void check_dtype(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dtype() != b.dtype()) {
    throw DimensionError(std::string(what) + ": mixed precisions are not allowed");
  }
}

// Wrap stored doubles as a contiguous T buffer; zero-copy when T == double.
template <class T>
struct CastBuf {
  std::vector<T> store;
  const T* ptr = nullptr;
  explicit CastBuf(std::span<const double> src) {
    if constexpr (std::is_same_v<T, double>) {
      ptr = src.data();
    } else {
      store.assign(src.begin(), src.end());
      ptr = store.data();
    }
  }
};

// C[M,N] (+)= op(A) * op(B) with row-major storage.
template <class T>
void gemm(bool acc, bool ta, bool tb, int64_t M, int64_t N, int64_t K, const T* A, const T* B,
          T* C) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> c(C, M, N);
  auto run = [&](const auto& a, const auto& b) {
    if (acc) {
      c.noalias() += a * b;
    } else {
      c.noalias() = a * b;
    }
  };
  if (!ta && !tb) {
    run(CMap(A, M, K), CMap(B, K, N));
  } else if (!ta && tb) {
    run(CMap(A, M, K), CMap(B, N, K).transpose());
  } else if (ta && !tb) {
    run(CMap(A, K, M).transpose(), CMap(B, K, N));
  } else {
    run(CMap(A, K, M).transpose(), CMap(B, N, K).transpose());
  }
}

void parallel_run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  int64_t t = std::min<int64_t>(max_threads(), n);
  if (t <= 1) {
    fn(0, n);
    return;
  }
  int64_t chunk = (n + t - 1) / t;
  std::vector<std::thread> pool;
  for (int64_t i = 0; i < t; ++i) {
    int64_t b = i * chunk;
    int64_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back(fn, b, e);
  }
  for (auto& th : pool) th.join();
}

// Record a node when the tape is live and any input carries gradient.
Var make(Tape* tape, OpKind kind, std::initializer_list<const Var*> ins,
         std::vector<Tensor> saved, OpAttrs attrs, Tensor out) {
  bool tracked = false;
  for (const Var* v : ins) {
    if (v && v->tracked()) tracked = true;
  }
  if (!tape || !tracked) return Var(std::move(out));
  TapeNode n;
  n.kind = kind;
  int i = 0;
  for (const Var* v : ins) n.in[static_cast<size_t>(i++)] = v ? v->node : kNoNode;
  n.saved = std::move(saved);
  n.attrs = std::move(attrs);
  n.out_shape = out.shape();
  n.out_dtype = out.dtype();
  NodeId id = tape->record(std::move(n));
  return Var(std::move(out), id);
}

enum class Ew { add, sub, mul };

template <class T>
std::vector<double> ew_kernel(const Tensor& a, const Tensor& b, Ew op, int64_t n) {
  std::vector<double> out(static_cast<size_t>(n));
  auto pa = a.data();
  auto pb = b.data();
  bool sa = a.numel() == 1 && n > 1;
  bool sb = b.numel() == 1 && n > 1;
  T va = static_cast<T>(pa[0]);
  T vb = static_cast<T>(pb[0]);
  for (int64_t i = 0; i < n; ++i) {
    T x = sa ? va : static_cast<T>(pa[static_cast<size_t>(i)]);
    T y = sb ? vb : static_cast<T>(pb[static_cast<size_t>(i)]);
    T r = op == Ew::add ? x + y : (op == Ew::sub ? x - y : x * y);
    out[static_cast<size_t>(i)] = static_cast<double>(r);
  }
  return out;
}

Var ew_op(Tape* tape, const Var& a, const Var& b, Ew op, OpKind kind) {
  const Tensor& ta = a.value;
  const Tensor& tb = b.value;
  check_dtype(ta, tb, op_name(kind));
  bool scalar_ok = ta.numel() == 1 || tb.numel() == 1;
  if (!same_shape(ta.shape(), tb.shape()) && !scalar_ok) {
    throw DimensionError(std::string(op_name(kind)) + ": shapes " + shape_str(ta.shape()) +
                         " and " + shape_str(tb.shape()) + " do not match");
  }
  const Shape& out_shape = ta.numel() >= tb.numel() ? ta.shape() : tb.shape();
  int64_t n = std::max(ta.numel(), tb.numel());
  std::vector<double> out = ta.dtype() == DType::f64 ? ew_kernel<double>(ta, tb, op, n)
                                                     : ew_kernel<float>(ta, tb, op, n);
  return make(tape, kind, {&a, &b}, {ta, tb}, std::monostate{},
              Tensor::from(out_shape, std::move(out), ta.dtype()));
}

// Sum a gradient down to a one-element tensor when the forward input was a
// broadcast scalar; identity otherwise.
Tensor reduce_to(const Tensor& g, const Shape& target, DType dt) {
  if (same_shape(g.shape(), target)) return g;
  if (shape_numel(target) != 1) {
    throw DimensionError("internal: cannot reduce gradient to " + shape_str(target));
  }
  double acc = 0.0;
  if (dt == DType::f32) {
    float f = 0.0f;
    for (double v : g.data()) f += static_cast<float>(v);
    acc = static_cast<double>(f);
  } else {
    for (double v : g.data()) acc += v;
  }
  return Tensor::from(target, {acc}, dt);
}

struct ConvDims {
  int64_t N, C, H, W, F, KH, KW, OH, OW;
  int stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int padding) {
  if (x.ndim() != 4) {
    throw DimensionError("conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  }
  if (w.ndim() != 4) {
    throw DimensionError("conv2d: weight must be [F,C,KH,KW], got " + shape_str(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("conv2d: input channels " + std::to_string(x.dim(1)) +
                         " but weight expects " + std::to_string(w.dim(1)));
  }
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  if (padding < 0) throw ContractError("conv2d: padding must be >= 0");
  ConvDims d;
  d.N = x.dim(0);
  d.C = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.F = w.dim(0);
  d.KH = w.dim(2);
  d.KW = w.dim(3);
  d.stride = stride;
  d.pad = padding;
  if (d.KH > d.H + 2 * padding || d.KW > d.W + 2 * padding) {
    throw ContractError("conv2d: kernel " + std::to_string(d.KH) + "x" + std::to_string(d.KW) +
                        " exceeds padded input " + std::to_string(d.H + 2 * padding) + "x" +
                        std::to_string(d.W + 2 * padding));
  }
  d.OH = (d.H + 2 * padding - d.KH) / stride + 1;
  d.OW = (d.W + 2 * padding - d.KW) / stride + 1;
  return d;
}

template <class T>
void im2col(const double* x, const ConvDims& d, T* col) {
  int64_t OHW = d.OH * d.OW;
  int64_t row = 0;
  for (int64_t c = 0; c < d.C; ++c) {
    const double* src = x + c * d.H * d.W;
    for (int64_t i = 0; i < d.KH; ++i) {
      for (int64_t j = 0; j < d.KW; ++j, ++row) {
        T* dst = col + row * OHW;
        for (int64_t oh = 0; oh < d.OH; ++oh) {
          int64_t ih = oh * d.stride - d.pad + i;
          if (ih < 0 || ih >= d.H) {
            for (int64_t ow = 0; ow < d.OW; ++ow) dst[oh * d.OW + ow] = T(0);
            continue;
          }
          const double* line = src + ih * d.W;
          for (int64_t ow = 0; ow < d.OW; ++ow) {
            int64_t iw = ow * d.stride - d.pad + j;
            dst[oh * d.OW + ow] =
                (iw >= 0 && iw < d.W) ? static_cast<T>(line[iw]) : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, const ConvDims& d, T* x) {
  int64_t OHW = d.OH * d.OW;
  int64_t row = 0;
  for (int64_t c = 0; c < d.C; ++c) {
    T* dst = x + c * d.H * d.W;
    for (int64_t i = 0; i < d.KH; ++i) {
      for (int64_t j = 0; j < d.KW; ++j, ++row) {
        const T* src = col + row * OHW;
        for (int64_t oh = 0; oh < d.OH; ++oh) {
          int64_t ih = oh * d.stride - d.pad + i;
          if (ih < 0 || ih >= d.H) continue;
          for (int64_t ow = 0; ow < d.OW; ++ow) {
            int64_t iw = ow * d.stride - d.pad + j;
            if (iw >= 0 && iw < d.W) dst[ih * d.W + iw] += src[oh * d.OW + ow];
          }
        }
      }
    }
  }
}

template <class T>
Tensor conv2d_fwd(const Tensor& x, const Tensor& w, const ConvDims& d) {
  CastBuf<T> wbuf(w.data());
  int64_t CKK = d.C * d.KH * d.KW;
  int64_t OHW = d.OH * d.OW;
  std::vector<double> out(static_cast<size_t>(d.N * d.F * OHW));
  const double* xp = x.data().data();
  parallel_run(d.N, [&](int64_t n0, int64_t n1) {
    std::vector<T> col(static_cast<size_t>(CKK * OHW));
    std::vector<T> ob(static_cast<size_t>(d.F * OHW));
    for (int64_t n = n0; n < n1; ++n) {
      im2col<T>(xp + n * d.C * d.H * d.W, d, col.data());
      gemm<T>(false, false, false, d.F, OHW, CKK, wbuf.ptr, col.data(), ob.data());
      double* op = out.data() + n * d.F * OHW;
      for (int64_t i = 0; i < d.F * OHW; ++i) op[i] = static_cast<double>(ob[static_cast<size_t>(i)]);
    }
  });
  return Tensor::from({d.N, d.F, d.OH, d.OW}, std::move(out), x.dtype());
}

template <class T>
void conv2d_bwd(const Tensor& x, const Tensor& w, const Tensor& gout, const ConvDims& d,
                bool need_gx, bool need_gw, Tensor* gx, Tensor* gw) {
  CastBuf<T> wbuf(w.data());
  int64_t CKK = d.C * d.KH * d.KW;
  int64_t OHW = d.OH * d.OW;
  int64_t CHW = d.C * d.H * d.W;
  std::vector<T> gwbuf(need_gw ? static_cast<size_t>(d.F * CKK) : 0, T(0));
  std::vector<double> gxout(need_gx ? static_cast<size_t>(d.N * CHW) : 0);
  std::vector<T> col(static_cast<size_t>(CKK * OHW));
  std::vector<T> gob(static_cast<size_t>(d.F * OHW));
  std::vector<T> colg(need_gx ? static_cast<size_t>(CKK * OHW) : 0);
  std::vector<T> gxbuf(need_gx ? static_cast<size_t>(CHW) : 0);
  const double* xp = x.data().data();
  const double* gp = gout.data().data();
  for (int64_t n = 0; n < d.N; ++n) {
    im2col<T>(xp + n * CHW, d, col.data());
    const double* g = gp + n * d.F * OHW;
    for (int64_t i = 0; i < d.F * OHW; ++i) gob[static_cast<size_t>(i)] = static_cast<T>(g[i]);
    if (need_gw) {
      gemm<T>(true, false, true, d.F, CKK, OHW, gob.data(), col.data(), gwbuf.data());
    }
    if (need_gx) {
      gemm<T>(false, true, false, CKK, OHW, d.F, wbuf.ptr, gob.data(), colg.data());
      std::fill(gxbuf.begin(), gxbuf.end(), T(0));
      col2im<T>(colg.data(), d, gxbuf.data());
      double* dst = gxout.data() + n * CHW;
      for (int64_t i = 0; i < CHW; ++i) dst[i] = static_cast<double>(gxbuf[static_cast<size_t>(i)]);
    }
  }
  if (need_gx) *gx = Tensor::from(x.shape(), std::move(gxout), x.dtype());
  if (need_gw) {
    std::vector<double> gwout(gwbuf.begin(), gwbuf.end());
    *gw = Tensor::from(w.shape(), std::move(gwout), w.dtype());
  }
}

struct PoolDims {
  int64_t N, C, H, W, OH, OW;
  int kh, kw, stride;
};

PoolDims pool_dims(const Tensor& x, int k, int stride) {
  if (x.ndim() != 4) {
    throw DimensionError("pool2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  }
  if (k < 1 || stride < 1) throw ContractError("pool2d: window and stride must be >= 1");
  PoolDims d;
  d.N = x.dim(0);
  d.C = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.kh = k;
  d.kw = d.W == 1 ? 1 : k;  // 1-D pooling when the input is a column
  d.stride = stride;
  if (d.kh > d.H || d.kw > d.W) {
    throw ContractError("pool2d: window " + std::to_string(k) + " exceeds spatial extent " +
                        std::to_string(d.H) + "x" + std::to_string(d.W));
  }
  d.OH = (d.H - d.kh) / stride + 1;
  d.OW = (d.W - d.kw) / stride + 1;
  return d;
}

template <class T>
void pool_fwd(const Tensor& x, const PoolDims& d, PoolKind kind, std::vector<double>& out,
              std::vector<double>* argmax) {
  const double* xp = x.data().data();
  int64_t o = 0;
  T inv = T(1) / static_cast<T>(d.kh * d.kw);
  for (int64_t n = 0; n < d.N; ++n) {
    for (int64_t c = 0; c < d.C; ++c) {
      const double* plane = xp + (n * d.C + c) * d.H * d.W;
      for (int64_t oh = 0; oh < d.OH; ++oh) {
        for (int64_t ow = 0; ow < d.OW; ++ow, ++o) {
          int64_t h0 = oh * d.stride;
          int64_t w0 = ow * d.stride;
          if (kind == PoolKind::avg) {
            T acc = T(0);
            for (int64_t i = 0; i < d.kh; ++i) {
              for (int64_t j = 0; j < d.kw; ++j) {
                acc += static_cast<T>(plane[(h0 + i) * d.W + (w0 + j)]);
              }
            }
            out[static_cast<size_t>(o)] = static_cast<double>(acc * inv);
          } else {
            int64_t best = h0 * d.W + w0;
            T bv = static_cast<T>(plane[best]);
            for (int64_t i = 0; i < d.kh; ++i) {
              for (int64_t j = 0; j < d.kw; ++j) {
                int64_t idx = (h0 + i) * d.W + (w0 + j);
                T v = static_cast<T>(plane[idx]);
                if (v > bv) {  // strict: first maximum in row-major order wins
                  bv = v;
                  best = idx;
                }
              }
            }
            out[static_cast<size_t>(o)] = static_cast<double>(bv);
            (*argmax)[static_cast<size_t>(o)] = static_cast<double>(best);
          }
        }
      }
    }
  }
}

template <class T>
std::vector<double> bn_stats(const Tensor& x, int64_t C, int64_t S, std::vector<double>& var) {
  // Biased batch statistics per channel; two deterministic passes.
  int64_t N = x.dim(0);
  int64_t M = N * S;
  std::vector<double> mean(static_cast<size_t>(C));
  var.assign(static_cast<size_t>(C), 0.0);
  const double* xp = x.data().data();
  for (int64_t c = 0; c < C; ++c) {
    T acc = T(0);
    for (int64_t n = 0; n < N; ++n) {
      const double* p = xp + (n * C + c) * S;
      for (int64_t s = 0; s < S; ++s) acc += static_cast<T>(p[s]);
    }
    T mu = acc / static_cast<T>(M);
    T vacc = T(0);
    for (int64_t n = 0; n < N; ++n) {
      const double* p = xp + (n * C + c) * S;
      for (int64_t s = 0; s < S; ++s) {
        T dlt = static_cast<T>(p[s]) - mu;
        vacc += dlt * dlt;
      }
    }
    mean[static_cast<size_t>(c)] = static_cast<double>(mu);
    var[static_cast<size_t>(c)] = static_cast<double>(vacc / static_cast<T>(M));
  }
  return mean;
}

void bn_check(const Tensor& x, const Tensor& gamma, const Var* beta, const char* what) {
  if (x.ndim() < 2) {
    throw DimensionError(std::string(what) + ": input must be [N,C,...], got " +
                         shape_str(x.shape()));
  }
  int64_t C = x.dim(1);
  if (gamma.numel() != C || gamma.ndim() != 1) {
    throw DimensionError(std::string(what) + ": gamma must be [C]=[" + std::to_string(C) +
                         "], got " + shape_str(gamma.shape()));
  }
  check_dtype(x, gamma, what);
  if (beta) {
    if (beta->value.numel() != C || beta->value.ndim() != 1) {
      throw DimensionError(std::string(what) + ": beta must be [C]");
    }
    check_dtype(x, beta->value, what);
  }
}

template <class T>
void bn_apply(const Tensor& x, const std::vector<double>& mean, const std::vector<double>& invstd,
              const Tensor& gamma, const Var* beta, std::vector<double>& xhat,
              std::vector<double>& y) {
  int64_t N = x.dim(0);
  int64_t C = x.dim(1);
  int64_t S = x.numel() / (N * C);
  const double* xp = x.data().data();
  auto gp = gamma.data();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      T mu = static_cast<T>(mean[static_cast<size_t>(c)]);
      T is = static_cast<T>(invstd[static_cast<size_t>(c)]);
      T g = static_cast<T>(gp[static_cast<size_t>(c)]);
      T b = beta ? static_cast<T>(beta->value.data()[static_cast<size_t>(c)]) : T(0);
      int64_t base = (n * C + c) * S;
      for (int64_t s = 0; s < S; ++s) {
        T xh = (static_cast<T>(xp[base + s]) - mu) * is;
        xhat[static_cast<size_t>(base + s)] = static_cast<double>(xh);
        y[static_cast<size_t>(base + s)] = static_cast<double>(g * xh + b);
      }
    }
  }
}

}  // namespace

Var add(Tape* tape, const Var& a, const Var& b) { return ew_op(tape, a, b, Ew::add, OpKind::Add); }
Var sub(Tape* tape, const Var& a, const Var& b) { return ew_op(tape, a, b, Ew::sub, OpKind::Sub); }
Var mul(Tape* tape, const Var& a, const Var& b) { return ew_op(tape, a, b, Ew::mul, OpKind::Mul); }

Var scale(Tape* tape, const Var& a, double c) {
  const Tensor& t = a.value;
  std::vector<double> out(t.data().begin(), t.data().end());
  if (t.dtype() == DType::f32) {
    float fc = static_cast<float>(c);
    for (double& v : out) v = static_cast<double>(static_cast<float>(v) * fc);
  } else {
    for (double& v : out) v *= c;
  }
  ScaleAttrs at;
  at.c = c;
  return make(tape, OpKind::Scale, {&a}, {}, at, Tensor::from(t.shape(), std::move(out), t.dtype()));
}

Var conv2d(Tape* tape, const Var& x, const Var& w, int stride, int padding) {
  check_dtype(x.value, w.value, "conv2d");
  ConvDims d = conv_dims(x.value, w.value, stride, padding);
  Tensor out = x.value.dtype() == DType::f64 ? conv2d_fwd<double>(x.value, w.value, d)
                                             : conv2d_fwd<float>(x.value, w.value, d);
  ConvAttrs at;
  at.stride = stride;
  at.padding = padding;
  return make(tape, OpKind::Conv2d, {&x, &w}, {x.value, w.value}, at, std::move(out));
}

Var linear(Tape* tape, const Var& x, const Var& w, const Var* bias) {
  const Tensor& xt = x.value;
  const Tensor& wt = w.value;
  check_dtype(xt, wt, "linear");
  if (xt.ndim() != 2 || wt.ndim() != 2) {
    throw DimensionError("linear: expected input [N,D] and weight [K,D], got " +
                         shape_str(xt.shape()) + " and " + shape_str(wt.shape()));
  }
  if (xt.dim(1) != wt.dim(1)) {
    throw DimensionError("linear: input features " + std::to_string(xt.dim(1)) +
                         " but weight expects " + std::to_string(wt.dim(1)));
  }
  int64_t N = xt.dim(0);
  int64_t K = wt.dim(0);
  int64_t D = xt.dim(1);
  if (bias && (bias->value.ndim() != 1 || bias->value.numel() != K)) {
    throw DimensionError("linear: bias must be [K]");
  }
  std::vector<double> out(static_cast<size_t>(N * K));
  auto run = [&](auto tag) {
    using T = decltype(tag);
    CastBuf<T> xb(xt.data());
    CastBuf<T> wb(wt.data());
    std::vector<T> y(static_cast<size_t>(N * K));
    gemm<T>(false, false, true, N, K, D, xb.ptr, wb.ptr, y.data());
    if (bias) {
      auto bp = bias->value.data();
      for (int64_t n = 0; n < N; ++n) {
        for (int64_t k = 0; k < K; ++k) {
          y[static_cast<size_t>(n * K + k)] += static_cast<T>(bp[static_cast<size_t>(k)]);
        }
      }
    }
    for (int64_t i = 0; i < N * K; ++i) out[static_cast<size_t>(i)] = static_cast<double>(y[static_cast<size_t>(i)]);
  };
  if (xt.dtype() == DType::f64) {
    run(double{});
  } else {
    run(float{});
  }
  return make(tape, OpKind::Linear, {&x, &w, bias}, {xt, wt}, std::monostate{},
              Tensor::from({N, K}, std::move(out), xt.dtype()));
}

Var pool2d(Tape* tape, const Var& x, PoolKind kind, int k, int stride) {
  PoolDims d = pool_dims(x.value, k, stride);
  std::vector<double> out(static_cast<size_t>(d.N * d.C * d.OH * d.OW));
  std::vector<double> argmax(kind == PoolKind::max ? out.size() : 0);
  if (x.value.dtype() == DType::f64) {
    pool_fwd<double>(x.value, d, kind, out, &argmax);
  } else {
    pool_fwd<float>(x.value, d, kind, out, &argmax);
  }
  PoolAttrs at;
  at.kind = kind;
  at.k = k;
  at.stride = stride;
  std::vector<Tensor> saved{x.value};
  if (kind == PoolKind::max) {
    saved.push_back(Tensor::from({d.N, d.C, d.OH, d.OW}, std::move(argmax)));
  }
  return make(tape, OpKind::Pool2d, {&x}, std::move(saved), at,
              Tensor::from({d.N, d.C, d.OH, d.OW}, std::move(out), x.value.dtype()));
}

Var global_avg_pool(Tape* tape, const Var& x) {
  const Tensor& t = x.value;
  if (t.ndim() != 4) {
    throw DimensionError("global_avg_pool: input must be [N,C,H,W], got " + shape_str(t.shape()));
  }
  int64_t N = t.dim(0), C = t.dim(1), S = t.dim(2) * t.dim(3);
  std::vector<double> out(static_cast<size_t>(N * C));
  const double* xp = t.data().data();
  auto run = [&](auto tag) {
    using T = decltype(tag);
    T inv = T(1) / static_cast<T>(S);
    for (int64_t i = 0; i < N * C; ++i) {
      T acc = T(0);
      const double* p = xp + i * S;
      for (int64_t s = 0; s < S; ++s) acc += static_cast<T>(p[s]);
      out[static_cast<size_t>(i)] = static_cast<double>(acc * inv);
    }
  };
  if (t.dtype() == DType::f64) {
    run(double{});
  } else {
    run(float{});
  }
  return make(tape, OpKind::GlobalAvgPool, {&x}, {t}, std::monostate{},
              Tensor::from({N, C}, std::move(out), t.dtype()));
}

Var reshape(Tape* tape, const Var& x, Shape shape) {
  Tensor out = x.value.reshaped(shape);
  ReshapeAttrs at;
  at.in_shape = x.value.shape();
  return make(tape, OpKind::Reshape, {&x}, {}, std::move(at), std::move(out));
}

double surrogate_scalar(double u, double u_th, double alpha, bool center_at_threshold) {
  double c = center_at_threshold ? u_th : 0.0;
  double t = 1.0 - std::fabs(u - c);
  return t > 0.0 ? alpha * t : 0.0;
}

double soft_spike_scalar(double u, double u_th, double alpha, bool center_at_threshold) {
  double v = u - (center_at_threshold ? u_th : 0.0);
  if (v <= -1.0) return 0.0;
  if (v >= 1.0) return alpha;
  if (v <= 0.0) {
    double t = v + 1.0;
    return 0.5 * alpha * t * t;
  }
  double t = 1.0 - v;
  return alpha * (1.0 - 0.5 * t * t);
}

Tensor heaviside_value(const Tensor& x, double u_th) {
  std::vector<double> out(static_cast<size_t>(x.numel()));
  auto p = x.data();
  if (x.dtype() == DType::f32) {
    float th = static_cast<float>(u_th);
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(p[i]) >= th ? 1.0 : 0.0;
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] = p[i] >= u_th ? 1.0 : 0.0;
  }
  return Tensor::from(x.shape(), std::move(out), x.dtype());
}

Tensor surrogate_value(const Tensor& u, double u_th, double alpha, bool center_at_threshold) {
  std::vector<double> out(static_cast<size_t>(u.numel()));
  auto p = u.data();
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = surrogate_scalar(p[i], u_th, alpha, center_at_threshold);
  }
  return Tensor::from(u.shape(), std::move(out), u.dtype());
}

Tensor soft_spike_value(const Tensor& u, double u_th, double alpha, bool center_at_threshold) {
  std::vector<double> out(static_cast<size_t>(u.numel()));
  auto p = u.data();
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = soft_spike_scalar(p[i], u_th, alpha, center_at_threshold);
  }
  return Tensor::from(u.shape(), std::move(out), u.dtype());
}

Var spike(Tape* tape, const Var& u, double u_th, double alpha, bool center_at_threshold) {
  if (u_th <= 0.0) throw ContractError("spike: threshold must be positive");
  Tensor out = heaviside_value(u.value, u_th);
  SpikeAttrs at;
  at.u_th = u_th;
  at.alpha = alpha;
  at.center_at_threshold = center_at_threshold;
  return make(tape, OpKind::Spike, {&u}, {u.value}, at, std::move(out));
}

Var soft_spike(Tape* tape, const Var& u, double u_th, double alpha, bool center_at_threshold) {
  if (u_th <= 0.0) throw ContractError("soft_spike: threshold must be positive");
  Tensor out = soft_spike_value(u.value, u_th, alpha, center_at_threshold);
  SpikeAttrs at;
  at.u_th = u_th;
  at.alpha = alpha;
  at.center_at_threshold = center_at_threshold;
  return make(tape, OpKind::SoftSpike, {&u}, {u.value}, at, std::move(out));
}

BnTrainOut batch_norm_train(Tape* tape, const Var& x, const Var& gamma, const Var* beta,
                            double eps) {
  bn_check(x.value, gamma.value, beta, "batch_norm_train");
  int64_t N = x.value.dim(0);
  int64_t C = x.value.dim(1);
  if (N < 2) {
    throw ContractError("batch_norm_train: batch statistics need at least 2 samples, got " +
                        std::to_string(N));
  }
  int64_t S = x.value.numel() / (N * C);
  std::vector<double> var;
  std::vector<double> mean = x.value.dtype() == DType::f64 ? bn_stats<double>(x.value, C, S, var)
                                                           : bn_stats<float>(x.value, C, S, var);
  std::vector<double> invstd(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    invstd[static_cast<size_t>(c)] =
        quantize(1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps), x.value.dtype());
  }
  std::vector<double> xhat(static_cast<size_t>(x.value.numel()));
  std::vector<double> y(static_cast<size_t>(x.value.numel()));
  if (x.value.dtype() == DType::f64) {
    bn_apply<double>(x.value, mean, invstd, gamma.value, beta, xhat, y);
  } else {
    bn_apply<float>(x.value, mean, invstd, gamma.value, beta, xhat, y);
  }
  BnAttrs at;
  at.eps = eps;
  at.m = N * S;
  Tensor xhat_t = Tensor::from(x.value.shape(), std::move(xhat), x.value.dtype());
  Tensor invstd_t = Tensor::from({C}, invstd, x.value.dtype());
  BnTrainOut r;
  r.mean = Tensor::from({C}, mean, x.value.dtype());
  r.var = Tensor::from({C}, std::move(var), x.value.dtype());
  r.y = make(tape, OpKind::BatchNormTrain, {&x, &gamma, beta},
             {xhat_t, invstd_t, gamma.value}, at,
             Tensor::from(x.value.shape(), std::move(y), x.value.dtype()));
  return r;
}

Var batch_norm_eval(Tape* tape, const Var& x, const Var& gamma, const Var* beta,
                    const Tensor& mean, const Tensor& var, double eps) {
  bn_check(x.value, gamma.value, beta, "batch_norm_eval");
  int64_t C = x.value.dim(1);
  if (mean.numel() != C || var.numel() != C) {
    throw DimensionError("batch_norm_eval: running statistics must be [C]");
  }
  std::vector<double> invstd(static_cast<size_t>(C));
  auto vp = var.data();
  for (int64_t c = 0; c < C; ++c) {
    invstd[static_cast<size_t>(c)] =
        quantize(1.0 / std::sqrt(vp[static_cast<size_t>(c)] + eps), x.value.dtype());
  }
  std::vector<double> mu(mean.data().begin(), mean.data().end());
  std::vector<double> xhat(static_cast<size_t>(x.value.numel()));
  std::vector<double> y(static_cast<size_t>(x.value.numel()));
  if (x.value.dtype() == DType::f64) {
    bn_apply<double>(x.value, mu, invstd, gamma.value, beta, xhat, y);
  } else {
    bn_apply<float>(x.value, mu, invstd, gamma.value, beta, xhat, y);
  }
  BnAttrs at;
  at.eps = eps;
  at.m = x.value.numel() / C;
  Tensor xhat_t = Tensor::from(x.value.shape(), std::move(xhat), x.value.dtype());
  Tensor invstd_t = Tensor::from({C}, std::move(invstd), x.value.dtype());
  return make(tape, OpKind::BatchNormEval, {&x, &gamma, beta}, {xhat_t, invstd_t, gamma.value},
              at, Tensor::from(x.value.shape(), std::move(y), x.value.dtype()));
}

Var logistic(Tape* tape, const Var& x) {
  std::vector<double> out(static_cast<size_t>(x.value.numel()));
  auto p = x.value.data();
  if (x.value.dtype() == DType::f32) {
    for (size_t i = 0; i < out.size(); ++i) {
      float v = static_cast<float>(p[i]);
      out[i] = static_cast<double>(1.0f / (1.0f + std::exp(-v)));
    }
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-p[i]));
  }
  Tensor y = Tensor::from(x.value.shape(), std::move(out), x.value.dtype());
  return make(tape, OpKind::Logistic, {&x}, {y}, std::monostate{}, y);
}

Var boost_avg(Tape* tape, const Var& potentials, int group) {
  const Tensor& t = potentials.value;
  if (t.ndim() != 2) {
    throw DimensionError("boost_avg: input must be [N, group*C], got " + shape_str(t.shape()));
  }
  if (group < 1) throw ContractError("boost_avg: group must be >= 1");
  if (t.dim(1) % group != 0) {
    throw DimensionError("boost_avg: feature count " + std::to_string(t.dim(1)) +
                         " is not divisible by group " + std::to_string(group));
  }
  int64_t N = t.dim(0);
  int64_t C = t.dim(1) / group;
  std::vector<double> out(static_cast<size_t>(N * C));
  const double* p = t.data().data();
  auto run = [&](auto tag) {
    using T = decltype(tag);
    T inv = T(1) / static_cast<T>(group);
    for (int64_t n = 0; n < N; ++n) {
      for (int64_t c = 0; c < C; ++c) {
        T acc = T(0);
        for (int64_t g = 0; g < group; ++g) {
          acc += static_cast<T>(p[n * C * group + c * group + g]);
        }
        out[static_cast<size_t>(n * C + c)] = static_cast<double>(acc * inv);
      }
    }
  };
  if (t.dtype() == DType::f64) {
    run(double{});
  } else {
    run(float{});
  }
  BoostAttrs at;
  at.group = group;
  return make(tape, OpKind::BoostAvg, {&potentials}, {t}, at,
              Tensor::from({N, C}, std::move(out), t.dtype()));
}

Var sum(Tape* tape, const Var& x) {
  const Tensor& t = x.value;
  double acc = 0.0;
  if (t.dtype() == DType::f32) {
    float f = 0.0f;
    for (double v : t.data()) f += static_cast<float>(v);
    acc = static_cast<double>(f);
  } else {
    for (double v : t.data()) acc += v;
  }
  return make(tape, OpKind::Sum, {&x}, {t}, std::monostate{},
              Tensor::from({1}, {acc}, t.dtype()));
}

Tensor softmax_value(const Tensor& logits) {
  if (logits.ndim() != 2) {
    throw DimensionError("softmax: input must be [N,C], got " + shape_str(logits.shape()));
  }
  int64_t N = logits.dim(0), C = logits.dim(1);
  std::vector<double> out(static_cast<size_t>(N * C));
  const double* p = logits.data().data();
  for (int64_t n = 0; n < N; ++n) {
    const double* row = p + n * C;
    double m = row[0];
    for (int64_t c = 1; c < C; ++c) m = std::max(m, row[c]);
    double z = 0.0;
    for (int64_t c = 0; c < C; ++c) z += std::exp(row[c] - m);
    for (int64_t c = 0; c < C; ++c) {
      out[static_cast<size_t>(n * C + c)] = std::exp(row[c] - m) / z;
    }
  }
  return Tensor::from(logits.shape(), std::move(out), logits.dtype());
}

Var cross_entropy(Tape* tape, const Var& logits, const std::vector<int>& labels) {
  const Tensor& t = logits.value;
  if (t.ndim() != 2) {
    throw DimensionError("cross_entropy: logits must be [N,C], got " + shape_str(t.shape()));
  }
  int64_t N = t.dim(0), C = t.dim(1);
  if (static_cast<int64_t>(labels.size()) != N) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(N));
  }
  for (int l : labels) {
    if (l < 0 || l >= C) {
      throw ContractError("cross_entropy: label " + std::to_string(l) + " outside [0," +
                          std::to_string(C) + ")");
    }
  }
  Tensor probs = softmax_value(t);
  const double* p = t.data().data();
  double loss = 0.0;
  for (int64_t n = 0; n < N; ++n) {
    const double* row = p + n * C;
    double m = row[0];
    for (int64_t c = 1; c < C; ++c) m = std::max(m, row[c]);
    double z = 0.0;
    for (int64_t c = 0; c < C; ++c) z += std::exp(row[c] - m);
    loss += std::log(z) - (row[labels[static_cast<size_t>(n)]] - m);
  }
  loss = quantize(loss / static_cast<double>(N), t.dtype());
  CeAttrs at;
  at.labels = labels;
  return make(tape, OpKind::CrossEntropy, {&logits}, {probs}, std::move(at),
              Tensor::from({1}, {loss}, t.dtype()));
}

GradCheck finite_diff_gradcheck(const std::function<double()>& f,
                                const std::vector<std::pair<int, Tensor*>>& params,
                                const GradientStore& analytic, double eps) {
  if (eps <= 0.0) throw ContractError("finite_diff_gradcheck: eps must be positive");
  GradCheck r;
  for (const auto& [id, tptr] : params) {
    const Tensor orig = *tptr;
    Tensor g = analytic.get(id, orig.shape(), orig.dtype());
    std::vector<double> base(orig.data().begin(), orig.data().end());
    for (int64_t i = 0; i < orig.numel(); ++i) {
      std::vector<double> v = base;
      v[static_cast<size_t>(i)] = base[static_cast<size_t>(i)] + eps;
      *tptr = Tensor::from(orig.shape(), std::move(v), orig.dtype());
      double fp = f();
      v = base;
      v[static_cast<size_t>(i)] = base[static_cast<size_t>(i)] - eps;
      *tptr = Tensor::from(orig.shape(), std::move(v), orig.dtype());
      double fm = f();
      *tptr = orig;
      double num = (fp - fm) / (2.0 * eps);
      double ana = g[i];
      double rel = std::fabs(num - ana) /
                   std::max({std::fabs(num), std::fabs(ana), 1e-8});
      ++r.checked;
      if (rel > r.max_rel_err) {
        r.max_rel_err = rel;
        r.worst = "param" + std::to_string(id) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

// ---- backward rules ----

namespace {

Tensor ew_mul_value(const Tensor& a, const Tensor& b) {
  int64_t n = std::max(a.numel(), b.numel());
  std::vector<double> out = a.dtype() == DType::f64 ? ew_kernel<double>(a, b, Ew::mul, n)
                                                    : ew_kernel<float>(a, b, Ew::mul, n);
  const Shape& s = a.numel() >= b.numel() ? a.shape() : b.shape();
  return Tensor::from(s, std::move(out), a.dtype());
}

Tensor negate(const Tensor& t) {
  std::vector<double> out(t.data().begin(), t.data().end());
  for (double& v : out) v = -v;
  return Tensor::from(t.shape(), std::move(out), t.dtype());
}

template <class T>
void bn_backward_train(const TapeNode& n, const Tensor& gout, std::array<Tensor, 3>& gin) {
  const Tensor& xhat = n.saved[0];
  const Tensor& invstd = n.saved[1];
  const Tensor& gamma = n.saved[2];
  const auto& at = std::get<BnAttrs>(n.attrs);
  int64_t N = xhat.dim(0);
  int64_t C = xhat.dim(1);
  int64_t S = xhat.numel() / (N * C);
  T m = static_cast<T>(at.m);
  const double* gp = gout.data().data();
  const double* xh = xhat.data().data();
  std::vector<double> dgamma(static_cast<size_t>(C));
  std::vector<double> dbeta(static_cast<size_t>(C));
  std::vector<T> sg(static_cast<size_t>(C), T(0));
  std::vector<T> sgx(static_cast<size_t>(C), T(0));
  for (int64_t c = 0; c < C; ++c) {
    T a = T(0), b = T(0);
    for (int64_t nn = 0; nn < N; ++nn) {
      int64_t base = (nn * C + c) * S;
      for (int64_t s = 0; s < S; ++s) {
        T g = static_cast<T>(gp[base + s]);
        a += g;
        b += g * static_cast<T>(xh[base + s]);
      }
    }
    sg[static_cast<size_t>(c)] = a;
    sgx[static_cast<size_t>(c)] = b;
    dbeta[static_cast<size_t>(c)] = static_cast<double>(a);
    dgamma[static_cast<size_t>(c)] = static_cast<double>(b);
  }
  if (n.in[0] != kNoNode) {
    std::vector<double> dx(static_cast<size_t>(xhat.numel()));
    for (int64_t nn = 0; nn < N; ++nn) {
      for (int64_t c = 0; c < C; ++c) {
        T gmul = static_cast<T>(gamma.data()[static_cast<size_t>(c)]) *
                 static_cast<T>(invstd.data()[static_cast<size_t>(c)]);
        T mean_g = sg[static_cast<size_t>(c)] / m;
        T mean_gx = sgx[static_cast<size_t>(c)] / m;
        int64_t base = (nn * C + c) * S;
        for (int64_t s = 0; s < S; ++s) {
          T g = static_cast<T>(gp[base + s]);
          T x = static_cast<T>(xh[base + s]);
          dx[static_cast<size_t>(base + s)] =
              static_cast<double>(gmul * (g - mean_g - x * mean_gx));
        }
      }
    }
    gin[0] = Tensor::from(xhat.shape(), std::move(dx), xhat.dtype());
  }
  if (n.in[1] != kNoNode) gin[1] = Tensor::from({C}, std::move(dgamma), xhat.dtype());
  if (n.in[2] != kNoNode) gin[2] = Tensor::from({C}, std::move(dbeta), xhat.dtype());
}

template <class T>
void bn_backward_eval(const TapeNode& n, const Tensor& gout, std::array<Tensor, 3>& gin) {
  const Tensor& xhat = n.saved[0];
  const Tensor& invstd = n.saved[1];
  const Tensor& gamma = n.saved[2];
  int64_t N = xhat.dim(0);
  int64_t C = xhat.dim(1);
  int64_t S = xhat.numel() / (N * C);
  const double* gp = gout.data().data();
  const double* xh = xhat.data().data();
  if (n.in[0] != kNoNode) {
    std::vector<double> dx(static_cast<size_t>(xhat.numel()));
    for (int64_t nn = 0; nn < N; ++nn) {
      for (int64_t c = 0; c < C; ++c) {
        T gmul = static_cast<T>(gamma.data()[static_cast<size_t>(c)]) *
                 static_cast<T>(invstd.data()[static_cast<size_t>(c)]);
        int64_t base = (nn * C + c) * S;
        for (int64_t s = 0; s < S; ++s) {
          dx[static_cast<size_t>(base + s)] =
              static_cast<double>(static_cast<T>(gp[base + s]) * gmul);
        }
      }
    }
    gin[0] = Tensor::from(xhat.shape(), std::move(dx), xhat.dtype());
  }
  if (n.in[1] != kNoNode || n.in[2] != kNoNode) {
    std::vector<double> dgamma(static_cast<size_t>(C));
    std::vector<double> dbeta(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
      T a = T(0), b = T(0);
      for (int64_t nn = 0; nn < N; ++nn) {
        int64_t base = (nn * C + c) * S;
        for (int64_t s = 0; s < S; ++s) {
          T g = static_cast<T>(gp[base + s]);
          a += g;
          b += g * static_cast<T>(xh[base + s]);
        }
      }
      dbeta[static_cast<size_t>(c)] = static_cast<double>(a);
      dgamma[static_cast<size_t>(c)] = static_cast<double>(b);
    }
    if (n.in[1] != kNoNode) gin[1] = Tensor::from({C}, std::move(dgamma), xhat.dtype());
    if (n.in[2] != kNoNode) gin[2] = Tensor::from({C}, std::move(dbeta), xhat.dtype());
  }
}

}  // namespace

void op_backward(const TapeNode& n, const Tensor& gout, std::array<Tensor, 3>& gin) {
  switch (n.kind) {
    case OpKind::Leaf:
      return;
    case OpKind::Add: {
      if (n.in[0] != kNoNode) gin[0] = reduce_to(gout, n.saved[0].shape(), gout.dtype());
      if (n.in[1] != kNoNode) gin[1] = reduce_to(gout, n.saved[1].shape(), gout.dtype());
      return;
    }
    case OpKind::Sub: {
      if (n.in[0] != kNoNode) gin[0] = reduce_to(gout, n.saved[0].shape(), gout.dtype());
      if (n.in[1] != kNoNode) gin[1] = negate(reduce_to(gout, n.saved[1].shape(), gout.dtype()));
      return;
    }
    case OpKind::Mul: {
      const Tensor& a = n.saved[0];
      const Tensor& b = n.saved[1];
      if (n.in[0] != kNoNode) gin[0] = reduce_to(ew_mul_value(gout, b), a.shape(), gout.dtype());
      if (n.in[1] != kNoNode) gin[1] = reduce_to(ew_mul_value(gout, a), b.shape(), gout.dtype());
      return;
    }
    case OpKind::Scale: {
      const auto& at = std::get<ScaleAttrs>(n.attrs);
      gin[0] = ew_mul_value(gout, Tensor::scalar(at.c, gout.dtype()));
      return;
    }
    case OpKind::Conv2d: {
      const auto& at = std::get<ConvAttrs>(n.attrs);
      const Tensor& x = n.saved[0];
      const Tensor& w = n.saved[1];
      ConvDims d = conv_dims(x, w, at.stride, at.padding);
      bool need_gx = n.in[0] != kNoNode;
      bool need_gw = n.in[1] != kNoNode;
      if (x.dtype() == DType::f64) {
        conv2d_bwd<double>(x, w, gout, d, need_gx, need_gw, &gin[0], &gin[1]);
      } else {
        conv2d_bwd<float>(x, w, gout, d, need_gx, need_gw, &gin[0], &gin[1]);
      }
      return;
    }
    case OpKind::Linear: {
      const Tensor& x = n.saved[0];
      const Tensor& w = n.saved[1];
      int64_t N = x.dim(0), D = x.dim(1), K = w.dim(0);
      auto run = [&](auto tag) {
        using T = decltype(tag);
        CastBuf<T> xb(x.data());
        CastBuf<T> wb(w.data());
        CastBuf<T> gb(gout.data());
        if (n.in[0] != kNoNode) {
          std::vector<T> gx(static_cast<size_t>(N * D));
          gemm<T>(false, false, false, N, D, K, gb.ptr, wb.ptr, gx.data());
          std::vector<double> out(gx.begin(), gx.end());
          gin[0] = Tensor::from(x.shape(), std::move(out), x.dtype());
        }
        if (n.in[1] != kNoNode) {
          std::vector<T> gw(static_cast<size_t>(K * D));
          gemm<T>(false, true, false, K, D, N, gb.ptr, xb.ptr, gw.data());
          std::vector<double> out(gw.begin(), gw.end());
          gin[1] = Tensor::from(w.shape(), std::move(out), w.dtype());
        }
        if (n.in[2] != kNoNode) {
          std::vector<double> gbias(static_cast<size_t>(K));
          for (int64_t k = 0; k < K; ++k) {
            T acc = T(0);
            for (int64_t nn = 0; nn < N; ++nn) acc += gb.ptr[nn * K + k];
            gbias[static_cast<size_t>(k)] = static_cast<double>(acc);
          }
          gin[2] = Tensor::from({K}, std::move(gbias), w.dtype());
        }
      };
      if (x.dtype() == DType::f64) {
        run(double{});
      } else {
        run(float{});
      }
      return;
    }
    case OpKind::Pool2d: {
      const auto& at = std::get<PoolAttrs>(n.attrs);
      const Tensor& x = n.saved[0];
      PoolDims d = pool_dims(x, at.k, at.stride);
      std::vector<double> gx(static_cast<size_t>(x.numel()), 0.0);
      const double* gp = gout.data().data();
      if (at.kind == PoolKind::max) {
        const double* am = n.saved[1].data().data();
        int64_t o = 0;
        for (int64_t nn = 0; nn < d.N; ++nn) {
          for (int64_t c = 0; c < d.C; ++c) {
            int64_t plane = (nn * d.C + c) * d.H * d.W;
            for (int64_t i = 0; i < d.OH * d.OW; ++i, ++o) {
              gx[static_cast<size_t>(plane + static_cast<int64_t>(am[o]))] += gp[o];
            }
          }
        }
      } else {
        double inv = 1.0 / static_cast<double>(d.kh * d.kw);
        int64_t o = 0;
        for (int64_t nn = 0; nn < d.N; ++nn) {
          for (int64_t c = 0; c < d.C; ++c) {
            int64_t plane = (nn * d.C + c) * d.H * d.W;
            for (int64_t oh = 0; oh < d.OH; ++oh) {
              for (int64_t ow = 0; ow < d.OW; ++ow, ++o) {
                double g = gp[o] * inv;
                for (int64_t i = 0; i < d.kh; ++i) {
                  for (int64_t j = 0; j < d.kw; ++j) {
                    gx[static_cast<size_t>(plane + (oh * d.stride + i) * d.W + ow * d.stride + j)] += g;
                  }
                }
              }
            }
          }
        }
      }
      if (x.dtype() == DType::f32) {
        for (double& v : gx) v = quantize(v, DType::f32);
      }
      gin[0] = Tensor::from(x.shape(), std::move(gx), x.dtype());
      return;
    }
    case OpKind::GlobalAvgPool: {
      const Tensor& x = n.saved[0];
      int64_t N = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
      std::vector<double> gx(static_cast<size_t>(x.numel()));
      const double* gp = gout.data().data();
      double inv = 1.0 / static_cast<double>(S);
      for (int64_t i = 0; i < N * C; ++i) {
        double g = quantize(gp[i] * inv, x.dtype());
        for (int64_t s = 0; s < S; ++s) gx[static_cast<size_t>(i * S + s)] = g;
      }
      gin[0] = Tensor::from(x.shape(), std::move(gx), x.dtype());
      return;
    }
    case OpKind::Reshape: {
      const auto& at = std::get<ReshapeAttrs>(n.attrs);
      gin[0] = gout.reshaped(at.in_shape);
      return;
    }
    case OpKind::Spike:
    case OpKind::SoftSpike: {
      const auto& at = std::get<SpikeAttrs>(n.attrs);
      Tensor sg = surrogate_value(n.saved[0], at.u_th, at.alpha, at.center_at_threshold);
      gin[0] = ew_mul_value(gout, sg);
      return;
    }
    case OpKind::BatchNormTrain: {
      if (n.saved[0].dtype() == DType::f64) {
        bn_backward_train<double>(n, gout, gin);
      } else {
        bn_backward_train<float>(n, gout, gin);
      }
      return;
    }
    case OpKind::BatchNormEval: {
      if (n.saved[0].dtype() == DType::f64) {
        bn_backward_eval<double>(n, gout, gin);
      } else {
        bn_backward_eval<float>(n, gout, gin);
      }
      return;
    }
    case OpKind::Logistic: {
      const Tensor& y = n.saved[0];
      std::vector<double> g(static_cast<size_t>(y.numel()));
      auto yp = y.data();
      auto gp = gout.data();
      for (size_t i = 0; i < g.size(); ++i) {
        g[i] = quantize(gp[i] * yp[i] * (1.0 - yp[i]), y.dtype());
      }
      gin[0] = Tensor::from(y.shape(), std::move(g), y.dtype());
      return;
    }
    case OpKind::BoostAvg: {
      const auto& at = std::get<BoostAttrs>(n.attrs);
      const Tensor& x = n.saved[0];
      int64_t N = x.dim(0);
      int64_t C = x.dim(1) / at.group;
      std::vector<double> gx(static_cast<size_t>(x.numel()));
      const double* gp = gout.data().data();
      double inv = 1.0 / static_cast<double>(at.group);
      for (int64_t nn = 0; nn < N; ++nn) {
        for (int64_t c = 0; c < C; ++c) {
          double g = quantize(gp[nn * C + c] * inv, x.dtype());
          for (int64_t k = 0; k < at.group; ++k) {
            gx[static_cast<size_t>(nn * C * at.group + c * at.group + k)] = g;
          }
        }
      }
      gin[0] = Tensor::from(x.shape(), std::move(gx), x.dtype());
      return;
    }
    case OpKind::Sum: {
      const Tensor& x = n.saved[0];
      gin[0] = Tensor::full(x.shape(), gout[0], x.dtype());
      return;
    }
    case OpKind::CrossEntropy: {
      const Tensor& probs = n.saved[0];
      const auto& at = std::get<CeAttrs>(n.attrs);
      int64_t N = probs.dim(0), C = probs.dim(1);
      std::vector<double> g(probs.data().begin(), probs.data().end());
      double gl = gout[0] / static_cast<double>(N);
      for (int64_t nn = 0; nn < N; ++nn) {
        g[static_cast<size_t>(nn * C + at.labels[static_cast<size_t>(nn)])] -= 1.0;
        for (int64_t c = 0; c < C; ++c) {
          g[static_cast<size_t>(nn * C + c)] =
              quantize(g[static_cast<size_t>(nn * C + c)] * gl, probs.dtype());
        }
      }
      gin[0] = Tensor::from(probs.shape(), std::move(g), probs.dtype());
      return;
    }
  }
  throw ContractError("op_backward: unhandled op");
}

}  // namespace spikegrid::ops

namespace spikegrid {

void op_backward(const TapeNode& node, const Tensor& gout, std::array<Tensor, 3>& gin) {
  ops::op_backward(node, gout, gin);
}

}  // namespace spikegrid
