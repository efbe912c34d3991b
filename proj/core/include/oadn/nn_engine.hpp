#pragma once

// Tensor container and layer primitives for the sinogram denoiser.
//
// Feature maps are stored as zero-padded planes: each channel occupies
// (h+2) x (w+2) cells with the interior at offset (row+1, col+1), plus
// stride+1 cells of slack before and after the whole block. A 3x3
// convolution then becomes nine GEMV/GEMM accumulations of the form
//   out[co][j] += W_k[co][ci] * in[ci][j + off_k]
// over whole planes, where off_k is the linear offset of kernel tap k.
// Border cells accumulate junk during the GEMMs and are re-zeroed
// afterwards; the zero-border invariant is what makes the shifted reads
// exact zero padding. Templated on the scalar so the same code runs in
// f32 (training) and f64 (gradient verification).

#include <cmath>
#include <cstddef>
#include <cstring>
#include <vector>

#ifdef OADN_USE_BLAS
#include <cblas.h>
#endif

namespace oadn::nn {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc);

#ifdef OADN_USE_BLAS
template <>
inline void gemm<float>(bool ta, bool tb, int m, int n, int k, float alpha,
                        const float* a, int lda, const float* b, int ldb,
                        float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}
template <>
inline void gemm<double>(bool ta, bool tb, int m, int n, int k, double alpha,
                         const double* a, int lda, const double* b, int ldb,
                         double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}
#else
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a,
          int lda, const T* b, int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * ldc;
    if (beta == T(0)) {
      for (int j = 0; j < n; ++j) crow[j] = T(0);
    } else if (beta != T(1)) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (int p = 0; p < k; ++p) {
      const T av = trans_a ? a[static_cast<std::size_t>(p) * lda + i]
                           : a[static_cast<std::size_t>(i) * lda + p];
      const T s = alpha * av;
      if (s == T(0)) continue;
      if (!trans_b) {
        const T* brow = b + static_cast<std::size_t>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
      } else {
        for (int j = 0; j < n; ++j)
          crow[j] += s * b[static_cast<std::size_t>(j) * ldb + p];
      }
    }
  }
}
#endif

template <typename T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  int stride = 0;  // w + 2
  int plane = 0;   // (h + 2) * stride
  int slack = 0;   // stride + 1
  std::vector<T> buf;

  void resize(int c_, int h_, int w_) {
    c = c_;
    h = h_;
    w = w_;
    stride = w + 2;
    plane = (h + 2) * stride;
    slack = stride + 1;
    buf.assign(static_cast<std::size_t>(c) * plane + 2 * slack, T(0));
  }
  bool same_shape(const Tensor& o) const {
    return c == o.c && h == o.h && w == o.w;
  }
  T* planes() { return buf.data() + slack; }
  const T* planes() const { return buf.data() + slack; }
  T* plane_ptr(int ci) { return planes() + static_cast<std::size_t>(ci) * plane; }
  const T* plane_ptr(int ci) const {
    return planes() + static_cast<std::size_t>(ci) * plane;
  }
  T* row(int ci, int y) { return plane_ptr(ci) + (y + 1) * stride + 1; }
  const T* row(int ci, int y) const { return plane_ptr(ci) + (y + 1) * stride + 1; }

  void zero() { std::fill(buf.begin(), buf.end(), T(0)); }
  void zero_interior() {
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y) std::memset(row(ci, y), 0, sizeof(T) * w);
  }
  // Clears the one-cell frame around every plane (junk after conv GEMMs).
  void zero_borders() {
    for (int ci = 0; ci < c; ++ci) {
      T* p = plane_ptr(ci);
      std::memset(p, 0, sizeof(T) * stride);
      std::memset(p + (h + 1) * stride, 0, sizeof(T) * stride);
      for (int y = 1; y <= h; ++y) {
        p[y * stride] = T(0);
        p[y * stride + stride - 1] = T(0);
      }
    }
  }
};

// 3x3 convolution, stride 1, zero padding. Weights laid out [co][ci][ky][kx],
// one bias per output channel. in and out must differ.
template <typename T>
void conv3x3_forward(const Tensor<T>& in, const T* w, const T* bias,
                     Tensor<T>& out, std::vector<T>& wk_scratch) {
  const int ci_n = in.c, co_n = out.c;
  wk_scratch.resize(static_cast<std::size_t>(co_n) * ci_n);
  for (int k = 0; k < 9; ++k) {
    const int off = (k / 3 - 1) * in.stride + (k % 3 - 1);
    for (int co = 0; co < co_n; ++co)
      for (int ci = 0; ci < ci_n; ++ci)
        wk_scratch[static_cast<std::size_t>(co) * ci_n + ci] =
            w[(static_cast<std::size_t>(co) * ci_n + ci) * 9 + k];
    gemm<T>(false, false, co_n, out.plane, ci_n, T(1), wk_scratch.data(), ci_n,
            in.plane_ptr(0) + off, in.plane, k == 0 ? T(0) : T(1),
            out.plane_ptr(0), out.plane);
  }
  out.zero_borders();
  for (int co = 0; co < co_n; ++co)
    for (int y = 0; y < out.h; ++y) {
      T* r = out.row(co, y);
      const T b = bias[co];
      for (int x = 0; x < out.w; ++x) r[x] += b;
    }
}

// Gradients wrt input, weights and bias. d_out must carry zero borders.
template <typename T>
void conv3x3_backward(const Tensor<T>& in, const T* w, const Tensor<T>& d_out,
                      Tensor<T>& d_in, T* d_w, T* d_bias,
                      std::vector<T>& wk_scratch, std::vector<T>& dwk_scratch) {
  const int ci_n = in.c, co_n = d_out.c;
  wk_scratch.resize(static_cast<std::size_t>(co_n) * ci_n);
  dwk_scratch.resize(static_cast<std::size_t>(co_n) * ci_n);
  for (int k = 0; k < 9; ++k) {
    const int off = (k / 3 - 1) * in.stride + (k % 3 - 1);
    for (int co = 0; co < co_n; ++co)
      for (int ci = 0; ci < ci_n; ++ci)
        wk_scratch[static_cast<std::size_t>(co) * ci_n + ci] =
            w[(static_cast<std::size_t>(co) * ci_n + ci) * 9 + k];
    // d_in[ci][j] += sum_co W_k[co][ci] * d_out[co][j - off]
    gemm<T>(true, false, ci_n, d_in.plane, co_n, T(1), wk_scratch.data(), ci_n,
            d_out.plane_ptr(0) - off, d_out.plane, k == 0 ? T(0) : T(1),
            d_in.plane_ptr(0), d_in.plane);
    // dW_k[co][ci] = sum_j d_out[co][j] * in[ci][j + off]
    gemm<T>(false, true, co_n, ci_n, d_out.plane, T(1), d_out.plane_ptr(0),
            d_out.plane, in.plane_ptr(0) + off, in.plane, T(0),
            dwk_scratch.data(), ci_n);
    for (int co = 0; co < co_n; ++co)
      for (int ci = 0; ci < ci_n; ++ci)
        d_w[(static_cast<std::size_t>(co) * ci_n + ci) * 9 + k] =
            dwk_scratch[static_cast<std::size_t>(co) * ci_n + ci];
  }
  d_in.zero_borders();
  for (int co = 0; co < co_n; ++co) {
    T acc = T(0);
    for (int y = 0; y < d_out.h; ++y) {
      const T* r = d_out.row(co, y);
      for (int x = 0; x < d_out.w; ++x) acc += r[x];
    }
    d_bias[co] = acc;
  }
}

// 1x1 convolution (network head).
template <typename T>
void conv1x1_forward(const Tensor<T>& in, const T* w, const T* bias,
                     Tensor<T>& out) {
  gemm<T>(false, false, out.c, out.plane, in.c, T(1), w, in.c, in.plane_ptr(0),
          in.plane, T(0), out.plane_ptr(0), out.plane);
  out.zero_borders();
  for (int co = 0; co < out.c; ++co)
    for (int y = 0; y < out.h; ++y) {
      T* r = out.row(co, y);
      for (int x = 0; x < out.w; ++x) r[x] += bias[co];
    }
}

template <typename T>
void conv1x1_backward(const Tensor<T>& in, const T* w, const Tensor<T>& d_out,
                      Tensor<T>& d_in, T* d_w, T* d_bias) {
  gemm<T>(true, false, in.c, d_in.plane, d_out.c, T(1), w, in.c,
          d_out.plane_ptr(0), d_out.plane, T(0), d_in.plane_ptr(0), d_in.plane);
  d_in.zero_borders();
  gemm<T>(false, true, d_out.c, in.c, d_out.plane, T(1), d_out.plane_ptr(0),
          d_out.plane, in.plane_ptr(0), in.plane, T(0), d_w, in.c);
  for (int co = 0; co < d_out.c; ++co) {
    T acc = T(0);
    for (int y = 0; y < d_out.h; ++y) {
      const T* r = d_out.row(co, y);
      for (int x = 0; x < d_out.w; ++x) acc += r[x];
    }
    d_bias[co] = acc;
  }
}

// Per-channel feature normalization over the spatial plane. Training mode
// normalizes with current statistics and refreshes the running estimates;
// inference normalizes with the frozen running statistics.
template <typename T>
struct BatchNormState {
  std::vector<T> mean, inv_std;  // saved for backward
};

template <typename T>
void bn_forward(const Tensor<T>& in, const T* gamma, const T* beta, T* run_mean,
                T* run_var, Tensor<T>& out, BatchNormState<T>& st, bool training,
                bool update_running, T eps, T momentum) {
  const int n = in.h * in.w;
  st.mean.assign(in.c, T(0));
  st.inv_std.assign(in.c, T(0));
  for (int ci = 0; ci < in.c; ++ci) {
    T mean, var;
    if (training) {
      T s = T(0);
      for (int y = 0; y < in.h; ++y) {
        const T* r = in.row(ci, y);
        for (int x = 0; x < in.w; ++x) s += r[x];
      }
      mean = s / T(n);
      T s2 = T(0);
      for (int y = 0; y < in.h; ++y) {
        const T* r = in.row(ci, y);
        for (int x = 0; x < in.w; ++x) {
          const T d = r[x] - mean;
          s2 += d * d;
        }
      }
      var = s2 / T(n);
      if (update_running) {
        run_mean[ci] = (T(1) - momentum) * run_mean[ci] + momentum * mean;
        run_var[ci] = (T(1) - momentum) * run_var[ci] + momentum * var;
      }
    } else {
      mean = run_mean[ci];
      var = run_var[ci];
    }
    const T inv = T(1) / std::sqrt(var + eps);
    st.mean[ci] = mean;
    st.inv_std[ci] = inv;
    const T g = gamma[ci], b = beta[ci];
    for (int y = 0; y < in.h; ++y) {
      const T* r = in.row(ci, y);
      T* o = out.row(ci, y);
      for (int x = 0; x < in.w; ++x) o[x] = g * (r[x] - mean) * inv + b;
    }
  }
}

// Backward through the training-mode statistics.
template <typename T>
void bn_backward(const Tensor<T>& in, const T* gamma, const BatchNormState<T>& st,
                 const Tensor<T>& d_out, Tensor<T>& d_in, T* d_gamma, T* d_beta) {
  const int n = in.h * in.w;
  for (int ci = 0; ci < in.c; ++ci) {
    const T mean = st.mean[ci], inv = st.inv_std[ci], g = gamma[ci];
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int y = 0; y < in.h; ++y) {
      const T* r = in.row(ci, y);
      const T* dy = d_out.row(ci, y);
      for (int x = 0; x < in.w; ++x) {
        sum_dy += dy[x];
        sum_dy_xhat += dy[x] * (r[x] - mean) * inv;
      }
    }
    d_gamma[ci] = sum_dy_xhat;
    d_beta[ci] = sum_dy;
    const T k1 = g * inv / T(n);
    for (int y = 0; y < in.h; ++y) {
      const T* r = in.row(ci, y);
      const T* dy = d_out.row(ci, y);
      T* dx = d_in.row(ci, y);
      for (int x = 0; x < in.w; ++x) {
        const T xhat = (r[x] - mean) * inv;
        dx[x] = k1 * (T(n) * dy[x] - sum_dy - xhat * sum_dy_xhat);
      }
    }
  }
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (int ci = 0; ci < t.c; ++ci)
    for (int y = 0; y < t.h; ++y) {
      T* r = t.row(ci, y);
      for (int x = 0; x < t.w; ++x)
        if (r[x] < T(0)) r[x] = T(0);
    }
}

// d_in = d_out where the (post-)activation is positive. act holds the relu
// output; in-place relu keeps act > 0 iff its input was > 0.
template <typename T>
void relu_backward(const Tensor<T>& act, const Tensor<T>& d_out, Tensor<T>& d_in) {
  for (int ci = 0; ci < act.c; ++ci)
    for (int y = 0; y < act.h; ++y) {
      const T* a = act.row(ci, y);
      const T* dy = d_out.row(ci, y);
      T* dx = d_in.row(ci, y);
      for (int x = 0; x < act.w; ++x) dx[x] = a[x] > T(0) ? dy[x] : T(0);
    }
}

// 2x2 max pooling, stride 2. argmax index (0..3) kept for the backward pass;
// ties resolve to the first maximum in row-major order.
template <typename T>
void maxpool_forward(const Tensor<T>& in, Tensor<T>& out,
                     std::vector<unsigned char>& argmax) {
  argmax.assign(static_cast<std::size_t>(out.c) * out.h * out.w, 0);
  std::size_t ai = 0;
  for (int ci = 0; ci < in.c; ++ci)
    for (int y = 0; y < out.h; ++y) {
      const T* r0 = in.row(ci, 2 * y);
      const T* r1 = in.row(ci, 2 * y + 1);
      T* o = out.row(ci, y);
      for (int x = 0; x < out.w; ++x, ++ai) {
        const T v[4] = {r0[2 * x], r0[2 * x + 1], r1[2 * x], r1[2 * x + 1]};
        int best = 0;
        for (int i = 1; i < 4; ++i)
          if (v[i] > v[best]) best = i;
        o[x] = v[best];
        argmax[ai] = static_cast<unsigned char>(best);
      }
    }
}

template <typename T>
void maxpool_backward(const Tensor<T>& d_out, const std::vector<unsigned char>& argmax,
                      Tensor<T>& d_in) {
  d_in.zero_interior();
  std::size_t ai = 0;
  for (int ci = 0; ci < d_out.c; ++ci)
    for (int y = 0; y < d_out.h; ++y) {
      T* r0 = d_in.row(ci, 2 * y);
      T* r1 = d_in.row(ci, 2 * y + 1);
      const T* dy = d_out.row(ci, y);
      for (int x = 0; x < d_out.w; ++x, ++ai) {
        T* rows[2] = {r0, r1};
        const int a = argmax[ai];
        rows[a / 2][2 * x + (a % 2)] = dy[x];
      }
    }
}

// Nearest-neighbor 2x upsampling.
template <typename T>
void upsample_forward(const Tensor<T>& in, Tensor<T>& out) {
  for (int ci = 0; ci < in.c; ++ci)
    for (int y = 0; y < in.h; ++y) {
      const T* r = in.row(ci, y);
      T* o0 = out.row(ci, 2 * y);
      T* o1 = out.row(ci, 2 * y + 1);
      for (int x = 0; x < in.w; ++x) o0[2 * x] = o0[2 * x + 1] = o1[2 * x] =
                                         o1[2 * x + 1] = r[x];
    }
}

template <typename T>
void upsample_backward(const Tensor<T>& d_out, Tensor<T>& d_in) {
  for (int ci = 0; ci < d_in.c; ++ci)
    for (int y = 0; y < d_in.h; ++y) {
      const T* o0 = d_out.row(ci, 2 * y);
      const T* o1 = d_out.row(ci, 2 * y + 1);
      T* r = d_in.row(ci, y);
      for (int x = 0; x < d_in.w; ++x)
        r[x] = o0[2 * x] + o0[2 * x + 1] + o1[2 * x] + o1[2 * x + 1];
    }
}

// out channels [0, a.c) from a, [a.c, a.c + b.c) from b.
template <typename T>
void concat_forward(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& out) {
  for (int ci = 0; ci < a.c; ++ci)
    for (int y = 0; y < a.h; ++y)
      std::memcpy(out.row(ci, y), a.row(ci, y), sizeof(T) * a.w);
  for (int ci = 0; ci < b.c; ++ci)
    for (int y = 0; y < b.h; ++y)
      std::memcpy(out.row(a.c + ci, y), b.row(ci, y), sizeof(T) * b.w);
}

template <typename T>
void concat_backward(const Tensor<T>& d_out, Tensor<T>& d_a, Tensor<T>& d_b) {
  for (int ci = 0; ci < d_a.c; ++ci)
    for (int y = 0; y < d_a.h; ++y)
      std::memcpy(d_a.row(ci, y), d_out.row(ci, y), sizeof(T) * d_a.w);
  for (int ci = 0; ci < d_b.c; ++ci)
    for (int y = 0; y < d_b.h; ++y)
      std::memcpy(d_b.row(ci, y), d_out.row(d_a.c + ci, y), sizeof(T) * d_b.w);
}

}  // namespace oadn::nn
