#include "oadn/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "oadn/errors.hpp"
#include "oadn/nn_engine.hpp"

namespace oadn {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

std::string idx_label(std::string_view prefix, std::string_view purpose,
                      std::uint64_t index, std::string_view tail) {
  std::string s(prefix);
  s += '/';
  s.append(purpose.data(), purpose.size());
  s += '/';
  s += std::to_string(index);
  s += '/';
  s.append(tail.data(), tail.size());
  return s;
}

}  // namespace

void DenoiserArch::validate() const {
  if (levels < 1 || levels > 6)
    throw DataError("denoiser arch: levels must be in [1, 6]");
  if (base_channels < 1 || base_channels > 512)
    throw DataError("denoiser arch: base_channels must be in [1, 512]");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw DataError("train config: epochs must be >= 1");
  if (batch_size != 1) throw DataError("train config: batch_size is fixed to 1");
  if (!(lr > 0.0)) throw DataError("train config: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw DataError("train config: betas must be in [0, 1)");
  if (decay_epochs < 0 || decay_epochs > epochs)
    throw DataError("train config: decay window must be within epochs");
  if (input_scale == 0.0) throw DataError("train config: input_scale must be nonzero");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw DataError("train config: validation_fraction must be in [0, 1)");
}

std::vector<ParamTensor> build_param_layout(const DenoiserArch& arch) {
  arch.validate();
  std::vector<ParamTensor> layout;
  std::size_t cursor = 0;
  auto add = [&](const std::string& name, std::vector<int> shape, bool trainable) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    layout.push_back({name, std::move(shape), cursor, n, trainable});
    cursor += n;
  };
  auto add_conv = [&](const std::string& name, int c_out, int c_in, int k) {
    add(name + ".w", {c_out, c_in, k, k}, true);
    add(name + ".b", {c_out}, true);
  };
  auto add_bn = [&](const std::string& name, int c) {
    add(name + ".gamma", {c}, true);
    add(name + ".beta", {c}, true);
    add(name + ".run_mean", {c}, false);
    add(name + ".run_var", {c}, false);
  };

  const int L = arch.levels;
  auto ch = [&](int i) { return arch.base_channels << i; };
  for (int i = 0; i < L; ++i) {
    const int cin = i == 0 ? 1 : ch(i - 1);
    const std::string p = "enc" + std::to_string(i);
    add_conv(p + ".conv_a", ch(i), cin, 3);
    add_bn(p + ".bn_a", ch(i));
    add_conv(p + ".conv_b", ch(i), ch(i), 3);
    add_bn(p + ".bn_b", ch(i));
  }
  add_conv("bneck.conv_a", ch(L), ch(L - 1), 3);
  add_bn("bneck.bn_a", ch(L));
  add_conv("bneck.conv_b", ch(L), ch(L), 3);
  add_bn("bneck.bn_b", ch(L));
  for (int i = L - 1; i >= 0; --i) {
    const std::string p = "dec" + std::to_string(i);
    add_conv(p + ".up", ch(i), ch(i + 1), 3);
    add_bn(p + ".bn_up", ch(i));
    add_conv(p + ".conv_a", ch(i), 2 * ch(i), 3);
    add_bn(p + ".bn_a", ch(i));
    add_conv(p + ".conv_b", ch(i), ch(i), 3);
    add_bn(p + ".bn_b", ch(i));
  }
  add("head.w", {1, arch.base_channels, 1, 1}, true);
  add("head.b", {1}, true);
  return layout;
}

std::size_t param_count(const DenoiserArch& arch) {
  const auto layout = build_param_layout(arch);
  return layout.back().offset + layout.back().count;
}

DenoiserModel init_model(const DenoiserArch& arch, RngSeed seed,
                         double input_scale) {
  DenoiserModel m;
  m.arch = arch;
  m.input_scale = input_scale;
  const auto layout = build_param_layout(arch);
  m.params.assign(layout.back().offset + layout.back().count, 0.0f);
  for (const auto& t : layout) {
    float* p = m.params.data() + t.offset;
    if (t.name.ends_with(".w")) {
      if (t.name.starts_with("head.")) continue;  // zero head: identity denoiser
      const int fan_in = t.shape[1] * t.shape[2] * t.shape[3];
      const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
      Rng rng(seed, "init/" + t.name);
      for (std::size_t i = 0; i < t.count; ++i)
        p[i] = static_cast<float>(rng.gaussian(0.0, std));
    } else if (t.name.ends_with(".gamma") || t.name.ends_with(".run_var")) {
      std::fill(p, p + t.count, 1.0f);
    }
    // biases, beta, run_mean stay zero
  }
  return m;
}

namespace {

using nn::Tensor;

// Offsets of one conv + norm unit resolved from the layout.
struct UnitRef {
  std::size_t w = 0, b = 0, gamma = 0, beta = 0, rm = 0, rv = 0;
  int c_in = 0, c_out = 0;
};

template <typename T>
struct Unit {
  UnitRef ref;
  Tensor<T> conv_out;  // pre-normalization, saved for the norm backward
  Tensor<T> act;       // normalized + relu (layer output)
  nn::BatchNormState<T> st;
  Tensor<T> d_conv;
  Tensor<T> d_act;
};

template <typename T>
class UNetRuntime {
 public:
  UNetRuntime(const DenoiserArch& arch, int height, int width, bool with_grads)
      : arch_(arch), with_grads_(with_grads) {
    arch_.validate();
    const int div = static_cast<int>(arch_.divisor());
    if (height % div != 0 || width % div != 0)
      throw DataError("denoiser input " + std::to_string(height) + "x" +
                      std::to_string(width) + " must be divisible by 2^levels = " +
                      std::to_string(div));
    const auto layout = build_param_layout(arch_);
    std::map<std::string, const ParamTensor*> by_name;
    for (const auto& t : layout) by_name[t.name] = &t;
    n_params_ = layout.back().offset + layout.back().count;
    layout_ = layout;

    auto unit_ref = [&](const std::string& conv, const std::string& bn) {
      UnitRef r;
      const ParamTensor& w = *by_name.at(conv + ".w");
      r.w = w.offset;
      r.b = by_name.at(conv + ".b")->offset;
      r.gamma = by_name.at(bn + ".gamma")->offset;
      r.beta = by_name.at(bn + ".beta")->offset;
      r.rm = by_name.at(bn + ".run_mean")->offset;
      r.rv = by_name.at(bn + ".run_var")->offset;
      r.c_out = w.shape[0];
      r.c_in = w.shape[1];
      return r;
    };

    const int L = arch_.levels;
    enc_a_.resize(L);
    enc_b_.resize(L);
    pool_out_.resize(L);
    d_pool_.resize(L);
    argmax_.resize(L);
    dec_up_.resize(L);
    up_in_.resize(L);
    d_up_in_.resize(L);
    cat_.resize(L);
    d_cat_.resize(L);
    g_skip_.resize(L);
    dec_a_.resize(L);
    dec_b_.resize(L);

    int h = height, w = width;
    x_.resize(1, h, w);
    if (with_grads_) d_x_.resize(1, h, w);
    for (int i = 0; i < L; ++i) {
      const std::string p = "enc" + std::to_string(i);
      enc_a_[i].ref = unit_ref(p + ".conv_a", p + ".bn_a");
      enc_b_[i].ref = unit_ref(p + ".conv_b", p + ".bn_b");
      alloc_unit(enc_a_[i], h, w);
      alloc_unit(enc_b_[i], h, w);
      pool_out_[i].resize(enc_b_[i].ref.c_out, h / 2, w / 2);
      if (with_grads_) d_pool_[i].resize(enc_b_[i].ref.c_out, h / 2, w / 2);
      h /= 2;
      w /= 2;
    }
    bk_a_.ref = unit_ref("bneck.conv_a", "bneck.bn_a");
    bk_b_.ref = unit_ref("bneck.conv_b", "bneck.bn_b");
    alloc_unit(bk_a_, h, w);
    alloc_unit(bk_b_, h, w);
    for (int i = L - 1; i >= 0; --i) {
      const std::string p = "dec" + std::to_string(i);
      h *= 2;
      w *= 2;
      dec_up_[i].ref = unit_ref(p + ".up", p + ".bn_up");
      dec_a_[i].ref = unit_ref(p + ".conv_a", p + ".bn_a");
      dec_b_[i].ref = unit_ref(p + ".conv_b", p + ".bn_b");
      up_in_[i].resize(dec_up_[i].ref.c_in, h, w);
      cat_[i].resize(dec_a_[i].ref.c_in, h, w);
      alloc_unit(dec_up_[i], h, w);
      alloc_unit(dec_a_[i], h, w);
      alloc_unit(dec_b_[i], h, w);
      if (with_grads_) {
        d_up_in_[i].resize(dec_up_[i].ref.c_in, h, w);
        d_cat_[i].resize(dec_a_[i].ref.c_in, h, w);
        g_skip_[i].resize(dec_b_[i].ref.c_out, h, w);
      }
    }
    head_w_ = by_name.at("head.w")->offset;
    head_b_ = by_name.at("head.b")->offset;
    out_.resize(1, height, width);
    if (with_grads_) d_out_.resize(1, height, width);
  }

  Tensor<T>& input() { return x_; }
  const Tensor<T>& output() const { return out_; }
  Tensor<T>& output_grad() { return d_out_; }
  std::size_t n_params() const { return n_params_; }
  const std::vector<ParamTensor>& layout() const { return layout_; }

  void forward(T* params, bool training, bool update_running) {
    const int L = arch_.levels;
    const Tensor<T>* cur = &x_;
    for (int i = 0; i < L; ++i) {
      unit_forward(enc_a_[i], *cur, params, training, update_running);
      unit_forward(enc_b_[i], enc_a_[i].act, params, training, update_running);
      nn::maxpool_forward(enc_b_[i].act, pool_out_[i], argmax_[i]);
      cur = &pool_out_[i];
    }
    unit_forward(bk_a_, *cur, params, training, update_running);
    unit_forward(bk_b_, bk_a_.act, params, training, update_running);
    cur = &bk_b_.act;
    for (int i = L - 1; i >= 0; --i) {
      nn::upsample_forward(*cur, up_in_[i]);
      unit_forward(dec_up_[i], up_in_[i], params, training, update_running);
      nn::concat_forward(dec_up_[i].act, enc_b_[i].act, cat_[i]);
      unit_forward(dec_a_[i], cat_[i], params, training, update_running);
      unit_forward(dec_b_[i], dec_a_[i].act, params, training, update_running);
      cur = &dec_b_[i].act;
    }
    nn::conv1x1_forward(*cur, params + head_w_, params + head_b_, out_);
  }

  // Backward from d_out_; fills grads (same layout as params).
  void backward(const T* params, T* grads) {
    const int L = arch_.levels;
    nn::conv1x1_backward(dec_b_[0].act, params + head_w_, d_out_,
                         dec_b_[0].d_act, grads + head_w_, grads + head_b_);
    for (int i = 0; i < L; ++i) {
      unit_backward(dec_b_[i], dec_a_[i].act, dec_a_[i].d_act, params, grads);
      unit_backward(dec_a_[i], cat_[i], d_cat_[i], params, grads);
      nn::concat_backward(d_cat_[i], dec_up_[i].d_act, g_skip_[i]);
      unit_backward(dec_up_[i], up_in_[i], d_up_in_[i], params, grads);
      Tensor<T>& below = i == L - 1 ? bk_b_.d_act : dec_b_[i + 1].d_act;
      nn::upsample_backward(d_up_in_[i], below);
    }
    unit_backward(bk_b_, bk_a_.act, bk_a_.d_act, params, grads);
    unit_backward(bk_a_, pool_out_[L - 1], d_pool_[L - 1], params, grads);
    for (int i = L - 1; i >= 0; --i) {
      nn::maxpool_backward(d_pool_[i], argmax_[i], enc_b_[i].d_act);
      add_interior(enc_b_[i].d_act, g_skip_[i]);
      unit_backward(enc_b_[i], enc_a_[i].act, enc_a_[i].d_act, params, grads);
      const Tensor<T>& in = i == 0 ? x_ : pool_out_[i - 1];
      Tensor<T>& d_in = i == 0 ? d_x_ : d_pool_[i - 1];
      unit_backward(enc_a_[i], in, d_in, params, grads);
    }
  }

 private:
  void alloc_unit(Unit<T>& u, int h, int w) {
    u.conv_out.resize(u.ref.c_out, h, w);
    u.act.resize(u.ref.c_out, h, w);
    if (with_grads_) {
      u.d_conv.resize(u.ref.c_out, h, w);
      u.d_act.resize(u.ref.c_out, h, w);
    }
  }

  void unit_forward(Unit<T>& u, const Tensor<T>& in, T* params, bool training,
                    bool update_running) {
    nn::conv3x3_forward(in, params + u.ref.w, params + u.ref.b, u.conv_out,
                        wk_scratch_);
    nn::bn_forward(u.conv_out, params + u.ref.gamma, params + u.ref.beta,
                   params + u.ref.rm, params + u.ref.rv, u.act, u.st,
                   training, update_running, T(kBnEps), T(kBnMomentum));
    nn::relu_inplace(u.act);
  }

  void unit_backward(Unit<T>& u, const Tensor<T>& in, Tensor<T>& d_in,
                     const T* params, T* grads) {
    nn::relu_backward(u.act, u.d_act, u.d_act);
    nn::bn_backward(u.conv_out, params + u.ref.gamma, u.st, u.d_act, u.d_conv,
                    grads + u.ref.gamma, grads + u.ref.beta);
    nn::conv3x3_backward(in, params + u.ref.w, u.d_conv, d_in, grads + u.ref.w,
                         grads + u.ref.b, wk_scratch_, dwk_scratch_);
  }

  static void add_interior(Tensor<T>& dst, const Tensor<T>& src) {
    for (int ci = 0; ci < dst.c; ++ci)
      for (int y = 0; y < dst.h; ++y) {
        T* d = dst.row(ci, y);
        const T* s = src.row(ci, y);
        for (int x = 0; x < dst.w; ++x) d[x] += s[x];
      }
  }

  DenoiserArch arch_;
  bool with_grads_;
  std::size_t n_params_ = 0;
  std::vector<ParamTensor> layout_;
  Tensor<T> x_, d_x_, out_, d_out_;
  std::vector<Unit<T>> enc_a_, enc_b_;
  std::vector<Tensor<T>> pool_out_, d_pool_;
  std::vector<std::vector<unsigned char>> argmax_;
  Unit<T> bk_a_, bk_b_;
  std::vector<Unit<T>> dec_up_, dec_a_, dec_b_;
  std::vector<Tensor<T>> up_in_, d_up_in_, cat_, d_cat_, g_skip_;
  std::size_t head_w_ = 0, head_b_ = 0;
  std::vector<T> wk_scratch_, dwk_scratch_;
};

template <typename T>
void load_input(Tensor<T>& x, const Sinogram& s, double scale) {
  for (std::size_t d = 0; d < s.n_transducers; ++d) {
    T* row = x.row(0, static_cast<int>(d));
    const double* src = s.channel(d);
    for (std::size_t t = 0; t < s.n_samples; ++t)
      row[t] = static_cast<T>(src[t] * scale);
  }
}

template <typename T>
void store_output(const Tensor<T>& out, Sinogram& s, double inv_scale) {
  for (std::size_t d = 0; d < s.n_transducers; ++d) {
    const T* row = out.row(0, static_cast<int>(d));
    double* dst = s.channel(d);
    for (std::size_t t = 0; t < s.n_samples; ++t)
      dst[t] = static_cast<double>(row[t]) * inv_scale;
  }
}

// Mean absolute error over the interior; optionally writes the subgradient
// (sign with sign(0) = 0, scaled by 1/N) into d_out.
template <typename T>
double l1_loss(const Tensor<T>& out, const Tensor<T>& tgt, Tensor<T>* d_out) {
  const double n = static_cast<double>(out.c) * out.h * out.w;
  double acc = 0.0;
  for (int ci = 0; ci < out.c; ++ci)
    for (int y = 0; y < out.h; ++y) {
      const T* o = out.row(ci, y);
      const T* g = tgt.row(ci, y);
      T* d = d_out ? d_out->row(ci, y) : nullptr;
      for (int x = 0; x < out.w; ++x) {
        const T r = o[x] - g[x];
        acc += std::abs(static_cast<double>(r));
        if (d) d[x] = r > T(0) ? T(1.0 / n) : (r < T(0) ? T(-1.0 / n) : T(0));
      }
    }
  return acc / n;
}

template <typename T>
struct AdamOpt {
  std::vector<T> m, v;
  double beta1, beta2, eps;
  long step_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;  // trainable spans

  AdamOpt(const std::vector<ParamTensor>& layout, std::size_t n, double b1,
          double b2, double e)
      : m(n, T(0)), v(n, T(0)), beta1(b1), beta2(b2), eps(e) {
    for (const auto& t : layout)
      if (t.trainable) ranges.emplace_back(t.offset, t.count);
  }

  void step(T* params, const T* grads, double lr) {
    ++step_count;
    const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(beta1, step_count));
    const T bc2 = static_cast<T>(1.0 - std::pow(beta2, step_count));
    const T lr_t = static_cast<T>(lr);
    const T e = static_cast<T>(eps);
    for (const auto& [off, count] : ranges) {
      for (std::size_t i = off; i < off + count; ++i) {
        const T g = grads[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        params[i] -= lr_t * mhat / (std::sqrt(vhat) + e);
      }
    }
  }
};

void check_input_shape(const DenoiserModel& m, const Sinogram& s) {
  const auto div = m.arch.divisor();
  if (s.n_transducers % div != 0 || s.n_samples % div != 0)
    throw DataError("denoiser input " + std::to_string(s.n_transducers) + "x" +
                    std::to_string(s.n_samples) +
                    " must have both dimensions divisible by 2^levels = " +
                    std::to_string(div));
}

template <typename T>
Sinogram infer_noise_impl(const DenoiserModel& m, const Sinogram& s) {
  check_input_shape(m, s);
  s.validate("infer_noise");
  UNetRuntime<T> net(m.arch, static_cast<int>(s.n_transducers),
                     static_cast<int>(s.n_samples), false);
  std::vector<T> params(m.params.begin(), m.params.end());
  load_input(net.input(), s, m.input_scale);
  net.forward(params.data(), false, false);
  Sinogram out(s.n_transducers, s.n_samples, s.sample_rate_hz);
  out.wavelength_nm = s.wavelength_nm;
  store_output(net.output(), out, 1.0 / m.input_scale);
  return out;
}

}  // namespace

Sinogram infer_noise(const DenoiserModel& m, const Sinogram& s) {
  return infer_noise_impl<float>(m, s);
}

Sinogram infer_noise_f64(const DenoiserModel& m, const Sinogram& s) {
  return infer_noise_impl<double>(m, s);
}

Sinogram denoise(const DenoiserModel& m, const Sinogram& s) {
  Sinogram noise = infer_noise(m, s);
  Sinogram out = s;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= noise.data[i];
  return out;
}

Sinogram ZeroNoiseSource::draw(std::string_view, std::uint64_t,
                               const SinogramShape& shape) const {
  return Sinogram(shape.n_transducers, shape.n_samples, shape.sample_rate_hz);
}

Sinogram CompositeNoiseSource::draw(std::string_view purpose, std::uint64_t index,
                                    const SinogramShape& shape) const {
  Sinogram th = gen_thermal(thermal_, shape, seed_,
                            idx_label("noise", purpose, index, "thermal"));
  Sinogram pa = gen_parasitic(parasitic_, shape, seed_,
                              idx_label("noise", purpose, index, "parasitic"));
  for (std::size_t i = 0; i < th.size(); ++i) th.data[i] += pa.data[i];
  return th;
}

Sinogram GaussianLevelNoiseSource::draw(std::string_view purpose,
                                        std::uint64_t index,
                                        const SinogramShape& shape) const {
  Rng rng(seed_, idx_label("noise", purpose, index, "sigma"));
  const double sigma = sigma_max_ * (1.0 - rng.uniform());  // (0, sigma_max]
  return gen_thermal(ThermalNoiseSpec{sigma}, shape, seed_,
                     idx_label("noise", purpose, index, "gauss"));
}

PooledNoiseSource::PooledNoiseSource(std::vector<Sinogram> pool, RngSeed seed)
    : pool_(std::move(pool)), seed_(seed) {
  if (pool_.empty()) throw DataError("pooled noise source: empty pool");
}

Sinogram PooledNoiseSource::draw(std::string_view purpose, std::uint64_t index,
                                 const SinogramShape& shape) const {
  Rng rng(seed_, idx_label("noise", purpose, index, "pick"));
  const Sinogram& pick = pool_[rng.below(pool_.size())];
  if (pick.n_transducers != shape.n_transducers || pick.n_samples != shape.n_samples)
    throw DataError("pooled noise source: pool shape does not match corpus");
  return pick;
}

DenoiserModel train_denoiser(const DenoiserArch& arch,
                             const std::vector<Sinogram>& corpus_oa,
                             const NoiseSource& noise, const TrainConfig& cfg,
                             std::vector<DenoisePair> val_pairs,
                             std::vector<EpochLog>* log,
                             const EpochCallback& on_epoch) {
  arch.validate();
  cfg.validate();
  if (corpus_oa.empty()) throw DataError("train: empty corpus");
  const SinogramShape shape{corpus_oa[0].n_transducers, corpus_oa[0].n_samples,
                            corpus_oa[0].sample_rate_hz};
  for (const auto& s : corpus_oa)
    if (s.n_transducers != shape.n_transducers || s.n_samples != shape.n_samples)
      throw DataError("train: corpus shapes are not uniform");

  // Carve a frozen validation split when no explicit pairs were provided.
  std::vector<const Sinogram*> train_set;
  if (val_pairs.empty() && cfg.validation_fraction > 0.0 && corpus_oa.size() > 1) {
    Rng rng(cfg.seed, "val/split");
    auto order = rng.permutation(corpus_oa.size());
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(cfg.validation_fraction * static_cast<double>(corpus_oa.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, corpus_oa.size() - 1);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Sinogram& oa = corpus_oa[order[k]];
      if (k < order.size() - n_val) {
        train_set.push_back(&oa);
      } else {
        DenoisePair pair;
        pair.noise = noise.draw("valfreeze", k, shape);
        pair.noisy = oa;
        for (std::size_t i = 0; i < pair.noisy.size(); ++i)
          pair.noisy.data[i] += pair.noise.data[i];
        val_pairs.push_back(std::move(pair));
      }
    }
  } else {
    for (const auto& s : corpus_oa) train_set.push_back(&s);
  }
  if (val_pairs.empty())
    throw DataError("train: no validation pairs (set validation_fraction > 0)");

  DenoiserModel model = init_model(arch, cfg.seed, cfg.input_scale);
  const auto layout = build_param_layout(arch);
  UNetRuntime<float> net(arch, static_cast<int>(shape.n_transducers),
                         static_cast<int>(shape.n_samples), true);
  std::vector<float> grads(model.params.size(), 0.0f);
  AdamOpt<float> adam(layout, model.params.size(), cfg.beta1, cfg.beta2,
                      cfg.adam_eps);
  Tensor<float> target;
  target.resize(1, static_cast<int>(shape.n_transducers),
                static_cast<int>(shape.n_samples));

  std::vector<float> best_params = model.params;
  double best_val = std::numeric_limits<double>::infinity();
  std::uint32_t best_epoch = 0;
  std::uint64_t global_step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    if (cfg.decay_epochs > 0 && epoch >= cfg.epochs - cfg.decay_epochs)
      lr = cfg.lr * static_cast<double>(cfg.epochs - epoch) /
           static_cast<double>(cfg.decay_epochs);

    Rng shuffle_rng(cfg.seed, "train/shuffle/" + std::to_string(epoch));
    const auto order = shuffle_rng.permutation(train_set.size());
    double train_loss = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k, ++global_step) {
      const Sinogram& oa = *train_set[order[k]];
      Sinogram n = noise.draw("train", global_step, shape);
      Sinogram noisy = oa;
      for (std::size_t i = 0; i < noisy.size(); ++i) noisy.data[i] += n.data[i];
      load_input(net.input(), noisy, cfg.input_scale);
      load_input(target, n, cfg.input_scale);
      net.forward(model.params.data(), true, true);
      const double loss = l1_loss(net.output(), target, &net.output_grad());
      if (!std::isfinite(loss))
        throw NumericError("train diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + ", step " + std::to_string(k));
      train_loss += loss;
      net.backward(model.params.data(), grads.data());
      adam.step(model.params.data(), grads.data(), lr);
    }
    train_loss /= static_cast<double>(order.size());

    double val_loss = 0.0;
    for (const auto& pair : val_pairs) {
      load_input(net.input(), pair.noisy, cfg.input_scale);
      load_input(target, pair.noise, cfg.input_scale);
      net.forward(model.params.data(), false, false);
      val_loss += l1_loss<float>(net.output(), target, nullptr);
    }
    val_loss /= static_cast<double>(val_pairs.size());
    if (!std::isfinite(val_loss))
      throw NumericError("train diverged: non-finite validation loss at epoch " +
                         std::to_string(epoch));
    if (val_loss < best_val) {
      best_val = val_loss;
      best_params = model.params;
      best_epoch = static_cast<std::uint32_t>(epoch);
    }
    const EpochLog entry{epoch, train_loss, val_loss, lr};
    if (log) log->push_back(entry);
    if (on_epoch) on_epoch(entry);
  }

  model.params = std::move(best_params);
  model.config_hash = cfg.config_hash;
  model.best_epoch = best_epoch;
  model.val_loss = best_val;
  return model;
}

double gradient_check(const DenoiserModel& m, const Sinogram& s,
                      const Sinogram& target, double fd_step) {
  const auto layout = build_param_layout(m.arch);
  std::size_t n_trainable = 0;
  for (const auto& t : layout)
    if (t.trainable) n_trainable += t.count;
  if (n_trainable > 10000)
    throw DataError("gradient_check: model too large (" +
                    std::to_string(n_trainable) + " trainable parameters)");
  check_input_shape(m, s);
  if (!s.same_shape(target)) throw DataError("gradient_check: shape mismatch");

  UNetRuntime<double> net(m.arch, static_cast<int>(s.n_transducers),
                          static_cast<int>(s.n_samples), true);
  std::vector<double> params(m.params.begin(), m.params.end());
  Tensor<double> tgt;
  tgt.resize(1, static_cast<int>(s.n_transducers), static_cast<int>(s.n_samples));
  load_input(net.input(), s, m.input_scale);
  load_input(tgt, target, m.input_scale);

  // Analytic gradients (training-mode statistics, frozen running estimates).
  net.forward(params.data(), true, false);
  l1_loss(net.output(), tgt, &net.output_grad());
  std::vector<double> grads(params.size(), 0.0);
  net.backward(params.data(), grads.data());

  auto loss_at = [&](std::vector<double>& p) {
    net.forward(p.data(), true, false);
    return l1_loss<double>(net.output(), tgt, nullptr);
  };

  double max_rel = 0.0;
  for (const auto& t : layout) {
    if (!t.trainable) continue;
    for (std::size_t i = t.offset; i < t.offset + t.count; ++i) {
      const double saved = params[i];
      params[i] = saved + fd_step;
      const double lp = loss_at(params);
      params[i] = saved - fd_step;
      const double lm = loss_at(params);
      params[i] = saved;
      const double fd = (lp - lm) / (2.0 * fd_step);
      const double rel = std::abs(grads[i] - fd) /
                         std::max({std::abs(grads[i]), std::abs(fd), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

std::vector<double> adam_reference_step(const DenoiserModel& m, const Sinogram& s,
                                        const Sinogram& target,
                                        const TrainConfig& cfg) {
  check_input_shape(m, s);
  UNetRuntime<double> net(m.arch, static_cast<int>(s.n_transducers),
                          static_cast<int>(s.n_samples), true);
  std::vector<double> params(m.params.begin(), m.params.end());
  Tensor<double> tgt;
  tgt.resize(1, static_cast<int>(s.n_transducers), static_cast<int>(s.n_samples));
  load_input(net.input(), s, cfg.input_scale);
  load_input(tgt, target, cfg.input_scale);
  net.forward(params.data(), true, false);
  l1_loss(net.output(), tgt, &net.output_grad());
  std::vector<double> grads(params.size(), 0.0);
  net.backward(params.data(), grads.data());
  AdamOpt<double> adam(build_param_layout(m.arch), params.size(), cfg.beta1,
                       cfg.beta2, cfg.adam_eps);
  adam.step(params.data(), grads.data(), cfg.lr);
  return params;
}

namespace {

template <typename T>
void put_bin(std::string& buf, T v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take_bin(const std::string& buf, std::size_t& off, const std::string& path) {
  if (off + sizeof(T) > buf.size()) throw DataError("truncated model file: " + path);
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_model(const DenoiserModel& m, const std::filesystem::path& path) {
  const auto layout = build_param_layout(m.arch);
  const std::size_t expected = layout.back().offset + layout.back().count;
  if (m.params.size() != expected)
    throw DataError("save_model: weight count " + std::to_string(m.params.size()) +
                    " does not match arch (" + std::to_string(expected) + ")");
  std::string buf;
  buf.append("OAML", 4);
  put_bin<std::uint16_t>(buf, 1);
  put_bin<std::uint32_t>(buf, static_cast<std::uint32_t>(m.arch.levels));
  put_bin<std::uint32_t>(buf, static_cast<std::uint32_t>(m.arch.base_channels));
  put_bin<double>(buf, m.input_scale);
  put_bin<std::uint64_t>(buf, m.config_hash);
  put_bin<std::uint32_t>(buf, m.best_epoch);
  put_bin<double>(buf, m.val_loss);
  put_bin<std::uint32_t>(buf, static_cast<std::uint32_t>(layout.size()));
  for (const auto& t : layout) {
    put_bin<std::uint16_t>(buf, static_cast<std::uint16_t>(t.name.size()));
    buf.append(t.name);
    put_bin<std::uint8_t>(buf, t.trainable ? 1 : 0);
    put_bin<std::uint32_t>(buf, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_bin<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
  }
  put_bin<std::uint64_t>(buf, static_cast<std::uint64_t>(m.params.size()));
  buf.append(reinterpret_cast<const char*>(m.params.data()),
             sizeof(float) * m.params.size());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f.good()) throw DataError("write failure: " + path.string());
}

DenoiserModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  const std::string pstr = path.string();
  if (buf.size() < 4 || buf.compare(0, 4, "OAML") != 0)
    throw DataError("bad magic (expected OAML): " + pstr);
  std::size_t off = 4;
  if (take_bin<std::uint16_t>(buf, off, pstr) != 1)
    throw DataError("unsupported OAML version: " + pstr);
  DenoiserModel m;
  m.arch.levels = static_cast<int>(take_bin<std::uint32_t>(buf, off, pstr));
  m.arch.base_channels = static_cast<int>(take_bin<std::uint32_t>(buf, off, pstr));
  m.input_scale = take_bin<double>(buf, off, pstr);
  m.config_hash = take_bin<std::uint64_t>(buf, off, pstr);
  m.best_epoch = take_bin<std::uint32_t>(buf, off, pstr);
  m.val_loss = take_bin<double>(buf, off, pstr);
  const auto n_tensors = take_bin<std::uint32_t>(buf, off, pstr);
  const auto layout = build_param_layout(m.arch);
  if (n_tensors != layout.size())
    throw DataError("model tensor table does not match arch: " + pstr);
  for (const auto& t : layout) {
    const auto len = take_bin<std::uint16_t>(buf, off, pstr);
    if (off + len > buf.size()) throw DataError("truncated model file: " + pstr);
    const std::string name = buf.substr(off, len);
    off += len;
    const auto trainable = take_bin<std::uint8_t>(buf, off, pstr);
    const auto ndim = take_bin<std::uint32_t>(buf, off, pstr);
    std::vector<int> shape(ndim);
    for (auto& d : shape)
      d = static_cast<int>(take_bin<std::uint32_t>(buf, off, pstr));
    if (name != t.name || shape != t.shape || (trainable != 0) != t.trainable)
      throw DataError("model tensor '" + name + "' does not match arch layout: " +
                      pstr);
  }
  const auto count = take_bin<std::uint64_t>(buf, off, pstr);
  const std::size_t expected = layout.back().offset + layout.back().count;
  if (count != expected)
    throw DataError("model weight count " + std::to_string(count) +
                    " does not match arch (" + std::to_string(expected) + "): " +
                    pstr);
  if (buf.size() != off + sizeof(float) * count)
    throw DataError("truncated model payload: " + pstr);
  m.params.resize(count);
  std::memcpy(m.params.data(), buf.data() + off, sizeof(float) * count);
  for (float v : m.params)
    if (!std::isfinite(v)) throw DataError("non-finite weight in model: " + pstr);
  return m;
}

}  // namespace oadn
