#include "oadn/metrics.hpp"

#include <cmath>
#include <string>

#include "oadn/errors.hpp"

namespace oadn {

ChannelMask ChannelMask::all(std::size_t n) {
  ChannelMask m;
  m.included.assign(n, true);
  return m;
}

ChannelMask ChannelMask::excluding(std::size_t n,
                                   const std::vector<std::size_t>& skip) {
  ChannelMask m = all(n);
  for (std::size_t d : skip) {
    if (d >= n) throw DataError("channel mask: index out of range");
    m.included[d] = false;
  }
  return m;
}

std::size_t ChannelMask::count_included(std::size_t n) const {
  if (included.empty()) return n;
  std::size_t c = 0;
  for (std::size_t d = 0; d < n; ++d)
    if (included[d]) ++c;
  return c;
}

void ChannelMask::validate(std::size_t n_transducers) const {
  if (included.empty()) return;
  if (included.size() != n_transducers)
    throw DataError("channel mask: size does not match sinogram");
  if (count_included(n_transducers) == 0)
    throw DataError("channel mask: at least one channel must be included");
}

bool RoiMask::empty_region() const {
  for (bool b : mask)
    if (b) return false;
  return true;
}

void RoiMask::validate(const char* context) const {
  const std::string ctx(context);
  if (mask.size() != n_x * n_y) throw DataError(ctx + ": mask size mismatch");
  if (empty_region()) throw DataError(ctx + ": empty ROI");
}

double power(const Sinogram& s, const ChannelMask& mask) {
  mask.validate(s.n_transducers);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t d = 0; d < s.n_transducers; ++d) {
    if (!mask.includes(d)) continue;
    const double* row = s.channel(d);
    for (std::size_t t = 0; t < s.n_samples; ++t) acc += row[t] * row[t];
    n += s.n_samples;
  }
  return acc / static_cast<double>(n);
}

double snr_db(const Sinogram& s, const Sinogram& s_noise,
              const Sinogram& s_noise_hat, const ChannelMask& mask) {
  if (!s.same_shape(s_noise) || !s.same_shape(s_noise_hat))
    throw DataError("snr: shape mismatch");
  mask.validate(s.n_transducers);
  double num = 0.0, den = 0.0;
  std::size_t n = 0;
  for (std::size_t d = 0; d < s.n_transducers; ++d) {
    if (!mask.includes(d)) continue;
    const double* a = s.channel(d);
    const double* gn = s_noise.channel(d);
    const double* hn = s_noise_hat.channel(d);
    for (std::size_t t = 0; t < s.n_samples; ++t) {
      const double sig = a[t] - gn[t];
      const double res = gn[t] - hn[t];
      num += sig * sig;
      den += res * res;
    }
    n += s.n_samples;
  }
  num /= static_cast<double>(n);
  den /= static_cast<double>(n);
  if (den == 0.0) return kSnrPerfect;
  return 10.0 * std::log10(num / den);
}

std::vector<double> estimate_noise_floor(const std::vector<Sinogram>& stack,
                                         std::size_t window_samples,
                                         const ChannelMask& mask) {
  if (stack.empty()) throw DataError("estimate_noise_floor: empty stack");
  const std::size_t n_d = stack[0].n_transducers;
  const std::size_t n_t = stack[0].n_samples;
  if (window_samples < 1 || window_samples > n_t)
    throw DataError("estimate_noise_floor: window out of range");
  mask.validate(n_d);
  for (const auto& s : stack)
    if (!s.same_shape(stack[0]))
      throw DataError("estimate_noise_floor: mixed shapes in stack");
  std::vector<double> floor(n_d, 0.0);
  for (std::size_t d = 0; d < n_d; ++d) {
    double acc = 0.0;
    for (const auto& s : stack) {
      const double* row = s.channel(d);
      for (std::size_t t = 0; t < window_samples; ++t) acc += std::abs(row[t]);
    }
    floor[d] = acc / static_cast<double>(stack.size() * window_samples);
  }
  return floor;
}

SnrMeanResult snr_mean(const std::vector<Sinogram>& stack,
                       const std::vector<Sinogram>& denoised_stack,
                       std::size_t window_samples, std::size_t crop_samples,
                       const ChannelMask& mask, SnrMeanMode mode) {
  if (stack.empty()) throw DataError("snr_mean: empty stack");
  if (stack.size() != denoised_stack.size())
    throw DataError("snr_mean: stack sizes differ");
  const std::size_t n_d = stack[0].n_transducers;
  const std::size_t n_t = stack[0].n_samples;
  if (crop_samples < 1 || crop_samples > n_t)
    throw DataError("snr_mean: crop out of range");
  mask.validate(n_d);
  for (std::size_t i = 0; i < stack.size(); ++i)
    if (!stack[i].same_shape(stack[0]) || !denoised_stack[i].same_shape(stack[0]))
      throw DataError("snr_mean: mixed shapes");

  // <|s|> and <|s'_noise|> fields (means over scans), noise floor per d.
  const double inv_n = 1.0 / static_cast<double>(stack.size());
  std::vector<double> mean_abs_s(n_d * crop_samples, 0.0);
  std::vector<double> mean_abs_inferred(n_d * crop_samples, 0.0);
  for (std::size_t i = 0; i < stack.size(); ++i) {
    for (std::size_t d = 0; d < n_d; ++d) {
      const double* a = stack[i].channel(d);
      const double* den = denoised_stack[i].channel(d);
      double* ms = mean_abs_s.data() + d * crop_samples;
      double* mi = mean_abs_inferred.data() + d * crop_samples;
      for (std::size_t t = 0; t < crop_samples; ++t) {
        ms[t] += std::abs(a[t]) * inv_n;
        mi[t] += std::abs(a[t] - den[t]) * inv_n;
      }
    }
  }
  const std::vector<double> floor = estimate_noise_floor(stack, window_samples, mask);

  auto ratio_db = [](double num, double den) {
    return den == 0.0 ? kSnrPerfect : 10.0 * std::log10(num / den);
  };

  SnrMeanResult out;
  auto accumulate = [&](auto&& want) {
    // want(d, t) selects which cells enter one power pair.
    double num = 0.0, den = 0.0;
    std::size_t n = 0;
    for (std::size_t d = 0; d < n_d; ++d) {
      if (!mask.includes(d)) continue;
      const double* ms = mean_abs_s.data() + d * crop_samples;
      const double* mi = mean_abs_inferred.data() + d * crop_samples;
      for (std::size_t t = 0; t < crop_samples; ++t) {
        if (!want(d, t)) continue;
        const double sig = ms[t] - floor[d];
        const double res = floor[d] - mi[t];
        num += sig * sig;
        den += res * res;
        ++n;
      }
    }
    return ratio_db(num / static_cast<double>(n), den / static_cast<double>(n));
  };

  switch (mode) {
    case SnrMeanMode::whole: {
      const double v = accumulate([](std::size_t, std::size_t) { return true; });
      out.values.push_back(v);
      out.index.push_back(0);
      if (std::isinf(v)) ++out.infinite_count;
      break;
    }
    case SnrMeanMode::per_time_sample: {
      for (std::size_t t0 = 0; t0 < crop_samples; ++t0) {
        const double v =
            accumulate([t0](std::size_t, std::size_t t) { return t == t0; });
        out.values.push_back(v);
        out.index.push_back(t0);
        if (std::isinf(v)) ++out.infinite_count;
      }
      break;
    }
    case SnrMeanMode::per_transducer: {
      for (std::size_t d0 = 0; d0 < n_d; ++d0) {
        if (!mask.includes(d0)) continue;  // excluded channel absent
        const double v =
            accumulate([d0](std::size_t d, std::size_t) { return d == d0; });
        out.values.push_back(v);
        out.index.push_back(d0);
        if (std::isinf(v)) ++out.infinite_count;
      }
      break;
    }
  }
  return out;
}

double contrast_resolution(const ImageGrid& img, const RoiMask& vessels,
                           const RoiMask& background) {
  vessels.validate("contrast_resolution vessels");
  background.validate("contrast_resolution background");
  if (vessels.n_x != img.n_x || vessels.n_y != img.n_y ||
      background.n_x != img.n_x || background.n_y != img.n_y)
    throw DataError("contrast_resolution: mask shape mismatch");
  double iv = 0.0, ib = 0.0;
  std::size_t nv = 0, nb = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (vessels.mask[i]) {
      if (background.mask[i])
        throw DataError("contrast_resolution: masks overlap");
      iv += img.pixels[i];
      ++nv;
    } else if (background.mask[i]) {
      ib += img.pixels[i];
      ++nb;
    }
  }
  iv /= static_cast<double>(nv);
  ib /= static_cast<double>(nb);
  const double denom = iv + ib;
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (iv - ib) / denom;
}

}  // namespace oadn
