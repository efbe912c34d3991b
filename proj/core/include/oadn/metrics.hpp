#pragma once

#include <limits>
#include <vector>

#include "oadn/image.hpp"
#include "oadn/sinogram.hpp"

namespace oadn {

// Per-transducer inclusion flags (defective channels excluded from powers).
struct ChannelMask {
  std::vector<bool> included;  // empty = all channels included

  static ChannelMask all(std::size_t n);
  static ChannelMask excluding(std::size_t n, const std::vector<std::size_t>& skip);
  bool includes(std::size_t d) const {
    return included.empty() || included[d];
  }
  std::size_t count_included(std::size_t n) const;
  void validate(std::size_t n_transducers) const;
};

// Pixel region over an image grid (vessel or background ROI).
struct RoiMask {
  std::size_t n_x = 0, n_y = 0;
  std::vector<bool> mask;

  bool empty_region() const;
  void validate(const char* context) const;
};

// Mean of squared samples over included channels and all time samples.
double power(const Sinogram& s, const ChannelMask& mask);

// Zero-denominator results are reported as +infinity ("perfect denoising");
// callers exclude them from means with a count.
inline constexpr double kSnrPerfect = std::numeric_limits<double>::infinity();

// 10 log10( P(s - s_noise) / P(s_noise - s_noise_hat) ) dB. Pass an all-zero
// s_noise_hat for the before-denoising value.
double snr_db(const Sinogram& s, const Sinogram& s_noise,
              const Sinogram& s_noise_hat, const ChannelMask& mask);

// Per-transducer noise amplitude estimated from the first window samples
// averaged over scans; constant over time by assumption.
std::vector<double> estimate_noise_floor(const std::vector<Sinogram>& stack,
                                         std::size_t window_samples = 100,
                                         const ChannelMask& mask = {});

enum class SnrMeanMode { whole, per_time_sample, per_transducer };

struct SnrMeanResult {
  // whole: values has exactly one entry; per_time_sample: one per cropped
  // sample; per_transducer: one per included channel (index recorded).
  std::vector<double> values;
  std::vector<std::size_t> index;  // time index or transducer id
  std::size_t infinite_count = 0;
};

// Mean-amplitude SNR for in-vivo style stacks: numerator field
// <|s|> - <|s_noise|>, denominator field <|s_noise|> - <|s'_noise|>, with
// <|s_noise|> from estimate_noise_floor and <|s'_noise|> the mean absolute
// inferred noise (noisy minus denoised). Sinograms are cropped to the first
// crop_samples samples; the channel mask applies before all powers.
SnrMeanResult snr_mean(const std::vector<Sinogram>& stack,
                       const std::vector<Sinogram>& denoised_stack,
                       std::size_t window_samples, std::size_t crop_samples,
                       const ChannelMask& mask, SnrMeanMode mode);

// (I_vessels - I_background) / (I_vessels + I_background); NaN when the
// denominator is zero (undefined sentinel).
double contrast_resolution(const ImageGrid& img, const RoiMask& vessels,
                           const RoiMask& background);

}  // namespace oadn
