#include "oadn/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "oadn/errors.hpp"

namespace oadn {

namespace {

void stamp_disk(ImageGrid& img, double cx, double cy, double radius, double amp,
                std::vector<bool>* hit) {
  const auto x0 = static_cast<std::int64_t>(std::floor(cx - radius));
  const auto x1 = static_cast<std::int64_t>(std::ceil(cx + radius));
  const auto y0 = static_cast<std::int64_t>(std::floor(cy - radius));
  const auto y1 = static_cast<std::int64_t>(std::ceil(cy + radius));
  for (std::int64_t y = std::max<std::int64_t>(y0, 0);
       y <= std::min<std::int64_t>(y1, static_cast<std::int64_t>(img.n_y) - 1); ++y) {
    for (std::int64_t x = std::max<std::int64_t>(x0, 0);
         x <= std::min<std::int64_t>(x1, static_cast<std::int64_t>(img.n_x) - 1);
         ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      if (dx * dx + dy * dy > radius * radius) continue;
      const std::size_t i =
          static_cast<std::size_t>(y) * img.n_x + static_cast<std::size_t>(x);
      img.pixels[i] = std::max(img.pixels[i], amp);
      if (hit) (*hit)[i] = true;
    }
  }
}

void stamp_blob(ImageGrid& img, double cx, double cy, double sx, double sy,
                double amp) {
  for (std::size_t y = 0; y < img.n_y; ++y) {
    for (std::size_t x = 0; x < img.n_x; ++x) {
      const double dx = (static_cast<double>(x) - cx) / sx;
      const double dy = (static_cast<double>(y) - cy) / sy;
      const double v = amp * std::exp(-0.5 * (dx * dx + dy * dy));
      if (v > 1e-4) img.at(x, y) += v;
    }
  }
}

// Quadratic Bezier stroke stamped as overlapping disks.
void stamp_vessel(ImageGrid& img, Rng& rng, double width_px, double amp,
                  std::vector<bool>* hit) {
  const double n = static_cast<double>(img.n_x);
  const double m = static_cast<double>(img.n_y);
  const double x0 = rng.uniform(0.1, 0.9) * n, y0 = rng.uniform(0.1, 0.9) * m;
  const double x2 = rng.uniform(0.1, 0.9) * n, y2 = rng.uniform(0.1, 0.9) * m;
  const double x1 = 0.5 * (x0 + x2) + rng.uniform(-0.3, 0.3) * n;
  const double y1 = 0.5 * (y0 + y2) + rng.uniform(-0.3, 0.3) * m;
  const double approx_len = std::hypot(x2 - x0, y2 - y0) +
                            std::hypot(x1 - x0, y1 - y0) +
                            std::hypot(x2 - x1, y2 - y1);
  const auto steps = static_cast<std::size_t>(std::max(8.0, 2.0 * approx_len));
  for (std::size_t i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps);
    const double u = 1.0 - t;
    const double px = u * u * x0 + 2.0 * u * t * x1 + t * t * x2;
    const double py = u * u * y0 + 2.0 * u * t * y1 + t * t * y2;
    stamp_disk(img, px, py, 0.5 * width_px, amp, hit);
  }
}

// Chebyshev distance transform via two chamfer passes.
std::vector<int> distance_map(const std::vector<bool>& set, std::size_t nx,
                              std::size_t ny) {
  const int inf = 1 << 20;
  std::vector<int> d(nx * ny, inf);
  for (std::size_t i = 0; i < set.size(); ++i)
    if (set[i]) d[i] = 0;
  auto at = [&](std::size_t x, std::size_t y) -> int& { return d[y * nx + x]; };
  for (std::size_t y = 0; y < ny; ++y)
    for (std::size_t x = 0; x < nx; ++x) {
      int v = at(x, y);
      if (x > 0) v = std::min(v, at(x - 1, y) + 1);
      if (y > 0) {
        v = std::min(v, at(x, y - 1) + 1);
        if (x > 0) v = std::min(v, at(x - 1, y - 1) + 1);
        if (x + 1 < nx) v = std::min(v, at(x + 1, y - 1) + 1);
      }
      at(x, y) = v;
    }
  for (std::size_t yy = ny; yy-- > 0;)
    for (std::size_t xx = nx; xx-- > 0;) {
      int v = at(xx, yy);
      if (xx + 1 < nx) v = std::min(v, at(xx + 1, yy) + 1);
      if (yy + 1 < ny) {
        v = std::min(v, at(xx, yy + 1) + 1);
        if (xx + 1 < nx) v = std::min(v, at(xx + 1, yy + 1) + 1);
        if (xx > 0) v = std::min(v, at(xx - 1, yy + 1) + 1);
      }
      at(xx, yy) = v;
    }
  return d;
}

}  // namespace

ImageGrid make_feature_image(std::size_t n_x, std::size_t n_y, double extent_m,
                             RngSeed seed, std::uint64_t index) {
  Rng rng(seed, "phantom/feature/" + std::to_string(index));
  ImageGrid img(n_x, n_y, extent_m);
  const double n = static_cast<double>(n_x);
  const auto n_blobs = static_cast<std::size_t>(rng.uniform_int(2, 6));
  for (std::size_t b = 0; b < n_blobs; ++b) {
    stamp_blob(img, rng.uniform(0.1, 0.9) * n, rng.uniform(0.1, 0.9) * n,
               rng.uniform(0.03, 0.14) * n, rng.uniform(0.03, 0.14) * n,
               rng.uniform(0.25, 0.9));
  }
  const auto n_vessels = static_cast<std::size_t>(rng.uniform_int(1, 4));
  for (std::size_t v = 0; v < n_vessels; ++v)
    stamp_vessel(img, rng, rng.uniform(1.0, 3.5), rng.uniform(0.4, 1.0), nullptr);
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  return img;
}

VesselPhantom make_vessel_phantom(std::size_t n_x, std::size_t n_y, double extent_m,
                                  RngSeed seed, std::uint64_t index) {
  Rng rng(seed, "phantom/vessel/" + std::to_string(index));
  VesselPhantom ph;
  ph.p0 = ImageGrid(n_x, n_y, extent_m);
  std::vector<bool> vessel_hit(n_x * n_y, false);

  const auto n_texture = static_cast<std::size_t>(rng.uniform_int(1, 3));
  const double n = static_cast<double>(n_x);
  for (std::size_t b = 0; b < n_texture; ++b) {
    stamp_blob(ph.p0, rng.uniform(0.15, 0.85) * n, rng.uniform(0.15, 0.85) * n,
               rng.uniform(0.05, 0.18) * n, rng.uniform(0.05, 0.18) * n,
               rng.uniform(0.04, 0.12));
  }
  const auto n_vessels = static_cast<std::size_t>(rng.uniform_int(2, 4));
  for (std::size_t v = 0; v < n_vessels; ++v)
    stamp_vessel(ph.p0, rng, rng.uniform(1.5, 4.0), rng.uniform(0.7, 1.0),
                 &vessel_hit);
  for (double& v : ph.p0.pixels) v = std::clamp(v, 0.0, 1.0);

  ph.vessels.n_x = ph.background.n_x = n_x;
  ph.vessels.n_y = ph.background.n_y = n_y;
  ph.vessels.mask = vessel_hit;
  ph.background.mask.assign(n_x * n_y, false);
  const auto dist = distance_map(vessel_hit, n_x, n_y);
  const std::size_t margin = std::max<std::size_t>(4, n_x / 16);
  for (std::size_t y = margin; y + margin < n_y; ++y)
    for (std::size_t x = margin; x + margin < n_x; ++x) {
      const int d = dist[y * n_x + x];
      if (d >= 5 && d <= 14) ph.background.mask[y * n_x + x] = true;
    }
  ph.vessels.validate("vessel phantom");
  ph.background.validate("vessel phantom background");
  return ph;
}

std::vector<std::string> synthetic_chromophores() {
  return {"hb", "hbo2", "water", "lipid"};
}

std::vector<double> synthetic_spectrum(const std::string& name,
                                       const std::vector<double>& wl) {
  std::vector<double> s(wl.size());
  for (std::size_t i = 0; i < wl.size(); ++i) {
    const double l = wl[i];
    double v;
    if (name == "hb") {
      v = 0.9 * std::exp(-(l - 700.0) / 140.0) +
          0.45 * std::exp(-std::pow((l - 757.0) / 22.0, 2.0));
    } else if (name == "hbo2") {
      v = 0.3 + 0.6 / (1.0 + std::exp(-(l - 810.0) / 45.0));
    } else if (name == "water") {
      v = 0.06 + 0.9 * std::exp(-std::pow((l - 975.0) / 42.0, 2.0));
    } else if (name == "lipid") {
      v = 0.08 + 0.85 * std::exp(-std::pow((l - 930.0) / 18.0, 2.0));
    } else {
      throw DataError("unknown synthetic chromophore: " + name);
    }
    s[i] = v;
  }
  const double mx = *std::max_element(s.begin(), s.end());
  for (double& v : s) v /= mx;
  return s;
}

ImageStack build_multispectral_p0(const std::vector<SpectralComponent>& components,
                                  const std::vector<double>& wavelengths_nm) {
  if (components.empty()) throw DataError("build_multispectral_p0: no components");
  ImageStack stack;
  stack.wavelengths_nm = wavelengths_nm;
  const auto& base = components[0].map;
  for (std::size_t c = 0; c < components.size(); ++c) {
    if (!components[c].map.same_shape(base))
      throw DataError("build_multispectral_p0: component map shapes differ");
    if (components[c].spectrum.size() != wavelengths_nm.size())
      throw DataError("build_multispectral_p0: spectrum length mismatch");
  }
  for (std::size_t i = 0; i < wavelengths_nm.size(); ++i) {
    ImageGrid img(base.n_x, base.n_y, base.extent_m);
    for (const auto& comp : components)
      for (std::size_t p = 0; p < img.size(); ++p)
        img.pixels[p] += comp.map.pixels[p] * comp.spectrum[i];
    stack.images.push_back(std::move(img));
  }
  return stack;
}

MultispectralPhantom make_multispectral_phantom(
    std::size_t n_x, std::size_t n_y, double extent_m,
    const std::vector<double>& wavelengths_nm, RngSeed seed, std::uint64_t index) {
  MultispectralPhantom mp;
  VesselPhantom ph = make_vessel_phantom(n_x, n_y, extent_m, seed, index);
  mp.vessels = ph.vessels;
  mp.background = ph.background;

  Rng rng(seed, "phantom/spectral/" + std::to_string(index));
  // Vessel pixels split between the two hemoglobin-like spectra; the faint
  // texture carries the water/lipid-like spectra.
  ImageGrid hb_map(n_x, n_y, extent_m), hbo2_map(n_x, n_y, extent_m);
  ImageGrid tex_a(n_x, n_y, extent_m), tex_b(n_x, n_y, extent_m);
  const double mix = rng.uniform(0.3, 0.7);
  for (std::size_t i = 0; i < ph.p0.size(); ++i) {
    if (ph.vessels.mask[i]) {
      hb_map.pixels[i] = mix * ph.p0.pixels[i];
      hbo2_map.pixels[i] = (1.0 - mix) * ph.p0.pixels[i];
    } else {
      tex_a.pixels[i] = 0.5 * ph.p0.pixels[i];
      tex_b.pixels[i] = 0.5 * ph.p0.pixels[i];
    }
  }
  mp.components.push_back(
      {std::move(hb_map), synthetic_spectrum("hb", wavelengths_nm), "hb"});
  mp.components.push_back(
      {std::move(hbo2_map), synthetic_spectrum("hbo2", wavelengths_nm), "hbo2"});
  mp.components.push_back(
      {std::move(tex_a), synthetic_spectrum("water", wavelengths_nm), "water"});
  mp.components.push_back(
      {std::move(tex_b), synthetic_spectrum("lipid", wavelengths_nm), "lipid"});
  mp.p0_stack = build_multispectral_p0(mp.components, wavelengths_nm);
  return mp;
}

}  // namespace oadn
