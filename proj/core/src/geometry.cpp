#include "oadn/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "oadn/errors.hpp"

namespace oadn {

double ArrayGeometry::angular_step_deg() const {
  if (n_transducers == 1) return 0.0;
  if (coverage_deg == 360.0) return coverage_deg / static_cast<double>(n_transducers);
  return coverage_deg / static_cast<double>(n_transducers - 1);
}

std::vector<Point2> ArrayGeometry::transducer_positions() const {
  validate();
  const double deg2rad = std::numbers::pi / 180.0;
  const double step = angular_step_deg();
  // First transducer angle so the arc is symmetric about -y (up).
  const double span = (coverage_deg == 360.0)
                          ? step * static_cast<double>(n_transducers - 1)
                          : coverage_deg;
  const double start = -90.0 - 0.5 * span;
  std::vector<Point2> pos(n_transducers);
  for (std::size_t d = 0; d < n_transducers; ++d) {
    const double a = (start + step * static_cast<double>(d)) * deg2rad;
    pos[d].x = center.x + radius_m * std::cos(a);
    pos[d].y = center.y + radius_m * std::sin(a);
  }
  return pos;
}

void ArrayGeometry::validate(const char* context) const {
  const std::string ctx(context);
  if (n_transducers < 1) throw DataError(ctx + ": need at least one transducer");
  if (!(radius_m > 0.0)) throw DataError(ctx + ": radius must be positive");
  if (!(coverage_deg > 0.0) || coverage_deg > 360.0)
    throw DataError(ctx + ": coverage must be in (0, 360]");
  if (!(sample_rate_hz > 0.0)) throw DataError(ctx + ": sample rate must be positive");
  if (!(speed_of_sound_m_s > 0.0))
    throw DataError(ctx + ": speed of sound must be positive");
}

}  // namespace oadn
