#pragma once

#include <cstddef>
#include <vector>

namespace oadn {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Circular transducer arc. Coordinates follow the image convention:
// x to the right, y downward, so the probe (negative y) sits above the FOV.
struct ArrayGeometry {
  std::size_t n_transducers = 0;
  double radius_m = 0.0;
  double coverage_deg = 0.0;  // in (0, 360]
  double sample_rate_hz = 0.0;
  double speed_of_sound_m_s = 1500.0;
  Point2 center;

  // Equidistant positions on the arc, centered about the upward direction
  // (-y). For coverage 360 the spacing is coverage/n (no duplicate endpoint),
  // otherwise coverage/(n-1) spanning the full arc. Bit-exact per fields.
  std::vector<Point2> transducer_positions() const;

  double angular_step_deg() const;

  void validate(const char* context = "geometry") const;
};

}  // namespace oadn
