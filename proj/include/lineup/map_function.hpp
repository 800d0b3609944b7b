#pragma once

// Carter-Falconer map function: m(r) = [atanh(2r) + atan(2r)] / 4 (Morgans).

#include <cmath>
#include <stdexcept>
#include <string>

namespace lineup {

// Map distance in Morgans for a recombination fraction r in [0, 0.5).
inline double cf_map_distance(double r) {
  if (!(r >= 0.0 && r < 0.5)) {
    throw std::domain_error("recombination fraction " + std::to_string(r) + " outside [0, 0.5)");
  }
  return 0.25 * (std::atanh(2.0 * r) + std::atan(2.0 * r));
}

// Inverse of cf_map_distance. No closed form exists, so this runs Newton steps
// safeguarded by a bisection bracket. Large distances saturate just below 0.5.
inline double cf_rec_fraction(double d_morgans) {
  if (std::isnan(d_morgans)) throw std::domain_error("map distance is NaN");
  if (d_morgans <= 0.0) return 0.0;

  constexpr double kTop = 0.5;
  double lo = 0.0;
  double hi = std::nextafter(kTop, 0.0);
  if (cf_map_distance(hi) <= d_morgans) return hi;

  // Haldane gives a decent starting point.
  double r = 0.5 * (1.0 - std::exp(-2.0 * d_morgans));
  if (!(r > lo && r < hi)) r = 0.5 * (lo + hi);

  for (int iter = 0; iter < 200; ++iter) {
    const double f = cf_map_distance(r) - d_morgans;
    if (std::fabs(f) < 1e-13) return r;
    if (f > 0.0)
      hi = r;
    else
      lo = r;
    const double x = 2.0 * r;
    const double deriv = 0.5 * (1.0 / (1.0 - x * x) + 1.0 / (1.0 + x * x));
    double next = r - f / deriv;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == r || hi - lo <= 0.0) return r;
    r = next;
  }
  return r;
}

}  // namespace lineup
