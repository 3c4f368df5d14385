#pragma once

#include <stdexcept>

namespace lgvc::dataaug {

/// Position-transform record: the normalized spatio-temporal box a view was
/// cropped from, plus horizontal flip. This is the provenance every
/// correspondence entry is computed from.
struct CropParams {
  double t0 = 0.0, t1 = 1.0;  // temporal bounds, [0,1]
  double y0 = 0.0, y1 = 1.0;  // vertical bounds
  double x0 = 0.0, x1 = 1.0;  // horizontal bounds
  bool flip = false;
  int n_frames = 16;  // frames sampled evenly within [t0,t1)

  void validate() const {
    if (!(0.0 <= t0 && t0 < t1 && t1 <= 1.0) ||
        !(0.0 <= y0 && y0 < y1 && y1 <= 1.0) ||
        !(0.0 <= x0 && x0 < x1 && x1 <= 1.0) || n_frames < 1)
      throw std::invalid_argument("CropParams: invariant violated");
  }

  bool spatially_contains(const CropParams& inner) const {
    return inner.y0 >= y0 && inner.y1 <= y1 && inner.x0 >= x0 &&
           inner.x1 <= x1;
  }
};

/// Discrete intensity-level identifier: one bucket index per jitter axis.
struct LevelId {
  int b = 0, c = 0, s = 0, h = 0, g = 0;
  bool operator==(const LevelId&) const = default;
};

/// Photometric-transform record.
struct LowLevelParams {
  double brightness = 0.0;
  double contrast = 0.0;
  double saturation = 0.0;
  double hue = 0.0;  // in [0, 0.5]
  int blur_radius = 0;
  double blur_sigma = 0.0;
  LevelId level_id;
};

/// Discrete grid of low-level augmentation intensities. Buckets partition
/// [0, base] into equal half-open intervals per axis.
struct IntensityGrid {
  int n_bcs = 4;  // shared level count for brightness/contrast/saturation
  int n_h = 2;
  int n_g = 4;
  double base_b = 0.4, base_c = 0.4, base_s = 0.4, base_h = 0.1;
  double sigma_max = 2.0;

  long total_levels() const {
    return static_cast<long>(n_bcs) * n_bcs * n_bcs * n_h * n_g;
  }

  bool valid(const LevelId& id) const {
    return id.b >= 0 && id.b < n_bcs && id.c >= 0 && id.c < n_bcs &&
           id.s >= 0 && id.s < n_bcs && id.h >= 0 && id.h < n_h && id.g >= 0 &&
           id.g < n_g;
  }

  long flat_index(const LevelId& id) const {
    return (((static_cast<long>(id.b) * n_bcs + id.c) * n_bcs + id.s) * n_h +
            id.h) * n_g + id.g;
  }

  LevelId from_flat(long f) const {
    LevelId id;
    id.g = static_cast<int>(f % n_g);
    f /= n_g;
    id.h = static_cast<int>(f % n_h);
    f /= n_h;
    id.s = static_cast<int>(f % n_bcs);
    f /= n_bcs;
    id.c = static_cast<int>(f % n_bcs);
    f /= n_bcs;
    id.b = static_cast<int>(f);
    return id;
  }
};

}  // namespace lgvc::dataaug
