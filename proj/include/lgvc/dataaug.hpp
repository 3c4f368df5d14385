#pragma once

#include <optional>

#include "lgvc/augparams.hpp"
#include "lgvc/core/rng.hpp"
#include "lgvc/core/tensor.hpp"

namespace lgvc::dataaug {

struct AugmentConfig {
  double weak_min = 0.9;        // min side fraction of the global spatial crop
  double local_area_min = 0.3;  // local box area as a fraction of global area
  double local_area_max = 0.8;
  int clip_frames = 16;
  IntensityGrid grid;
};

/// Global view: full temporal span with sparse frame sampling, weak spatial
/// crop (each side >= weak_min), flip with p = 0.5.
CropParams sample_global_crop(int video_t, double weak_min, core::Rng& rng,
                              int clip_frames = 16);

/// Local clip k of K: center timestamp constrained to [(k-1)/K, k/K]
/// (1-based k), spatial box inside the global box with area ratio in
/// [area_min, area_max]. Infeasible temporal constraints clamp with a warning.
CropParams sample_local_crop(int k, int big_k, const CropParams& global,
                             int clip_frames, int video_t, double area_min,
                             double area_max, core::Rng& rng);

/// Draws photometric parameters. If `level` is given its buckets are used,
/// otherwise a level is drawn uniformly first.
LowLevelParams sample_lowlevel(const IntensityGrid& grid,
                               const std::optional<LevelId>& level,
                               core::Rng& rng);

/// Crops frames (T,H,W,3) to a clip tensor (3,t_out,h_out,w_out):
/// t_out frames evenly spaced in [t0,t1), spatial crop + bilinear resize,
/// horizontal mirror applied last when p.flip.
core::Tensor apply_crop(const core::Tensor& frames, const CropParams& p,
                        int t_out, int h_out, int w_out);

/// Concrete per-clip photometric factors: magnitudes from a LowLevelParams
/// record, deviation directions drawn once per clip.
struct PhotometricFactors {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue_angle = 0.0;  // radians
  double blur_sigma = 0.0;
  int blur_radius = 0;
};

PhotometricFactors resolve_factors(const LowLevelParams& p, core::Rng& rng);

/// Photometric transform on a clip (3,T,H,W) in [0,1]. Jitter factors are
/// sampled once per clip (temporally consistent); output clamped to [0,1].
core::Tensor apply_lowlevel(const core::Tensor& clip, const LowLevelParams& p,
                            core::Rng& rng);

/// Deterministic application of already-resolved factors.
core::Tensor apply_lowlevel_factors(const core::Tensor& clip,
                                    const PhotometricFactors& f);

}  // namespace lgvc::dataaug
