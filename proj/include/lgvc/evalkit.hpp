#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "lgvc/dataio.hpp"
#include "lgvc/encoder.hpp"

namespace lgvc::evalkit {

struct ProbeResult {
  double top1 = 0.0;
  std::vector<double> per_class;
  std::uint64_t config_hash = 0;
};

struct RetrievalResult {
  std::map<int, double> r_at_k;  // k -> recall
  int n_query = 0, n_gallery = 0;
};

/// Mean of 10 uniformly spaced, center-cropped clip features (pooled clip-mode
/// output, pre-projection). Videos shorter than the clip length loop with a
/// warning.
core::Tensor extract_video_feature(const encoder::Encoder& enc,
                                   const dataio::Video& video);

/// Single linear layer trained on frozen features (full-batch Adam); top-1 on
/// the test split. Every class must appear in the train split.
ProbeResult linear_probe(const std::vector<core::Tensor>& train_x,
                         const std::vector<int>& train_y,
                         const std::vector<core::Tensor>& test_x,
                         const std::vector<int>& test_y,
                         std::uint64_t seed = 0);

/// Cosine nearest-neighbor retrieval; R@k = fraction of queries with a
/// same-class gallery item among the top k.
RetrievalResult retrieve(const std::vector<core::Tensor>& query,
                         const std::vector<int>& query_labels,
                         const std::vector<core::Tensor>& gallery,
                         const std::vector<int>& gallery_labels,
                         const std::vector<int>& ks = {1, 5, 10, 20});

struct CaamResult {
  std::vector<core::Tensor> heatmaps;  // one (H, W) map per source frame
  double foreground_score = 0.0;
};

/// Channel-summed last-stage activation (T_f, h, w), min-max normalized over
/// the stack, bilinearly upsampled to (t, h_px, w_px) frames. A constant
/// activation maps to all-0.5.
std::vector<core::Tensor> upsample_heatmaps(const core::Tensor& activation,
                                            int t, int h_px, int w_px);

/// Mean heatmap value inside the sprite mask / mean outside (floored 1e-6).
double foreground_score(const std::vector<core::Tensor>& heatmaps,
                        const dataio::Video& video);

/// Class-agnostic activation map audit on a synthetic video with masks.
CaamResult caam(const encoder::Encoder& enc, const dataio::Video& video);

}  // namespace lgvc::evalkit
