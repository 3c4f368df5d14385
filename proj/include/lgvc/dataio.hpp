#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lgvc/core/rng.hpp"
#include "lgvc/core/tensor.hpp"

namespace lgvc::dataio {

struct Video {
  core::Tensor frames;  // (T, H, W, 3), values in [0,1]
  double fps = 25.0;
  std::string id;
  int label = -1;  // optional class; evaluation only, never pretraining
  int background_index = -1;
  std::string motion_kind;
  // Sprite trajectory (normalized per-frame centers) kept for foreground
  // attribution audits; empty for ingested real data.
  std::vector<std::array<double, 2>> sprite_centers;  // (cy, cx)
  double sprite_half = 0.0;  // normalized half-extent

  int t() const { return frames.dim(0); }
  int h() const { return frames.dim(1); }
  int w() const { return frames.dim(2); }
};

/// Label-stripped view handed to pretraining code paths, so class labels are
/// unreachable there by construction.
struct PretrainView {
  const core::Tensor* frames = nullptr;
  std::string id;
  int t = 0;

  static std::vector<PretrainView> strip(const std::vector<Video>& vids) {
    std::vector<PretrainView> out;
    out.reserve(vids.size());
    for (const auto& v : vids) out.push_back({&v.frames, v.id, v.t()});
    return out;
  }
};

struct SyntheticSpec {
  int num_classes = 4;
  int videos_per_class = 50;
  int t = 32, h = 64, w = 64;
  int background_pool = 8;
  std::vector<std::string> motion_kinds = {"linear_left", "linear_right",
                                           "circular", "two_phase"};

  void validate() const;
};

/// Deterministic synthetic motion dataset: classes differ only in sprite
/// trajectory; backgrounds are static textures drawn independently of class.
std::vector<Video> generate_synthetic(const SyntheticSpec& spec,
                                      std::uint64_t seed);

/// Persists a dataset as per-video folders of PNG frame stacks plus a JSON
/// manifest (id, label, background index, motion kind, sprite trajectory).
void save_dataset(const std::vector<Video>& videos, const std::string& dir,
                  std::uint64_t seed);

/// Loads a dataset directory written by save_dataset (attaches manifest
/// metadata). Frames are resized to (h, w) when requested (0 keeps native).
std::vector<Video> load_dataset(const std::string& dir, int h = 0, int w = 0);

/// Generic ingestion: per-video subfolders of ordered frame images. Frames
/// resized to (h, w), values normalized to [0,1]. Unreadable entries raise an
/// error naming the offending file.
std::vector<Video> load_clip_folder(const std::string& path, int h, int w);

/// Binary sprite mask (H,W) of `video` at `frame`; requires trajectory data.
core::Tensor sprite_mask(const Video& video, int frame);

}  // namespace lgvc::dataio
