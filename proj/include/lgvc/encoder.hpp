#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lgvc/core/autograd.hpp"
#include "lgvc/core/rng.hpp"
#include "lgvc/core/tensor.hpp"
#include "lgvc/geometry.hpp"

namespace lgvc::encoder {

enum class Mode { kClip, kVideo };

struct EncoderConfig {
  std::vector<int> widths{16, 32, 64, 128};
  std::vector<int> blocks{1, 1, 1, 1};
  std::vector<int> clip_t_strides{2, 2, 2, 1};
  std::vector<int> video_t_strides{2, 1, 1, 1};
  std::vector<int> spatial_strides{2, 2, 2, 2};
  int stem_t_stride = 1, stem_s_stride = 1;
  int proj_dim = 64;
  int in_t = 16, in_h = 64, in_w = 64;
  bool share_weights = true;  // unshared f/f' kept for ablation only

  void validate() const;
  std::string to_json() const;
  static EncoderConfig from_json(const std::string& s);
  std::uint64_t hash() const;
};

struct FeatureMap {
  core::Var values;  // (C, T_f, H, W)
  geometry::GridShape grid;
  Mode mode = Mode::kClip;
};

/// Small 3D residual encoder with two stride modes over one parameter set.
/// Clip mode f uses clip_t_strides, video mode f' uses video_t_strides;
/// spatial strides are common. All graph-building methods are const: the
/// graph hangs off the shared parameter nodes.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, core::Rng& rng);

  FeatureMap encode(const core::Tensor& clip, Mode mode) const;
  FeatureMap encode(const core::Var& clip, Mode mode) const;

  /// Global average over the grid; optional L2 normalization.
  static core::Var pool(const FeatureMap& fm, bool unit_norm = false);

  /// 2-layer projection head, shared across modes and grid cells.
  core::Var project(const core::Var& v) const;

  /// Announced output grid for the configured input size.
  geometry::GridShape grid_shape(Mode mode) const;

  const EncoderConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, core::Var>>& params() { return params_; }
  const std::vector<std::pair<std::string, core::Var>>& params() const {
    return params_;
  }
  void zero_grad();

  /// Checkpoint = config json + config hash + named parameter values.
  /// Loading with a config whose hash differs throws unless force, in which
  /// case the checkpoint's own config wins.
  void save(const std::string& path) const;
  static Encoder load(const std::string& path, const EncoderConfig& expected,
                      bool force = false);

 private:
  explicit Encoder(const EncoderConfig& cfg);
  void init_params(core::Rng& rng);
  core::Var forward(const core::Var& x, Mode mode) const;
  core::Var p(const std::string& name) const;

  EncoderConfig cfg_;
  std::vector<std::pair<std::string, core::Var>> params_;
};

}  // namespace lgvc::encoder
