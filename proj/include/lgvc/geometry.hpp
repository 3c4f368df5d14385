#pragma once

#include <vector>

#include "lgvc/augparams.hpp"

namespace lgvc::geometry {

struct GridShape {
  int t = 1, h = 1, w = 1;
  int cells() const { return t * h * w; }
};

/// Axis-aligned spatio-temporal box in normalized source-video coordinates.
struct Box {
  double t0, t1, y0, y1, x0, x1;
  double volume() const { return (t1 - t0) * (y1 - y0) * (x1 - x0); }
};

/// Row-stochastic soft alignment between local-clip and global-video feature
/// grids. Flattening order is (t, h, w) row-major, fixed project-wide.
struct CorrespondenceMatrix {
  std::vector<double> values;  // N_c x N_v
  GridShape local_shape, global_shape;

  int n_local() const { return local_shape.cells(); }
  int n_global() const { return global_shape.cells(); }
  double at(int i, int j) const {
    return values[static_cast<size_t>(i) * n_global() + j];
  }
  double& at(int i, int j) {
    return values[static_cast<size_t>(i) * n_global() + j];
  }
};

/// The spatio-temporal tube in source-video coordinates covered by one grid
/// cell of a feature map produced under crop parameters `p`. If `p.flip`, the
/// horizontal cell index is mirrored before mapping.
Box tube_of(int t, int h, int w, const GridShape& shape,
            const dataaug::CropParams& p);

/// Exact correspondence via products of 1-D interval overlaps:
/// S(i,j) = vol(tube_i ∩ tube_j) / vol(tube_i). Rows are renormalized with a
/// warning when the local tubes are not contained in the global ones.
CorrespondenceMatrix correspondence(const dataaug::CropParams& local_p,
                                    const dataaug::CropParams& global_p,
                                    const GridShape& local_shape,
                                    const GridShape& global_shape);

/// Independent verification oracle: each local tube is discretized into
/// resolution^3 voxels and every voxel center is assigned to global tubes by
/// membership; S(i,j) is the counted fraction. Max entry error is bounded by
/// 3/resolution and vanishes as resolution grows. Requires resolution >= 64.
CorrespondenceMatrix correspondence_oracle(const dataaug::CropParams& local_p,
                                           const dataaug::CropParams& global_p,
                                           const GridShape& local_shape,
                                           const GridShape& global_shape,
                                           int resolution);

/// Plain triple-loop voxel counting with no per-axis factoring. Used only to
/// validate the oracle's counting at small resolutions.
CorrespondenceMatrix correspondence_oracle_brute(
    const dataaug::CropParams& local_p, const dataaug::CropParams& global_p,
    const GridShape& local_shape, const GridShape& global_shape,
    int resolution);

}  // namespace lgvc::geometry
