#include "lgvc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace lgvc::geometry {

namespace {

double overlap_1d(double a0, double a1, double b0, double b1) {
  const double lo = std::max(a0, b0);
  const double hi = std::min(a1, b1);
  return hi > lo ? hi - lo : 0.0;
}

struct AxisCells {
  // Cell boundaries along one axis in source-video coordinates, ascending.
  std::vector<double> lo, hi;
};

AxisCells axis_cells(double p0, double p1, int n, bool mirror) {
  AxisCells c;
  c.lo.resize(static_cast<size_t>(n));
  c.hi.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int idx = mirror ? n - 1 - i : i;
    c.lo[static_cast<size_t>(i)] = p0 + (p1 - p0) * idx / n;
    c.hi[static_cast<size_t>(i)] = p0 + (p1 - p0) * (idx + 1) / n;
  }
  return c;
}

}  // namespace

Box tube_of(int t, int h, int w, const GridShape& shape,
            const dataaug::CropParams& p) {
  if (t < 0 || t >= shape.t || h < 0 || h >= shape.h || w < 0 || w >= shape.w)
    throw std::logic_error("tube_of: grid index out of range");
  const int wm = p.flip ? shape.w - 1 - w : w;
  Box b;
  b.t0 = p.t0 + (p.t1 - p.t0) * t / shape.t;
  b.t1 = p.t0 + (p.t1 - p.t0) * (t + 1) / shape.t;
  b.y0 = p.y0 + (p.y1 - p.y0) * h / shape.h;
  b.y1 = p.y0 + (p.y1 - p.y0) * (h + 1) / shape.h;
  b.x0 = p.x0 + (p.x1 - p.x0) * wm / shape.w;
  b.x1 = p.x0 + (p.x1 - p.x0) * (wm + 1) / shape.w;
  return b;
}

CorrespondenceMatrix correspondence(const dataaug::CropParams& local_p,
                                    const dataaug::CropParams& global_p,
                                    const GridShape& local_shape,
                                    const GridShape& global_shape) {
  local_p.validate();
  global_p.validate();
  if (local_p.t1 - local_p.t0 <= 0.0)
    throw std::logic_error("correspondence: zero-volume local tube");

  // Per-axis overlap tables; the 3-D intersection factorizes exactly.
  const AxisCells lt = axis_cells(local_p.t0, local_p.t1, local_shape.t, false);
  const AxisCells ly = axis_cells(local_p.y0, local_p.y1, local_shape.h, false);
  const AxisCells lx =
      axis_cells(local_p.x0, local_p.x1, local_shape.w, local_p.flip);
  const AxisCells gt =
      axis_cells(global_p.t0, global_p.t1, global_shape.t, false);
  const AxisCells gy =
      axis_cells(global_p.y0, global_p.y1, global_shape.h, false);
  const AxisCells gx =
      axis_cells(global_p.x0, global_p.x1, global_shape.w, global_p.flip);

  auto ratio_table = [](const AxisCells& l, const AxisCells& g) {
    std::vector<double> r(l.lo.size() * g.lo.size());
    for (size_t i = 0; i < l.lo.size(); ++i) {
      const double len = l.hi[i] - l.lo[i];
      for (size_t j = 0; j < g.lo.size(); ++j)
        r[i * g.lo.size() + j] =
            overlap_1d(l.lo[i], l.hi[i], g.lo[j], g.hi[j]) / len;
    }
    return r;
  };
  const auto rt = ratio_table(lt, gt);
  const auto ry = ratio_table(ly, gy);
  const auto rx = ratio_table(lx, gx);

  CorrespondenceMatrix out;
  out.local_shape = local_shape;
  out.global_shape = global_shape;
  out.values.assign(static_cast<size_t>(local_shape.cells()) *
                        global_shape.cells(),
                    0.0);
  const int Gt = global_shape.t, Gh = global_shape.h, Gw = global_shape.w;
  for (int it = 0; it < local_shape.t; ++it)
    for (int ih = 0; ih < local_shape.h; ++ih)
      for (int iw = 0; iw < local_shape.w; ++iw) {
        const int i = (it * local_shape.h + ih) * local_shape.w + iw;
        for (int jt = 0; jt < Gt; ++jt) {
          const double vt = rt[static_cast<size_t>(it) * Gt + jt];
          if (vt == 0.0) continue;
          for (int jh = 0; jh < Gh; ++jh) {
            const double vy = vt * ry[static_cast<size_t>(ih) * Gh + jh];
            if (vy == 0.0) continue;
            for (int jw = 0; jw < Gw; ++jw) {
              const double v = vy * rx[static_cast<size_t>(iw) * Gw + jw];
              if (v != 0.0) out.at(i, (jt * Gh + jh) * Gw + jw) = v;
            }
          }
        }
      }

  // Containment guarantees row sums of exactly 1; renormalize otherwise so
  // downstream soft cross-entropy stays proper.
  const bool contained =
      global_p.spatially_contains(local_p) && local_p.t0 >= global_p.t0 &&
      local_p.t1 <= global_p.t1;
  if (!contained) {
    std::fprintf(stderr,
                 "[geometry] warning: local tube not contained in global; "
                 "renormalizing correspondence rows\n");
    for (int i = 0; i < out.n_local(); ++i) {
      double s = 0.0;
      for (int j = 0; j < out.n_global(); ++j) s += out.at(i, j);
      if (s > 0.0)
        for (int j = 0; j < out.n_global(); ++j) out.at(i, j) /= s;
    }
  }
  return out;
}

namespace {

// Counts, for one axis of one local cell, how many of the `resolution`
// evenly-spaced voxel centers fall inside each global cell along that axis.
std::vector<long> axis_counts(double c0, double c1, const AxisCells& g,
                              int resolution) {
  std::vector<long> counts(g.lo.size(), 0);
  for (int v = 0; v < resolution; ++v) {
    const double pos = c0 + (c1 - c0) * (v + 0.5) / resolution;
    for (size_t j = 0; j < g.lo.size(); ++j) {
      if (pos >= g.lo[j] && pos < g.hi[j]) {
        ++counts[j];
        break;
      }
    }
  }
  return counts;
}

}  // namespace

CorrespondenceMatrix correspondence_oracle(const dataaug::CropParams& local_p,
                                           const dataaug::CropParams& global_p,
                                           const GridShape& local_shape,
                                           const GridShape& global_shape,
                                           int resolution) {
  if (resolution < 64)
    throw std::invalid_argument("correspondence_oracle: resolution < 64");
  const AxisCells gt =
      axis_cells(global_p.t0, global_p.t1, global_shape.t, false);
  const AxisCells gy =
      axis_cells(global_p.y0, global_p.y1, global_shape.h, false);
  const AxisCells gx =
      axis_cells(global_p.x0, global_p.x1, global_shape.w, global_p.flip);

  CorrespondenceMatrix out;
  out.local_shape = local_shape;
  out.global_shape = global_shape;
  out.values.assign(static_cast<size_t>(local_shape.cells()) *
                        global_shape.cells(),
                    0.0);
  const double total =
      static_cast<double>(resolution) * resolution * resolution;
  const int Gh = global_shape.h, Gw = global_shape.w;
  for (int it = 0; it < local_shape.t; ++it)
    for (int ih = 0; ih < local_shape.h; ++ih)
      for (int iw = 0; iw < local_shape.w; ++iw) {
        const Box cell = tube_of(it, ih, iw, local_shape, local_p);
        // Membership is separable in the three axes, so the voxel count over
        // the cell factors into per-axis center counts.
        const auto ct = axis_counts(cell.t0, cell.t1, gt, resolution);
        const auto cy = axis_counts(cell.y0, cell.y1, gy, resolution);
        const auto cx = axis_counts(cell.x0, cell.x1, gx, resolution);
        const int i = (it * local_shape.h + ih) * local_shape.w + iw;
        for (int jt = 0; jt < global_shape.t; ++jt) {
          if (ct[static_cast<size_t>(jt)] == 0) continue;
          for (int jh = 0; jh < Gh; ++jh) {
            if (cy[static_cast<size_t>(jh)] == 0) continue;
            const double partial =
                static_cast<double>(ct[static_cast<size_t>(jt)]) *
                cy[static_cast<size_t>(jh)];
            for (int jw = 0; jw < Gw; ++jw)
              out.at(i, (jt * Gh + jh) * Gw + jw) =
                  partial * cx[static_cast<size_t>(jw)] / total;
          }
        }
      }
  return out;
}

CorrespondenceMatrix correspondence_oracle_brute(
    const dataaug::CropParams& local_p, const dataaug::CropParams& global_p,
    const GridShape& local_shape, const GridShape& global_shape,
    int resolution) {
  const AxisCells gt =
      axis_cells(global_p.t0, global_p.t1, global_shape.t, false);
  const AxisCells gy =
      axis_cells(global_p.y0, global_p.y1, global_shape.h, false);
  const AxisCells gx =
      axis_cells(global_p.x0, global_p.x1, global_shape.w, global_p.flip);
  auto find_cell = [](double pos, const AxisCells& g) {
    for (size_t j = 0; j < g.lo.size(); ++j)
      if (pos >= g.lo[j] && pos < g.hi[j]) return static_cast<int>(j);
    return -1;
  };

  CorrespondenceMatrix out;
  out.local_shape = local_shape;
  out.global_shape = global_shape;
  out.values.assign(static_cast<size_t>(local_shape.cells()) *
                        global_shape.cells(),
                    0.0);
  const double total =
      static_cast<double>(resolution) * resolution * resolution;
  for (int it = 0; it < local_shape.t; ++it)
    for (int ih = 0; ih < local_shape.h; ++ih)
      for (int iw = 0; iw < local_shape.w; ++iw) {
        const Box cell = tube_of(it, ih, iw, local_shape, local_p);
        const int i = (it * local_shape.h + ih) * local_shape.w + iw;
        for (int vt = 0; vt < resolution; ++vt) {
          const double pt =
              cell.t0 + (cell.t1 - cell.t0) * (vt + 0.5) / resolution;
          const int jt = find_cell(pt, gt);
          if (jt < 0) continue;
          for (int vy = 0; vy < resolution; ++vy) {
            const double py =
                cell.y0 + (cell.y1 - cell.y0) * (vy + 0.5) / resolution;
            const int jh = find_cell(py, gy);
            if (jh < 0) continue;
            for (int vx = 0; vx < resolution; ++vx) {
              const double px =
                  cell.x0 + (cell.x1 - cell.x0) * (vx + 0.5) / resolution;
              const int jw = find_cell(px, gx);
              if (jw < 0) continue;
              out.at(i, (jt * global_shape.h + jh) * global_shape.w + jw) +=
                  1.0 / total;
            }
          }
        }
      }
  return out;
}

}  // namespace lgvc::geometry
