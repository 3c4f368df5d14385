#include "lgvc/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace lgvc::dataio {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Static background texture: sum of random sinusoidal gratings per channel,
// squeezed to mid-range so the sprite stays high-contrast.
core::Tensor make_background(int h, int w, std::uint64_t seed, int index) {
  core::Rng rng = core::Rng::from_seed(seed, "bg/" + std::to_string(index));
  core::Tensor bg({h, w, 3});
  for (int c = 0; c < 3; ++c) {
    double fy[6], fx[6], ph[6], amp[6];
    for (int k = 0; k < 6; ++k) {
      fy[k] = rng.uniform(0.5, 6.0);
      fx[k] = rng.uniform(0.5, 6.0);
      ph[k] = rng.uniform(0.0, 2 * kPi);
      amp[k] = rng.uniform(0.3, 1.0);
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = 0.0, norm = 0.0;
        const double uy = (y + 0.5) / h, ux = (x + 0.5) / w;
        for (int k = 0; k < 6; ++k) {
          v += amp[k] * std::sin(2 * kPi * (fy[k] * uy + fx[k] * ux) + ph[k]);
          norm += amp[k];
        }
        bg[(static_cast<std::int64_t>(y) * w + x) * 3 + c] =
            0.425 + 0.225 * (v / norm);  // range [0.2, 0.65]
      }
  }
  return bg;
}

// Normalized sprite center at frame i of t for the given motion kind.
// Trajectory shape parameters come from `rng` (drawn once per video).
std::vector<std::array<double, 2>> make_trajectory(const std::string& kind,
                                                   int t, core::Rng& rng) {
  std::vector<std::array<double, 2>> c(t);
  auto frac = [t](int i) { return t > 1 ? static_cast<double>(i) / (t - 1) : 0.0; };
  if (kind == "linear_left" || kind == "linear_right") {
    const double x_lo = rng.uniform(0.15, 0.30);
    const double x_hi = rng.uniform(0.70, 0.85);
    const double y = rng.uniform(0.25, 0.75);
    for (int i = 0; i < t; ++i) {
      const double u = frac(i);
      const double x = kind == "linear_left" ? x_hi + (x_lo - x_hi) * u
                                             : x_lo + (x_hi - x_lo) * u;
      c[i] = {y, x};
    }
  } else if (kind == "circular") {
    const double r = rng.uniform(0.18, 0.30);
    const double phase = rng.uniform(0.0, 2 * kPi);
    for (int i = 0; i < t; ++i) {
      const double a = phase + 2 * kPi * frac(i);
      c[i] = {0.5 + r * std::sin(a), 0.5 + r * std::cos(a)};
    }
  } else if (kind == "two_phase") {
    // Run (horizontal, first half) then jump (vertical, second half): the two
    // sub-motions happen in a fixed order, so shuffled clips are detectable.
    const double x_lo = rng.uniform(0.15, 0.30);
    const double x_hi = rng.uniform(0.70, 0.85);
    const double y_hi = rng.uniform(0.65, 0.80);
    const double y_lo = rng.uniform(0.20, 0.35);
    const int half = t / 2;
    for (int i = 0; i < t; ++i) {
      if (i < half) {
        const double u = half > 1 ? static_cast<double>(i) / (half - 1) : 0.0;
        c[i] = {y_hi, x_lo + (x_hi - x_lo) * u};
      } else {
        const double u = t - half > 1
                             ? static_cast<double>(i - half) / (t - half - 1)
                             : 0.0;
        c[i] = {y_hi + (y_lo - y_hi) * u, x_hi};
      }
    }
  } else {
    throw std::invalid_argument("unknown motion kind: " + kind);
  }
  return c;
}

// Draws an axis-aligned square sprite with a one-pixel soft edge.
void draw_sprite(core::Tensor& frame, int h, int w, double cy, double cx,
                 double half, const double color[3]) {
  const double py = cy * h, px = cx * w;
  const double hy = half * h, hx = half * w;
  const int y0 = std::max(0, static_cast<int>(std::floor(py - hy - 1)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(py + hy + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(px - hx - 1)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(px + hx + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dy = hy - std::abs(y + 0.5 - py);
      const double dx = hx - std::abs(x + 0.5 - px);
      const double alpha = std::clamp(std::min(dy, dx), 0.0, 1.0);
      if (alpha <= 0.0) continue;
      double* px3 = &frame[(static_cast<std::int64_t>(y) * w + x) * 3];
      for (int c = 0; c < 3; ++c)
        px3[c] = (1.0 - alpha) * px3[c] + alpha * color[c];
    }
}

core::Tensor load_frames(const fs::path& folder, int h, int w) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(folder))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw std::runtime_error("ingestion error: empty video folder " +
                             folder.string());
  core::Tensor frames;
  int oh = 0, ow = 0;
  for (size_t i = 0; i < files.size(); ++i) {
    cv::Mat img = cv::imread(files[i].string(), cv::IMREAD_COLOR);
    if (img.empty())
      throw std::runtime_error("ingestion error: unreadable frame " +
                               files[i].string());
    if (i == 0) {
      oh = h > 0 ? h : img.rows;
      ow = w > 0 ? w : img.cols;
      frames = core::Tensor({static_cast<int>(files.size()), oh, ow, 3});
    }
    if (img.rows != oh || img.cols != ow)
      cv::resize(img, img, cv::Size(ow, oh), 0, 0, cv::INTER_AREA);
    const std::int64_t off = static_cast<std::int64_t>(i) * oh * ow * 3;
    for (int y = 0; y < oh; ++y) {
      const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
      for (int x = 0; x < ow; ++x)
        for (int c = 0; c < 3; ++c)  // BGR -> RGB
          frames[off + (static_cast<std::int64_t>(y) * ow + x) * 3 + c] =
              row[x][2 - c] / 255.0;
    }
  }
  return frames;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (t < 16 || h < 64 || w < 64)
    throw std::invalid_argument("canvas must be at least (16, 64, 64)");
  if (num_classes < 1 || videos_per_class < 1 || background_pool < 1)
    throw std::invalid_argument("counts must be positive");
  if (num_classes > static_cast<int>(motion_kinds.size()))
    throw std::invalid_argument("need one motion kind per class");
}

std::vector<Video> generate_synthetic(const SyntheticSpec& spec,
                                      std::uint64_t seed) {
  spec.validate();
  std::vector<core::Tensor> backgrounds(spec.background_pool);
  for (int b = 0; b < spec.background_pool; ++b)
    backgrounds[b] = make_background(spec.h, spec.w, seed, b);

  std::vector<Video> out;
  out.reserve(static_cast<size_t>(spec.num_classes) * spec.videos_per_class);
  for (int cls = 0; cls < spec.num_classes; ++cls) {
    for (int idx = 0; idx < spec.videos_per_class; ++idx) {
      core::Rng rng = core::Rng::from_seed(
          seed, "video/" + std::to_string(cls) + "/" + std::to_string(idx));
      Video v;
      v.id = "c" + std::to_string(cls) + "_v" + std::to_string(idx);
      v.label = cls;
      v.motion_kind = spec.motion_kinds[cls];
      // Background index drawn independently of class.
      v.background_index = static_cast<int>(rng.uniform_int(spec.background_pool));
      v.sprite_half = 0.11;
      v.sprite_centers = make_trajectory(v.motion_kind, spec.t, rng);
      // High-contrast sprite color: each channel saturated high or low, never
      // all the same side, so it stands out from the mid-range background.
      double color[3];
      int high_mask = 1 + static_cast<int>(rng.uniform_int(6));  // 1..6
      for (int c = 0; c < 3; ++c)
        color[c] = (high_mask >> c) & 1 ? rng.uniform(0.85, 1.0)
                                        : rng.uniform(0.0, 0.15);

      v.frames = core::Tensor({spec.t, spec.h, spec.w, 3});
      const core::Tensor& bg = backgrounds[v.background_index];
      const std::int64_t fsz = static_cast<std::int64_t>(spec.h) * spec.w * 3;
      for (int i = 0; i < spec.t; ++i) {
        core::Tensor frame = bg;
        draw_sprite(frame, spec.h, spec.w, v.sprite_centers[i][0],
                    v.sprite_centers[i][1], v.sprite_half, color);
        std::copy(frame.data.begin(), frame.data.end(),
                  v.frames.data.begin() + i * fsz);
      }
      out.push_back(std::move(v));
    }
  }
  return out;
}

void save_dataset(const std::vector<Video>& videos, const std::string& dir,
                  std::uint64_t seed) {
  fs::create_directories(dir);
  json manifest;
  manifest["schema"] = 1;
  manifest["seed"] = seed;
  manifest["videos"] = json::array();
  for (const auto& v : videos) {
    const fs::path folder = fs::path(dir) / v.id;
    fs::create_directories(folder);
    const int h = v.h(), w = v.w();
    cv::Mat img(h, w, CV_8UC3);
    for (int t = 0; t < v.t(); ++t) {
      const std::int64_t off = static_cast<std::int64_t>(t) * h * w * 3;
      for (int y = 0; y < h; ++y) {
        cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c)
            row[x][2 - c] = static_cast<unsigned char>(std::lround(
                255.0 * std::clamp(
                            v.frames[off + (static_cast<std::int64_t>(y) * w + x) * 3 + c],
                            0.0, 1.0)));
      }
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04d.png", t);
      if (!cv::imwrite((folder / name).string(), img))
        throw std::runtime_error("failed to write " + (folder / name).string());
    }
    json entry;
    entry["id"] = v.id;
    entry["label"] = v.label;
    entry["background"] = v.background_index;
    entry["motion"] = v.motion_kind;
    entry["fps"] = v.fps;
    entry["sprite_half"] = v.sprite_half;
    entry["sprite_centers"] = v.sprite_centers;
    manifest["videos"].push_back(std::move(entry));
  }
  std::ofstream os(fs::path(dir) / "manifest.json");
  os << manifest.dump(2) << "\n";
}

std::vector<Video> load_dataset(const std::string& dir, int h, int w) {
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream is(mpath);
  if (!is)
    throw std::runtime_error("ingestion error: missing manifest " +
                             mpath.string());
  json manifest = json::parse(is);
  std::vector<Video> out;
  for (const auto& entry : manifest.at("videos")) {
    Video v;
    v.id = entry.at("id").get<std::string>();
    v.label = entry.at("label").get<int>();
    v.background_index = entry.at("background").get<int>();
    v.motion_kind = entry.at("motion").get<std::string>();
    v.fps = entry.at("fps").get<double>();
    v.sprite_half = entry.at("sprite_half").get<double>();
    v.sprite_centers =
        entry.at("sprite_centers").get<std::vector<std::array<double, 2>>>();
    v.frames = load_frames(fs::path(dir) / v.id, h, w);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Video> load_clip_folder(const std::string& path, int h, int w) {
  if (!fs::is_directory(path))
    throw std::runtime_error("ingestion error: not a directory: " + path);
  std::vector<fs::path> folders;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_directory()) folders.push_back(e.path());
  std::sort(folders.begin(), folders.end());
  if (folders.empty())
    throw std::runtime_error("ingestion error: no video folders in " + path);
  std::vector<Video> out;
  for (const auto& folder : folders) {
    Video v;
    v.id = folder.filename().string();
    v.frames = load_frames(folder, h, w);
    out.push_back(std::move(v));
  }
  return out;
}

core::Tensor sprite_mask(const Video& video, int frame) {
  if (frame < 0 || frame >= static_cast<int>(video.sprite_centers.size()))
    throw std::out_of_range("no sprite trajectory for frame " +
                            std::to_string(frame));
  const int h = video.h(), w = video.w();
  core::Tensor mask({h, w});
  const double py = video.sprite_centers[frame][0] * h;
  const double px = video.sprite_centers[frame][1] * w;
  const double hy = video.sprite_half * h, hx = video.sprite_half * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      mask[static_cast<std::int64_t>(y) * w + x] =
          (std::abs(y + 0.5 - py) <= hy && std::abs(x + 0.5 - px) <= hx) ? 1.0
                                                                         : 0.0;
  return mask;
}

}  // namespace lgvc::dataio
