#include "lgvc/encoder.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;
using lgvc::core::Var;
namespace ag = lgvc::core::ag;

namespace lgvc::encoder {

namespace {

int norm_groups(int channels) {
  for (int g : {8, 4, 2})
    if (channels % g == 0) return g;
  return 1;
}

int conv_out(int n, int stride) { return (n - 1) / stride + 1; }  // k=3, p=1

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void EncoderConfig::validate() const {
  const size_t n = widths.size();
  if (n == 0 || blocks.size() != n || clip_t_strides.size() != n ||
      video_t_strides.size() != n || spatial_strides.size() != n)
    throw std::invalid_argument("per-stage config vectors must match in length");
  for (size_t s = 0; s < n; ++s) {
    if (widths[s] < 1 || blocks[s] < 1 || clip_t_strides[s] < 1 ||
        video_t_strides[s] < 1 || spatial_strides[s] < 1)
      throw std::invalid_argument("stage parameters must be positive");
    if (video_t_strides[s] > clip_t_strides[s])
      throw std::invalid_argument(
          "video-mode temporal strides must not exceed clip-mode strides");
  }
  if (stem_t_stride < 1 || stem_s_stride < 1)
    throw std::invalid_argument("stem strides must be positive");
  if (proj_dim < 1 || in_t < 1 || in_h < 1 || in_w < 1)
    throw std::invalid_argument("dims must be positive");
}

std::string EncoderConfig::to_json() const {
  json j;
  j["widths"] = widths;
  j["blocks"] = blocks;
  j["clip_t_strides"] = clip_t_strides;
  j["video_t_strides"] = video_t_strides;
  j["spatial_strides"] = spatial_strides;
  j["stem_t_stride"] = stem_t_stride;
  j["stem_s_stride"] = stem_s_stride;
  j["proj_dim"] = proj_dim;
  j["in_t"] = in_t;
  j["in_h"] = in_h;
  j["in_w"] = in_w;
  j["share_weights"] = share_weights;
  return j.dump();
}

EncoderConfig EncoderConfig::from_json(const std::string& s) {
  json j = json::parse(s);
  EncoderConfig c;
  c.widths = j.at("widths").get<std::vector<int>>();
  c.blocks = j.at("blocks").get<std::vector<int>>();
  c.clip_t_strides = j.at("clip_t_strides").get<std::vector<int>>();
  c.video_t_strides = j.at("video_t_strides").get<std::vector<int>>();
  c.spatial_strides = j.at("spatial_strides").get<std::vector<int>>();
  c.stem_t_stride = j.at("stem_t_stride").get<int>();
  c.stem_s_stride = j.at("stem_s_stride").get<int>();
  c.proj_dim = j.at("proj_dim").get<int>();
  c.in_t = j.at("in_t").get<int>();
  c.in_h = j.at("in_h").get<int>();
  c.in_w = j.at("in_w").get<int>();
  c.share_weights = j.at("share_weights").get<bool>();
  return c;
}

std::uint64_t EncoderConfig::hash() const { return fnv1a(to_json()); }

Encoder::Encoder(const EncoderConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

Encoder::Encoder(const EncoderConfig& cfg, core::Rng& rng) : Encoder(cfg) {
  init_params(rng);
}

void Encoder::init_params(core::Rng& rng) {
  params_.clear();
  auto add = [&](const std::string& name, std::vector<int> shape,
                 double he_fan) {
    core::Tensor t(shape);
    if (he_fan > 0) {
      const double std = std::sqrt(2.0 / he_fan);
      for (auto& v : t.data) v = std * rng.normal();
    }
    Var node = core::leaf(std::move(t), true);
    params_.emplace_back(name, node);
    return node;
  };
  auto add_gn = [&](const std::string& name, int c) {
    core::Tensor g({c});
    g.fill(1.0);
    params_.emplace_back(name + ".g", core::leaf(std::move(g), true));
    add(name + ".beta", {c}, 0.0);
  };
  auto add_tower = [&](const std::string& px) {
    const int n = static_cast<int>(cfg_.widths.size());
    add(px + "stem.w", {cfg_.widths[0], 3, 3, 3, 3}, 3.0 * 27);
    add(px + "stem.b", {cfg_.widths[0]}, 0.0);
    add_gn(px + "stem.gn", cfg_.widths[0]);
    int cin = cfg_.widths[0];
    for (int s = 0; s < n; ++s) {
      const int cout = cfg_.widths[s];
      for (int b = 0; b < cfg_.blocks[s]; ++b) {
        const std::string bp =
            px + "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
        const int bin = b == 0 ? cin : cout;
        add(bp + "c1.w", {cout, bin, 3, 3, 3}, static_cast<double>(bin) * 27);
        add(bp + "c1.b", {cout}, 0.0);
        add_gn(bp + "gn1", cout);
        add(bp + "c2.w", {cout, cout, 3, 3, 3}, static_cast<double>(cout) * 27);
        add(bp + "c2.b", {cout}, 0.0);
        add_gn(bp + "gn2", cout);
        // Projection shortcut exists whenever the block can change shape in
        // either mode; both modes then use the same weights.
        const bool strided = b == 0 && (cfg_.clip_t_strides[s] > 1 ||
                                        cfg_.video_t_strides[s] > 1 ||
                                        cfg_.spatial_strides[s] > 1);
        if (bin != cout || strided) {
          add(bp + "sc.w", {cout, bin, 1, 1, 1}, bin);
          add(bp + "sc.b", {cout}, 0.0);
        }
      }
      cin = cout;
    }
  };
  add_tower("f.");
  if (!cfg_.share_weights) add_tower("fv.");
  const int c = cfg_.widths.back();
  add("proj.w1", {c, c}, c);
  add("proj.b1", {c}, 0.0);
  add("proj.w2", {cfg_.proj_dim, c}, c);
  add("proj.b2", {cfg_.proj_dim}, 0.0);
}

Var Encoder::p(const std::string& name) const {
  for (const auto& [n, v] : params_)
    if (n == name) return v;
  throw std::logic_error("unknown parameter: " + name);
}

Var Encoder::forward(const Var& x, Mode mode) const {
  const std::string px =
      (cfg_.share_weights || mode == Mode::kClip) ? "f." : "fv.";
  auto gn = [&](const Var& h, const std::string& name, int c) {
    return ag::group_norm(h, p(name + ".g"), p(name + ".beta"),
                          norm_groups(c));
  };
  Var h = ag::conv3d(x, p(px + "stem.w"), p(px + "stem.b"), cfg_.stem_t_stride,
                     cfg_.stem_s_stride, cfg_.stem_s_stride, 1, 1, 1);
  h = ag::relu(gn(h, px + "stem.gn", cfg_.widths[0]));
  const int n = static_cast<int>(cfg_.widths.size());
  for (int s = 0; s < n; ++s) {
    const int cout = cfg_.widths[s];
    const int ts = mode == Mode::kClip ? cfg_.clip_t_strides[s]
                                       : cfg_.video_t_strides[s];
    const int ss = cfg_.spatial_strides[s];
    for (int b = 0; b < cfg_.blocks[s]; ++b) {
      const std::string bp =
          px + "s" + std::to_string(s) + ".b" + std::to_string(b) + ".";
      const int bt = b == 0 ? ts : 1;
      const int bs = b == 0 ? ss : 1;
      Var y = ag::conv3d(h, p(bp + "c1.w"), p(bp + "c1.b"), bt, bs, bs, 1, 1, 1);
      y = ag::relu(gn(y, bp + "gn1", cout));
      y = ag::conv3d(y, p(bp + "c2.w"), p(bp + "c2.b"), 1, 1, 1, 1, 1, 1);
      y = gn(y, bp + "gn2", cout);
      Var skip = h;
      const bool has_sc = [&] {
        for (const auto& [nm, v] : params_)
          if (nm == bp + "sc.w") return true;
        return false;
      }();
      if (has_sc)
        skip = ag::conv3d(h, p(bp + "sc.w"), p(bp + "sc.b"), bt, bs, bs, 0, 0, 0);
      h = ag::relu(ag::add(y, skip));
    }
  }
  return h;
}

FeatureMap Encoder::encode(const core::Var& clip, Mode mode) const {
  const auto& sh = clip->value.shape;
  if (sh.size() != 4 || sh[0] != 3 || sh[1] != cfg_.in_t || sh[2] != cfg_.in_h ||
      sh[3] != cfg_.in_w) {
    std::ostringstream os;
    os << "encoder input must be (3," << cfg_.in_t << "," << cfg_.in_h << ","
       << cfg_.in_w << ")";
    throw std::invalid_argument(os.str());
  }
  FeatureMap fm;
  fm.values = forward(clip, mode);
  fm.mode = mode;
  fm.grid = grid_shape(mode);
  const auto& os = fm.values->value.shape;
  if (os[1] != fm.grid.t || os[2] != fm.grid.h || os[3] != fm.grid.w)
    throw std::logic_error("announced grid does not match realized shape");
  return fm;
}

FeatureMap Encoder::encode(const core::Tensor& clip, Mode mode) const {
  return encode(core::leaf(clip, false), mode);
}

Var Encoder::pool(const FeatureMap& fm, bool unit_norm) {
  Var v = ag::pool_mean(fm.values);
  return unit_norm ? ag::l2_normalize_rows(v) : v;
}

Var Encoder::project(const Var& v) const {
  Var h = ag::relu(ag::linear(v, p("proj.w1"), p("proj.b1")));
  return ag::linear(h, p("proj.w2"), p("proj.b2"));
}

geometry::GridShape Encoder::grid_shape(Mode mode) const {
  int t = conv_out(cfg_.in_t, cfg_.stem_t_stride);
  int h = conv_out(cfg_.in_h, cfg_.stem_s_stride);
  int w = conv_out(cfg_.in_w, cfg_.stem_s_stride);
  for (size_t s = 0; s < cfg_.widths.size(); ++s) {
    const int ts = mode == Mode::kClip ? cfg_.clip_t_strides[s]
                                       : cfg_.video_t_strides[s];
    t = conv_out(t, ts);
    h = conv_out(h, cfg_.spatial_strides[s]);
    w = conv_out(w, cfg_.spatial_strides[s]);
  }
  return {t, h, w};
}

void Encoder::zero_grad() {
  for (auto& [n, v] : params_) v->zero_grad();
}

void Encoder::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  os.precision(17);
  os << "lgvc-encoder-checkpoint 1\n";
  os << "hash " << cfg_.hash() << "\n";
  os << "config " << cfg_.to_json() << "\n";
  os << "params " << params_.size() << "\n";
  for (const auto& [name, v] : params_) {
    os << name << " " << v->value.numel();
    for (double x : v->value.data) os << " " << x;
    os << "\n";
  }
  if (!os) throw std::runtime_error("short write on checkpoint " + path);
}

Encoder Encoder::load(const std::string& path, const EncoderConfig& expected,
                      bool force) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path);
  std::string magic;
  int version = 0;
  is >> magic >> version;
  if (magic != "lgvc-encoder-checkpoint" || version != 1)
    throw std::runtime_error("not an encoder checkpoint: " + path);
  std::string key, cfg_line;
  std::uint64_t stored_hash = 0;
  is >> key >> stored_hash;
  is >> key;
  std::getline(is, cfg_line);
  EncoderConfig cfg = EncoderConfig::from_json(cfg_line);
  if (cfg.hash() != stored_hash)
    throw std::runtime_error("corrupt checkpoint: config hash mismatch");
  if (expected.hash() != stored_hash && !force) {
    std::ostringstream os;
    os << "checkpoint config hash " << stored_hash
       << " does not match requested config hash " << expected.hash()
       << " (pass force to load anyway)";
    throw std::runtime_error(os.str());
  }

  Encoder e(cfg);
  core::Rng init_rng(0);
  e.init_params(init_rng);
  std::map<std::string, Var> by_name;
  for (auto& [n, v] : e.params_) by_name[n] = v;

  size_t count = 0;
  is >> key >> count;
  if (count != e.params_.size())
    throw std::runtime_error("corrupt checkpoint: parameter count mismatch");
  for (size_t i = 0; i < count; ++i) {
    std::string name;
    std::int64_t numel = 0;
    is >> name >> numel;
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second->value.numel() != numel)
      throw std::runtime_error("corrupt checkpoint: bad parameter " + name);
    for (std::int64_t j = 0; j < numel; ++j) is >> it->second->value[j];
  }
  if (!is) throw std::runtime_error("corrupt checkpoint: truncated " + path);
  return e;
}

}  // namespace lgvc::encoder
