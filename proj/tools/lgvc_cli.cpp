// lgvc: single entry point for dataset generation, pretraining, evaluation,
// geometry self-checks, and visualization. Exit codes: 0 ok, 1 validation,
// 2 runtime, 3 self-check failure.
#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "lgvc/dataaug.hpp"
#include "lgvc/dataio.hpp"
#include "lgvc/evalkit.hpp"
#include "lgvc/geometry.hpp"
#include "lgvc/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lgvc;

namespace {

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  int schema_version = 1;
  dataio::SyntheticSpec data;
  std::uint64_t data_seed = 0;
  encoder::EncoderConfig enc;
  losses::LossConfig loss;
  trainer::TrainConfig train;
  std::vector<int> eval_ks = {1, 5, 10, 20};
  std::uint64_t probe_seed = 0;

  json resolved;  // canonical (key-sorted) merged config
  std::uint64_t hash = 0;
};

// Start from the full default block and overlay user keys; any key absent
// from the defaults is unknown and rejected by name.
json merge_block(const json& defaults, const json& user,
                 const std::string& block) {
  if (user.is_null()) return defaults;
  if (!user.is_object())
    throw ValidationError("config block '" + block + "' must be an object");
  json out = defaults;
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (!defaults.contains(it.key()))
      throw ValidationError("unknown key '" + block + "." + it.key() + "'");
    if (defaults[it.key()].is_object())
      out[it.key()] = merge_block(defaults[it.key()], it.value(),
                                  block + "." + it.key());
    else
      out[it.key()] = it.value();
  }
  return out;
}

json default_config_json() {
  RunConfig d;
  json j;
  j["schema_version"] = d.schema_version;
  j["data"] = {{"num_classes", d.data.num_classes},
               {"videos_per_class", d.data.videos_per_class},
               {"t", d.data.t},
               {"h", d.data.h},
               {"w", d.data.w},
               {"background_pool", d.data.background_pool},
               {"motion_kinds", d.data.motion_kinds},
               {"seed", d.data_seed}};
  const auto& g = d.train.aug.grid;
  j["augment"] = {{"weak_min", d.train.aug.weak_min},
                  {"local_area_min", d.train.aug.local_area_min},
                  {"local_area_max", d.train.aug.local_area_max},
                  {"clip_frames", d.train.aug.clip_frames},
                  {"grid",
                   {{"n_bcs", g.n_bcs},
                    {"n_h", g.n_h},
                    {"n_g", g.n_g},
                    {"base_b", g.base_b},
                    {"base_c", g.base_c},
                    {"base_s", g.base_s},
                    {"base_h", g.base_h},
                    {"sigma_max", g.sigma_max}}}};
  j["encoder"] = json::parse(d.enc.to_json());
  j["loss"] = {{"tau", d.loss.tau},
               {"w_rc", d.loss.w_rc},
               {"w_mi", d.loss.w_mi},
               {"w_td", d.loss.w_td},
               {"grl_lambda", d.loss.grl_lambda},
               {"negative_cap", d.loss.negative_cap},
               {"shuffles_per_video", d.loss.shuffles_per_video},
               {"use_nce", d.loss.use_nce}};
  j["train"] = {{"batch_size", d.train.batch_size},
                {"k_local", d.train.k_local},
                {"epochs", d.train.epochs},
                {"lr", d.train.lr},
                {"weight_decay", d.train.weight_decay},
                {"lr_milestone", d.train.lr_milestone},
                {"lr_decay", d.train.lr_decay},
                {"seed", d.train.seed},
                {"levels_per_iter", d.train.levels_per_iter},
                {"grl_warmup", d.train.grl_warmup},
                {"mi_hidden", d.train.mi_hidden},
                {"order_hidden", d.train.order_hidden},
                {"order_head_kind", d.train.order_head_kind}};
  j["eval"] = {{"ks", d.eval_ks}, {"probe_seed", d.probe_seed}};
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  json user;
  try {
    user = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config parse error in " + path + ": " + e.what());
  }
  json resolved = merge_block(default_config_json(), user, "config");

  RunConfig c;
  c.resolved = resolved;
  c.hash = core::Rng::fnv1a(resolved.dump());
  c.schema_version = resolved.at("schema_version");
  if (c.schema_version != 1)
    throw ValidationError("unsupported schema_version");

  const json& jd = resolved.at("data");
  c.data.num_classes = jd.at("num_classes");
  c.data.videos_per_class = jd.at("videos_per_class");
  c.data.t = jd.at("t");
  c.data.h = jd.at("h");
  c.data.w = jd.at("w");
  c.data.background_pool = jd.at("background_pool");
  c.data.motion_kinds = jd.at("motion_kinds").get<std::vector<std::string>>();
  c.data_seed = jd.at("seed");

  c.enc = encoder::EncoderConfig::from_json(resolved.at("encoder").dump());

  const json& jl = resolved.at("loss");
  c.loss.tau = jl.at("tau");
  c.loss.w_rc = jl.at("w_rc");
  c.loss.w_mi = jl.at("w_mi");
  c.loss.w_td = jl.at("w_td");
  c.loss.grl_lambda = jl.at("grl_lambda");
  c.loss.negative_cap = jl.at("negative_cap");
  c.loss.shuffles_per_video = jl.at("shuffles_per_video");
  c.loss.use_nce = jl.at("use_nce");

  const json& jt = resolved.at("train");
  c.train.batch_size = jt.at("batch_size");
  c.train.k_local = jt.at("k_local");
  c.train.epochs = jt.at("epochs");
  c.train.lr = jt.at("lr");
  c.train.weight_decay = jt.at("weight_decay");
  c.train.lr_milestone = jt.at("lr_milestone");
  c.train.lr_decay = jt.at("lr_decay");
  c.train.seed = jt.at("seed");
  c.train.levels_per_iter = jt.at("levels_per_iter");
  c.train.grl_warmup = jt.at("grl_warmup");
  c.train.mi_hidden = jt.at("mi_hidden");
  c.train.order_hidden = jt.at("order_hidden");
  c.train.order_head_kind = jt.at("order_head_kind");

  const json& ja = resolved.at("augment");
  c.train.aug.weak_min = ja.at("weak_min");
  c.train.aug.local_area_min = ja.at("local_area_min");
  c.train.aug.local_area_max = ja.at("local_area_max");
  c.train.aug.clip_frames = ja.at("clip_frames");
  const json& jg = ja.at("grid");
  c.train.aug.grid.n_bcs = jg.at("n_bcs");
  c.train.aug.grid.n_h = jg.at("n_h");
  c.train.aug.grid.n_g = jg.at("n_g");
  c.train.aug.grid.base_b = jg.at("base_b");
  c.train.aug.grid.base_c = jg.at("base_c");
  c.train.aug.grid.base_s = jg.at("base_s");
  c.train.aug.grid.base_h = jg.at("base_h");
  c.train.aug.grid.sigma_max = jg.at("sigma_max");

  const json& je = resolved.at("eval");
  c.eval_ks = je.at("ks").get<std::vector<int>>();
  c.probe_seed = je.at("probe_seed");
  return c;
}

void require_fresh_dir(const std::string& dir) {
  fs::path p(dir);
  if (fs::exists(p) && !fs::is_empty(p))
    throw ValidationError("output directory already exists and is not empty: " +
                          dir);
  fs::create_directories(p);
}

void write_resolved_config(const RunConfig& c, const fs::path& dir) {
  std::ofstream(dir / "config.json") << c.resolved.dump(2) << "\n";
  std::ofstream(dir / "config.hash") << std::hex << c.hash << "\n";
}

void write_heatmap_png(const std::vector<double>& values, int rows, int cols,
                       const std::string& path) {
  cv::Mat img(rows, cols, CV_8UC1);
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = std::max(hi - lo, 1e-12);
  for (int r = 0; r < rows; ++r)
    for (int cc = 0; cc < cols; ++cc)
      img.at<std::uint8_t>(r, cc) = static_cast<std::uint8_t>(
          255.0 * (values[static_cast<size_t>(r) * cols + cc] - lo) / span);
  if (!cv::imwrite(path, img))
    throw std::runtime_error("failed to write image: " + path);
}

// ---- subcommand bodies -----------------------------------------------------

int cmd_gen_data(const std::string& config_path, const std::string& out,
                 std::int64_t seed_override) {
  RunConfig c = load_config(config_path);
  if (seed_override >= 0) c.data_seed = static_cast<std::uint64_t>(seed_override);
  c.data.validate();
  require_fresh_dir(out);
  auto videos = dataio::generate_synthetic(c.data, c.data_seed);
  dataio::save_dataset(videos, out, c.data_seed);
  write_resolved_config(c, out);
  std::cout << "wrote " << videos.size() << " videos to " << out << "\n";
  return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& data_dir,
                 const std::string& out, const std::string& resume,
                 bool dry_run) {
  RunConfig c = load_config(config_path);
  auto videos = dataio::load_dataset(data_dir);
  auto views = dataio::PretrainView::strip(videos);

  if (dry_run) {
    core::Rng rng(c.train.seed);
    auto batch = trainer::build_batch(views, c.train, c.enc, rng);
    std::cout << "batch: " << batch.n_videos << " videos x (1 global + "
              << batch.k << " local) views, clip shape (3, " << c.enc.in_t
              << ", " << c.enc.in_h << ", " << c.enc.in_w << ")\n";
    auto cg = c.enc; // report both announced grids
    core::Rng r2(0);
    encoder::Encoder enc(cg, r2);
    auto gc = enc.grid_shape(encoder::Mode::kClip);
    auto gv = enc.grid_shape(encoder::Mode::kVideo);
    std::cout << "clip grid (" << gc.t << ", " << gc.h << ", " << gc.w
              << "), video grid (" << gv.t << ", " << gv.h << ", " << gv.w
              << ")\n";
    return 0;
  }

  if (resume.empty())
    require_fresh_dir(out);
  else if (!fs::exists(out))
    throw ValidationError("resume requested but run directory missing: " + out);
  write_resolved_config(c, out);
  c.train.checkpoint_dir = (fs::path(out) / "checkpoints").string();
  c.train.metrics_path = (fs::path(out) / "metrics.jsonl").string();
  fs::create_directories(c.train.checkpoint_dir);

  auto result = trainer::fit(views, c.enc, c.train, c.loss, resume);
  std::cout << "finished " << result.metrics.size() << " steps; last checkpoint "
            << result.last_checkpoint << "\n";
  return 0;
}

std::pair<std::vector<core::Tensor>, std::vector<int>> featurize(
    const encoder::Encoder& enc, const std::vector<dataio::Video>& videos) {
  std::vector<core::Tensor> xs;
  std::vector<int> ys;
  for (const auto& v : videos) {
    if (v.label < 0)
      throw ValidationError("video " + v.id + " has no label in manifest");
    xs.push_back(evalkit::extract_video_feature(enc, v));
    ys.push_back(v.label);
  }
  return {std::move(xs), std::move(ys)};
}

int cmd_eval(const std::string& checkpoint, const std::string& train_dir,
             const std::string& test_dir, const std::string& task,
             const std::string& out, std::uint64_t probe_seed) {
  // The checkpoint carries its own encoder config; trust it.
  auto enc = encoder::Encoder::load(checkpoint, encoder::EncoderConfig{}, true);
  auto test_videos = dataio::load_dataset(test_dir);

  json result;
  result["task"] = task;
  result["checkpoint"] = checkpoint;
  result["encoder_config_hash"] = enc.config().hash();

  if (task == "probe" || task == "retrieve") {
    auto train_videos = dataio::load_dataset(train_dir);
    auto [trx, tryy] = featurize(enc, train_videos);
    auto [tex, tey] = featurize(enc, test_videos);
    if (task == "probe") {
      auto r = evalkit::linear_probe(trx, tryy, tex, tey, probe_seed);
      result["top1"] = r.top1;
      result["per_class"] = r.per_class;
      std::cout << "probe top1 " << r.top1 << "\n";
    } else {
      std::vector<int> ks;
      for (int k : {1, 5, 10, 20})
        if (k <= static_cast<int>(trx.size())) ks.push_back(k);
      auto r = evalkit::retrieve(tex, tey, trx, tryy, ks);
      for (auto& [k, v] : r.r_at_k) result["r_at_" + std::to_string(k)] = v;
      std::cout << "retrieval R@1 " << r.r_at_k.at(1) << "\n";
      if (!out.empty()) {
        std::ofstream csv(out + ".csv");
        csv << "k,recall\n";
        for (auto& [k, v] : r.r_at_k) csv << k << "," << v << "\n";
      }
    }
  } else if (task == "caam") {
    double mean_score = 0;
    for (const auto& v : test_videos)
      mean_score += evalkit::caam(enc, v).foreground_score / test_videos.size();
    result["mean_foreground_score"] = mean_score;
    std::cout << "mean CAAM foreground score " << mean_score << "\n";
  } else {
    throw ValidationError("unknown eval task: " + task);
  }

  if (!out.empty()) {
    if (fs::exists(out))
      throw ValidationError("output file already exists: " + out);
    std::ofstream(out) << result.dump(2) << "\n";
  }
  return 0;
}

int cmd_check_geometry(int trials, int resolution, const std::string& dump) {
  if (trials < 1 || resolution < 64)
    throw ValidationError("need trials >= 1 and resolution >= 64");
  core::Rng rng(0xc0ffee);
  double max_dev = 0, max_row_dev = 0;
  for (int i = 0; i < trials; ++i) {
    auto global = dataaug::sample_global_crop(32, 0.9, rng);
    auto local = dataaug::sample_local_crop(1 + static_cast<int>(rng.uniform_int(4)),
                                            4, global, 16, 32, 0.3, 0.8, rng);
    geometry::GridShape lg{static_cast<int>(rng.uniform_int(2)) + 1,
                           static_cast<int>(rng.uniform_int(2)) * 2 + 2,
                           static_cast<int>(rng.uniform_int(2)) * 2 + 2};
    geometry::GridShape gg{2 << rng.uniform_int(3), 4, 4};
    auto exact = geometry::correspondence(local, global, lg, gg);
    auto oracle =
        geometry::correspondence_oracle(local, global, lg, gg, resolution);
    for (size_t j = 0; j < exact.values.size(); ++j)
      max_dev = std::max(max_dev, std::abs(exact.values[j] - oracle.values[j]));
    for (int r = 0; r < exact.n_local(); ++r) {
      double s = 0;
      for (int cc = 0; cc < exact.n_global(); ++cc) s += exact.at(r, cc);
      max_row_dev = std::max(max_row_dev, std::abs(s - 1.0));
    }
    if (i == 0 && !dump.empty()) {
      std::ofstream csv(dump + ".csv");
      for (int r = 0; r < exact.n_local(); ++r) {
        for (int cc = 0; cc < exact.n_global(); ++cc)
          csv << (cc ? "," : "") << exact.at(r, cc);
        csv << "\n";
      }
      write_heatmap_png(exact.values, exact.n_local(), exact.n_global(),
                        dump + ".png");
    }
  }
  const double bound = 3.0 / resolution;
  std::cout << "max |exact - oracle| = " << max_dev << " (bound " << bound
            << ")\nmax |row sum - 1| = " << max_row_dev << "\n";
  if (max_dev > bound || max_row_dev > 1e-9) {
    std::cerr << "geometry self-check FAILED\n";
    return 3;
  }
  std::cout << "geometry self-check OK\n";
  return 0;
}

int cmd_visualize(const std::string& checkpoint, const std::string& data_dir,
                  int video_index, const std::string& out) {
  auto enc = encoder::Encoder::load(checkpoint, encoder::EncoderConfig{}, true);
  auto videos = dataio::load_dataset(data_dir);
  if (video_index < 0 || video_index >= static_cast<int>(videos.size()))
    throw ValidationError("video index out of range (dataset has " +
                          std::to_string(videos.size()) + " videos)");
  require_fresh_dir(out);
  const auto& v = videos[video_index];
  auto res = evalkit::caam(enc, v);
  char name[32];
  for (size_t t = 0; t < res.heatmaps.size(); ++t) {
    std::snprintf(name, sizeof(name), "heatmap_%04zu.png", t);
    write_heatmap_png(res.heatmaps[t].data, v.h(), v.w(),
                      (fs::path(out) / name).string());
    // Overlay: dimmed frame with the activation added to the red channel.
    cv::Mat img(v.h(), v.w(), CV_8UC3);
    for (int y = 0; y < v.h(); ++y)
      for (int x = 0; x < v.w(); ++x) {
        const std::int64_t base =
            ((static_cast<std::int64_t>(t) * v.h() + y) * v.w() + x) * 3;
        const double heat = res.heatmaps[t][static_cast<std::int64_t>(y) * v.w() + x];
        auto& px = img.at<cv::Vec3b>(y, x);  // BGR
        px[0] = static_cast<std::uint8_t>(255 * 0.5 * v.frames[base + 2]);
        px[1] = static_cast<std::uint8_t>(255 * 0.5 * v.frames[base + 1]);
        px[2] = static_cast<std::uint8_t>(
            255 * std::min(1.0, 0.5 * v.frames[base] + 0.5 * heat));
      }
    std::snprintf(name, sizeof(name), "overlay_%04zu.png", t);
    if (!cv::imwrite((fs::path(out) / name).string(), img))
      throw std::runtime_error("failed to write overlay image");
  }
  json summary = {{"video", v.id},
                  {"foreground_score", res.foreground_score}};
  std::ofstream(fs::path(out) / "summary.json") << summary.dump(2) << "\n";
  std::cout << "foreground score " << res.foreground_score << " ("
            << res.heatmaps.size() << " frames) -> " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"local-global video contrast toolkit"};
  app.require_subcommand(1);

  std::string config, out, data_dir, train_dir, test_dir, checkpoint, resume,
      task = "probe", dump;
  std::int64_t seed_override = -1;
  std::uint64_t probe_seed = 0;
  int trials = 1000, resolution = 256, video_index = 0;
  bool dry_run = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", config, "run config (json)")->required();
  gen->add_option("--out", out, "dataset directory")->required();
  gen->add_option("--seed", seed_override, "override data.seed");

  auto* pre = app.add_subcommand("pretrain", "run self-supervised pretraining");
  pre->add_option("--config", config, "run config (json)")->required();
  pre->add_option("--data", data_dir, "dataset directory")->required();
  pre->add_option("--out", out, "run directory")->required();
  pre->add_option("--resume", resume, "training checkpoint to resume from");
  pre->add_flag("--dry-run", dry_run, "build one batch, print shapes, exit");

  auto* ev = app.add_subcommand("eval", "evaluate a pretrained encoder");
  ev->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required();
  ev->add_option("--train-data", train_dir, "probe-train / gallery dataset");
  ev->add_option("--test-data", test_dir, "probe-test / query dataset")
      ->required();
  ev->add_option("--task", task, "probe | retrieve | caam");
  ev->add_option("--out", out, "result json path");
  ev->add_option("--probe-seed", probe_seed, "probe initialization seed");

  auto* geo = app.add_subcommand("check-geometry",
                                 "verify correspondence against the voxel oracle");
  geo->add_option("--trials", trials, "random crop pairs");
  geo->add_option("--resolution", resolution, "oracle voxel resolution");
  geo->add_option("--dump", dump, "write first matrix as <prefix>.csv/.png");

  auto* vis = app.add_subcommand("visualize", "write CAAM heatmaps for a video");
  vis->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required();
  vis->add_option("--data", data_dir, "dataset directory")->required();
  vis->add_option("--video-index", video_index, "video to visualize");
  vis->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config, out, seed_override);
    if (pre->parsed())
      return cmd_pretrain(config, data_dir, out, resume, dry_run);
    if (ev->parsed()) {
      if (task != "caam" && train_dir.empty())
        throw ValidationError("--train-data required for task " + task);
      return cmd_eval(checkpoint, train_dir, test_dir, task, out, probe_seed);
    }
    if (geo->parsed()) return cmd_check_geometry(trials, resolution, dump);
    if (vis->parsed())
      return cmd_visualize(checkpoint, data_dir, video_index, out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
