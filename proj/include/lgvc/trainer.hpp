#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lgvc/core/optim.hpp"
#include "lgvc/core/rng.hpp"
#include "lgvc/dataaug.hpp"
#include "lgvc/dataio.hpp"
#include "lgvc/encoder.hpp"
#include "lgvc/losses.hpp"

namespace lgvc::trainer {

struct TrainConfig {
  int batch_size = 8;
  int k_local = 4;
  int epochs = 30;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  int lr_milestone = 20;  // epoch index at which lr is multiplied by lr_decay
  double lr_decay = 0.1;
  std::uint64_t seed = 0;
  int levels_per_iter = 32;
  // Fraction of training over which the gradient-reversal strength ramps from
  // 0 to grl_lambda with the usual sigmoid schedule 2/(1+e^(-10p))-1. The ramp
  // lets features form before the adversary bites; 0 keeps lambda constant.
  double grl_warmup = 0.0;
  int mi_hidden = 32;
  int order_hidden = 32;
  std::string order_head_kind = "recurrent";
  dataaug::AugmentConfig aug;
  std::string checkpoint_dir;  // empty: keep checkpoints off disk
  std::string metrics_path;    // empty: metrics only returned in memory

  void validate() const;
};

struct View {
  core::Tensor clip;  // (3, in_t, in_h, in_w), photometric-augmented
  dataaug::CropParams crop;
  dataaug::LowLevelParams low;
  int video = 0;  // index within the batch
  int k = 0;      // 0 = global view, 1..K = local clip index
  int group = 0;  // intensity-level group
};

struct TrainingBatch {
  std::vector<View> views;  // n_videos * (K+1), video-major, k ascending
  std::vector<std::vector<int>> perms;  // one non-identity permutation per video
  std::vector<int> video_indices;       // dataset indices of the batch videos
  int n_videos = 0, k = 0;

  const View& view(int video, int k_) const {
    return views[static_cast<size_t>(video) * (k + 1) + k_];
  }
};

/// Samples a batch: one global + K local views per video, intensity levels
/// drawn first and assigned so every group has >= 2 members from >= 2 videos.
/// Requested level counts beyond floor(total_views/2) are reduced with a
/// warning.
TrainingBatch build_batch(const std::vector<dataio::PretrainView>& data,
                          const TrainConfig& cfg,
                          const encoder::EncoderConfig& ecfg, core::Rng& rng);

struct Models {
  encoder::Encoder enc;
  losses::MIHead mi_head;
  losses::OrderHead order_head;

  Models(const encoder::EncoderConfig& ecfg, const TrainConfig& tcfg,
         core::Rng& rng);
  std::vector<std::pair<std::string, core::Var>> named_params();
  std::vector<core::Var> param_list();
};

struct StepMetrics {
  long step = 0;
  int epoch = 0;
  double l_rc = 0, l_mi_head = 0, l_mi_enc = 0, l_td = 0, total = 0, lr = 0;
  std::string to_json() const;
};

/// One simultaneous update of encoder, projection, order head (descent) and
/// MI critic (ascent via the reversal construction).
StepMetrics train_step(const TrainingBatch& batch, Models& models,
                       const losses::LossConfig& lcfg, core::Adam& opt,
                       core::Rng& rng);

struct FitResult {
  std::vector<StepMetrics> metrics;
  std::string last_checkpoint;
};

/// Full pretraining loop. `resume_from` restarts bit-exactly from a training
/// checkpoint written by a previous fit with the same configs.
FitResult fit(const std::vector<dataio::PretrainView>& data,
              const encoder::EncoderConfig& ecfg, const TrainConfig& tcfg,
              const losses::LossConfig& lcfg,
              const std::string& resume_from = "");

/// Training checkpoint: epoch counter, rng state, all named parameters,
/// optimizer moments. Written atomically (temp file + rename).
void save_train_checkpoint(const std::string& path, int next_epoch, long step,
                           double lr, Models& models, const core::Adam& opt,
                           const core::Rng& rng);
struct ResumeState {
  int next_epoch = 0;
  long step = 0;
  double lr = 0;
  std::string rng_state;
};
ResumeState load_train_checkpoint(const std::string& path, Models& models,
                                  core::Adam& opt);

}  // namespace lgvc::trainer
