#ifndef BODYFORMER_TRAINING_HPP
#define BODYFORMER_TRAINING_HPP

#include "bodyformer/adamw.hpp"
#include "bodyformer/model.hpp"

#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace bodyformer {

struct TrainingSchedule {
  double pretrain_lr = 1e-4;
  double crossmodal_lr = 1e-5;
  double weight_decay = 1e-2;
  double lambda1 = 1.0;
  double lambda2 = 0.3;
  double lambda3_min = 0.2;
  double lambda3_max = 3.0;
  int lambda3_period = 10;  // epochs per annealing cycle
  double dropout_start = 1.0;
  double dropout_end = 0.6;
  double mask_rate = 0.2;        // fraction of frames modified
  double mask_noise_share = 0.1; // fraction of modified frames set to noise
  double spec_augment_max = 0.2;
  int batch_size = 32;
  int warmup_epochs = 400;
  int pretrain_epochs = 50;
  int crossmodal_epochs = 1500;
  double grad_clip = 1.0;  // <= 0 disables

  void validate() const;
  static TrainingSchedule from_config(const KeyValueConfig& kv);
};

struct TrainingSample {
  SpeechFeatureSequence speech;
  MotionSequence motion;
  std::string id;
};
using Dataset = std::vector<TrainingSample>;

// ---- losses ---------------------------------------------------------------

/// (1/T) * sum_t ||pred_t - target_t||^2, dims summed inside the square.
Tensor joint_prediction_loss(const Tensor& pred, const Tensor& target);

/// (1/(T*J)) * sum over the T-1 frame deltas and J joints of
/// (||dpred_{t,j}||_F - ||dtarget_{t,j}||_F)^2 on per-joint 6-blocks.
Tensor magnitude_loss(const Tensor& pred, const Tensor& target);

/// Diagonal-Gaussian KL from log-variance parameterization (differentiable).
Tensor kl_divergence(const Tensor& mu_q, const Tensor& logvar_q,
                     const Tensor& mu_p, const Tensor& logvar_p);

/// Closed-form scalar KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)).
double kl_divergence(const Vec& mu_q, const Vec& sigma_q, const Vec& mu_p,
                     const Vec& sigma_p);

double cyclical_lambda3(int epoch, const TrainingSchedule& s);
double total_loss(double l_g, double l_m, double l_kl, int epoch,
                  const TrainingSchedule& s);

// ---- schedules ------------------------------------------------------------

/// Linear ramp 0 -> base_lr over warmup_steps, then cosine decay to 0.
double warmup_cosine_lr(std::uint64_t step, std::uint64_t total_steps,
                        std::uint64_t warmup_steps, double base_lr);

/// Frame-dropout probability: 1.0 at step 0 linearly down to 0.6 at the end
/// of warmup, constant after.
double dropout_annealing_p(std::uint64_t step, std::uint64_t warmup_steps,
                           double start = 1.0, double end = 0.6);

// ---- masked modeling ------------------------------------------------------

struct MaskPolicy {
  double rate = 0.2;
  double noise_share = 0.1;
};

struct CorruptionResult {
  MatX corrupted;
  std::vector<bool> mask;  // true = frame was modified
  int n_modified = 0;
  int n_noise = 0;
};

/// round(rate*T) frames picked uniformly without replacement;
/// round(noise_share * modified) of them replaced with N(0, I) noise, the
/// rest zeroed.
CorruptionResult corrupt_for_masked_modeling(const MatX& frames,
                                             std::mt19937_64& rng,
                                             const MaskPolicy& policy);

/// Mean squared error over masked frames only.
Tensor masked_mse(const Tensor& recon, const MatX& target,
                  const std::vector<bool>& mask);

// ---- loss assembly --------------------------------------------------------

struct LossParts {
  double l_g = 0.0, l_m = 0.0, l_kl = 0.0, total = 0.0;
};

/// Full cross-modal training loss.  speech_in / motion_in are the (possibly
/// augmented / dropout-corrupted) network inputs; targets come from sample.
/// eps is the fixed reparameterization draw, so the whole map is
/// deterministic in (params, inputs, eps) and finite-difference checkable.
Tensor crossmodal_loss(const ModelParams& params, const TrainingSample& sample,
                       const MatX& speech_in, const MatX& motion_in,
                       const Vec& eps, double lambda3,
                       const TrainingSchedule& s, LossParts* parts = nullptr);

/// Teacher-forced L_g on clean inputs (no augmentation, no dropout).
double evaluate_teacher_forced_lg(const ModelParams& params,
                                  const Dataset& data);

// ---- training loops -------------------------------------------------------

enum class Phase { EncoderPretrain, DecoderPretrain, CrossModal };
const char* phase_name(Phase p);

class MetricsLogger {
 public:
  MetricsLogger() = default;
  explicit MetricsLogger(const std::string& path);
  void log(std::uint64_t step, Phase phase, double l_g, double l_m, double l_kl,
           double lambda3, double lr, double dropout_p);

 private:
  std::ofstream os_;
};

struct TrainRunOptions {
  std::uint64_t steps = 100;
  std::uint64_t steps_per_epoch = 1;  // epoch counter for lambda3 cycling
  std::uint64_t warmup_steps = 10;
  std::uint64_t lr_total_steps = 0;  // cosine horizon; 0 means `steps`
  double base_lr = 1e-4;
  bool augment = true;
  std::string checkpoint_path;       // periodic + final when non-empty
  std::uint64_t checkpoint_every = 0;
  MetricsLogger* metrics = nullptr;
};

/// Masked speech modeling over the encoder side.  Only encoder-group
/// parameters are updated.
void pretrain_encoder(const Dataset& data, ModelParams& params, AdamW& opt,
                      std::mt19937_64& rng, const TrainingSchedule& s,
                      const TrainRunOptions& run);

/// Masked motion modeling over the decoder side with cross-attention
/// bypassed.  Only decoder-group parameters are updated.
void pretrain_decoder(const Dataset& data, ModelParams& params, AdamW& opt,
                      std::mt19937_64& rng, const TrainingSchedule& s,
                      const TrainRunOptions& run);

/// End-to-end variational training; all parameters update.
void train_crossmodal(const Dataset& data, ModelParams& params, AdamW& opt,
                      std::mt19937_64& rng, const TrainingSchedule& s,
                      const TrainRunOptions& run);

// ---- checkpoint with optimizer state --------------------------------------

void save_training_checkpoint(const std::string& path, const ModelParams& params,
                              const AdamW& opt, std::uint64_t step,
                              const std::mt19937_64& rng, Phase phase,
                              std::map<std::string, std::string> extra = {});

struct ResumeState {
  ModelParams params;
  std::vector<Vec> m, v;
  std::uint64_t opt_step = 0;
  std::uint64_t step = 0;
  std::mt19937_64 rng;
  std::string phase;
  std::map<std::string, std::string> meta;
};
ResumeState load_training_checkpoint(const std::string& path);

/// Restores moment buffers and step counter into a freshly built optimizer.
void restore_optimizer(AdamW& opt, const ResumeState& state);

double global_grad_norm(const std::vector<Tensor>& params);
void clip_gradients(std::vector<Tensor>& params, double max_norm);

}  // namespace bodyformer

#endif
