#include "bodyformer/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bodyformer {

// ---- schedule -------------------------------------------------------------

void TrainingSchedule::validate() const {
  if (pretrain_lr <= 0 || crossmodal_lr <= 0)
    throw ConfigError("schedule: learning rates must be positive");
  if (mask_rate < 0 || mask_rate > 1 || mask_noise_share < 0 ||
      mask_noise_share > 1)
    throw ConfigError("schedule: mask rates must lie in [0,1]");
  if (lambda3_period < 1) throw ConfigError("schedule: lambda3 period < 1");
  if (batch_size < 1) throw ConfigError("schedule: batch size < 1");
}

TrainingSchedule TrainingSchedule::from_config(const KeyValueConfig& kv) {
  TrainingSchedule s;
  s.pretrain_lr = kv.get_double("pretrain_lr", s.pretrain_lr);
  s.crossmodal_lr = kv.get_double("crossmodal_lr", s.crossmodal_lr);
  s.weight_decay = kv.get_double("weight_decay", s.weight_decay);
  s.lambda1 = kv.get_double("lambda1", s.lambda1);
  s.lambda2 = kv.get_double("lambda2", s.lambda2);
  s.lambda3_min = kv.get_double("lambda3_min", s.lambda3_min);
  s.lambda3_max = kv.get_double("lambda3_max", s.lambda3_max);
  s.lambda3_period = kv.get_int("lambda3_period", s.lambda3_period);
  s.dropout_start = kv.get_double("dropout_start", s.dropout_start);
  s.dropout_end = kv.get_double("dropout_end", s.dropout_end);
  s.mask_rate = kv.get_double("mask_rate", s.mask_rate);
  s.mask_noise_share = kv.get_double("mask_noise_share", s.mask_noise_share);
  s.spec_augment_max = kv.get_double("spec_augment_max", s.spec_augment_max);
  s.batch_size = kv.get_int("batch_size", s.batch_size);
  s.warmup_epochs = kv.get_int("warmup_epochs", s.warmup_epochs);
  s.pretrain_epochs = kv.get_int("pretrain_epochs", s.pretrain_epochs);
  s.crossmodal_epochs = kv.get_int("crossmodal_epochs", s.crossmodal_epochs);
  s.grad_clip = kv.get_double("grad_clip", s.grad_clip);
  s.validate();
  return s;
}

// ---- losses ---------------------------------------------------------------

Tensor joint_prediction_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("joint_prediction_loss: shape mismatch");
  double T = double(pred.rows());
  return scale(sum(square(sub(pred, target))), 1.0 / T);
}

namespace {

/// 6J x J block indicator summing each joint's 6 squared components.
Tensor joint_block_matrix(Eigen::Index pose_dim) {
  Eigen::Index J = pose_dim / 6;
  Mat b = Mat::Zero(pose_dim, J);
  for (Eigen::Index j = 0; j < J; ++j) b.block(6 * j, j, 6, 1).setOnes();
  return Tensor::from_mat(b);
}

Tensor per_joint_delta_norms(const Tensor& frames, const Tensor& blocks) {
  Eigen::Index T = frames.rows();
  Tensor delta =
      sub(slice_rows(frames, 1, T - 1), slice_rows(frames, 0, T - 1));
  return sqrt(matmul(square(delta), blocks));  // (T-1) x J
}

}  // namespace

Tensor magnitude_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("magnitude_loss: shape mismatch");
  if (pred.rows() < 2) throw InputError("magnitude_loss: need at least 2 frames");
  Eigen::Index J = pred.cols() / 6;
  Tensor blocks = joint_block_matrix(pred.cols());
  Tensor dn_pred = per_joint_delta_norms(pred, blocks);
  Tensor dn_target = per_joint_delta_norms(target, blocks);
  double norm = 1.0 / (double(pred.rows()) * double(J));
  return scale(sum(square(sub(dn_pred, dn_target))), norm);
}

Tensor kl_divergence(const Tensor& mu_q, const Tensor& logvar_q,
                     const Tensor& mu_p, const Tensor& logvar_p) {
  Tensor var_ratio = exp(sub(logvar_q, logvar_p));
  Tensor mean_term = mul(square(sub(mu_q, mu_p)), exp(neg(logvar_p)));
  Tensor inner = add_scalar(
      add(scale(sub(logvar_p, logvar_q), 0.5),
          scale(add(var_ratio, mean_term), 0.5)),
      -0.5);
  return sum(inner);
}

double kl_divergence(const Vec& mu_q, const Vec& sigma_q, const Vec& mu_p,
                     const Vec& sigma_p) {
  if (mu_q.size() != sigma_q.size() || mu_q.size() != mu_p.size() ||
      mu_q.size() != sigma_p.size())
    throw DimensionError("kl: length mismatch");
  if ((sigma_q.array() <= 0).any() || (sigma_p.array() <= 0).any())
    throw InputError("kl: standard deviations must be positive");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu_q.size(); ++i) {
    double sq = sigma_q[i], sp = sigma_p[i], dm = mu_q[i] - mu_p[i];
    acc += std::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
  }
  return acc;
}

double cyclical_lambda3(int epoch, const TrainingSchedule& s) {
  if (epoch < 0) throw InputError("lambda3: negative epoch");
  int e = epoch % s.lambda3_period;
  return s.lambda3_min +
         e * (s.lambda3_max - s.lambda3_min) / double(s.lambda3_period);
}

double total_loss(double l_g, double l_m, double l_kl, int epoch,
                  const TrainingSchedule& s) {
  return s.lambda1 * l_g + s.lambda2 * l_m + cyclical_lambda3(epoch, s) * l_kl;
}

// ---- schedules ------------------------------------------------------------

double warmup_cosine_lr(std::uint64_t step, std::uint64_t total_steps,
                        std::uint64_t warmup_steps, double base_lr) {
  if (warmup_steps > total_steps)
    throw ConfigError("lr: warmup longer than total steps");
  if (step < warmup_steps)
    return base_lr * double(step) / double(warmup_steps);
  if (step >= total_steps) return 0.0;
  double progress =
      double(step - warmup_steps) / double(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double dropout_annealing_p(std::uint64_t step, std::uint64_t warmup_steps,
                           double start, double end) {
  if (warmup_steps == 0 || step >= warmup_steps) return end;
  return start + (end - start) * double(step) / double(warmup_steps);
}

// ---- masked modeling ------------------------------------------------------

CorruptionResult corrupt_for_masked_modeling(const MatX& frames,
                                             std::mt19937_64& rng,
                                             const MaskPolicy& policy) {
  Eigen::Index T = frames.rows();
  CorruptionResult r;
  r.corrupted = frames;
  r.mask.assign(size_t(T), false);
  r.n_modified = int(std::lround(policy.rate * double(T)));
  r.n_noise = int(std::lround(policy.noise_share * double(r.n_modified)));
  if (r.n_modified == 0) return r;

  std::vector<Eigen::Index> idx(std::size_t(T), 0);
  std::iota(idx.begin(), idx.end(), 0);
  // partial Fisher-Yates: the first n_modified entries are the selection
  for (int i = 0; i < r.n_modified; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, T - 1);
    std::swap(idx[size_t(i)], idx[size_t(pick(rng))]);
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < r.n_modified; ++i) {
    Eigen::Index t = idx[size_t(i)];
    r.mask[size_t(t)] = true;
    if (i < r.n_noise)
      for (Eigen::Index c = 0; c < frames.cols(); ++c)
        r.corrupted(t, c) = gauss(rng);
    else
      r.corrupted.row(t).setZero();
  }
  return r;
}

Tensor masked_mse(const Tensor& recon, const MatX& target,
                  const std::vector<bool>& mask) {
  if (recon.rows() != target.rows() || recon.cols() != target.cols())
    throw DimensionError("masked_mse: shape mismatch");
  Vec w = Vec::Zero(recon.rows());
  Eigen::Index n = 0;
  for (Eigen::Index t = 0; t < recon.rows(); ++t)
    if (mask[size_t(t)]) {
      w[t] = 1.0;
      ++n;
    }
  if (n == 0) return scale(sum(recon), 0.0);
  Tensor sq = square(sub(recon, Tensor::from_mat(target)));
  return scale(sum(scale_rows(sq, w)), 1.0 / double(n * recon.cols()));
}

// ---- loss assembly --------------------------------------------------------

Tensor crossmodal_loss(const ModelParams& params, const TrainingSample& sample,
                       const MatX& speech_in, const MatX& motion_in,
                       const Vec& eps, double lambda3,
                       const TrainingSchedule& s, LossParts* parts) {
  Eigen::Index T = sample.motion.length();
  if (speech_in.rows() != T || motion_in.rows() != T)
    throw DimensionError("crossmodal_loss: stream lengths differ");
  ClockInfo clocks = ClockInfo::from_sequence(sample.speech);
  int d = params.cfg.d_model;

  Tensor enc = encoder_forward(params, Tensor::from_mat(speech_in), clocks);

  // posterior over the clean motion sequence
  Tensor memb =
      motion_embedded(params, Tensor::from_mat(sample.motion.frames), clocks);
  Tensor pooled = sequence_embed(params, memb);
  Posterior q = posterior_forward(params, pooled);
  Mat eps_row(1, d);
  eps_row.row(0) = eps.transpose();
  Tensor eta = add(q.mu, mul(q.sigma, Tensor::from_mat(eps_row)));

  Tensor motion_prev = T > 1
                           ? Tensor::from_mat(MatX(motion_in.topRows(T - 1)))
                           : Tensor();
  Tensor pred = decoder_forward(params, motion_prev, enc, eta, clocks);

  Tensor target = Tensor::from_mat(sample.motion.frames);
  Tensor l_g = joint_prediction_loss(pred, target);
  Tensor l_m = magnitude_loss(pred, target);
  Tensor l_kl = kl_divergence(q.mu, q.logvar,
                              reshape(params.prior_mu, 1, d),
                              reshape(params.prior_logvar, 1, d));
  Tensor total = add(add(scale(l_g, s.lambda1), scale(l_m, s.lambda2)),
                     scale(l_kl, lambda3));
  if (parts) {
    parts->l_g = l_g.item();
    parts->l_m = l_m.item();
    parts->l_kl = l_kl.item();
    parts->total = total.item();
  }
  return total;
}

double evaluate_teacher_forced_lg(const ModelParams& params,
                                  const Dataset& data) {
  double acc = 0.0;
  TrainingSchedule s;
  for (const auto& sample : data) {
    LossParts parts;
    Vec eps = Vec::Zero(params.cfg.d_model);
    crossmodal_loss(params, sample, sample.speech.frames, sample.motion.frames,
                    eps, 0.0, s, &parts);
    acc += parts.l_g;
  }
  return acc / double(data.size());
}

// ---- gradient utilities ---------------------------------------------------

double global_grad_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params) sq += p.grad().squaredNorm();
  return std::sqrt(sq);
}

void clip_gradients(std::vector<Tensor>& params, double max_norm) {
  if (max_norm <= 0) return;
  double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  double f = max_norm / norm;
  for (auto& p : params) p.grad() *= f;
}

// ---- loops ----------------------------------------------------------------

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::EncoderPretrain: return "encoder_pretrain";
    case Phase::DecoderPretrain: return "decoder_pretrain";
    case Phase::CrossModal: return "crossmodal";
  }
  return "?";
}

MetricsLogger::MetricsLogger(const std::string& path)
    : os_(path, std::ios::app) {
  if (!os_) throw std::runtime_error("metrics: cannot open " + path);
}

void MetricsLogger::log(std::uint64_t step, Phase phase, double l_g, double l_m,
                        double l_kl, double lambda3, double lr,
                        double dropout_p) {
  if (!os_.is_open()) return;
  os_ << step << '\t' << phase_name(phase) << '\t' << l_g << '\t' << l_m << '\t'
      << l_kl << '\t' << lambda3 << '\t' << lr << '\t' << dropout_p << '\n';
  os_.flush();
}

namespace {

void maybe_checkpoint(const TrainRunOptions& run, const ModelParams& params,
                      const AdamW& opt, std::uint64_t step,
                      const std::mt19937_64& rng, Phase phase, bool final) {
  if (run.checkpoint_path.empty()) return;
  bool periodic = run.checkpoint_every > 0 && step > 0 &&
                  step % run.checkpoint_every == 0;
  if (periodic || final)
    save_training_checkpoint(run.checkpoint_path, params, opt, step, rng, phase);
}

}  // namespace

void pretrain_encoder(const Dataset& data, ModelParams& params, AdamW& opt,
                      std::mt19937_64& rng, const TrainingSchedule& s,
                      const TrainRunOptions& run) {
  if (data.empty()) throw InputError("pretrain_encoder: empty dataset");
  MaskPolicy policy{s.mask_rate, s.mask_noise_share};
  for (std::uint64_t step = opt.step_count(); step < run.steps; ++step) {
    const TrainingSample& sample = data[size_t(step % data.size())];
    ClockInfo clocks = ClockInfo::from_sequence(sample.speech);
    MatX input = sample.speech.frames;
    if (run.augment)
      input = spec_augment(sample.speech, rng, s.spec_augment_max).frames;
    CorruptionResult corrupt = corrupt_for_masked_modeling(input, rng, policy);
    Tensor enc =
        encoder_forward(params, Tensor::from_mat(corrupt.corrupted), clocks);
    Tensor recon = add_rowvec(matmul(enc, params.msm_w), params.msm_b);
    Tensor loss = masked_mse(recon, sample.speech.frames, corrupt.mask);
    opt.zero_grad();
    backward(loss);
    auto group = params.encoder_group();
    clip_gradients(group, s.grad_clip);
    std::uint64_t horizon =
        run.lr_total_steps ? run.lr_total_steps : run.steps;
    double lr = warmup_cosine_lr(step, horizon, run.warmup_steps, run.base_lr);
    opt.step(lr);
    if (run.metrics)
      run.metrics->log(step, Phase::EncoderPretrain, loss.item(), 0, 0, 0, lr, 0);
    maybe_checkpoint(run, params, opt, step + 1, rng, Phase::EncoderPretrain,
                     step + 1 == run.steps);
  }
}

void pretrain_decoder(const Dataset& data, ModelParams& params, AdamW& opt,
                      std::mt19937_64& rng, const TrainingSchedule& s,
                      const TrainRunOptions& run) {
  if (data.empty()) throw InputError("pretrain_decoder: empty dataset");
  MaskPolicy policy{s.mask_rate, s.mask_noise_share};
  DecoderOptions dec_opt;
  dec_opt.bypass_cross_attention = true;
  for (std::uint64_t step = opt.step_count(); step < run.steps; ++step) {
    const TrainingSample& sample = data[size_t(step % data.size())];
    ClockInfo clocks = ClockInfo::from_sequence(sample.speech);
    Eigen::Index T = sample.motion.length();
    CorruptionResult corrupt =
        corrupt_for_masked_modeling(sample.motion.frames, rng, policy);
    Tensor motion_prev =
        T > 1 ? Tensor::from_mat(MatX(corrupt.corrupted.topRows(T - 1)))
              : Tensor();
    Tensor pred = decoder_forward(params, motion_prev, Tensor(), Tensor(),
                                  clocks, dec_opt);
    Tensor loss = masked_mse(pred, sample.motion.frames, corrupt.mask);
    opt.zero_grad();
    backward(loss);
    auto group = params.decoder_group();
    clip_gradients(group, s.grad_clip);
    std::uint64_t horizon =
        run.lr_total_steps ? run.lr_total_steps : run.steps;
    double lr = warmup_cosine_lr(step, horizon, run.warmup_steps, run.base_lr);
    opt.step(lr);
    if (run.metrics)
      run.metrics->log(step, Phase::DecoderPretrain, loss.item(), 0, 0, 0, lr, 0);
    maybe_checkpoint(run, params, opt, step + 1, rng, Phase::DecoderPretrain,
                     step + 1 == run.steps);
  }
}

void train_crossmodal(const Dataset& data, ModelParams& params, AdamW& opt,
                      std::mt19937_64& rng, const TrainingSchedule& s,
                      const TrainRunOptions& run) {
  if (data.empty()) throw InputError("train_crossmodal: empty dataset");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::uint64_t step = opt.step_count(); step < run.steps; ++step) {
    const TrainingSample& sample = data[size_t(step % data.size())];
    int epoch = int(step / run.steps_per_epoch);
    double lambda3 = cyclical_lambda3(epoch, s);
    double p_drop = dropout_annealing_p(step, run.warmup_steps, s.dropout_start,
                                        s.dropout_end);

    MatX speech_in = sample.speech.frames;
    if (run.augment)
      speech_in = spec_augment(sample.speech, rng, s.spec_augment_max).frames;
    MatX motion_in = sample.motion.frames;
    for (Eigen::Index t = 0; t < motion_in.rows(); ++t)
      if (unit(rng) < p_drop) motion_in.row(t).setZero();
    Vec eps(params.cfg.d_model);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = gauss(rng);

    LossParts parts;
    Tensor loss = crossmodal_loss(params, sample, speech_in, motion_in, eps,
                                  lambda3, s, &parts);
    opt.zero_grad();
    backward(loss);
    auto group = params.all();
    clip_gradients(group, s.grad_clip);
    std::uint64_t horizon =
        run.lr_total_steps ? run.lr_total_steps : run.steps;
    double lr = warmup_cosine_lr(step, horizon, run.warmup_steps, run.base_lr);
    opt.step(lr);
    if (run.metrics)
      run.metrics->log(step, Phase::CrossModal, parts.l_g, parts.l_m,
                       parts.l_kl, lambda3, lr, p_drop);
    maybe_checkpoint(run, params, opt, step + 1, rng, Phase::CrossModal,
                     step + 1 == run.steps);
  }
}

// ---- checkpoint with optimizer state --------------------------------------

void save_training_checkpoint(const std::string& path, const ModelParams& params,
                              const AdamW& opt, std::uint64_t step,
                              const std::mt19937_64& rng, Phase phase,
                              std::map<std::string, std::string> extra) {
  ArrayBundle b;
  b.meta = std::move(extra);
  b.meta["kind"] = "checkpoint";
  KeyValueConfig kv;
  params.cfg.to_config(kv);
  std::string cfg_text;
  for (const auto& [k, v] : kv.values()) cfg_text += k + " = " + v + "\n";
  b.meta["model_config"] = cfg_text;
  b.meta["step"] = std::to_string(step);
  b.meta["opt_step"] = std::to_string(opt.step_count());
  b.meta["phase"] = phase_name(phase);
  std::ostringstream rng_ss;
  rng_ss << rng;
  b.meta["rng_state"] = rng_ss.str();
  for (const auto& [name, t] : params.named()) {
    if (t.shape().size() == 2)
      b.put(name, t.matrix());
    else
      b.put(name, Vec(t.value()));
  }
  auto& m = const_cast<AdamW&>(opt).first_moments();
  auto& v = const_cast<AdamW&>(opt).second_moments();
  for (size_t i = 0; i < m.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "opt.m.%04zu", i);
    b.put(buf, m[i]);
    std::snprintf(buf, sizeof(buf), "opt.v.%04zu", i);
    b.put(buf, v[i]);
  }
  write_bundle(path, b);
}

ResumeState load_training_checkpoint(const std::string& path) {
  ArrayBundle raw;
  ResumeState st;
  st.params = ModelParams::load(path, &raw);
  st.meta = raw.meta;
  st.step = std::stoull(raw.meta.at("step"));
  st.opt_step = raw.meta.count("opt_step")
                    ? std::stoull(raw.meta.at("opt_step"))
                    : st.step;
  st.phase = raw.meta.count("phase") ? raw.meta.at("phase") : "";
  if (raw.meta.count("rng_state")) {
    std::istringstream ss(raw.meta.at("rng_state"));
    ss >> st.rng;
  }
  for (size_t i = 0;; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "opt.m.%04zu", i);
    if (!raw.has(buf)) break;
    st.m.push_back(raw.vec(buf));
    std::snprintf(buf, sizeof(buf), "opt.v.%04zu", i);
    st.v.push_back(raw.vec(buf));
  }
  return st;
}

void restore_optimizer(AdamW& opt, const ResumeState& state) {
  if (state.m.size() != opt.first_moments().size())
    throw ConfigError("resume: optimizer state does not match parameter group");
  opt.first_moments() = state.m;
  opt.second_moments() = state.v;
  opt.set_step_count(state.opt_step);
}

}  // namespace bodyformer
