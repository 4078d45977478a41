#ifndef BODYFORMER_MODEL_HPP
#define BODYFORMER_MODEL_HPP

#include "bodyformer/checkpoint.hpp"
#include "bodyformer/config.hpp"
#include "bodyformer/features.hpp"
#include "bodyformer/motion.hpp"
#include "bodyformer/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace bodyformer {

struct ModelConfig {
  int d_model = 512;
  int heads = 8;
  int enc_layers = 4;
  int dec_layers = 4;
  int ff_dim = 2048;
  int speech_dim = kSpeechDim;
  int pose_dim = 0;  // 6J, dataset dependent
  int max_T = 2000;
  int modes = kNumModes;

  void validate() const;
  static ModelConfig from_config(const KeyValueConfig& kv);
  void to_config(KeyValueConfig& kv) const;
};

/// Gain applied to the raw-input + global-time branch of the embedding layer.
inline double embed_gain(int d_model) { return std::sqrt(double(d_model) / 3.0); }

struct ProjectionNet {
  Tensor w1, b1, w2, b2;  // in -> d_model -> d_model, GELU between
};

struct EmbeddingParams {
  Tensor gpe_freqs;  // d_model/2
  Tensor mpe_freqs;  // modes x d_model/2
  Tensor ln_gain, ln_bias;
};

struct FeedForward {
  Tensor w1, b1, w2, b2;  // d -> ff_dim -> d, GELU between
};

struct EncoderLayer {
  AttentionWeights attn;
  FeedForward ff;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct DecoderLayer {
  AttentionWeights self_attn;
  AttentionWeights cross_attn;
  FeedForward ff;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias, ln3_gain, ln3_bias;
};

/// Attention block + feed-forward with post-LN residuals, shared by the
/// encoder-style blocks of the sequence embedding transformer.
struct MabParams {
  AttentionWeights attn;
  FeedForward ff;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct ModelParams {
  ModelConfig cfg;
  ProjectionNet speech_proj;
  ProjectionNet motion_proj;
  EmbeddingParams speech_embed;
  EmbeddingParams motion_embed;
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  MabParams seq_mab1, seq_mab2, pma_mab;
  Tensor pma_ff_w, pma_ff_b;  // FF applied to the set before PMA
  Tensor pma_seed;            // 1 x d (k = 1)
  Tensor post_mu_w, post_mu_b;
  Tensor post_logvar_w, post_logvar_b;
  Tensor prior_mu, prior_logvar;
  Tensor out_w, out_b;  // d -> pose_dim
  Tensor start_token;   // d
  Tensor msm_w, msm_b;  // reconstruction head for masked speech pre-training

  static ModelParams init(const ModelConfig& cfg, std::mt19937_64& rng);

  /// All parameters with stable, sorted-friendly names.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> all() const;
  /// Speech side: projection, embedding, encoder stack, MSM head.
  std::vector<Tensor> encoder_group() const;
  /// Motion side: projection, embedding, decoder stack, output head, start token.
  std::vector<Tensor> decoder_group() const;
  /// Variational machinery: sequence embedder, posterior heads, prior.
  std::vector<Tensor> variational_group() const;

  void save(const std::string& path,
            std::map<std::string, std::string> extra_meta = {}) const;
  static ModelParams load(const std::string& path, ArrayBundle* raw = nullptr);
};

/// Per-frame clock/mode arrays driving the embedding layer.
struct ClockInfo {
  std::vector<double> global;  // frame index t
  std::vector<double> local;   // mode-local clock t'
  std::vector<SpeakingMode> modes;

  static ClockInfo from_sequence(const SpeechFeatureSequence& seq);
  static ClockInfo all_mode(Eigen::Index T, SpeakingMode m);
  ClockInfo prefix(Eigen::Index n) const;
  Eigen::Index length() const { return Eigen::Index(global.size()); }
};

// ---- forward passes (differentiable) ---------------------------------------

Tensor projection_net_forward(const ProjectionNet& net, const Tensor& x);

/// GPE(t) = interleaved [sin(w_i t), cos(w_i t)] rows for each clock value.
Tensor gpe_matrix(const Tensor& freqs, const std::vector<double>& clocks);

/// MPE(m, t') with per-mode frequency rows and the local clocks.
Tensor mpe_matrix(const Tensor& mode_freqs, const std::vector<SpeakingMode>& modes,
                  const std::vector<double>& local_clocks);

/// LayerNorm(c * (x + GPE(t)) + MPE(m, t')) with c = embed_gain(d_model).
Tensor embed_sequence(const Tensor& x, const ClockInfo& clocks,
                      const EmbeddingParams& emb, int d_model);

Tensor encoder_forward(const ModelParams& p, const Tensor& speech_frames,
                       const ClockInfo& clocks);

struct DecoderOptions {
  bool bypass_cross_attention = false;  // intra-modal pre-training mode
  const Vec* seed_pose = nullptr;       // replaces the start token at row 0
};

/// Decoder over L = motion_prev.rows() + 1 positions.  Row 0 of the input is
/// the learnable start token; row i is the projection of pose i-1.  Output row
/// i is the prediction of pose i.  latent, when valid, is added to every
/// embedded motion token.
Tensor decoder_forward(const ModelParams& p, const Tensor& motion_prev,
                       const Tensor& encoded, const Tensor& latent,
                       const ClockInfo& clocks, const DecoderOptions& opt = {});

/// Embedded motion tokens (projection + embedding layer), the input of the
/// sequence embedding transformer.
Tensor motion_embedded(const ModelParams& p, const Tensor& motion,
                       const ClockInfo& clocks);

/// MAB -> MAB -> PMA with the k=1 seed; returns the pooled 1 x d vector.
Tensor sequence_embed(const ModelParams& p, const Tensor& motion_embedded);

struct Posterior {
  Tensor mu;      // 1 x d
  Tensor logvar;  // 1 x d
  Tensor sigma;   // exp(logvar / 2)
};
Posterior posterior_forward(const ModelParams& p, const Tensor& pooled);

/// eta = mu + sigma * eps with eps ~ N(0, I) from the prior parameters.
Vec sample_prior(const ModelParams& p, std::mt19937_64& rng);

/// Autoregressive rollout: one latent per sequence, predictions fed back.
MatX generate(const ModelParams& p, const SpeechFeatureSequence& speech,
              std::mt19937_64& rng, const Vec* seed_pose = nullptr);
MotionSequence generate_motion(const ModelParams& p,
                               const SpeechFeatureSequence& speech,
                               std::mt19937_64& rng, const Skeleton& skeleton,
                               const Vec* seed_pose = nullptr);

BoolMat causal_mask(Eigen::Index T);

}  // namespace bodyformer

#endif
