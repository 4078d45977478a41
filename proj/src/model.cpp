#include "bodyformer/model.hpp"

#include <cmath>
#include <sstream>

namespace bodyformer {

// ---- config ---------------------------------------------------------------

void ModelConfig::validate() const {
  if (d_model % 2 != 0) throw ConfigError("model: d_model must be even");
  if (heads < 1 || d_model % heads != 0)
    throw ConfigError("model: d_model must be divisible by heads");
  if (pose_dim <= 0 || pose_dim % 6 != 0)
    throw ConfigError("model: pose_dim must be a positive multiple of 6");
  if (enc_layers < 1 || dec_layers < 1)
    throw ConfigError("model: need at least one encoder and decoder layer");
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& kv) {
  ModelConfig c;
  c.d_model = kv.get_int("d_model", c.d_model);
  c.heads = kv.get_int("heads", c.heads);
  c.enc_layers = kv.get_int("enc_layers", c.enc_layers);
  c.dec_layers = kv.get_int("dec_layers", c.dec_layers);
  c.ff_dim = kv.get_int("ff_dim", c.ff_dim);
  c.speech_dim = kv.get_int("speech_dim", c.speech_dim);
  c.pose_dim = kv.get_int("pose_dim", c.pose_dim);
  c.max_T = kv.get_int("max_T", c.max_T);
  // pose_dim is usually filled in from the dataset afterwards, so validation
  // is left to the caller.
  return c;
}

void ModelConfig::to_config(KeyValueConfig& kv) const {
  kv.set("d_model", std::to_string(d_model));
  kv.set("heads", std::to_string(heads));
  kv.set("enc_layers", std::to_string(enc_layers));
  kv.set("dec_layers", std::to_string(dec_layers));
  kv.set("ff_dim", std::to_string(ff_dim));
  kv.set("speech_dim", std::to_string(speech_dim));
  kv.set("pose_dim", std::to_string(pose_dim));
  kv.set("max_T", std::to_string(max_T));
}

// ---- parameter construction -----------------------------------------------

namespace {

Tensor init_mat(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / double(rows + cols)));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  return Tensor::from_mat(m, true);
}

Tensor zeros_vec(Eigen::Index n) { return Tensor::from_vec(Vec::Zero(n), true); }
Tensor ones_vec(Eigen::Index n) { return Tensor::from_vec(Vec::Ones(n), true); }

/// Standard geometric frequency ladder 10000^(-2i/d).
Vec frequency_ladder(int d_model) {
  Vec w(d_model / 2);
  for (int i = 0; i < d_model / 2; ++i)
    w[i] = std::pow(10000.0, -2.0 * i / double(d_model));
  return w;
}

ProjectionNet init_projection(Eigen::Index in, int d, std::mt19937_64& rng) {
  return {init_mat(in, d, rng), zeros_vec(d), init_mat(d, d, rng), zeros_vec(d)};
}

EmbeddingParams init_embedding(const ModelConfig& cfg, std::mt19937_64&) {
  EmbeddingParams e;
  e.gpe_freqs = Tensor::from_vec(frequency_ladder(cfg.d_model), true);
  Mat mf(cfg.modes, cfg.d_model / 2);
  for (int m = 0; m < cfg.modes; ++m)
    mf.row(m) = frequency_ladder(cfg.d_model).transpose();
  e.mpe_freqs = Tensor::from_mat(mf, true);
  e.ln_gain = ones_vec(cfg.d_model);
  e.ln_bias = zeros_vec(cfg.d_model);
  return e;
}

AttentionWeights init_attention(int d, std::mt19937_64& rng) {
  return {init_mat(d, d, rng), init_mat(d, d, rng), init_mat(d, d, rng),
          init_mat(d, d, rng), zeros_vec(d)};
}

FeedForward init_ff(int d, int ff_dim, std::mt19937_64& rng) {
  return {init_mat(d, ff_dim, rng), zeros_vec(ff_dim), init_mat(ff_dim, d, rng),
          zeros_vec(d)};
}

MabParams init_mab(const ModelConfig& cfg, std::mt19937_64& rng) {
  return {init_attention(cfg.d_model, rng), init_ff(cfg.d_model, cfg.ff_dim, rng),
          ones_vec(cfg.d_model), zeros_vec(cfg.d_model), ones_vec(cfg.d_model),
          zeros_vec(cfg.d_model)};
}

using Named = std::vector<std::pair<std::string, Tensor>>;

void collect_proj(Named& out, const std::string& prefix, const ProjectionNet& n) {
  out.emplace_back(prefix + ".w1", n.w1);
  out.emplace_back(prefix + ".b1", n.b1);
  out.emplace_back(prefix + ".w2", n.w2);
  out.emplace_back(prefix + ".b2", n.b2);
}

void collect_embed(Named& out, const std::string& prefix, const EmbeddingParams& e) {
  out.emplace_back(prefix + ".gpe_freqs", e.gpe_freqs);
  out.emplace_back(prefix + ".mpe_freqs", e.mpe_freqs);
  out.emplace_back(prefix + ".ln_gain", e.ln_gain);
  out.emplace_back(prefix + ".ln_bias", e.ln_bias);
}

void collect_attn(Named& out, const std::string& prefix, const AttentionWeights& a) {
  out.emplace_back(prefix + ".wq", a.wq);
  out.emplace_back(prefix + ".wk", a.wk);
  out.emplace_back(prefix + ".wv", a.wv);
  out.emplace_back(prefix + ".wo", a.wo);
  out.emplace_back(prefix + ".bo", a.bo);
}

void collect_ff(Named& out, const std::string& prefix, const FeedForward& f) {
  out.emplace_back(prefix + ".w1", f.w1);
  out.emplace_back(prefix + ".b1", f.b1);
  out.emplace_back(prefix + ".w2", f.w2);
  out.emplace_back(prefix + ".b2", f.b2);
}

void collect_mab(Named& out, const std::string& prefix, const MabParams& m) {
  collect_attn(out, prefix + ".attn", m.attn);
  collect_ff(out, prefix + ".ff", m.ff);
  out.emplace_back(prefix + ".ln1_gain", m.ln1_gain);
  out.emplace_back(prefix + ".ln1_bias", m.ln1_bias);
  out.emplace_back(prefix + ".ln2_gain", m.ln2_gain);
  out.emplace_back(prefix + ".ln2_bias", m.ln2_bias);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  int d = cfg.d_model;
  p.speech_proj = init_projection(cfg.speech_dim, d, rng);
  p.motion_proj = init_projection(cfg.pose_dim, d, rng);
  p.speech_embed = init_embedding(cfg, rng);
  p.motion_embed = init_embedding(cfg, rng);
  for (int i = 0; i < cfg.enc_layers; ++i)
    p.encoder.push_back({init_attention(d, rng), init_ff(d, cfg.ff_dim, rng),
                         ones_vec(d), zeros_vec(d), ones_vec(d), zeros_vec(d)});
  for (int i = 0; i < cfg.dec_layers; ++i)
    p.decoder.push_back({init_attention(d, rng), init_attention(d, rng),
                         init_ff(d, cfg.ff_dim, rng), ones_vec(d), zeros_vec(d),
                         ones_vec(d), zeros_vec(d), ones_vec(d), zeros_vec(d)});
  p.seq_mab1 = init_mab(cfg, rng);
  p.seq_mab2 = init_mab(cfg, rng);
  p.pma_mab = init_mab(cfg, rng);
  p.pma_ff_w = init_mat(d, d, rng);
  p.pma_ff_b = zeros_vec(d);
  p.pma_seed = init_mat(1, d, rng);
  p.post_mu_w = init_mat(d, d, rng);
  p.post_mu_b = zeros_vec(d);
  p.post_logvar_w = init_mat(d, d, rng);
  p.post_logvar_b = zeros_vec(d);
  p.prior_mu = zeros_vec(d);
  p.prior_logvar = zeros_vec(d);
  p.out_w = init_mat(d, cfg.pose_dim, rng);
  p.out_b = zeros_vec(cfg.pose_dim);
  p.start_token = Tensor::from_vec(0.02 * init_mat(1, d, rng).value(), true);
  p.msm_w = init_mat(d, cfg.speech_dim, rng);
  p.msm_b = zeros_vec(cfg.speech_dim);
  return p;
}

Named ModelParams::named() const {
  Named out;
  collect_proj(out, "speech_proj", speech_proj);
  collect_proj(out, "motion_proj", motion_proj);
  collect_embed(out, "speech_embed", speech_embed);
  collect_embed(out, "motion_embed", motion_embed);
  for (size_t i = 0; i < encoder.size(); ++i) {
    std::string pre = "encoder." + std::to_string(i);
    collect_attn(out, pre + ".attn", encoder[i].attn);
    collect_ff(out, pre + ".ff", encoder[i].ff);
    out.emplace_back(pre + ".ln1_gain", encoder[i].ln1_gain);
    out.emplace_back(pre + ".ln1_bias", encoder[i].ln1_bias);
    out.emplace_back(pre + ".ln2_gain", encoder[i].ln2_gain);
    out.emplace_back(pre + ".ln2_bias", encoder[i].ln2_bias);
  }
  for (size_t i = 0; i < decoder.size(); ++i) {
    std::string pre = "decoder." + std::to_string(i);
    collect_attn(out, pre + ".self_attn", decoder[i].self_attn);
    collect_attn(out, pre + ".cross_attn", decoder[i].cross_attn);
    collect_ff(out, pre + ".ff", decoder[i].ff);
    out.emplace_back(pre + ".ln1_gain", decoder[i].ln1_gain);
    out.emplace_back(pre + ".ln1_bias", decoder[i].ln1_bias);
    out.emplace_back(pre + ".ln2_gain", decoder[i].ln2_gain);
    out.emplace_back(pre + ".ln2_bias", decoder[i].ln2_bias);
    out.emplace_back(pre + ".ln3_gain", decoder[i].ln3_gain);
    out.emplace_back(pre + ".ln3_bias", decoder[i].ln3_bias);
  }
  collect_mab(out, "seq_mab1", seq_mab1);
  collect_mab(out, "seq_mab2", seq_mab2);
  collect_mab(out, "pma_mab", pma_mab);
  out.emplace_back("pma_ff_w", pma_ff_w);
  out.emplace_back("pma_ff_b", pma_ff_b);
  out.emplace_back("pma_seed", pma_seed);
  out.emplace_back("post_mu_w", post_mu_w);
  out.emplace_back("post_mu_b", post_mu_b);
  out.emplace_back("post_logvar_w", post_logvar_w);
  out.emplace_back("post_logvar_b", post_logvar_b);
  out.emplace_back("prior_mu", prior_mu);
  out.emplace_back("prior_logvar", prior_logvar);
  out.emplace_back("out_w", out_w);
  out.emplace_back("out_b", out_b);
  out.emplace_back("start_token", start_token);
  out.emplace_back("msm_w", msm_w);
  out.emplace_back("msm_b", msm_b);
  return out;
}

std::vector<Tensor> ModelParams::all() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::vector<Tensor> ModelParams::encoder_group() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named())
    if (name.rfind("speech_", 0) == 0 || name.rfind("encoder.", 0) == 0 ||
        name.rfind("msm_", 0) == 0)
      out.push_back(t);
  return out;
}

std::vector<Tensor> ModelParams::decoder_group() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named())
    if (name.rfind("motion_", 0) == 0 || name.rfind("decoder.", 0) == 0 ||
        name.rfind("out_", 0) == 0 || name == "start_token")
      out.push_back(t);
  return out;
}

std::vector<Tensor> ModelParams::variational_group() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named())
    if (name.rfind("seq_mab", 0) == 0 || name.rfind("pma_", 0) == 0 ||
        name.rfind("post_", 0) == 0 || name.rfind("prior_", 0) == 0)
      out.push_back(t);
  return out;
}

void ModelParams::save(const std::string& path,
                       std::map<std::string, std::string> extra_meta) const {
  ArrayBundle b;
  b.meta = std::move(extra_meta);
  b.meta["kind"] = "checkpoint";
  KeyValueConfig kv;
  cfg.to_config(kv);
  std::string cfg_text;
  for (const auto& [k, v] : kv.values()) cfg_text += k + " = " + v + "\n";
  b.meta["model_config"] = cfg_text;
  for (const auto& [name, t] : named()) {
    if (t.shape().size() == 2)
      b.put(name, t.matrix());
    else
      b.put(name, Vec(t.value()));
  }
  write_bundle(path, b);
}

ModelParams ModelParams::load(const std::string& path, ArrayBundle* raw) {
  ArrayBundle b = read_bundle(path);
  ModelConfig cfg =
      ModelConfig::from_config(KeyValueConfig::from_string(b.meta.at("model_config")));
  cfg.validate();
  std::mt19937_64 rng(0);
  ModelParams p = init(cfg, rng);
  for (auto& [name, t] : p.named()) {
    auto it = b.arrays.find(name);
    if (it == b.arrays.end())
      throw ParseError("checkpoint: missing parameter " + name + " in " + path);
    const auto& data = it->second.second;
    if (Eigen::Index(data.size()) != t.size())
      throw ParseError("checkpoint: size mismatch for " + name + " in " + path);
    t.value() = Eigen::Map<const Vec>(data.data(), Eigen::Index(data.size()));
  }
  if (raw) *raw = std::move(b);
  return p;
}

// ---- clocks ---------------------------------------------------------------

ClockInfo ClockInfo::from_sequence(const SpeechFeatureSequence& seq) {
  ClockInfo c;
  Eigen::Index T = seq.length();
  c.global.resize(size_t(T));
  c.local.resize(size_t(T));
  c.modes = seq.mode_labels;
  for (Eigen::Index t = 0; t < T; ++t) {
    c.global[size_t(t)] = double(t);
    c.local[size_t(t)] = double(seq.local_clocks[size_t(t)]);
  }
  return c;
}

ClockInfo ClockInfo::all_mode(Eigen::Index T, SpeakingMode m) {
  ClockInfo c;
  for (Eigen::Index t = 0; t < T; ++t) {
    c.global.push_back(double(t));
    c.local.push_back(double(t));
    c.modes.push_back(m);
  }
  return c;
}

ClockInfo ClockInfo::prefix(Eigen::Index n) const {
  ClockInfo c;
  c.global.assign(global.begin(), global.begin() + n);
  c.local.assign(local.begin(), local.begin() + n);
  c.modes.assign(modes.begin(), modes.begin() + n);
  return c;
}

// ---- forward passes -------------------------------------------------------

Tensor projection_net_forward(const ProjectionNet& net, const Tensor& x) {
  if (x.cols() != net.w1.rows())
    throw DimensionError("projection_net: input width mismatch");
  Tensor h = gelu(add_rowvec(matmul(x, net.w1), net.b1));
  return add_rowvec(matmul(h, net.w2), net.b2);
}

namespace {

/// [sin block | cos block] columns interleaved to [sin0, cos0, sin1, cos1, ...]
std::vector<Eigen::Index> interleave_indices(Eigen::Index half) {
  std::vector<Eigen::Index> idx;
  idx.reserve(size_t(2 * half));
  for (Eigen::Index i = 0; i < half; ++i) {
    idx.push_back(i);
    idx.push_back(half + i);
  }
  return idx;
}

Tensor sinusoid_matrix(const Tensor& freq_row, const std::vector<double>& clocks) {
  Eigen::Index T = Eigen::Index(clocks.size());
  Mat tcol(T, 1);
  for (Eigen::Index t = 0; t < T; ++t) tcol(t, 0) = clocks[size_t(t)];
  Tensor phases = matmul(Tensor::from_mat(tcol), freq_row);  // T x d/2
  Tensor block = concat_cols({sin(phases), cos(phases)});
  return gather_cols(block, interleave_indices(freq_row.cols()));
}

}  // namespace

Tensor gpe_matrix(const Tensor& freqs, const std::vector<double>& clocks) {
  Tensor row = reshape(freqs, 1, freqs.size());
  return sinusoid_matrix(row, clocks);
}

Tensor mpe_matrix(const Tensor& mode_freqs, const std::vector<SpeakingMode>& modes,
                  const std::vector<double>& local_clocks) {
  if (modes.size() != local_clocks.size())
    throw DimensionError("mpe: clock/mode length mismatch");
  Eigen::Index T = Eigen::Index(modes.size());
  Tensor out;
  for (int m = 0; m < int(mode_freqs.rows()); ++m) {
    Vec indicator = Vec::Zero(T);
    for (Eigen::Index t = 0; t < T; ++t)
      if (int(modes[size_t(t)]) == m) indicator[t] = 1.0;
    if (indicator.sum() == 0.0) continue;
    Tensor row = slice_rows(mode_freqs, m, 1);
    Tensor part = scale_rows(sinusoid_matrix(row, local_clocks), indicator);
    out = out.valid() ? add(out, part) : part;
  }
  if (!out.valid())
    out = Tensor::zeros(T, 2 * mode_freqs.cols());
  return out;
}

Tensor embed_sequence(const Tensor& x, const ClockInfo& clocks,
                      const EmbeddingParams& emb, int d_model) {
  if (x.rows() != clocks.length())
    throw DimensionError("embed: clock arrays do not match sequence length");
  for (auto m : clocks.modes)
    if (int(m) < 0 || int(m) >= kNumModes)
      throw InputError("embed: unknown speaking mode");
  Tensor gpe = gpe_matrix(emb.gpe_freqs, clocks.global);
  Tensor mpe = mpe_matrix(emb.mpe_freqs, clocks.modes, clocks.local);
  Tensor combined = add(scale(add(x, gpe), embed_gain(d_model)), mpe);
  return layer_norm(combined, emb.ln_gain, emb.ln_bias);
}

namespace {

Tensor ff_forward(const FeedForward& ff, const Tensor& x) {
  Tensor h = gelu(add_rowvec(matmul(x, ff.w1), ff.b1));
  return add_rowvec(matmul(h, ff.w2), ff.b2);
}

Tensor mab_forward(const MabParams& m, const Tensor& q, const Tensor& kv,
                   int heads) {
  Tensor h = layer_norm(add(q, multi_head_attention(q, kv, kv, heads, m.attn)),
                        m.ln1_gain, m.ln1_bias);
  return layer_norm(add(h, ff_forward(m.ff, h)), m.ln2_gain, m.ln2_bias);
}

}  // namespace

BoolMat causal_mask(Eigen::Index T) {
  BoolMat mask(T, T);
  for (Eigen::Index i = 0; i < T; ++i)
    for (Eigen::Index j = 0; j < T; ++j) mask(i, j) = j <= i;
  return mask;
}

Tensor encoder_forward(const ModelParams& p, const Tensor& speech_frames,
                       const ClockInfo& clocks) {
  if (speech_frames.rows() > p.cfg.max_T)
    throw InputError("encoder: sequence exceeds max_T");
  Tensor x = projection_net_forward(p.speech_proj, speech_frames);
  x = embed_sequence(x, clocks, p.speech_embed, p.cfg.d_model);
  for (const auto& layer : p.encoder) {
    Tensor h = layer_norm(
        add(x, multi_head_attention(x, x, x, p.cfg.heads, layer.attn)),
        layer.ln1_gain, layer.ln1_bias);
    x = layer_norm(add(h, ff_forward(layer.ff, h)), layer.ln2_gain,
                   layer.ln2_bias);
  }
  return x;
}

Tensor decoder_forward(const ModelParams& p, const Tensor& motion_prev,
                       const Tensor& encoded, const Tensor& latent,
                       const ClockInfo& clocks, const DecoderOptions& opt) {
  Eigen::Index L = motion_prev.valid() ? motion_prev.rows() + 1 : 1;
  if (clocks.length() != L)
    throw DimensionError("decoder: clock arrays do not match sequence length");
  if (L > p.cfg.max_T) throw InputError("decoder: sequence exceeds max_T");

  Tensor start;
  if (opt.seed_pose) {
    Mat seed_row(1, p.cfg.pose_dim);
    seed_row.row(0) = opt.seed_pose->transpose();
    start = projection_net_forward(p.motion_proj, Tensor::from_mat(seed_row));
  } else {
    start = reshape(p.start_token, 1, p.cfg.d_model);
  }
  Tensor x;
  if (motion_prev.valid() && motion_prev.rows() > 0) {
    Tensor proj = projection_net_forward(p.motion_proj, motion_prev);
    x = concat_rows({start, proj});
  } else {
    x = start;
  }
  x = embed_sequence(x, clocks, p.motion_embed, p.cfg.d_model);
  if (latent.valid()) x = add_rowvec(x, latent);

  BoolMat mask = causal_mask(L);
  for (const auto& layer : p.decoder) {
    Tensor h = layer_norm(
        add(x, multi_head_attention(x, x, x, p.cfg.heads, layer.self_attn, &mask)),
        layer.ln1_gain, layer.ln1_bias);
    Tensor h2 = h;
    if (!opt.bypass_cross_attention) {
      if (!encoded.valid())
        throw InputError("decoder: encoded speech required for cross-attention");
      h2 = layer_norm(
          add(h, multi_head_attention(h, encoded, encoded, p.cfg.heads,
                                      layer.cross_attn)),
          layer.ln2_gain, layer.ln2_bias);
    }
    x = layer_norm(add(h2, ff_forward(layer.ff, h2)), layer.ln3_gain,
                   layer.ln3_bias);
  }
  return add_rowvec(matmul(x, p.out_w), p.out_b);
}

Tensor motion_embedded(const ModelParams& p, const Tensor& motion,
                       const ClockInfo& clocks) {
  Tensor x = projection_net_forward(p.motion_proj, motion);
  return embed_sequence(x, clocks, p.motion_embed, p.cfg.d_model);
}

Tensor sequence_embed(const ModelParams& p, const Tensor& motion_embedded) {
  if (motion_embedded.rows() < 1)
    throw InputError("sequence_embed: empty sequence");
  Tensor h = mab_forward(p.seq_mab1, motion_embedded, motion_embedded,
                         p.cfg.heads);
  h = mab_forward(p.seq_mab2, h, h, p.cfg.heads);
  Tensor ffset = add_rowvec(matmul(h, p.pma_ff_w), p.pma_ff_b);
  return mab_forward(p.pma_mab, p.pma_seed, ffset, p.cfg.heads);
}

Posterior posterior_forward(const ModelParams& p, const Tensor& pooled) {
  Posterior q;
  q.mu = add_rowvec(matmul(pooled, p.post_mu_w), p.post_mu_b);
  q.logvar = add_rowvec(matmul(pooled, p.post_logvar_w), p.post_logvar_b);
  q.sigma = exp(scale(q.logvar, 0.5));
  return q;
}

Vec sample_prior(const ModelParams& p, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec eps(p.prior_mu.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = gauss(rng);
  Vec sigma = (0.5 * p.prior_logvar.value().array()).exp();
  return p.prior_mu.value().array() + sigma.array() * eps.array();
}

MatX generate(const ModelParams& p, const SpeechFeatureSequence& speech,
              std::mt19937_64& rng, const Vec* seed_pose) {
  Eigen::Index T = speech.length();
  if (T > p.cfg.max_T) throw InputError("generate: sequence exceeds max_T");
  ClockInfo clocks = ClockInfo::from_sequence(speech);
  Tensor enc = encoder_forward(p, Tensor::from_mat(speech.frames), clocks);
  Vec eta = sample_prior(p, rng);
  Tensor latent = Tensor::from_vec(eta);

  MatX out(T, p.cfg.pose_dim);
  MatX prev(0, p.cfg.pose_dim);
  DecoderOptions opt;
  opt.seed_pose = seed_pose;
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::Index L = prev.rows() + 1;
    Tensor motion_prev = prev.rows() > 0 ? Tensor::from_mat(prev) : Tensor();
    Tensor pred =
        decoder_forward(p, motion_prev, enc, latent, clocks.prefix(L), opt);
    out.row(t) = pred.matrix().row(L - 1);
    prev.conservativeResize(prev.rows() + 1, Eigen::NoChange);
    prev.row(prev.rows() - 1) = out.row(t);
  }
  return out;
}

MotionSequence generate_motion(const ModelParams& p,
                               const SpeechFeatureSequence& speech,
                               std::mt19937_64& rng, const Skeleton& skeleton,
                               const Vec* seed_pose) {
  MotionSequence m;
  m.frames = generate(p, speech, rng, seed_pose);
  m.fps = speech.fps;
  m.skeleton = skeleton;
  return m;
}

}  // namespace bodyformer
