// Command-line front end: preprocess, pretrain, train, generate, evaluate.

#include "bodyformer/eval.hpp"
#include "bodyformer/features.hpp"
#include "bodyformer/model.hpp"
#include "bodyformer/motion.hpp"
#include "bodyformer/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace bodyformer;

namespace {

constexpr const char* kToolVersion = "bodyformer 1.0.0";

std::string provenance_header(const KeyValueConfig& cfg, std::uint64_t seed) {
  std::ostringstream os;
  os << "# tool: " << kToolVersion << "\n"
     << "# config_hash: " << cfg.content_hash() << "\n"
     << "# seed: " << seed << "\n";
  return os.str();
}

/// Files in `dir` whose extension is in `exts`, keyed by stem.
std::map<std::string, fs::path> files_by_stem(const fs::path& dir,
                                              const std::vector<std::string>& exts) {
  if (!fs::is_directory(dir))
    throw InputError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    if (std::find(exts.begin(), exts.end(), ext) != exts.end())
      out[e.path().stem().string()] = e.path();
  }
  return out;
}

MotionSequence read_any_motion(const fs::path& p) {
  if (p.extension() == ".bvh") return read_bvh(p.string());
  return read_motion(p.string());
}

/// Loads <stem>.speech / <stem>.motion pairs from a preprocess output dir.
Dataset load_dataset(const fs::path& cache_dir) {
  auto speech = files_by_stem(cache_dir, {".speech"});
  auto motion = files_by_stem(cache_dir, {".motion"});
  Dataset data;
  for (const auto& [stem, sp] : speech) {
    auto it = motion.find(stem);
    if (it == motion.end()) continue;
    TrainingSample s;
    s.speech = read_feature_cache(sp.string());
    s.motion = read_motion(it->second.string());
    s.id = stem;
    data.push_back(std::move(s));
  }
  if (data.empty())
    throw InputError("no <stem>.speech / <stem>.motion pairs in " +
                     cache_dir.string());
  return data;
}

int run_preprocess(const std::string& audio_dir, const std::string& transcript_dir,
                   const std::string& motion_dir, const std::string& out_dir,
                   const KeyValueConfig& cfg, std::uint64_t seed) {
  auto audio = files_by_stem(audio_dir, {".wav"});
  auto transcripts = files_by_stem(transcript_dir, {".tsv", ".txt"});
  auto motions = files_by_stem(motion_dir, {".bvh", ".motion"});
  if (audio.empty()) throw InputError("no .wav files in " + audio_dir);
  if (transcripts.empty())
    throw InputError("no transcript files in " + transcript_dir);
  if (motions.empty()) throw InputError("no motion files in " + motion_dir);

  struct Pair {
    std::string stem;
    fs::path wav, tsv, mot;
  };
  std::vector<Pair> pairs;
  for (const auto& [stem, wav] : audio) {
    auto t = transcripts.find(stem);
    auto m = motions.find(stem);
    if (t == transcripts.end() || m == motions.end()) {
      std::cerr << "warning: skipping unpaired input '" << stem << "'\n";
      continue;
    }
    pairs.push_back({stem, wav, t->second, m->second});
  }
  for (const auto& [stem, path] : transcripts)
    if (!audio.count(stem))
      std::cerr << "warning: skipping unpaired transcript " << path << "\n";
  for (const auto& [stem, path] : motions)
    if (!audio.count(stem))
      std::cerr << "warning: skipping unpaired motion file " << path << "\n";
  if (pairs.empty()) throw InputError("no paired inputs across directories");

  // Gather every word embedding for the PCA fit.
  std::vector<std::vector<WordToken>> all_words;
  Eigen::Index n_rows = 0;
  for (const auto& p : pairs) {
    fs::path sidecar = p.tsv;
    sidecar.replace_extension(".emb");
    all_words.push_back(read_transcript(
        p.tsv.string(), fs::exists(sidecar) ? sidecar.string() : ""));
    n_rows += Eigen::Index(all_words.back().size());
  }
  if (n_rows <= kWordDim)
    throw InputError("too few word tokens to fit the word-space projection");
  MatX emb(n_rows, kRawWordDim);
  Eigen::Index r = 0;
  for (const auto& words : all_words)
    for (const auto& w : words) emb.row(r++) = w.embedding.transpose();
  PcaProjection pca = fit_pca(emb, kWordDim);

  fs::create_directories(out_dir);
  write_pca((fs::path(out_dir) / "pca.bin").string(), pca);

  std::ofstream manifest(fs::path(out_dir) / "manifest.txt");
  manifest << provenance_header(cfg, seed);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    AudioClip clip = read_wav(p.wav.string());
    SpeechFeatureSequence feats =
        build_speech_features(clip, all_words[i], pca);
    MotionSequence motion = read_any_motion(p.mot);
    Eigen::Index T = std::min(feats.length(), motion.length());
    if (feats.length() != motion.length()) {
      std::cerr << "warning: '" << p.stem << "' speech " << feats.length()
                << " frames vs motion " << motion.length()
                << "; truncating to " << T << "\n";
      feats.frames.conservativeResize(T, Eigen::NoChange);
      feats.mode_labels.resize(std::size_t(T));
      auto ml = segments_from_labels(feats.mode_labels);
      feats.segments = ml.segments;
      feats.local_clocks = ml.local_clocks;
      motion.frames.conservativeResize(T, Eigen::NoChange);
    }
    write_feature_cache((fs::path(out_dir) / (p.stem + ".speech")).string(),
                        feats);
    write_motion(motion, (fs::path(out_dir) / (p.stem + ".motion")).string());
    manifest << p.stem << "\t" << T << "\n";
  }
  std::cout << "preprocessed " << pairs.size() << " pair(s) into " << out_dir
            << "\n";
  return 0;
}

TrainRunOptions run_options_from_config(const KeyValueConfig& cfg,
                                        const std::string& ckpt_out,
                                        MetricsLogger* metrics) {
  TrainRunOptions run;
  run.steps = std::uint64_t(cfg.get_int("steps", 100));
  run.steps_per_epoch = std::uint64_t(cfg.get_int("steps_per_epoch", 1));
  run.warmup_steps = std::uint64_t(cfg.get_int("warmup_steps", 10));
  run.lr_total_steps = std::uint64_t(cfg.get_int("lr_total_steps", 0));
  run.base_lr = cfg.get_double("base_lr", 1e-4);
  run.augment = cfg.get_int("augment", 1) != 0;
  run.checkpoint_path = ckpt_out;
  run.checkpoint_every = std::uint64_t(cfg.get_int("checkpoint_every", 0));
  run.metrics = metrics;
  return run;
}

int run_training_phase(Phase phase, const std::string& cache_dir,
                       const KeyValueConfig& cfg, std::uint64_t seed,
                       const std::string& out, const std::string& resume,
                       const std::string& init_ckpt) {
  Dataset data = load_dataset(cache_dir);
  TrainingSchedule sched = TrainingSchedule::from_config(cfg);

  ModelConfig mc = ModelConfig::from_config(cfg);
  mc.pose_dim = int(data.front().motion.frames.cols());
  mc.validate();

  std::mt19937_64 rng(seed);
  ModelParams params;
  if (!resume.empty()) {
    ResumeState st = load_training_checkpoint(resume);
    params = std::move(st.params);
    AdamWConfig ac;
    ac.weight_decay = sched.weight_decay;
    std::vector<Tensor> group =
        phase == Phase::EncoderPretrain   ? params.encoder_group()
        : phase == Phase::DecoderPretrain ? params.decoder_group()
                                          : params.all();
    AdamW opt(group, ac);
    restore_optimizer(opt, st);
    rng = st.rng;
    MetricsLogger metrics(out + ".metrics.tsv");
    TrainRunOptions run = run_options_from_config(cfg, out, &metrics);
    if (phase == Phase::EncoderPretrain)
      pretrain_encoder(data, params, opt, rng, sched, run);
    else if (phase == Phase::DecoderPretrain)
      pretrain_decoder(data, params, opt, rng, sched, run);
    else
      train_crossmodal(data, params, opt, rng, sched, run);
    save_training_checkpoint(out, params, opt, run.steps, rng, phase,
                             {{"skeleton", skeleton_to_json(
                                               data.front().motion.skeleton)},
                              {"config_hash", cfg.content_hash()},
                              {"seed", std::to_string(seed)}});
    return 0;
  }

  if (!init_ckpt.empty()) {
    params = ModelParams::load(init_ckpt);
    if (params.cfg.d_model != mc.d_model || params.cfg.pose_dim != mc.pose_dim)
      throw InputError("checkpoint/config mismatch: " + init_ckpt);
  } else {
    params = ModelParams::init(mc, rng);
  }
  AdamWConfig ac;
  ac.weight_decay = sched.weight_decay;
  std::vector<Tensor> group =
      phase == Phase::EncoderPretrain   ? params.encoder_group()
      : phase == Phase::DecoderPretrain ? params.decoder_group()
                                        : params.all();
  AdamW opt(group, ac);
  MetricsLogger metrics(out + ".metrics.tsv");
  TrainRunOptions run = run_options_from_config(cfg, out, &metrics);
  if (phase == Phase::EncoderPretrain)
    pretrain_encoder(data, params, opt, rng, sched, run);
  else if (phase == Phase::DecoderPretrain)
    pretrain_decoder(data, params, opt, rng, sched, run);
  else
    train_crossmodal(data, params, opt, rng, sched, run);
  save_training_checkpoint(out, params, opt, run.steps, rng, phase,
                           {{"skeleton", skeleton_to_json(
                                             data.front().motion.skeleton)},
                            {"config_hash", cfg.content_hash()},
                            {"seed", std::to_string(seed)}});
  std::cout << phase_name(phase) << ": " << run.steps << " step(s), wrote "
            << out << "\n";
  return 0;
}

int run_generate(const std::string& ckpt, const std::string& speech_path,
                 std::uint64_t seed, const std::string& out, int samples,
                 const KeyValueConfig& cfg) {
  ResumeState st = load_training_checkpoint(ckpt);
  auto sk_it = st.meta.find("skeleton");
  if (sk_it == st.meta.end())
    throw InputError("checkpoint carries no skeleton descriptor: " + ckpt);
  Skeleton skeleton = skeleton_from_json(sk_it->second);
  SpeechFeatureSequence speech = read_feature_cache(speech_path);
  if (int(speech.frames.cols()) != st.params.cfg.speech_dim)
    throw InputError("speech feature width does not match the checkpoint");

  fs::path base(out);
  for (int k = 0; k < samples; ++k) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32),
                      std::uint32_t(k)};
    std::mt19937_64 rng(seq);
    MotionSequence motion = generate_motion(st.params, speech, rng, skeleton);
    fs::path path = base;
    if (samples > 1) {
      path = base.parent_path() /
             (base.stem().string() + "_" + std::to_string(k) +
              base.extension().string());
    }
    write_motion(motion, path.string());
    std::ofstream prov(path.string() + ".provenance.txt");
    prov << provenance_header(cfg, seed) << "# sample: " << k << "\n"
         << "# frames: " << motion.length() << "\n";
    std::cout << "wrote " << path.string() << " (" << motion.length()
              << " frames)\n";
  }
  return 0;
}

int run_evaluate(const std::string& pred_dir, const std::string& truth_dir,
                 const std::string& segments_dir, const std::string& out,
                 const KeyValueConfig& cfg, std::uint64_t seed) {
  auto pred = files_by_stem(pred_dir, {".motion"});
  auto truth = files_by_stem(truth_dir, {".motion"});
  std::vector<std::string> unmatched;
  for (const auto& [stem, p] : pred)
    if (!truth.count(stem)) unmatched.push_back(stem + " (prediction only)");
  for (const auto& [stem, p] : truth)
    if (!pred.count(stem)) unmatched.push_back(stem + " (ground truth only)");
  if (!unmatched.empty()) {
    std::ostringstream os;
    os << "unpaired motion files:";
    for (const auto& u : unmatched) os << " " << u;
    throw InputError(os.str());
  }
  if (pred.empty()) throw InputError("no .motion files in " + pred_dir);

  std::map<std::string, fs::path> segment_sources;
  if (!segments_dir.empty())
    segment_sources = files_by_stem(segments_dir, {".speech"});

  constexpr Eigen::Index kWindow = 10;
  double maje_axis = 0.0, maje_joint = 0.0;
  std::vector<MatX> pred_feats, truth_feats;
  std::ostringstream body;
  MotionSequence truth_concat, pred_concat;
  std::vector<ModeSegment> truth_segments, pred_segments;
  Eigen::Index offset = 0;
  for (const auto& [stem, ppath] : pred) {
    MotionSequence mp = read_motion(ppath.string());
    MotionSequence mt = read_motion(truth.at(stem).string());
    maje_axis += maje(mp, mt, MajeNorm::PerAxisAbs);
    maje_joint += maje(mp, mt, MajeNorm::PerJointL2);
    pred_feats.push_back(fgd_feature_extractor(mp, kWindow));
    truth_feats.push_back(fgd_feature_extractor(mt, kWindow));

    std::vector<ModeSegment> segs;
    auto it = segment_sources.find(stem);
    if (it != segment_sources.end()) {
      segs = read_feature_cache(it->second.string()).segments;
    } else {
      ModeSegment whole;
      whole.mode = SpeakingMode::NS;
      whole.start_frame = 0;
      whole.length = mt.length();
      segs.push_back(whole);
    }
    if (offset == 0) {
      truth_concat = mt;
      pred_concat = mp;
    } else {
      Eigen::Index old = truth_concat.frames.rows();
      truth_concat.frames.conservativeResize(old + mt.length(),
                                             Eigen::NoChange);
      truth_concat.frames.bottomRows(mt.length()) = mt.frames;
      pred_concat.frames.conservativeResize(old + mp.length(),
                                            Eigen::NoChange);
      pred_concat.frames.bottomRows(mp.length()) = mp.frames;
    }
    for (ModeSegment s : segs) {
      s.start_frame += offset;
      truth_segments.push_back(s);
      pred_segments.push_back(s);
    }
    offset += mt.length();
    body << stem << "\tMAJE(axis) " << maje(mp, mt, MajeNorm::PerAxisAbs)
         << "\tMAJE(joint) " << maje(mp, mt, MajeNorm::PerJointL2) << "\n";
  }
  double n = double(pred.size());
  Eigen::Index cols = pred_feats.front().cols();
  Eigen::Index pr = 0, tr = 0;
  for (const auto& f : pred_feats) pr += f.rows();
  for (const auto& f : truth_feats) tr += f.rows();
  MatX pf(pr, cols), tf(tr, cols);
  Eigen::Index pi = 0, ti = 0;
  for (const auto& f : pred_feats) {
    pf.middleRows(pi, f.rows()) = f;
    pi += f.rows();
  }
  for (const auto& f : truth_feats) {
    tf.middleRows(ti, f.rows()) = f;
    ti += f.rows();
  }
  double fgd_value = fgd(pf, tf);
  ModeVelocityReport truth_rep =
      mode_velocity_report(truth_concat, truth_segments);
  ModeVelocityReport pred_rep = mode_velocity_report(pred_concat, pred_segments);

  std::ostringstream report;
  report << provenance_header(cfg, seed);
  report << "sequences: " << pred.size() << "\n"
         << "MAJE (per-axis): " << maje_axis / n << "\n"
         << "MAJE (per-joint): " << maje_joint / n << "\n"
         << "FGD: " << fgd_value << "\n\n"
         << "velocity (ground truth)\n"
         << truth_rep.table << "\n"
         << "velocity (prediction)\n"
         << pred_rep.table << "\n\nper-sequence\n"
         << body.str();
  if (out.empty()) {
    std::cout << report.str();
  } else {
    std::ofstream os(out);
    os << report.str();
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-to-gesture pipeline"};
  app.require_subcommand(1);

  std::string config_path, out, resume, init_ckpt, cache_dir;
  std::uint64_t seed = 0;

  auto* pre = app.add_subcommand("preprocess", "Build feature caches");
  std::string audio_dir, transcript_dir, motion_dir;
  pre->add_option("--audio", audio_dir, "WAV directory")->required();
  pre->add_option("--transcripts", transcript_dir, "Transcript directory")
      ->required();
  pre->add_option("--motion", motion_dir, "Motion directory")->required();
  pre->add_option("--out", out, "Output cache directory")->required();
  pre->add_option("--config", config_path, "Config file");
  pre->add_option("--seed", seed, "RNG seed");

  auto* pt = app.add_subcommand("pretrain", "Single-modality pre-training");
  std::string phase_str = "encoder";
  pt->add_option("--cache", cache_dir, "Feature cache directory")->required();
  pt->add_option("--config", config_path, "Config file")->required();
  pt->add_option("--phase", phase_str, "encoder|decoder")
      ->check(CLI::IsMember({"encoder", "decoder"}));
  pt->add_option("--out", out, "Output checkpoint")->required();
  pt->add_option("--resume", resume, "Resume checkpoint");
  pt->add_option("--init", init_ckpt, "Initial parameter checkpoint");
  pt->add_option("--seed", seed, "RNG seed");

  auto* tr = app.add_subcommand("train", "Cross-modal training");
  tr->add_option("--cache", cache_dir, "Feature cache directory")->required();
  tr->add_option("--config", config_path, "Config file")->required();
  tr->add_option("--out", out, "Output checkpoint")->required();
  tr->add_option("--resume", resume, "Resume checkpoint");
  tr->add_option("--init", init_ckpt, "Initial parameter checkpoint");
  tr->add_option("--seed", seed, "RNG seed");

  auto* gen = app.add_subcommand("generate", "Gesture synthesis");
  std::string ckpt, speech_path;
  int samples = 1;
  gen->add_option("--checkpoint", ckpt, "Trained checkpoint")->required();
  gen->add_option("--speech", speech_path, "Speech feature cache")->required();
  gen->add_option("--out", out, "Output motion file")->required();
  gen->add_option("--samples", samples, "Number of variants")
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "RNG seed");
  gen->add_option("--config", config_path, "Config file");

  auto* ev = app.add_subcommand("evaluate", "Metric report");
  std::string pred_dir, truth_dir, segments_dir;
  ev->add_option("--pred", pred_dir, "Predicted motion directory")->required();
  ev->add_option("--truth", truth_dir, "Ground-truth motion directory")
      ->required();
  ev->add_option("--segments", segments_dir,
                 "Speech cache directory supplying mode segments");
  ev->add_option("--out", out, "Report path (stdout when omitted)");
  ev->add_option("--config", config_path, "Config file");
  ev->add_option("--seed", seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    KeyValueConfig cfg;
    if (!config_path.empty()) cfg = KeyValueConfig::from_file(config_path);
    if (pre->parsed())
      return run_preprocess(audio_dir, transcript_dir, motion_dir, out, cfg,
                            seed);
    if (pt->parsed()) {
      Phase phase = phase_str == "encoder" ? Phase::EncoderPretrain
                                           : Phase::DecoderPretrain;
      return run_training_phase(phase, cache_dir, cfg, seed, out, resume,
                                init_ckpt);
    }
    if (tr->parsed())
      return run_training_phase(Phase::CrossModal, cache_dir, cfg, seed, out,
                                resume, init_ckpt);
    if (gen->parsed())
      return run_generate(ckpt, speech_path, seed, out, samples, cfg);
    if (ev->parsed())
      return run_evaluate(pred_dir, truth_dir, segments_dir, out, cfg, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
