#ifndef BODYFORMER_FEATURES_HPP
#define BODYFORMER_FEATURES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bodyformer {

using MatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kMelChannels = 27;
constexpr int kWordDim = 32;
constexpr int kSpeechDim = kMelChannels + kWordDim;  // 59
constexpr int kRawWordDim = 768;
constexpr int kFps = 20;

enum class SpeakingMode : std::uint8_t { NS = 0, SS = 1, LS = 2 };
constexpr int kNumModes = 3;
const char* mode_name(SpeakingMode m);

struct AudioClip {
  std::vector<double> samples;  // mono
  int sample_rate = 48000;
};

struct WordToken {
  std::string text;
  double start = 0.0;  // seconds
  double end = 0.0;
  Eigen::VectorXd embedding;  // 768-dim contextual vector
};

/// Maximal run of frames sharing one speaking mode.
struct ModeSegment {
  SpeakingMode mode = SpeakingMode::NS;
  Eigen::Index start_frame = 0;
  Eigen::Index length = 0;
};

struct SpeechFeatureSequence {
  MatX frames;  // T x 59, mel block then word block
  int fps = kFps;
  std::vector<SpeakingMode> mode_labels;
  std::vector<Eigen::Index> local_clocks;  // reset to 0 at each segment start
  std::vector<ModeSegment> segments;

  Eigen::Index length() const { return frames.rows(); }
};

struct PcaProjection {
  Eigen::VectorXd mean;  // 768
  MatX basis;            // 768 x 32, orthonormal columns

  Eigen::VectorXd project(const Eigen::VectorXd& e) const {
    return basis.transpose() * (e - mean);
  }
};

// ---- audio ----------------------------------------------------------------

/// Reads RIFF/WAVE PCM (16-bit int or 32-bit float); channels are averaged
/// down to mono.
AudioClip read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioClip& clip);

/// Log mel spectrogram at the motion frame rate.  hop = sample_rate / fps,
/// Hann window of 2*hop, power spectrum through triangular mel filters over
/// [0, sample_rate/2], log(1 + power) compression.  T = floor(samples / hop).
MatX mel_spectrogram(const AudioClip& clip, int n_mels = kMelChannels,
                     int fps = kFps);

/// Triangular mel filterbank (n_mels x n_bins) for an n_fft-point transform.
MatX mel_filterbank(int n_mels, int n_fft, double sample_rate);

// ---- words ----------------------------------------------------------------

PcaProjection fit_pca(const MatX& embeddings, int out_dim = kWordDim);

/// Per-frame projected word features; silent frames get zeros.  Overlapping
/// words are resolved by later start wins.
MatX align_words(const std::vector<WordToken>& words, const PcaProjection& pca,
                 Eigen::Index T, int fps, const std::vector<bool>& silence);

struct ModeLabeling {
  std::vector<SpeakingMode> mode_labels;
  std::vector<ModeSegment> segments;
  std::vector<Eigen::Index> local_clocks;
};

/// Speaking-mode labels from word timings: word runs (gaps < merge_gap merged)
/// longer than 2 s are LS, shorter ones SS, everything else NS.
ModeLabeling label_modes(const std::vector<WordToken>& words, Eigen::Index T,
                         int fps = kFps, double merge_gap = 0.3);

/// Rebuilds segments and local clocks from an arbitrary per-frame labeling.
ModeLabeling segments_from_labels(const std::vector<SpeakingMode>& labels);

SpeechFeatureSequence build_speech_features(const AudioClip& clip,
                                            const std::vector<WordToken>& words,
                                            const PcaProjection& pca);

/// Zeroes one contiguous span of either the mel block or the word block; span
/// length is uniform in [0, max_fraction * T].  Input is left untouched.
SpeechFeatureSequence spec_augment(const SpeechFeatureSequence& features,
                                   std::mt19937_64& rng,
                                   double max_fraction = 0.2);

/// Deterministic stand-in for a contextual language model: a seeded-hash
/// Gaussian vector per unique token.
Eigen::VectorXd stub_word_embedder(const std::string& text);

// ---- file formats ---------------------------------------------------------

/// Line-delimited transcript: start_seconds<TAB>end_seconds<TAB>token.
/// Embeddings come from the sidecar bundle when present, else the stub.
std::vector<WordToken> read_transcript(const std::string& path,
                                       const std::string& embedding_sidecar = "");

void write_feature_cache(const std::string& path,
                         const SpeechFeatureSequence& seq);
SpeechFeatureSequence read_feature_cache(const std::string& path);

void write_pca(const std::string& path, const PcaProjection& pca);
PcaProjection read_pca(const std::string& path);

}  // namespace bodyformer

#endif
