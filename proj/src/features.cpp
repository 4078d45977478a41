#include "bodyformer/features.hpp"

#include "bodyformer/checkpoint.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bodyformer {

const char* mode_name(SpeakingMode m) {
  switch (m) {
    case SpeakingMode::NS: return "NS";
    case SpeakingMode::SS: return "SS";
    case SpeakingMode::LS: return "LS";
  }
  return "?";
}

// ---- WAV ------------------------------------------------------------------

namespace {

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InputError("wav: truncated file");
  return v;
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("wav: cannot open " + path);
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0)
    throw InputError("wav: not a RIFF file: " + path);
  read_pod<std::uint32_t>(is);  // riff size
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0)
    throw InputError("wav: not a WAVE file: " + path);

  int channels = 0, sample_rate = 0, bits = 0, format = 0;
  std::vector<double> samples;
  while (is.read(tag, 4)) {
    auto chunk_size = read_pod<std::uint32_t>(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_pod<std::uint16_t>(is);
      channels = read_pod<std::uint16_t>(is);
      sample_rate = int(read_pod<std::uint32_t>(is));
      read_pod<std::uint32_t>(is);  // byte rate
      read_pod<std::uint16_t>(is);  // block align
      bits = read_pod<std::uint16_t>(is);
      is.seekg(std::streamoff(chunk_size) - 16, std::ios::cur);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (channels <= 0) throw InputError("wav: data chunk before fmt");
      std::uint32_t bytes_per = std::uint32_t(bits / 8);
      std::uint64_t n = chunk_size / (bytes_per * std::uint32_t(channels));
      samples.assign(n, 0.0);
      for (std::uint64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
          if (format == 1 && bits == 16)
            acc += double(read_pod<std::int16_t>(is)) / 32768.0;
          else if (format == 3 && bits == 32)
            acc += double(read_pod<float>(is));
          else
            throw InputError("wav: unsupported sample format in " + path);
        }
        samples[i] = acc / channels;
      }
      if (chunk_size % 2) is.seekg(1, std::ios::cur);
    } else {
      is.seekg(std::streamoff(chunk_size + (chunk_size % 2)), std::ios::cur);
    }
  }
  if (samples.empty()) throw InputError("wav: no data chunk in " + path);
  AudioClip clip;
  clip.samples = std::move(samples);
  clip.sample_rate = sample_rate;
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("wav: cannot open " + path + " for write");
  auto put32 = [&](std::uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
  std::uint32_t data_bytes = std::uint32_t(clip.samples.size() * 2);
  os.write("RIFF", 4);
  put32(36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put32(16);
  put16(1);  // PCM
  put16(1);  // mono
  put32(std::uint32_t(clip.sample_rate));
  put32(std::uint32_t(clip.sample_rate) * 2);
  put16(2);
  put16(16);
  os.write("data", 4);
  put32(data_bytes);
  for (double s : clip.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    auto v = std::int16_t(std::lround(c * 32767.0));
    os.write(reinterpret_cast<char*>(&v), 2);
  }
}

// ---- mel spectrogram ------------------------------------------------------

MatX mel_filterbank(int n_mels, int n_fft, double sample_rate) {
  int n_bins = n_fft / 2 + 1;
  MatX fb = MatX::Zero(n_mels, n_bins);
  double mel_lo = hz_to_mel(0.0);
  double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(size_t(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[size_t(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / double(n_mels + 1));
  for (int m = 0; m < n_mels; ++m) {
    double f0 = centers[size_t(m)], f1 = centers[size_t(m) + 1],
           f2 = centers[size_t(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      double fk = sample_rate * k / double(n_fft);
      if (fk > f0 && fk < f1)
        fb(m, k) = (fk - f0) / (f1 - f0);
      else if (fk >= f1 && fk < f2)
        fb(m, k) = (f2 - fk) / (f2 - f1);
    }
  }
  return fb;
}

MatX mel_spectrogram(const AudioClip& clip, int n_mels, int fps) {
  if (clip.samples.empty()) throw InputError("mel: empty clip");
  if (clip.sample_rate <= 0) throw InputError("mel: bad sample rate");
  int hop = clip.sample_rate / fps;
  int n_fft = 2 * hop;
  Eigen::Index T = Eigen::Index(clip.samples.size()) / hop;
  MatX fb = mel_filterbank(n_mels, n_fft, double(clip.sample_rate));
  Eigen::VectorXd window(n_fft);
  for (int i = 0; i < n_fft; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (n_fft - 1));

  std::vector<double> in(std::size_t(n_fft), 0.0);
  std::vector<fftw_complex> out(std::size_t(n_fft / 2 + 1));
  fftw_plan plan = fftw_plan_dft_r2c_1d(n_fft, in.data(), out.data(),
                                        FFTW_ESTIMATE);
  MatX mel(T, n_mels);
  Eigen::VectorXd power(n_fft / 2 + 1);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (int i = 0; i < n_fft; ++i) {
      std::size_t s = std::size_t(t) * std::size_t(hop) + std::size_t(i);
      in[size_t(i)] = (s < clip.samples.size() ? clip.samples[s] : 0.0) *
                      window[i];
    }
    fftw_execute(plan);
    for (int k = 0; k <= n_fft / 2; ++k)
      power[k] = out[size_t(k)][0] * out[size_t(k)][0] +
                 out[size_t(k)][1] * out[size_t(k)][1];
    mel.row(t) = (fb * power).array().unaryExpr(
        [](double p) { return std::log1p(p); });
  }
  fftw_destroy_plan(plan);
  return mel;
}

// ---- PCA ------------------------------------------------------------------

PcaProjection fit_pca(const MatX& embeddings, int out_dim) {
  if (embeddings.rows() <= out_dim)
    throw InputError("pca: need more samples than output dimensions");
  PcaProjection pca;
  pca.mean = embeddings.colwise().mean();
  MatX centered = embeddings.rowwise() - pca.mean.transpose();
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / double(embeddings.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // eigenvalues come out ascending; take the top out_dim in descending order
  Eigen::Index d = cov.rows();
  pca.basis.resize(d, out_dim);
  for (int i = 0; i < out_dim; ++i)
    pca.basis.col(i) = es.eigenvectors().col(d - 1 - i);
  return pca;
}

// ---- word alignment / mode labels -----------------------------------------

MatX align_words(const std::vector<WordToken>& words, const PcaProjection& pca,
                 Eigen::Index T, int fps, const std::vector<bool>& silence) {
  MatX out = MatX::Zero(T, pca.basis.cols());
  // later start wins on overlap: process in ascending start order
  std::vector<const WordToken*> sorted;
  sorted.reserve(words.size());
  for (const auto& w : words) sorted.push_back(&w);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const WordToken* a, const WordToken* b) {
                     return a->start < b->start;
                   });
  for (const auto* w : sorted) {
    Eigen::VectorXd proj = pca.project(w->embedding);
    for (Eigen::Index t = 0; t < T; ++t) {
      double center = (t + 0.5) / fps;
      if (center >= w->start && center < w->end) out.row(t) = proj.transpose();
    }
  }
  for (Eigen::Index t = 0; t < T; ++t)
    if (t < Eigen::Index(silence.size()) && silence[size_t(t)])
      out.row(t).setZero();
  return out;
}

ModeLabeling segments_from_labels(const std::vector<SpeakingMode>& labels) {
  ModeLabeling ml;
  ml.mode_labels = labels;
  if (labels.empty()) return ml;
  ml.local_clocks.assign(labels.size(), 0);
  Eigen::Index T = Eigen::Index(labels.size());
  Eigen::Index start = 0;
  for (Eigen::Index t = 0; t <= T; ++t) {
    if (t == T || (t > 0 && labels[size_t(t)] != labels[size_t(t) - 1])) {
      ml.segments.push_back({labels[size_t(start)], start, t - start});
      start = t;
    }
    if (t < T) ml.local_clocks[size_t(t)] = t - start;
  }
  return ml;
}

ModeLabeling label_modes(const std::vector<WordToken>& words, Eigen::Index T,
                         int fps, double merge_gap) {
  // build merged speech spans from word intervals
  struct Span { double start, end; };
  std::vector<Span> spans;
  std::vector<Span> sorted;
  for (const auto& w : words) sorted.push_back({w.start, w.end});
  std::sort(sorted.begin(), sorted.end(),
            [](const Span& a, const Span& b) { return a.start < b.start; });
  for (const auto& s : sorted) {
    if (!spans.empty() && s.start - spans.back().end < merge_gap)
      spans.back().end = std::max(spans.back().end, s.end);
    else
      spans.push_back(s);
  }
  std::vector<SpeakingMode> labels(size_t(T), SpeakingMode::NS);
  for (const auto& s : spans) {
    SpeakingMode m =
        (s.end - s.start > 2.0) ? SpeakingMode::LS : SpeakingMode::SS;
    for (Eigen::Index t = 0; t < T; ++t) {
      double center = (t + 0.5) / fps;
      if (center >= s.start && center < s.end) labels[size_t(t)] = m;
    }
  }
  return segments_from_labels(labels);
}

SpeechFeatureSequence build_speech_features(const AudioClip& clip,
                                            const std::vector<WordToken>& words,
                                            const PcaProjection& pca) {
  SpeechFeatureSequence seq;
  MatX mel = mel_spectrogram(clip, kMelChannels, kFps);
  Eigen::Index T = mel.rows();
  ModeLabeling ml = label_modes(words, T, kFps);
  std::vector<bool> silence(size_t(T), false);
  for (Eigen::Index t = 0; t < T; ++t)
    silence[size_t(t)] = (ml.mode_labels[size_t(t)] == SpeakingMode::NS);
  MatX word = align_words(words, pca, T, kFps, silence);
  seq.frames.resize(T, kSpeechDim);
  seq.frames.leftCols(kMelChannels) = mel;
  seq.frames.rightCols(kWordDim) = word;
  seq.mode_labels = std::move(ml.mode_labels);
  seq.segments = std::move(ml.segments);
  seq.local_clocks = std::move(ml.local_clocks);
  return seq;
}

SpeechFeatureSequence spec_augment(const SpeechFeatureSequence& features,
                                   std::mt19937_64& rng, double max_fraction) {
  if (max_fraction < 0.0 || max_fraction > 1.0)
    throw InputError("spec_augment: max_fraction outside [0,1]");
  SpeechFeatureSequence out = features;
  Eigen::Index T = out.length();
  if (T == 0) return out;
  bool word_group = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  Eigen::Index max_len = Eigen::Index(max_fraction * double(T));
  Eigen::Index len =
      std::uniform_int_distribution<Eigen::Index>(0, max_len)(rng);
  if (len == 0) return out;
  Eigen::Index start =
      std::uniform_int_distribution<Eigen::Index>(0, T - len)(rng);
  Eigen::Index c0 = word_group ? kMelChannels : 0;
  Eigen::Index nc = word_group ? kWordDim : kMelChannels;
  out.frames.block(start, c0, len, nc).setZero();
  return out;
}

Eigen::VectorXd stub_word_embedder(const std::string& text) {
  std::mt19937_64 rng(fnv1a64(text));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(kRawWordDim);
  for (int i = 0; i < kRawWordDim; ++i) v[i] = gauss(rng);
  return v;
}

// ---- file formats ---------------------------------------------------------

std::vector<WordToken> read_transcript(const std::string& path,
                                       const std::string& embedding_sidecar) {
  std::ifstream is(path);
  if (!is) throw InputError("transcript: cannot open " + path);
  ArrayBundle side;
  bool have_side = !embedding_sidecar.empty();
  if (have_side) side = read_bundle(embedding_sidecar);
  std::vector<WordToken> words;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    WordToken w;
    std::string start_s, end_s;
    if (!std::getline(ss, start_s, '\t') || !std::getline(ss, end_s, '\t') ||
        !std::getline(ss, w.text))
      throw InputError("transcript: bad record at " + path + ":" +
                       std::to_string(lineno));
    w.start = std::stod(start_s);
    w.end = std::stod(end_s);
    if (!(w.start < w.end))
      throw InputError("transcript: empty interval at " + path + ":" +
                       std::to_string(lineno));
    w.embedding = (have_side && side.has(w.text)) ? side.vec(w.text)
                                                  : stub_word_embedder(w.text);
    words.push_back(std::move(w));
  }
  return words;
}

void write_feature_cache(const std::string& path,
                         const SpeechFeatureSequence& seq) {
  ArrayBundle b;
  b.meta["kind"] = "speech_features";
  b.meta["fps"] = std::to_string(seq.fps);
  b.put("frames", seq.frames);
  Eigen::VectorXd modes(seq.length());
  for (Eigen::Index t = 0; t < seq.length(); ++t)
    modes[t] = double(int(seq.mode_labels[size_t(t)]));
  b.put("mode_labels", modes);
  write_bundle(path, b);
}

SpeechFeatureSequence read_feature_cache(const std::string& path) {
  ArrayBundle b = read_bundle(path);
  SpeechFeatureSequence seq;
  seq.frames = b.mat("frames");
  seq.fps = std::stoi(b.meta.at("fps"));
  Eigen::VectorXd modes = b.vec("mode_labels");
  std::vector<SpeakingMode> labels(modes.size(), SpeakingMode::NS);
  for (Eigen::Index t = 0; t < modes.size(); ++t)
    labels[size_t(t)] = SpeakingMode(int(modes[t]));
  ModeLabeling ml = segments_from_labels(labels);
  seq.mode_labels = std::move(ml.mode_labels);
  seq.segments = std::move(ml.segments);
  seq.local_clocks = std::move(ml.local_clocks);
  return seq;
}

void write_pca(const std::string& path, const PcaProjection& pca) {
  ArrayBundle b;
  b.meta["kind"] = "pca";
  b.put("mean", pca.mean);
  b.put("basis", pca.basis);
  write_bundle(path, b);
}

PcaProjection read_pca(const std::string& path) {
  ArrayBundle b = read_bundle(path);
  PcaProjection pca;
  pca.mean = b.vec("mean");
  pca.basis = b.mat("basis");
  return pca;
}

}  // namespace bodyformer
