#include "bodyformer/features.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace bodyformer;

namespace {

AudioClip sine_clip(double freq, double seconds, int sr = 48000) {
  AudioClip c;
  c.sample_rate = sr;
  Eigen::Index n = Eigen::Index(seconds * sr);
  c.samples.resize(std::size_t(n));
  for (Eigen::Index i = 0; i < n; ++i)
    c.samples[std::size_t(i)] = 0.5 * std::sin(2.0 * M_PI * freq * double(i) / sr);
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("two seconds at 48 kHz yields 40 mel frames of width 27") {
  MatX m = mel_spectrogram(sine_clip(440.0, 2.0));
  CHECK(m.rows() == 40);
  CHECK(m.cols() == kMelChannels);
}

TEST_CASE("silent audio produces an all-zero spectrogram") {
  AudioClip c;
  c.sample_rate = 48000;
  c.samples.assign(48000, 0.0);
  MatX m = mel_spectrogram(c);
  CHECK(m.cwiseAbs().maxCoeff() == 0.0);  // log1p(0) = 0
}

TEST_CASE("a pure tone peaks in the mel band containing its frequency") {
  double freq = 1000.0;
  MatX m = mel_spectrogram(sine_clip(freq, 1.0));
  Eigen::Index best;
  m.colwise().sum().maxCoeff(&best);
  // Band centres from the filterbank construction: the peak band's triangle
  // must contain 1 kHz.  With 27 HTK-mel bands over 0..24 kHz, 1 kHz falls in
  // the lower third.
  CHECK(best >= 2);
  CHECK(best <= 8);
  // Energy concentration: peak band clearly dominates the far bands.
  CHECK(m.colwise().sum()[best] > 5.0 * m.colwise().sum()[kMelChannels - 1]);
}

TEST_CASE("empty clip is rejected") {
  AudioClip c;
  CHECK_THROWS_AS(mel_spectrogram(c), InputError);
}

TEST_CASE("mel filterbank rows are triangular and non-negative") {
  MatX fb = mel_filterbank(27, 4800, 48000.0);
  CHECK(fb.rows() == 27);
  CHECK(fb.cols() == 4800 / 2 + 1);
  CHECK(fb.minCoeff() >= 0.0);
  for (Eigen::Index i = 0; i < fb.rows(); ++i) CHECK(fb.row(i).maxCoeff() > 0.0);
}

TEST_CASE("WAV round trip is exact to 16-bit quantization") {
  AudioClip c = sine_clip(220.0, 0.25);
  std::string p = temp_path("bf_test_roundtrip.wav");
  write_wav(p, c);
  AudioClip back = read_wav(p);
  REQUIRE(back.samples.size() == c.samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < c.samples.size(); ++i)
    worst = std::max(worst, std::abs(back.samples[i] - c.samples[i]));
  CHECK(worst <= 1.0 / 32768.0 + 1e-12);  // PCM16 storage
  std::remove(p.c_str());
}

TEST_CASE("PCA recovers a rank-one direction") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd dir = Eigen::VectorXd::Zero(kRawWordDim);
  dir[3] = 1.0;
  MatX data(50, kRawWordDim);
  for (int i = 0; i < 50; ++i)
    data.row(i) = (nd(rng) * dir).transpose() +
                  0.001 * Eigen::RowVectorXd::Random(kRawWordDim);
  PcaProjection pca = fit_pca(data, 4);
  CHECK(std::abs(pca.basis.col(0)[3]) > 0.99);
}

TEST_CASE("PCA basis has orthonormal columns ordered by variance") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  MatX data(200, kRawWordDim);
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    for (Eigen::Index j = 0; j < data.cols(); ++j)
      data(i, j) = nd(rng) / double(1 + j % 7);
  PcaProjection pca = fit_pca(data, 8);
  MatX gram = pca.basis.transpose() * pca.basis;
  CHECK((gram - MatX::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-10);
  MatX centered = data.rowwise() - pca.mean.transpose();
  Eigen::VectorXd vars =
      (centered * pca.basis).colwise().squaredNorm().transpose();
  for (int i = 0; i + 1 < 8; ++i) CHECK(vars[i] >= vars[i + 1] - 1e-9);
}

TEST_CASE("PCA needs more samples than output dimensions") {
  MatX tiny = MatX::Random(4, kRawWordDim);
  CHECK_THROWS_AS(fit_pca(tiny, 8), InputError);
}

TEST_CASE("align_words projects the active word and zeroes silence") {
  PcaProjection pca;
  pca.mean = Eigen::VectorXd::Constant(kRawWordDim, 0.5);
  pca.basis = MatX::Zero(kRawWordDim, kWordDim);
  for (int i = 0; i < kWordDim; ++i) pca.basis(i, i) = 1.0;

  WordToken w;
  w.text = "hello";
  w.start = 0.1;
  w.end = 0.3;
  w.embedding = Eigen::VectorXd::Zero(kRawWordDim);
  w.embedding[0] = 2.0;

  std::vector<bool> silence(10, false);
  MatX rows = align_words({w}, pca, 10, kFps, silence);
  CHECK(rows.rows() == 10);
  CHECK(rows.cols() == kWordDim);
  // Frame centres: (t + 0.5)/20.  Frames 2..5 have centres 0.125..0.275
  // inside [0.1, 0.3); frames 0,1 and 6+ are silent.
  Eigen::VectorXd expect = pca.project(w.embedding);
  CHECK((rows.row(3).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(rows.row(3)[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(rows.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(rows.row(9).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("overlapping words resolve to the later start") {
  PcaProjection pca;
  pca.mean = Eigen::VectorXd::Zero(kRawWordDim);
  pca.basis = MatX::Zero(kRawWordDim, kWordDim);
  pca.basis(0, 0) = 1.0;
  WordToken a, b;
  a.text = "a";
  a.start = 0.0;
  a.end = 0.5;
  a.embedding = Eigen::VectorXd::Zero(kRawWordDim);
  a.embedding[0] = 1.0;
  b = a;
  b.text = "b";
  b.start = 0.2;
  b.embedding[0] = 9.0;
  std::vector<bool> silence(10, false);
  MatX rows = align_words({a, b}, pca, 10, kFps, silence);
  CHECK(rows.row(1)[0] == doctest::Approx(1.0));  // centre 0.075: only a
  CHECK(rows.row(5)[0] == doctest::Approx(9.0));  // centre 0.275: b wins
}

TEST_CASE("mode labels: long speech LS, short speech SS, silence NS") {
  auto tok = [](double s, double e) {
    WordToken w;
    w.text = "x";
    w.start = s;
    w.end = e;
    w.embedding = Eigen::VectorXd::Zero(kRawWordDim);
    return w;
  };
  // 3 s run -> LS; isolated 1 s run -> SS; tail silence -> NS.
  std::vector<WordToken> words{tok(0.0, 1.5), tok(1.6, 3.0), tok(5.0, 6.0)};
  ModeLabeling ml = label_modes(words, 160, kFps);
  CHECK(ml.mode_labels[10] == SpeakingMode::LS);   // t = 0.525 s
  CHECK(ml.mode_labels[110] == SpeakingMode::SS);  // t = 5.525 s
  CHECK(ml.mode_labels[150] == SpeakingMode::NS);  // t = 7.525 s
  CHECK(ml.segments.size() >= 3);
  // Local clocks restart at each segment boundary.
  for (const auto& seg : ml.segments) {
    CHECK(ml.local_clocks[std::size_t(seg.start_frame)] == 0);
    if (seg.length > 1)
      CHECK(ml.local_clocks[std::size_t(seg.start_frame + 1)] == 1);
  }
}

TEST_CASE("no words means all frames NS in one segment") {
  ModeLabeling ml = label_modes({}, 40, kFps);
  REQUIRE(ml.segments.size() == 1);
  CHECK(ml.segments[0].mode == SpeakingMode::NS);
  CHECK(ml.segments[0].length == 40);
}

TEST_CASE("segments_from_labels rebuilds runs and clocks") {
  using M = SpeakingMode;
  std::vector<M> labels{M::NS, M::NS, M::SS, M::SS, M::SS, M::NS};
  ModeLabeling ml = segments_from_labels(labels);
  REQUIRE(ml.segments.size() == 3);
  CHECK(ml.segments[1].mode == M::SS);
  CHECK(ml.segments[1].start_frame == 2);
  CHECK(ml.segments[1].length == 3);
  CHECK(ml.local_clocks ==
        std::vector<Eigen::Index>{0, 1, 0, 1, 2, 0});
}

TEST_CASE("spec_augment zeroes one contiguous block in one feature group") {
  SpeechFeatureSequence seq;
  seq.frames = MatX::Ones(50, kSpeechDim);
  auto ml = segments_from_labels(
      std::vector<SpeakingMode>(50, SpeakingMode::NS));
  seq.mode_labels = ml.mode_labels;
  seq.segments = ml.segments;
  seq.local_clocks = ml.local_clocks;

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    SpeechFeatureSequence aug = spec_augment(seq, rng, 0.2);
    CHECK(seq.frames.minCoeff() == 1.0);  // input untouched
    MatX diff = seq.frames - aug.frames;
    // Changed rows must be contiguous and confined to one block of columns.
    std::vector<Eigen::Index> changed;
    for (Eigen::Index t = 0; t < 50; ++t)
      if (diff.row(t).cwiseAbs().maxCoeff() > 0) changed.push_back(t);
    if (!changed.empty()) {
      CHECK(changed.back() - changed.front() + 1 ==
            Eigen::Index(changed.size()));
      CHECK(Eigen::Index(changed.size()) <= 10);  // 0.2 * 50
      bool mel_changed =
          diff.block(changed.front(), 0, 1, kMelChannels).cwiseAbs().maxCoeff() >
          0;
      bool word_changed = diff.block(changed.front(), kMelChannels, 1, kWordDim)
                              .cwiseAbs()
                              .maxCoeff() > 0;
      CHECK(mel_changed != word_changed);
    }
  }
}

TEST_CASE("spec_augment expected erased fraction is max_fraction / 2") {
  SpeechFeatureSequence seq;
  seq.frames = MatX::Ones(100, kSpeechDim);
  auto ml = segments_from_labels(
      std::vector<SpeakingMode>(100, SpeakingMode::NS));
  seq.mode_labels = ml.mode_labels;
  seq.segments = ml.segments;
  seq.local_clocks = ml.local_clocks;
  std::mt19937_64 rng(123);
  double total = 0.0;
  int trials = 4000;
  for (int i = 0; i < trials; ++i) {
    SpeechFeatureSequence aug = spec_augment(seq, rng, 0.2);
    Eigen::Index changed = 0;
    for (Eigen::Index t = 0; t < 100; ++t)
      if ((seq.frames.row(t) - aug.frames.row(t)).cwiseAbs().maxCoeff() > 0)
        ++changed;
    total += double(changed) / 100.0;
  }
  // Span length uniform on {0..20}: mean erased fraction = 0.1.
  CHECK(total / trials == doctest::Approx(0.1).epsilon(0.15));
}

TEST_CASE("stub word embedder is deterministic with unit-scale coordinates") {
  Eigen::VectorXd a = stub_word_embedder("gesture");
  Eigen::VectorXd b = stub_word_embedder("gesture");
  Eigen::VectorXd c = stub_word_embedder("speech");
  CHECK(a.size() == kRawWordDim);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
  CHECK(a.norm() == doctest::Approx(std::sqrt(double(kRawWordDim))).epsilon(0.25));
}

TEST_CASE("transcript reader parses start, end, token") {
  std::string p = temp_path("bf_test_transcript.tsv");
  {
    std::ofstream os(p);
    os << "0.10\t0.55\thello\n0.60\t0.90\tworld\n";
  }
  auto words = read_transcript(p);
  REQUIRE(words.size() == 2);
  CHECK(words[0].text == "hello");
  CHECK(words[0].start == doctest::Approx(0.10));
  CHECK(words[1].end == doctest::Approx(0.90));
  CHECK(words[0].embedding.size() == kRawWordDim);
  std::remove(p.c_str());
}

TEST_CASE("feature cache round trips bit-exactly") {
  AudioClip clip = sine_clip(300.0, 1.0);
  WordToken w;
  w.text = "word";
  w.start = 0.2;
  w.end = 0.7;
  w.embedding = stub_word_embedder("word");
  PcaProjection pca;
  pca.mean = Eigen::VectorXd::Zero(kRawWordDim);
  pca.basis = MatX::Zero(kRawWordDim, kWordDim);
  for (int i = 0; i < kWordDim; ++i) pca.basis(i, i) = 1.0;
  SpeechFeatureSequence seq = build_speech_features(clip, {w}, pca);
  CHECK(seq.frames.rows() == 20);
  CHECK(seq.frames.cols() == kSpeechDim);

  std::string p = temp_path("bf_test_cache.speech");
  write_feature_cache(p, seq);
  SpeechFeatureSequence back = read_feature_cache(p);
  CHECK((seq.frames - back.frames).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.mode_labels == seq.mode_labels);
  CHECK(back.local_clocks == seq.local_clocks);
  REQUIRE(back.segments.size() == seq.segments.size());
  for (std::size_t i = 0; i < seq.segments.size(); ++i) {
    CHECK(back.segments[i].mode == seq.segments[i].mode);
    CHECK(back.segments[i].start_frame == seq.segments[i].start_frame);
    CHECK(back.segments[i].length == seq.segments[i].length);
  }
  std::remove(p.c_str());
}

TEST_CASE("PCA file round trips bit-exactly") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd(0.0, 1.0);
  MatX data(64, kRawWordDim);
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    for (Eigen::Index j = 0; j < data.cols(); ++j) data(i, j) = nd(rng);
  PcaProjection pca = fit_pca(data, kWordDim);
  std::string p = temp_path("bf_test_pca.bin");
  write_pca(p, pca);
  PcaProjection back = read_pca(p);
  CHECK((pca.mean - back.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pca.basis - back.basis).cwiseAbs().maxCoeff() == 0.0);
  std::remove(p.c_str());
}
