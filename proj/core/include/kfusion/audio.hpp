#pragma once

#include <filesystem>
#include <vector>

#include "kfusion/tensor.hpp"

namespace kfusion {

inline constexpr int kSampleRate = 16000;
inline constexpr int kEmotionCount = 8;

// Mono PCM in [-1, 1] at 16 kHz.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
};

// T time steps x D dims of speech-representation features.
struct ContentFeatures {
  int t = 0;
  int d = 0;
  std::vector<double> values;  // row-major t x d

  double at(int ti, int di) const { return values[static_cast<std::size_t>(ti) * d + di]; }
};

// Learnable per-emotion feature weighting; `table` is (1, 8, D).
struct EmotionWeight {
  int emotion_id = 0;
  Tensor table;
};

// WAV container, PCM16 or float32, 1 channel, 16 kHz; no silent resampling.
AudioClip load_wav(const std::filesystem::path& path);
void save_wav_pcm16(const AudioClip& clip, const std::filesystem::path& path);

// Splits the clip into `frame_count` non-overlapping windows of
// W = ceil(samples / frame_count), zero-padding the tail: (1, C, W).
Tensor frame_audio(const AudioClip& clip, int frame_count);

// Deterministic log-mel filterbank stand-in for a pretrained speech encoder:
// 80 dims, 400-sample Hann window, 320 hop (50 steps/s), log floor 1e-10.
ContentFeatures mel_stub_features(const AudioClip& clip);

// KFT1 rank-2 (T x D) feature files.
ContentFeatures load_features(const std::filesystem::path& path);
void save_features(const ContentFeatures& f, const std::filesystem::path& path);

// Per-time-step elementwise multiply by the emotion embedding row.
ContentFeatures apply_emotion(const ContentFeatures& f, const EmotionWeight& w);

// Linear interpolation along time onto `frame_count` steps: (1, C, D).
// Endpoints map to endpoints.
Tensor resample_time(const ContentFeatures& f, int frame_count);

// Zero-mean unit-variance over a whole clip's features (model input
// conditioning; raw log-mel levels are far outside the net's working range).
ContentFeatures standardize(const ContentFeatures& f);

}  // namespace kfusion
