#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kfusion/audio.hpp"
#include "kfusion/landmarks.hpp"

namespace kfusion {

// Deterministic audio <-> landmark corpus with a known audio-to-motion
// mapping: the audio amplitude envelope drives the mouth opening, so the
// mapping is learnable at desk scale by construction.
struct SynthSpec {
  int n_clips = 64;
  std::uint64_t seed = 7;
  double mouth_amp_lo = 6.0;
  double mouth_amp_hi = 12.0;
  double env_freq_lo = 1.5;
  double env_freq_hi = 3.5;
  double sway_amp = 2.5;

  // Per-emotion mouth amplitude multipliers.
  static const std::array<double, kEmotionCount>& emotion_scale();
};

// All derived per-clip constants; fully determined by (spec.seed, index).
struct ClipRecipe {
  double carrier1_hz = 0.0, carrier1_phase = 0.0;
  double carrier2_hz = 0.0, carrier2_phase = 0.0;
  double env_freq = 0.0, env_phase = 0.0;
  double mouth_amp = 0.0;
  double sway_x = 0.0, sway_y = 0.0, sway_freq = 0.0, sway_phase = 0.0;
  int emotion_id = 0;
};

struct SynthClip {
  AudioClip audio;
  LandmarkSequence landmarks;
  int emotion_id = 0;
};

struct CorpusEntry {
  int index = 0;
  std::string wav;
  std::string landmarks;
  int emotion = 0;
  std::string wav_checksum;
  std::string landmarks_checksum;
};

struct CorpusManifest {
  int n_clips = 0;
  std::uint64_t seed = 0;
  std::vector<CorpusEntry> clips;
};

LandmarkFrame base_face_template();
ClipRecipe clip_recipe(const SynthSpec& spec, int index);

// Envelope e(t) in [0,1]; the mouth gap is proportional to it by construction.
double envelope_at(const ClipRecipe& r, double t_seconds);

SynthClip generate_clip(const SynthSpec& spec, int index);

// Writes clip_###.wav + clip_###.json per clip plus manifest.json.
CorpusManifest generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir);

CorpusManifest load_manifest(const std::filesystem::path& dir);

// FNV-1a 64 over the file bytes, lowercase hex.
std::string checksum_file(const std::filesystem::path& path);

}  // namespace kfusion
