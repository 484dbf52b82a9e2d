#include "kfusion/synth.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kfusion/errors.hpp"
#include "kfusion/rng.hpp"

namespace kfusion {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTau = 2.0 * kPi;
constexpr int kClipSamples = 16000;
constexpr int kClipFrames = 30;

Point ellipse_point(double cx, double cy, double rx, double ry, double deg) {
  const double rad = deg * kPi / 180.0;
  // Screen y grows downward; positive angles go over the top of the ellipse.
  return Point{cx + rx * std::cos(rad), cy - ry * std::sin(rad)};
}

}  // namespace

const std::array<double, kEmotionCount>& SynthSpec::emotion_scale() {
  static const std::array<double, kEmotionCount> table = {0.6,  0.75, 0.9, 1.0,
                                                          1.1,  1.25, 1.4, 1.6};
  return table;
}

LandmarkFrame base_face_template() {
  LandmarkFrame f;
  // Jaw 0-16: lower face arc.
  for (int i = 0; i <= 16; ++i) {
    const double t = kPi * i / 16.0;
    f.points[i] = Point{128.0 - 62.0 * std::cos(t), 118.0 + 76.0 * std::sin(t)};
  }
  // Brows 17-21 and 22-26.
  for (int i = 0; i < 5; ++i) {
    const double lift = 4.0 * std::sin(kPi * i / 4.0);
    f.points[17 + i] = Point{85.0 + 8.75 * i, 90.0 - lift};
    f.points[22 + i] = Point{136.0 + 8.75 * i, 90.0 - lift};
  }
  // Nose bridge 27-30 and base 31-35.
  for (int i = 0; i < 4; ++i) f.points[27 + i] = Point{128.0, 100.0 + 12.0 * i};
  for (int i = 0; i < 5; ++i) f.points[31 + i] = Point{112.0 + 8.0 * i, 144.0};
  // Eyes 36-41 (left) and 42-47 (right), hexagons.
  const double eye_angles[6] = {180.0, 120.0, 60.0, 0.0, -60.0, -120.0};
  for (int i = 0; i < 6; ++i) {
    f.points[36 + i] = ellipse_point(100.0, 105.0, 12.0, 5.0, eye_angles[i]);
    f.points[42 + i] = ellipse_point(156.0, 105.0, 12.0, 5.0, eye_angles[i]);
  }
  // Outer lip 48-59.
  for (int i = 0; i < 12; ++i) {
    f.points[48 + i] = ellipse_point(128.0, 168.0, 24.0, 10.0, 180.0 - 30.0 * i);
  }
  // Inner lip 60-67.
  for (int i = 0; i < 8; ++i) {
    f.points[60 + i] = ellipse_point(128.0, 168.0, 14.0, 4.0, 180.0 - 45.0 * i);
  }
  return f;
}

ClipRecipe clip_recipe(const SynthSpec& spec, int index) {
  Rng rng(Rng::derive(spec.seed, static_cast<std::uint64_t>(index)));
  ClipRecipe r;
  r.carrier1_hz = rng.uniform(110.0, 220.0);
  r.carrier1_phase = rng.uniform(0.0, kTau);
  r.carrier2_hz = rng.uniform(440.0, 880.0);
  r.carrier2_phase = rng.uniform(0.0, kTau);
  r.env_freq = rng.uniform(spec.env_freq_lo, spec.env_freq_hi);
  r.env_phase = rng.uniform(0.0, kTau);
  r.mouth_amp = rng.uniform(spec.mouth_amp_lo, spec.mouth_amp_hi);
  r.sway_x = rng.uniform(0.4, 1.0) * spec.sway_amp;
  r.sway_y = rng.uniform(0.2, 0.6) * spec.sway_amp;
  r.sway_freq = rng.uniform(0.5, 1.5);
  r.sway_phase = rng.uniform(0.0, kTau);
  r.emotion_id = index % kEmotionCount;
  return r;
}

double envelope_at(const ClipRecipe& r, double t_seconds) {
  return 0.5 * (1.0 - std::cos(kTau * r.env_freq * t_seconds + r.env_phase));
}

namespace {

// Vertical displacement weights for the mouth-opening motion; upper lip
// points move up, lower lip points move down, corners stay put.
double opening_weight(int point) {
  switch (point) {
    case 49: case 53: return -0.3 * 0.4;
    case 50: case 52: return -0.7 * 0.4;
    case 51: return -1.0 * 0.4;
    case 55: case 59: return 0.3;
    case 56: case 58: return 0.7;
    case 57: return 1.0;
    case 61: case 63: return -0.5 * 0.4;
    case 62: return -1.0 * 0.4;
    case 65: case 67: return 0.5;
    case 66: return 1.0;
    default: return 0.0;
  }
}

}  // namespace

SynthClip generate_clip(const SynthSpec& spec, int index) {
  if (index < 0 || index >= spec.n_clips) {
    throw ValidationError("generate_clip: index " + std::to_string(index) + " outside corpus");
  }
  const ClipRecipe r = clip_recipe(spec, index);
  SynthClip clip;
  clip.emotion_id = r.emotion_id;

  clip.audio.sample_rate = kSampleRate;
  clip.audio.samples.resize(kClipSamples);
  for (int n = 0; n < kClipSamples; ++n) {
    const double t = static_cast<double>(n) / kSampleRate;
    const double carrier = 0.6 * std::sin(kTau * r.carrier1_hz * t + r.carrier1_phase) +
                           0.4 * std::sin(kTau * r.carrier2_hz * t + r.carrier2_phase);
    clip.audio.samples[n] = envelope_at(r, t) * carrier;
  }

  const LandmarkFrame base = base_face_template();
  const double amp = r.mouth_amp * SynthSpec::emotion_scale()[r.emotion_id];
  clip.landmarks.fps = kDefaultFps;
  clip.landmarks.frames.resize(kClipFrames);
  for (int c = 0; c < kClipFrames; ++c) {
    const double t = (c + 0.5) / kDefaultFps;
    const double gap = amp * envelope_at(r, t);
    const double sway_arg = kTau * r.sway_freq * t + r.sway_phase;
    const double dx = r.sway_x * std::sin(sway_arg);
    const double dy = r.sway_y * std::cos(sway_arg);
    LandmarkFrame frame = base;
    for (int p = 0; p < kLandmarkPoints; ++p) {
      frame.points[p].x += dx;
      frame.points[p].y += dy + gap * opening_weight(p);
    }
    clip.landmarks.frames[c] = frame;
  }
  return clip;
}

std::string checksum_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checksum_file: cannot open " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    const std::streamsize got = is.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
    if (!is) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(out);
}

CorpusManifest generate_corpus(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  if (spec.n_clips < 1 || spec.n_clips > 999) {
    throw ValidationError("generate_corpus: n_clips must be in [1, 999]");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("generate_corpus: cannot create " + out_dir.string());

  CorpusManifest manifest;
  manifest.n_clips = spec.n_clips;
  manifest.seed = spec.seed;
  for (int i = 0; i < spec.n_clips; ++i) {
    const SynthClip clip = generate_clip(spec, i);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "clip_%03d", i);
    CorpusEntry entry;
    entry.index = i;
    entry.wav = std::string(stem) + ".wav";
    entry.landmarks = std::string(stem) + ".json";
    entry.emotion = clip.emotion_id;
    save_wav_pcm16(clip.audio, out_dir / entry.wav);
    save_landmarks(clip.landmarks, out_dir / entry.landmarks);
    entry.wav_checksum = checksum_file(out_dir / entry.wav);
    entry.landmarks_checksum = checksum_file(out_dir / entry.landmarks);
    manifest.clips.push_back(std::move(entry));
  }

  json j;
  j["n_clips"] = manifest.n_clips;
  j["seed"] = manifest.seed;
  json clips = json::array();
  for (const CorpusEntry& e : manifest.clips) {
    clips.push_back({{"index", e.index},
                     {"wav", e.wav},
                     {"landmarks", e.landmarks},
                     {"emotion", e.emotion},
                     {"wav_checksum", e.wav_checksum},
                     {"landmarks_checksum", e.landmarks_checksum}});
  }
  j["clips"] = std::move(clips);
  std::ofstream os(out_dir / "manifest.json");
  if (!os) throw IoError("generate_corpus: cannot write manifest");
  os << j.dump(2) << "\n";
  return manifest;
}

CorpusManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw IoError("load_manifest: cannot open " + (dir / "manifest.json").string());
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("load_manifest: malformed JSON: ") + e.what());
  }
  CorpusManifest m;
  m.n_clips = j.at("n_clips").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& c : j.at("clips")) {
    CorpusEntry e;
    e.index = c.at("index").get<int>();
    e.wav = c.at("wav").get<std::string>();
    e.landmarks = c.at("landmarks").get<std::string>();
    e.emotion = c.at("emotion").get<int>();
    e.wav_checksum = c.value("wav_checksum", "");
    e.landmarks_checksum = c.value("landmarks_checksum", "");
    m.clips.push_back(std::move(e));
  }
  return m;
}

}  // namespace kfusion
