#include "kfusion/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "kfusion/errors.hpp"
#include "kfusion/kft.hpp"

namespace kfusion {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_wav: cannot open " + path.string());
  char riff[4], wave[4];
  is.read(riff, 4);
  read_u32(is);  // file size
  is.read(wave, 4);
  if (!is || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0) {
    throw ValidationError("load_wav: not a RIFF/WAVE file: " + path.string());
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<char> payload;
  bool have_fmt = false, have_data = false;
  while (is && !(have_fmt && have_data)) {
    char id[4];
    is.read(id, 4);
    if (!is) break;
    const std::uint32_t size = read_u32(is);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      format = read_u16(is);
      channels = read_u16(is);
      rate = read_u32(is);
      read_u32(is);  // byte rate
      read_u16(is);  // block align
      bits = read_u16(is);
      if (size > 16) is.ignore(size - 16);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      payload.resize(size);
      is.read(payload.data(), size);
      have_data = true;
    } else {
      is.ignore(size + (size & 1));
    }
  }
  if (!have_fmt || !have_data) {
    throw ValidationError("load_wav: missing fmt/data chunk: " + path.string());
  }
  if (channels != 1) {
    throw ValidationError("load_wav: expected 1 channel, got " + std::to_string(channels));
  }
  if (rate != kSampleRate) {
    throw ValidationError("load_wav: expected 16000 Hz, got " + std::to_string(rate) +
                          " (no silent resampling)");
  }
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    const std::size_t n = payload.size() / 2;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::int16_t s = static_cast<std::int16_t>(
          static_cast<unsigned char>(payload[2 * i]) |
          (static_cast<unsigned char>(payload[2 * i + 1]) << 8));
      clip.samples[i] = static_cast<double>(s) / 32768.0;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t n = payload.size() / 4;
    clip.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      std::memcpy(&u, payload.data() + 4 * i, 4);
      clip.samples[i] = static_cast<double>(std::bit_cast<float>(u));
    }
  } else {
    throw ValidationError("load_wav: unsupported format (need PCM16 or float32): " +
                          path.string());
  }
  return clip;
}

void save_wav_pcm16(const AudioClip& clip, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_wav_pcm16: cannot open " + path.string());
  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * 2);
  os.write("RIFF", 4);
  write_u32(os, 36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_u32(os, 16);
  write_u16(os, 1);  // PCM
  write_u16(os, 1);  // mono
  write_u32(os, static_cast<std::uint32_t>(clip.sample_rate));
  write_u32(os, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  write_u16(os, 2);
  write_u16(os, 16);
  os.write("data", 4);
  write_u32(os, data_size);
  for (double v : clip.samples) {
    const double scaled = std::nearbyint(std::clamp(v, -1.0, 1.0) * 32768.0);
    const std::int16_t s = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    write_u16(os, static_cast<std::uint16_t>(s));
  }
  if (!os) throw IoError("save_wav_pcm16: write failed: " + path.string());
}

Tensor frame_audio(const AudioClip& clip, int frame_count) {
  if (clip.samples.empty()) throw ValidationError("frame_audio: empty clip");
  if (frame_count < 1) throw ValidationError("frame_audio: frame count must be >= 1");
  const std::size_t n = clip.samples.size();
  const int width = static_cast<int>((n + frame_count - 1) / frame_count);
  std::vector<double> vals(static_cast<std::size_t>(frame_count) * width, 0.0);
  std::copy(clip.samples.begin(), clip.samples.end(), vals.begin());
  return Tensor::from_values(Shape3{1, frame_count, width}, std::move(vals));
}

namespace {

// Iterative radix-2 FFT, in place over interleaved re/im.
void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

constexpr int kMelDims = 80;
constexpr int kMelWindow = 400;
constexpr int kMelHop = 320;
constexpr int kMelFft = 512;
constexpr double kMelLogFloor = 1e-10;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

ContentFeatures mel_stub_features(const AudioClip& clip) {
  const int n = static_cast<int>(clip.samples.size());
  if (n < kMelWindow) {
    throw ValidationError("mel_stub_features: clip shorter than one window (" +
                          std::to_string(kMelWindow) + " samples)");
  }
  const int steps = 1 + (n - kMelWindow) / kMelHop;

  std::vector<double> window(kMelWindow);
  for (int i = 0; i < kMelWindow; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / kMelWindow));
  }

  // Triangular mel filters between 0 Hz and Nyquist.
  const double nyquist = clip.sample_rate / 2.0;
  const int bins = kMelFft / 2 + 1;
  std::vector<double> centers(kMelDims + 2);
  const double mel_max = hz_to_mel(nyquist);
  for (int m = 0; m < kMelDims + 2; ++m) {
    centers[m] = mel_to_hz(mel_max * m / (kMelDims + 1));
  }

  ContentFeatures out;
  out.t = steps;
  out.d = kMelDims;
  out.values.assign(static_cast<std::size_t>(steps) * kMelDims, 0.0);

  std::vector<double> re(kMelFft), im(kMelFft), power(bins);
  for (int s = 0; s < steps; ++s) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    const int off = s * kMelHop;
    for (int i = 0; i < kMelWindow; ++i) re[i] = clip.samples[off + i] * window[i];
    fft_radix2(re, im);
    for (int k = 0; k < bins; ++k) power[k] = re[k] * re[k] + im[k] * im[k];
    for (int m = 0; m < kMelDims; ++m) {
      const double f_lo = centers[m], f_c = centers[m + 1], f_hi = centers[m + 2];
      double energy = 0.0;
      for (int k = 0; k < bins; ++k) {
        const double f = k * static_cast<double>(clip.sample_rate) / kMelFft;
        double w = 0.0;
        if (f > f_lo && f < f_hi) {
          w = (f <= f_c) ? (f - f_lo) / (f_c - f_lo) : (f_hi - f) / (f_hi - f_c);
        }
        energy += w * power[k];
      }
      out.values[static_cast<std::size_t>(s) * kMelDims + m] =
          std::log(std::max(energy, kMelLogFloor));
    }
  }
  return out;
}

ContentFeatures load_features(const std::filesystem::path& path) {
  kft::Array a = kft::load(path);
  if (a.dims.size() != 2) {
    throw ValidationError("load_features: expected rank 2, got rank " +
                          std::to_string(a.dims.size()) + " in " + path.string());
  }
  ContentFeatures f;
  f.t = static_cast<int>(a.dims[0]);
  f.d = static_cast<int>(a.dims[1]);
  f.values.assign(a.data.begin(), a.data.end());
  return f;
}

void save_features(const ContentFeatures& f, const std::filesystem::path& path) {
  kft::Array a;
  a.dims = {static_cast<std::uint32_t>(f.t), static_cast<std::uint32_t>(f.d)};
  a.data.reserve(f.values.size());
  for (double v : f.values) a.data.push_back(static_cast<float>(v));
  kft::save(path, a);
}

ContentFeatures apply_emotion(const ContentFeatures& f, const EmotionWeight& w) {
  const Shape3 ts = w.table.shape();
  if (ts.b != 1 || ts.c != kEmotionCount || ts.l != f.d) {
    throw ShapeError("apply_emotion: table " + ts.str() + " does not match feature dim " +
                     std::to_string(f.d));
  }
  if (w.emotion_id < 0 || w.emotion_id >= kEmotionCount) {
    throw ValidationError("apply_emotion: emotion id " + std::to_string(w.emotion_id) +
                          " outside [0,8)");
  }
  ContentFeatures out = f;
  const double* row = w.table.values().data() + static_cast<std::size_t>(w.emotion_id) * f.d;
  for (int t = 0; t < f.t; ++t) {
    for (int d = 0; d < f.d; ++d) {
      out.values[static_cast<std::size_t>(t) * f.d + d] *= row[d];
    }
  }
  return out;
}

Tensor resample_time(const ContentFeatures& f, int frame_count) {
  if (f.t < 2) throw ValidationError("resample_time: need at least 2 time steps");
  if (frame_count < 1) throw ValidationError("resample_time: frame count must be >= 1");
  std::vector<double> vals(static_cast<std::size_t>(frame_count) * f.d);
  for (int c = 0; c < frame_count; ++c) {
    const double pos =
        (frame_count == 1) ? 0.0
                           : static_cast<double>(c) * (f.t - 1) / static_cast<double>(frame_count - 1);
    const int i0 = std::min(static_cast<int>(pos), f.t - 2);
    const double frac = pos - i0;
    for (int d = 0; d < f.d; ++d) {
      vals[static_cast<std::size_t>(c) * f.d + d] =
          (1.0 - frac) * f.at(i0, d) + frac * f.at(i0 + 1, d);
    }
  }
  return Tensor::from_values(Shape3{1, frame_count, f.d}, std::move(vals));
}

ContentFeatures standardize(const ContentFeatures& f) {
  ContentFeatures out = f;
  for (int d = 0; d < f.d; ++d) {
    double mean = 0.0;
    for (int t = 0; t < f.t; ++t) mean += f.at(t, d);
    mean /= f.t;
    double var = 0.0;
    for (int t = 0; t < f.t; ++t) {
      const double diff = f.at(t, d) - mean;
      var += diff * diff;
    }
    var /= f.t;
    const double inv = 1.0 / (std::sqrt(var) + 1e-8);
    for (int t = 0; t < f.t; ++t) {
      out.values[static_cast<std::size_t>(t) * f.d + d] = (f.at(t, d) - mean) * inv;
    }
  }
  return out;
}

}  // namespace kfusion
