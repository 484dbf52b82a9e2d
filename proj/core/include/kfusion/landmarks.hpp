#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "kfusion/tensor.hpp"

namespace kfusion {

inline constexpr int kLandmarkPoints = 68;
// Mouth region: points 48..67, flat feature range [96, 136) under the
// interleaved x,y layout.
inline constexpr int kMouthPointBegin = 48;
inline constexpr int kMouthPointEnd = 68;
inline constexpr int kFaceFeatures = 136;
inline constexpr int kMouthFeatures = 40;
inline constexpr int kMouthFlatBegin = 96;
inline constexpr int kMouthFlatEnd = 136;
inline constexpr double kImageSize = 256.0;
inline constexpr int kDefaultFps = 30;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct LandmarkFrame {
  std::array<Point, kLandmarkPoints> points;
};

struct LandmarkSequence {
  std::vector<LandmarkFrame> frames;
  int fps = kDefaultFps;
};

// Identity landmarks used as decoder guidance, in normalized units.
struct IdentityLandmarks {
  std::array<double, kFaceFeatures> v;
  std::array<double, kMouthFeatures> v_m;
};

// [x0, y0, x1, y1, ..., x67, y67]
std::array<double, kFaceFeatures> flatten(const LandmarkFrame& frame);
LandmarkFrame unflatten(std::span<const double, kFaceFeatures> flat);

// (B,C,136) -> (B,C,40), the contiguous feature slice [96,136).
Tensor mouth_slice(const Tensor& t);

// Pixel coordinates -> [0,1]; throws ValidationError on out-of-range input.
Tensor normalize(const LandmarkSequence& seq, double image_size = kImageSize);
LandmarkSequence denormalize(const Tensor& t, int fps = kDefaultFps,
                             double image_size = kImageSize);

// Raw pixel-unit flattening of a whole sequence to (1,C,136).
Tensor sequence_to_tensor(const LandmarkSequence& seq);
LandmarkSequence tensor_to_sequence(const Tensor& t, int fps = kDefaultFps);

IdentityLandmarks identity_from_frame(const LandmarkFrame& frame,
                                      double image_size = kImageSize);

// JSON schema: {"fps": int, "image_size": number, "frames": [[[x,y] x 68]]}
LandmarkSequence load_landmarks(const std::filesystem::path& path);
void save_landmarks(const LandmarkSequence& seq, const std::filesystem::path& path);

}  // namespace kfusion
