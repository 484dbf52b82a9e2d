#include "kfusion/landmarks.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kfusion/errors.hpp"
#include "kfusion/ops.hpp"

namespace kfusion {

using nlohmann::json;

std::array<double, kFaceFeatures> flatten(const LandmarkFrame& frame) {
  std::array<double, kFaceFeatures> out;
  for (int i = 0; i < kLandmarkPoints; ++i) {
    out[2 * i] = frame.points[i].x;
    out[2 * i + 1] = frame.points[i].y;
  }
  return out;
}

LandmarkFrame unflatten(std::span<const double, kFaceFeatures> flat) {
  LandmarkFrame frame;
  for (int i = 0; i < kLandmarkPoints; ++i) {
    frame.points[i].x = flat[2 * i];
    frame.points[i].y = flat[2 * i + 1];
  }
  return frame;
}

Tensor mouth_slice(const Tensor& t) {
  if (t.shape().l != kFaceFeatures) {
    throw ShapeError("mouth_slice: feature axis must be 136, got " + t.shape().str());
  }
  return slice_feature(t, kMouthFlatBegin, kMouthFlatEnd);
}

Tensor normalize(const LandmarkSequence& seq, double image_size) {
  const int C = static_cast<int>(seq.frames.size());
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(C) * kFaceFeatures);
  for (int c = 0; c < C; ++c) {
    const auto flat = flatten(seq.frames[c]);
    for (double v : flat) {
      if (!(v >= 0.0 && v <= image_size)) {
        throw ValidationError("normalize: coordinate " + std::to_string(v) +
                              " outside [0, " + std::to_string(image_size) + "] in frame " +
                              std::to_string(c));
      }
      vals.push_back(v / image_size);
    }
  }
  return Tensor::from_values(Shape3{1, C, kFaceFeatures}, std::move(vals));
}

LandmarkSequence denormalize(const Tensor& t, int fps, double image_size) {
  const Shape3 s = t.shape();
  if (s.b != 1 || s.l != kFaceFeatures) {
    throw ShapeError("denormalize: expected (1,C,136), got " + s.str());
  }
  LandmarkSequence seq;
  seq.fps = fps;
  seq.frames.resize(s.c);
  const auto& v = t.values();
  for (int c = 0; c < s.c; ++c) {
    std::array<double, kFaceFeatures> flat;
    for (int l = 0; l < kFaceFeatures; ++l) {
      flat[l] = v[static_cast<std::size_t>(c) * kFaceFeatures + l] * image_size;
    }
    seq.frames[c] = unflatten(flat);
  }
  return seq;
}

Tensor sequence_to_tensor(const LandmarkSequence& seq) {
  const int C = static_cast<int>(seq.frames.size());
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(C) * kFaceFeatures);
  for (const LandmarkFrame& f : seq.frames) {
    const auto flat = flatten(f);
    vals.insert(vals.end(), flat.begin(), flat.end());
  }
  return Tensor::from_values(Shape3{1, C, kFaceFeatures}, std::move(vals));
}

LandmarkSequence tensor_to_sequence(const Tensor& t, int fps) {
  const Shape3 s = t.shape();
  if (s.b != 1 || s.l != kFaceFeatures) {
    throw ShapeError("tensor_to_sequence: expected (1,C,136), got " + s.str());
  }
  LandmarkSequence seq;
  seq.fps = fps;
  seq.frames.resize(s.c);
  const auto& v = t.values();
  for (int c = 0; c < s.c; ++c) {
    std::array<double, kFaceFeatures> flat;
    for (int l = 0; l < kFaceFeatures; ++l) flat[l] = v[static_cast<std::size_t>(c) * kFaceFeatures + l];
    seq.frames[c] = unflatten(flat);
  }
  return seq;
}

IdentityLandmarks identity_from_frame(const LandmarkFrame& frame, double image_size) {
  IdentityLandmarks id;
  const auto flat = flatten(frame);
  for (int i = 0; i < kFaceFeatures; ++i) {
    const double v = flat[i];
    if (!(v >= 0.0 && v <= image_size)) {
      throw ValidationError("identity_from_frame: coordinate outside [0, image_size]");
    }
    id.v[i] = v / image_size;
  }
  for (int i = 0; i < kMouthFeatures; ++i) id.v_m[i] = id.v[kMouthFlatBegin + i];
  return id;
}

LandmarkSequence load_landmarks(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_landmarks: cannot open " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("load_landmarks: malformed JSON in " + path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("fps") || !j.contains("frames")) {
    throw ValidationError("load_landmarks: missing fps/frames in " + path.string());
  }
  LandmarkSequence seq;
  seq.fps = j.at("fps").get<int>();
  const auto& frames = j.at("frames");
  if (!frames.is_array() || frames.empty()) {
    throw ValidationError("load_landmarks: frames must be a non-empty array");
  }
  seq.frames.resize(frames.size());
  for (std::size_t c = 0; c < frames.size(); ++c) {
    const auto& pts = frames[c];
    if (!pts.is_array() || pts.size() != kLandmarkPoints) {
      throw ValidationError("load_landmarks: frame " + std::to_string(c) + " has " +
                            std::to_string(pts.size()) + " points, expected 68");
    }
    for (int p = 0; p < kLandmarkPoints; ++p) {
      const auto& xy = pts[p];
      if (!xy.is_array() || xy.size() != 2) {
        throw ValidationError("load_landmarks: frame " + std::to_string(c) + " point " +
                              std::to_string(p) + " is not an [x,y] pair");
      }
      const double x = xy[0].get<double>();
      const double y = xy[1].get<double>();
      if (!std::isfinite(x) || !std::isfinite(y)) {
        throw ValidationError("load_landmarks: non-finite coordinate in frame " +
                              std::to_string(c));
      }
      seq.frames[c].points[p] = Point{x, y};
    }
  }
  return seq;
}

void save_landmarks(const LandmarkSequence& seq, const std::filesystem::path& path) {
  json j;
  j["fps"] = seq.fps;
  j["image_size"] = kImageSize;
  json frames = json::array();
  for (const LandmarkFrame& f : seq.frames) {
    json pts = json::array();
    for (const Point& p : f.points) pts.push_back(json::array({p.x, p.y}));
    frames.push_back(std::move(pts));
  }
  j["frames"] = std::move(frames);
  std::ofstream os(path);
  if (!os) throw IoError("save_landmarks: cannot open " + path.string());
  os << j.dump(2) << "\n";
  if (!os) throw IoError("save_landmarks: write failed: " + path.string());
}

}  // namespace kfusion
