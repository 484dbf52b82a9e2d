#include "kfusion/metrics.hpp"

#include <array>
#include <cmath>

#include "kfusion/errors.hpp"

namespace kfusion {

namespace {

constexpr auto make_all_indices() {
  std::array<int, kLandmarkPoints> a{};
  for (int i = 0; i < kLandmarkPoints; ++i) a[i] = i;
  return a;
}

constexpr auto make_mouth_indices() {
  std::array<int, kMouthPointEnd - kMouthPointBegin> a{};
  for (int i = 0; i < kMouthPointEnd - kMouthPointBegin; ++i) a[i] = kMouthPointBegin + i;
  return a;
}

const std::array<int, kLandmarkPoints> kAllIndices = make_all_indices();
const std::array<int, 20> kMouthIndices = make_mouth_indices();

void check_pair(const char* op, const LandmarkSequence& pred, const LandmarkSequence& ref,
                std::span<const int> region) {
  if (pred.frames.size() != ref.frames.size()) {
    throw ValidationError(std::string(op) + ": frame counts differ (" +
                          std::to_string(pred.frames.size()) + " vs " +
                          std::to_string(ref.frames.size()) + ")");
  }
  if (region.empty()) throw ValidationError(std::string(op) + ": empty region");
  for (int i : region) {
    if (i < 0 || i >= kLandmarkPoints) {
      throw ValidationError(std::string(op) + ": point index " + std::to_string(i) +
                            " outside [0,68)");
    }
  }
}

}  // namespace

std::span<const int> all_point_indices() { return kAllIndices; }
std::span<const int> mouth_point_indices() { return kMouthIndices; }

double landmark_distance(const LandmarkSequence& pred, const LandmarkSequence& ref,
                         std::span<const int> region) {
  check_pair("landmark_distance", pred, ref, region);
  double acc = 0.0;
  for (std::size_t t = 0; t < pred.frames.size(); ++t) {
    for (int i : region) {
      const Point& p = pred.frames[t].points[i];
      const Point& r = ref.frames[t].points[i];
      acc += std::hypot(p.x - r.x, p.y - r.y);
    }
  }
  return acc / (static_cast<double>(pred.frames.size()) * region.size());
}

double landmark_velocity_difference(const LandmarkSequence& pred, const LandmarkSequence& ref,
                                    std::span<const int> region) {
  check_pair("landmark_velocity_difference", pred, ref, region);
  if (pred.frames.size() < 2) {
    throw ValidationError("landmark_velocity_difference: need at least 2 frames");
  }
  const std::size_t transitions = pred.frames.size() - 1;
  double acc = 0.0;
  for (std::size_t t = 1; t < pred.frames.size(); ++t) {
    for (int i : region) {
      const double pvx = pred.frames[t].points[i].x - pred.frames[t - 1].points[i].x;
      const double pvy = pred.frames[t].points[i].y - pred.frames[t - 1].points[i].y;
      const double rvx = ref.frames[t].points[i].x - ref.frames[t - 1].points[i].x;
      const double rvy = ref.frames[t].points[i].y - ref.frames[t - 1].points[i].y;
      acc += std::hypot(pvx - rvx, pvy - rvy);
    }
  }
  return acc / (static_cast<double>(transitions) * region.size());
}

MetricReport full_report(const LandmarkSequence& pred, const LandmarkSequence& ref) {
  MetricReport r;
  r.f_ld = landmark_distance(pred, ref, all_point_indices());
  r.f_lvd = landmark_velocity_difference(pred, ref, all_point_indices());
  r.m_ld = landmark_distance(pred, ref, mouth_point_indices());
  r.m_lvd = landmark_velocity_difference(pred, ref, mouth_point_indices());
  return r;
}

}  // namespace kfusion
