#pragma once

#include <span>
#include <vector>

#include "kfusion/landmarks.hpp"

namespace kfusion {

// All values in pixel units of the 256x256 frame.
struct MetricReport {
  double f_ld = 0.0;
  double f_lvd = 0.0;
  double m_ld = 0.0;
  double m_lvd = 0.0;
};

std::span<const int> all_point_indices();
std::span<const int> mouth_point_indices();

// Mean Euclidean distance between corresponding points, averaged over frames
// and the region.
double landmark_distance(const LandmarkSequence& pred, const LandmarkSequence& ref,
                         std::span<const int> region);

// Mean Euclidean distance between frame-to-frame velocity vectors, averaged
// over transitions and the region.
double landmark_velocity_difference(const LandmarkSequence& pred, const LandmarkSequence& ref,
                                    std::span<const int> region);

// F-* over all 68 points, M-* over points 48-67.
MetricReport full_report(const LandmarkSequence& pred, const LandmarkSequence& ref);

}  // namespace kfusion
