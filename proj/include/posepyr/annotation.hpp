#pragma once

#include <array>
#include <optional>
#include <vector>

namespace posepyr {

/// Pixel coordinates with the pixel centre at the integer position. v > 0 means visible.
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  int v = 0;

  bool operator==(const Keypoint&) const = default;
};

struct Annotation {
  int person_id = 0;
  std::vector<Keypoint> keypoints;
  double area = 0.0;                          // s^2 in OKS
  std::optional<std::array<double, 4>> bbox;  // x, y, w, h
  bool iscrowd = false;

  int visible_count() const {
    int n = 0;
    for (const auto& k : keypoints) n += k.v > 0;
    return n;
  }

  bool operator==(const Annotation&) const = default;
};

}  // namespace posepyr
