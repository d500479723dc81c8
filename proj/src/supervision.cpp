#include "posepyr/supervision.hpp"

#include <algorithm>
#include <numbers>

#include <Eigen/LU>

namespace posepyr {

AugmentDraw sample_augment(const AugmentParams& params, std::mt19937_64& rng, int out_size) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDraw d;
  d.rotation_deg = (2 * unit(rng) - 1) * params.max_rotation_deg;
  d.scale = params.min_scale + unit(rng) * (params.max_scale - params.min_scale);
  const double t = params.max_translation * out_size;
  d.tx = (2 * unit(rng) - 1) * t;
  d.ty = (2 * unit(rng) - 1) * t;
  d.flip = unit(rng) < params.flip_prob;
  return d;
}

Affine augmentation_matrix(const AugmentDraw& draw, int in_w, int in_h, int out_size) {
  const double theta = draw.rotation_deg * std::numbers::pi / 180.0;
  const double fit = static_cast<double>(out_size) / std::max(in_w, in_h);
  const double k = draw.scale * fit, c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix2d a;
  a << k * c, k * s, -k * s, k * c;
  const Eigen::Vector2d c_in((in_w - 1) / 2.0, (in_h - 1) / 2.0);
  const Eigen::Vector2d c_out((out_size - 1) / 2.0 + draw.tx, (out_size - 1) / 2.0 + draw.ty);
  Affine m;
  m.leftCols<2>() = a;
  m.col(2) = c_out - a * c_in;
  if (draw.flip) {
    m.row(0) = -m.row(0);
    m(0, 2) += out_size - 1;
  }
  return m;
}

std::vector<Annotation> transform_annotations(const std::vector<Annotation>& annos, const Affine& m, int out_size,
                                              bool mirrored, const std::vector<int>& flip_index) {
  const double lin_scale = std::sqrt(std::abs(m.leftCols<2>().determinant()));
  std::vector<Annotation> out;
  out.reserve(annos.size());
  for (const auto& a : annos) {
    Annotation b = a;
    for (auto& kp : b.keypoints) {
      const Eigen::Vector2d p = m * Eigen::Vector3d(kp.x, kp.y, 1.0);
      kp.x = p.x();
      kp.y = p.y();
      const bool inside = kp.x >= -0.5 && kp.y >= -0.5 && kp.x < out_size - 0.5 && kp.y < out_size - 0.5;
      if (!inside) kp.v = 0;
    }
    if (mirrored) {
      if (flip_index.size() != b.keypoints.size()) {
        throw std::invalid_argument("transform_annotations: flip index has " + std::to_string(flip_index.size()) +
                                    " entries for " + std::to_string(b.keypoints.size()) + " keypoints");
      }
      std::vector<Keypoint> swapped(b.keypoints.size());
      for (std::size_t k = 0; k < swapped.size(); ++k) swapped[k] = b.keypoints[flip_index[k]];
      b.keypoints = std::move(swapped);
    }
    b.area = a.area * lin_scale * lin_scale;
    if (a.bbox) {
      const auto& bb = *a.bbox;
      double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
      for (double cx : {bb[0], bb[0] + bb[2]}) {
        for (double cy : {bb[1], bb[1] + bb[3]}) {
          const Eigen::Vector2d p = m * Eigen::Vector3d(cx, cy, 1.0);
          x0 = std::min(x0, p.x());
          x1 = std::max(x1, p.x());
          y0 = std::min(y0, p.y());
          y1 = std::max(y1, p.y());
        }
      }
      b.bbox = std::array<double, 4>{x0, y0, x1 - x0, y1 - y0};
    }
    out.push_back(std::move(b));
  }
  return out;
}

Augmented apply_augmentation(const Image& image, const std::vector<Annotation>& annos, const AugmentDraw& draw,
                             int out_size, const std::vector<int>& flip_index) {
  const Affine m = augmentation_matrix(draw, image.width, image.height, out_size);
  return {warp_affine(image, m, out_size, out_size), transform_annotations(annos, m, out_size, draw.flip, flip_index)};
}

Augmented augment(const Image& image, const std::vector<Annotation>& annos, std::mt19937_64& rng,
                  const AugmentParams& params, int out_size, const std::vector<int>& flip_index) {
  return apply_augmentation(image, annos, sample_augment(params, rng, out_size), out_size, flip_index);
}

}  // namespace posepyr
