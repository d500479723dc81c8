#pragma once

#include "posepyr/annotation.hpp"
#include "posepyr/image.hpp"
#include "posepyr/model.hpp"
#include "posepyr/ops.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace posepyr {

/// Keypoint at input pixel x lands in cell floor((x + 0.5) * res / input_size)
/// of a level with res cells. Pixel centres sit at integers, so this is the
/// cell whose footprint contains the keypoint.
inline Index keypoint_cell(double x, Index input_size, Index res) {
  return static_cast<Index>(std::floor((x + 0.5) * static_cast<double>(res) / static_cast<double>(input_size)));
}

/// Batched targets. heatmaps[i] and masks[i] are N x K x R_i x R_i; joints[n][p]
/// lists flat indices into image n's K x R_0 x R_0 block for person p.
template <typename T>
struct TargetPyramid {
  std::vector<Tensor<T>> heatmaps;
  std::vector<Tensor<T>> masks;
  std::vector<std::vector<std::vector<Index>>> joints;

  Index batch() const { return static_cast<Index>(joints.size()); }
};

/// Targets for one image of side input_size. Visible keypoints splat an
/// unnormalised Gaussian (peak 1, support radius ceil(3 sigma)) with per-pixel
/// max across persons; sigma is in grid cells at every level. Keypoints outside
/// a level's grid are skipped. Annotations with a bbox but no visible keypoints
/// mark an ignore region: the mask is zero under their box.
template <typename T>
TargetPyramid<T> make_targets(const std::vector<Annotation>& annos, Index input_size, Index num_keypoints,
                              const std::vector<Index>& level_resolutions, double sigma = 2.0) {
  if (!(sigma > 0)) throw std::invalid_argument("make_targets: sigma must be positive");
  if (level_resolutions.empty()) throw std::invalid_argument("make_targets: no levels");
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  TargetPyramid<T> out;
  for (Index res : level_resolutions) {
    Tensor<T> hm = Tensor<T>::zeros({1, num_keypoints, res, res});
    Tensor<T> mask = Tensor<T>::full({1, num_keypoints, res, res}, T(1));
    for (const auto& a : annos) {
      if (static_cast<Index>(a.keypoints.size()) != num_keypoints) {
        throw std::invalid_argument("make_targets: annotation has " + std::to_string(a.keypoints.size()) +
                                    " keypoints, expected " + std::to_string(num_keypoints));
      }
      if (a.visible_count() == 0 && a.bbox) {
        const auto& b = *a.bbox;
        const Index x0 = std::max<Index>(0, keypoint_cell(b[0], input_size, res));
        const Index y0 = std::max<Index>(0, keypoint_cell(b[1], input_size, res));
        const Index x1 = std::min<Index>(res - 1, keypoint_cell(b[0] + b[2], input_size, res));
        const Index y1 = std::min<Index>(res - 1, keypoint_cell(b[1] + b[3], input_size, res));
        for (Index k = 0; k < num_keypoints; ++k) {
          for (Index y = y0; y <= y1; ++y) {
            for (Index x = x0; x <= x1; ++x) mask.data()[(k * res + y) * res + x] = T(0);
          }
        }
        continue;
      }
      for (Index k = 0; k < num_keypoints; ++k) {
        const Keypoint& kp = a.keypoints[k];
        if (kp.v <= 0) continue;
        const Index cx = keypoint_cell(kp.x, input_size, res), cy = keypoint_cell(kp.y, input_size, res);
        if (cx < 0 || cy < 0 || cx >= res || cy >= res) continue;
        T* plane = hm.ptr() + k * res * res;
        for (Index y = std::max<Index>(0, cy - radius); y <= std::min<Index>(res - 1, cy + radius); ++y) {
          for (Index x = std::max<Index>(0, cx - radius); x <= std::min<Index>(res - 1, cx + radius); ++x) {
            const double d2 = static_cast<double>((x - cx) * (x - cx) + (y - cy) * (y - cy));
            const T g = static_cast<T>(std::exp(-d2 / (2 * sigma * sigma)));
            plane[y * res + x] = std::max(plane[y * res + x], g);
          }
        }
      }
    }
    out.heatmaps.push_back(hm);
    out.masks.push_back(mask);
  }

  const Index r0 = level_resolutions.front();
  std::vector<std::vector<Index>> persons;
  for (const auto& a : annos) {
    std::vector<Index> idx;
    for (Index k = 0; k < num_keypoints; ++k) {
      const Keypoint& kp = a.keypoints[k];
      if (kp.v <= 0) continue;
      const Index cx = keypoint_cell(kp.x, input_size, r0), cy = keypoint_cell(kp.y, input_size, r0);
      if (cx < 0 || cy < 0 || cx >= r0 || cy >= r0) continue;
      idx.push_back((k * r0 + cy) * r0 + cx);
    }
    if (!idx.empty()) persons.push_back(std::move(idx));
  }
  out.joints.push_back(std::move(persons));
  return out;
}

/// Concatenates single-image targets along the batch axis.
template <typename T>
TargetPyramid<T> stack_targets(const std::vector<TargetPyramid<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack_targets: nothing to stack");
  TargetPyramid<T> out;
  const std::size_t levels = parts.front().heatmaps.size();
  for (std::size_t l = 0; l < levels; ++l) {
    Shape shape = parts.front().heatmaps[l].shape();
    const Index per = shape_numel(shape) / shape[0];
    Index n = 0;
    for (const auto& p : parts) {
      if (p.heatmaps.size() != levels || p.heatmaps[l].numel() / p.heatmaps[l].dim(0) != per) {
        throw std::invalid_argument("stack_targets: level shapes differ");
      }
      n += p.heatmaps[l].dim(0);
    }
    shape[0] = n;
    Tensor<T> hm(shape), mask(shape);
    Index offset = 0;
    for (const auto& p : parts) {
      hm.data().segment(offset, p.heatmaps[l].numel()) = p.heatmaps[l].data();
      mask.data().segment(offset, p.masks[l].numel()) = p.masks[l].data();
      offset += p.heatmaps[l].numel();
    }
    out.heatmaps.push_back(hm);
    out.masks.push_back(mask);
  }
  for (const auto& p : parts) out.joints.insert(out.joints.end(), p.joints.begin(), p.joints.end());
  return out;
}

/// Sum over levels of the masked mean squared error.
template <typename T>
Tensor<T> heatmap_loss(const HeatmapPyramid<T>& pred, const TargetPyramid<T>& target) {
  detail::require(pred.levels.size() == target.heatmaps.size(),
                  "heatmap_loss: " + std::to_string(pred.levels.size()) + " predicted levels vs " +
                      std::to_string(target.heatmaps.size()) + " target levels");
  Tensor<T> total;
  for (std::size_t l = 0; l < pred.levels.size(); ++l) {
    Tensor<T> term = masked_mse(pred.levels[l], target.heatmaps[l], target.masks[l]);
    total = l == 0 ? term : add(total, term);
  }
  return total;
}

struct TagLossTerms {
  double pull = 0.0;
  double push = 0.0;
};

namespace detail {

/// Per-image pull and push, with d(loss)/d(tag) written into grad when non-null.
/// pull = mean_p mean_i (t_pi - mean_p)^2, push = mean over ordered pairs a != b of exp(-(m_a - m_b)^2 / 2).
template <typename T>
TagLossTerms tag_terms_one(const T* tags, const std::vector<std::vector<Index>>& persons, T* grad, double weight) {
  TagLossTerms terms;
  const std::size_t P = persons.size();
  if (P == 0) return terms;
  std::vector<double> mean(P, 0.0);
  for (std::size_t p = 0; p < P; ++p) {
    for (Index i : persons[p]) mean[p] += tags[i];
    mean[p] /= static_cast<double>(persons[p].size());
  }
  for (std::size_t p = 0; p < P; ++p) {
    const double n = static_cast<double>(persons[p].size());
    double var = 0.0;
    for (Index i : persons[p]) {
      const double d = tags[i] - mean[p];
      var += d * d;
      if (grad) grad[i] += static_cast<T>(weight * 2.0 * d / (n * static_cast<double>(P)));
    }
    terms.pull += var / n / static_cast<double>(P);
  }
  if (P < 2) return terms;
  const double pairs = static_cast<double>(P * (P - 1));
  std::vector<double> dmean(P, 0.0);
  for (std::size_t a = 0; a < P; ++a) {
    for (std::size_t b = 0; b < P; ++b) {
      if (a == b) continue;
      const double d = mean[a] - mean[b];
      const double e = std::exp(-0.5 * d * d);
      terms.push += e / pairs;
      // Ordered pairs (a,b) and (b,a) both depend on m_a.
      dmean[a] += 2.0 * (-d * e) / pairs;
    }
  }
  if (grad) {
    for (std::size_t p = 0; p < P; ++p) {
      const double n = static_cast<double>(persons[p].size());
      for (Index i : persons[p]) grad[i] += static_cast<T>(weight * dmean[p] / n);
    }
  }
  return terms;
}

}  // namespace detail

/// Pull and push averaged over the batch; tagmap is N x K x R x R.
template <typename T>
TagLossTerms tag_loss_terms(const Tensor<T>& tagmap, const std::vector<std::vector<std::vector<Index>>>& joints) {
  detail::require_nchw(tagmap, "tag_loss");
  detail::require(tagmap.dim(0) == static_cast<Index>(joints.size()),
                  "tag_loss: batch of " + std::to_string(tagmap.dim(0)) + " tagmaps vs " +
                      std::to_string(joints.size()) + " joint lists");
  const Index per = tagmap.numel() / std::max<Index>(1, tagmap.dim(0));
  TagLossTerms total;
  for (std::size_t n = 0; n < joints.size(); ++n) {
    for (const auto& person : joints[n]) {
      for (Index i : person) {
        detail::require(i >= 0 && i < per, "tag_loss: joint index out of range");
      }
    }
    const TagLossTerms t = detail::tag_terms_one<T>(tagmap.ptr() + n * per, joints[n], nullptr, 0.0);
    total.pull += t.pull / static_cast<double>(joints.size());
    total.push += t.push / static_cast<double>(joints.size());
  }
  return total;
}

/// Associative-embedding grouping loss (pull + push), averaged over the batch.
template <typename T>
Tensor<T> tag_loss(const Tensor<T>& tagmap, const std::vector<std::vector<std::vector<Index>>>& joints) {
  const TagLossTerms terms = tag_loss_terms(tagmap, joints);
  ArrayX<T> y(1);
  y[0] = static_cast<T>(terms.pull + terms.push);
  return make_result<T>({}, std::move(y), {tagmap}, [tagmap, joints](detail::Node<T>& self) {
    const Index per = tagmap.numel() / tagmap.dim(0);
    ArrayX<T> g = ArrayX<T>::Zero(tagmap.numel());
    const double w = static_cast<double>(self.grad[0]) / static_cast<double>(joints.size());
    for (std::size_t n = 0; n < joints.size(); ++n) {
      detail::tag_terms_one<T>(tagmap.ptr() + n * per, joints[n], g.data() + n * per, w);
    }
    detail::accumulate(tagmap, g);
  });
}

struct LossWeights {
  double heatmap = 1.0;
  double tag = 1e-3;
};

template <typename T>
Tensor<T> total_loss(const Tensor<T>& heatmap, const Tensor<T>& tag, const LossWeights& w = {}) {
  return add(scale(heatmap, static_cast<T>(w.heatmap)), scale(tag, static_cast<T>(w.tag)));
}

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentParams {
  double max_rotation_deg = 30.0;
  double min_scale = 0.75;
  double max_scale = 1.5;
  double max_translation = 40.0 / 512.0;  // fraction of the output side
  double flip_prob = 0.5;
};

struct AugmentDraw {
  double rotation_deg = 0.0;
  double scale = 1.0;
  double tx = 0.0;  // output pixels
  double ty = 0.0;
  bool flip = false;
};

AugmentDraw sample_augment(const AugmentParams& params, std::mt19937_64& rng, int out_size);

/// Maps input pixels to output pixels: rotate by rotation_deg (counter-clockwise
/// on screen) and scale about the image centre, fit the longer input side to
/// out_size, shift by (tx, ty), then mirror x -> out_size - 1 - x when flipping.
Affine augmentation_matrix(const AugmentDraw& draw, int in_w, int in_h, int out_size);

/// Applies an affine map to annotations. Visible keypoints that land outside
/// the out_size crop get v = 0 and keep their coordinates. flip_index swaps
/// left/right keypoint slots when mirrored is set.
std::vector<Annotation> transform_annotations(const std::vector<Annotation>& annos, const Affine& m, int out_size,
                                              bool mirrored, const std::vector<int>& flip_index);

struct Augmented {
  Image image;
  std::vector<Annotation> annos;
};

Augmented apply_augmentation(const Image& image, const std::vector<Annotation>& annos, const AugmentDraw& draw,
                             int out_size, const std::vector<int>& flip_index);

Augmented augment(const Image& image, const std::vector<Annotation>& annos, std::mt19937_64& rng,
                  const AugmentParams& params, int out_size, const std::vector<int>& flip_index);

}  // namespace posepyr
