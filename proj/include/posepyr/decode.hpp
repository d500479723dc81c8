#pragma once

#include "posepyr/image.hpp"
#include "posepyr/model.hpp"
#include "posepyr/ops.hpp"

#include "json.hpp"

#include <array>
#include <vector>

namespace posepyr {

struct KeypointCandidate {
  int type = 0;
  double x = 0.0;  // sub-pixel, in the map's pixel grid
  double y = 0.0;
  double score = 0.0;
  double tag = 0.0;
  int px = 0;  // integer peak location
  int py = 0;
};

struct Pose {
  std::vector<std::array<double, 3>> keypoints;  // x, y, score; score 0 means absent
  double instance_score = 0.0;
  double tag_mean = 0.0;

  int present_count() const {
    int n = 0;
    for (const auto& k : keypoints) n += k[2] > 0;
    return n;
  }
};

struct DecodeParams {
  int max_per_type = 30;
  double peak_threshold = 0.1;
  double tag_threshold = 1.0;
  bool optimal_grouping = false;  // per-type Hungarian assignment instead of greedy
};

/// Upsamples every level (N x K x h_i x w_i) bilinearly to out_h x out_w and
/// averages them.
template <typename T>
Tensor<T> aggregate(const std::vector<Tensor<T>>& levels, Index out_h, Index out_w) {
  detail::require(!levels.empty(), "aggregate: no levels");
  NoGradGuard ng;
  Tensor<T> acc;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    Tensor<T> up = resize_bilinear(levels[l], out_h, out_w);
    acc = l == 0 ? up : add(acc, up);
  }
  return levels.size() == 1 ? acc : scale(acc, T(1) / static_cast<T>(levels.size()));
}

/// Mirrors an N x K x H x W map in x and permutes channels: out[k] = mirror(in[flip_index[k]]).
template <typename T>
Tensor<T> unflip(const Tensor<T>& flipped, const std::vector<int>& flip_index) {
  detail::require_nchw(flipped, "unflip");
  const Index n = flipped.dim(0), k = flipped.dim(1), h = flipped.dim(2), w = flipped.dim(3);
  detail::require(static_cast<Index>(flip_index.size()) == k,
                  "unflip: flip index has " + std::to_string(flip_index.size()) + " entries for " +
                      std::to_string(k) + " channels");
  Tensor<T> out(flipped.shape());
  for (Index b = 0; b < n; ++b) {
    for (Index c = 0; c < k; ++c) {
      const T* src = flipped.ptr() + ((b * k + flip_index[c]) * h) * w;
      T* dst = out.ptr() + ((b * k + c) * h) * w;
      for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) dst[y * w + x] = src[y * w + (w - 1 - x)];
      }
    }
  }
  return out;
}

/// Average of a prediction and the un-mirrored prediction for the mirrored input.
template <typename T>
Tensor<T> flip_merge(const Tensor<T>& heatmaps, const Tensor<T>& heatmaps_flipped, const std::vector<int>& flip_index) {
  detail::require_same_shape(heatmaps, heatmaps_flipped, "flip_merge");
  NoGradGuard ng;
  return scale(add(heatmaps, unflip(heatmaps_flipped, flip_index)), T(0.5));
}

/// Peaks of one image's K x H x W heatmaps (image n of an N-batch).
/// A pixel is a peak when no 3x3 neighbour is larger and no earlier (y, x)
/// neighbour is equal. Per type, the max_per_type highest peaks above the
/// threshold survive, shifted 0.25 px toward the larger neighbour on each axis.
std::vector<KeypointCandidate> extract_peaks(const double* heatmaps, const double* tags, int num_types, int h, int w,
                                             int max_per_type, double threshold);

template <typename T>
std::vector<KeypointCandidate> extract_peaks(const Tensor<T>& heatmaps, const Tensor<T>& tags, Index n,
                                             const DecodeParams& params = {}) {
  detail::require_nchw(heatmaps, "extract_peaks");
  detail::require_same_shape(heatmaps, tags, "extract_peaks");
  const Index k = heatmaps.dim(1), h = heatmaps.dim(2), w = heatmaps.dim(3), per = k * h * w;
  const ArrayX<double> hm = heatmaps.data().segment(n * per, per).template cast<double>();
  const ArrayX<double> tg = tags.data().segment(n * per, per).template cast<double>();
  return extract_peaks(hm.data(), tg.data(), static_cast<int>(k), static_cast<int>(h), static_cast<int>(w),
                       params.max_per_type, params.peak_threshold);
}

/// Groups candidates into poses. Types are visited in index order and
/// candidates within a type by descending score (ties by y, then x). A
/// candidate joins the nearest-tag pose still missing its type when the
/// distance is below tag_threshold, otherwise it starts a new pose.
std::vector<Pose> group(std::vector<KeypointCandidate> candidates, int num_types, const DecodeParams& params = {});

/// Per-type optimal assignment (minimum total tag distance) between a type's
/// candidates and the open poses, pairs at or above tag_threshold forbidden.
std::vector<Pose> group_optimal(std::vector<KeypointCandidate> candidates, int num_types, const DecodeParams& params);

/// Minimum-cost assignment of rows to columns for a rectangular cost matrix
/// (rows <= cols). Returns the chosen column per row.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

struct InferenceOptions {
  std::vector<double> scales{1.0};
  bool flip = true;
  int base_size = 512;  // short side at scale 1
  std::vector<int> flip_index;
  DecodeParams decode;
};

template <typename T>
struct InferenceResult {
  Tensor<T> heatmaps;  // 1 x K x H x W at the original image size
  Tensor<T> tags;      // 1 x K x H x W, from the scale nearest 1
  std::vector<Pose> poses;
};

/// Heatmaps and tags for one scale: resize the short side to scale * base_size,
/// pad to the model's size divisor, run forward (with a mirrored copy when
/// flipping), merge flips per level, aggregate levels, crop, and resample to
/// the original image size.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> infer_scale(const Model<T>& model, const Image& image, double scale,
                                            const InferenceOptions& options);

/// Network output for one scale before aggregation: flip-merged levels and the
/// unflipped tagmap, all over the padded input. The resized image occupies the
/// top-left resized_w x resized_h input pixels.
template <typename T>
struct ScaleOutput {
  std::vector<Tensor<T>> levels;
  Tensor<T> tags;
  int padded_w = 0, padded_h = 0;
  int resized_w = 0, resized_h = 0;
};

template <typename T>
ScaleOutput<T> infer_levels(const Model<T>& model, const Image& image, double scale, const InferenceOptions& options);

template <typename T>
InferenceResult<T> multi_scale_infer(const Model<T>& model, const Image& image, const InferenceOptions& options);

/// COCO keypoint results: {image_id, category_id: 1, keypoints: [x, y, s, ...], score}.
nlohmann::json poses_to_results(long image_id, const std::vector<Pose>& poses);
std::vector<std::pair<long, Pose>> results_from_json(const nlohmann::json& j, int num_keypoints);

// ---------------------------------------------------------------------------

namespace detail {

inline Image pad_image(const Image& im, int w, int h) {
  if (im.width == w && im.height == h) return im;
  Image out(w, h, kPixelMean);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = im.at(x, y, c);
    }
  }
  return out;
}

inline Image mirror_image(const Image& im) {
  Image out(im.width, im.height);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = im.at(im.width - 1 - x, y, c);
    }
  }
  return out;
}

/// Top-left h x w window of an N x C x H x W map.
template <typename T>
Tensor<T> crop(const Tensor<T>& x, Index h, Index w) {
  if (x.dim(2) == h && x.dim(3) == w) return x;
  Tensor<T> out({x.dim(0), x.dim(1), h, w});
  for (Index p = 0; p < x.dim(0) * x.dim(1); ++p) {
    for (Index y = 0; y < h; ++y) {
      for (Index i = 0; i < w; ++i) out.ptr()[(p * h + y) * w + i] = x.ptr()[(p * x.dim(2) + y) * x.dim(3) + i];
    }
  }
  return out;
}

template <typename T>
Tensor<T> batch_item(const Tensor<T>& x, Index n) {
  const Index per = x.numel() / x.dim(0);
  Shape s = x.shape();
  s[0] = 1;
  return Tensor<T>(s, x.data().segment(n * per, per));
}

}  // namespace detail

template <typename T>
ScaleOutput<T> infer_levels(const Model<T>& model, const Image& image, double scale, const InferenceOptions& options) {
  detail::require(scale > 0, "infer_scale: scale must be positive");
  ScaleOutput<T> r;
  const int short_side = std::min(image.width, image.height);
  const double ratio = scale * options.base_size / short_side;
  r.resized_w = std::max(1, static_cast<int>(std::lround(image.width * ratio)));
  r.resized_h = std::max(1, static_cast<int>(std::lround(image.height * ratio)));
  const int div = model.config().size_divisor();
  r.padded_w = (r.resized_w + div - 1) / div * div;
  r.padded_h = (r.resized_h + div - 1) / div * div;

  const bool same = r.resized_w == image.width && r.resized_h == image.height;
  const Image resized = same ? image : resize_image(image, r.resized_w, r.resized_h);
  const Image padded = detail::pad_image(resized, r.padded_w, r.padded_h);
  NoGradGuard ng;
  HeatmapPyramid<T> out;
  if (options.flip) {
    const Image mirrored = detail::mirror_image(padded);
    out = model.forward(images_to_tensor<T>({&padded, &mirrored}), Mode::kEval);
    for (const auto& level : out.levels) {
      r.levels.push_back(flip_merge(detail::batch_item(level, 0), detail::batch_item(level, 1), options.flip_index));
    }
    r.tags = detail::batch_item(out.tagmap, 0);
  } else {
    out = model.forward(images_to_tensor<T>({&padded}), Mode::kEval);
    r.levels = out.levels;
    r.tags = out.tagmap;
  }
  return r;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> infer_scale(const Model<T>& model, const Image& image, double scale,
                                            const InferenceOptions& options) {
  const ScaleOutput<T> r = infer_levels(model, image, scale, options);
  NoGradGuard ng;
  Tensor<T> hm = detail::crop(aggregate(r.levels, r.padded_h, r.padded_w), r.resized_h, r.resized_w);
  Tensor<T> tags = detail::crop(aggregate<T>({r.tags}, r.padded_h, r.padded_w), r.resized_h, r.resized_w);
  if (r.resized_w != image.width || r.resized_h != image.height) {
    hm = resize_bilinear(hm, image.height, image.width);
    tags = resize_bilinear(tags, image.height, image.width);
  }
  return {hm, tags};
}

template <typename T>
InferenceResult<T> multi_scale_infer(const Model<T>& model, const Image& image, const InferenceOptions& options) {
  detail::require(!options.scales.empty(), "multi_scale_infer: no scales");
  NoGradGuard ng;
  InferenceResult<T> result;
  double best = 1e300;
  for (std::size_t i = 0; i < options.scales.size(); ++i) {
    auto [hm, tags] = infer_scale(model, image, options.scales[i], options);
    result.heatmaps = i == 0 ? hm : add(result.heatmaps, hm);
    const double dist = std::abs(options.scales[i] - 1.0);
    if (dist < best) {
      best = dist;
      result.tags = tags;
    }
  }
  if (options.scales.size() > 1) {
    result.heatmaps = scale(result.heatmaps, T(1) / static_cast<T>(options.scales.size()));
  }
  const int k = static_cast<int>(result.heatmaps.dim(1));
  auto candidates = extract_peaks(result.heatmaps, result.tags, 0, options.decode);
  result.poses = options.decode.optimal_grouping ? group_optimal(std::move(candidates), k, options.decode)
                                                 : group(std::move(candidates), k, options.decode);
  return result;
}

}  // namespace posepyr
