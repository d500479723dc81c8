#pragma once

#include "posepyr/tensor.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <vector>

namespace posepyr {

using Color = std::array<float, 3>;

/// Interleaved RGB, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, float fill = 0.0f) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool empty() const { return width == 0 || height == 0; }

  bool operator==(const Image&) const = default;
};

using Affine = Eigen::Matrix<double, 2, 3>;

/// 8-bit RGB PNG. Reading accepts gray, palette and alpha variants.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

/// Bilinear sample with pixel centres at integer coordinates; outside pixels read as fill.
float sample_bilinear(const Image& image, double x, double y, int channel, float fill = 0.0f);

/// out(p) = in(inverse(forward) * p). forward maps input pixel coordinates to output ones.
Image warp_affine(const Image& image, const Affine& forward, int out_w, int out_h, float fill = 0.0f);

/// Half-pixel-centre bilinear resize.
Image resize_image(const Image& image, int out_w, int out_h);

/// Anti-aliased shapes blended over the image with coverage = clamp(r + 0.5 - distance, 0, 1).
void draw_disk(Image& image, double cx, double cy, double radius, const Color& color);
void draw_segment(Image& image, double x0, double y0, double x1, double y1, double radius, const Color& color);

/// Per-channel normalisation applied before the network.
inline constexpr float kPixelMean = 0.5f;
inline constexpr float kPixelStd = 0.25f;

/// Stacks equally sized images into an N x 3 x H x W tensor, normalised.
template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: no images");
  const int w = images.front()->width, h = images.front()->height;
  Tensor<T> out({static_cast<Index>(images.size()), 3, h, w});
  T* dst = out.ptr();
  for (const Image* im : images) {
    if (im->width != w || im->height != h) throw std::invalid_argument("images_to_tensor: image sizes differ");
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) *dst++ = static_cast<T>((im->at(x, y, c) - kPixelMean) / kPixelStd);
      }
    }
  }
  return out;
}

}  // namespace posepyr
