#include "posepyr/image.hpp"

#include <png.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace posepyr {

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.empty()) throw std::invalid_argument("write_png: empty image");
  std::vector<unsigned char> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), [](float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  });
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw std::runtime_error(path.string() + ": " + png.message);
  }
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw std::runtime_error(path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&png);
    throw std::runtime_error(path.string() + ": " + png.message);
  }
  Image out(static_cast<int>(png.width), static_cast<int>(png.height));
  std::transform(bytes.begin(), bytes.end(), out.data.begin(), [](unsigned char b) { return b / 255.0f; });
  return out;
}

float sample_bilinear(const Image& image, double x, double y, int channel, float fill) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x - fx, ay = y - fy;
  auto px = [&](int xi, int yi) -> double {
    if (xi < 0 || yi < 0 || xi >= image.width || yi >= image.height) return fill;
    return image.at(xi, yi, channel);
  };
  // Exact pixel reads stay exact.
  if (ax == 0.0 && ay == 0.0) return static_cast<float>(px(x0, y0));
  const double top = (1 - ax) * px(x0, y0) + ax * px(x0 + 1, y0);
  const double bottom = (1 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1);
  return static_cast<float>((1 - ay) * top + ay * bottom);
}

Image warp_affine(const Image& image, const Affine& forward, int out_w, int out_h, float fill) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m.topRows<2>() = forward;
  const Eigen::Matrix3d inv = m.inverse();
  Image out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Eigen::Vector3d src = inv * Eigen::Vector3d(x, y, 1.0);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = sample_bilinear(image, src.x(), src.y(), c, fill);
    }
  }
  return out;
}

Image resize_image(const Image& image, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize_image: output size must be positive");
  Image out(out_w, out_h);
  const double sx = static_cast<double>(image.width) / out_w, sy = static_cast<double>(image.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    for (int x = 0; x < out_w; ++x) {
      const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = sample_bilinear(image, src_x, src_y, c);
    }
  }
  return out;
}

namespace {

template <typename Distance>
void blend_shape(Image& image, double x_lo, double x_hi, double y_lo, double y_hi, double radius, const Color& color,
                 Distance distance) {
  const int xa = std::max(0, static_cast<int>(std::floor(x_lo - radius - 1)));
  const int xb = std::min(image.width - 1, static_cast<int>(std::ceil(x_hi + radius + 1)));
  const int ya = std::max(0, static_cast<int>(std::floor(y_lo - radius - 1)));
  const int yb = std::min(image.height - 1, static_cast<int>(std::ceil(y_hi + radius + 1)));
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x) {
      const double cover = std::clamp(radius + 0.5 - distance(x, y), 0.0, 1.0);
      if (cover <= 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        float& p = image.at(x, y, c);
        p = static_cast<float>((1 - cover) * p + cover * color[c]);
      }
    }
  }
}

}  // namespace

void draw_disk(Image& image, double cx, double cy, double radius, const Color& color) {
  blend_shape(image, cx, cx, cy, cy, radius, color, [&](int x, int y) { return std::hypot(x - cx, y - cy); });
}

void draw_segment(Image& image, double x0, double y0, double x1, double y1, double radius, const Color& color) {
  const double dx = x1 - x0, dy = y1 - y0, len2 = dx * dx + dy * dy;
  blend_shape(image, std::min(x0, x1), std::max(x0, x1), std::min(y0, y1), std::max(y0, y1), radius, color,
              [&](int x, int y) {
                double t = len2 > 0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                return std::hypot(x - (x0 + t * dx), y - (y0 + t * dy));
              });
}

}  // namespace posepyr
