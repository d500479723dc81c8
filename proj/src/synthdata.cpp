#include "posepyr/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace posepyr {

void SceneConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("scene config: " + m); };
  if (image_size < 16) fail("image_size must be at least 16");
  if (min_persons < 0 || max_persons < min_persons) fail("persons range must satisfy 0 <= min <= max");
  if (border_margin < 0 || 2 * border_margin >= image_size) fail("border_margin leaves no room");
  if (!(min_diagonal > 0) || max_diagonal < min_diagonal) fail("diagonal range must satisfy 0 < min <= max");
  if (max_diagonal > image_size - 2 * border_margin) {
    fail("max_diagonal " + std::to_string(max_diagonal) + " does not fit inside the margins of a " +
         std::to_string(image_size) + " px image");
  }
  if (crowding < 0 || crowding > 1) fail("crowding must lie in [0, 1]");
  if (num_keypoints != 5 && num_keypoints != 17) fail("num_keypoints must be 5 or 17");
}

void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = nlohmann::json{{"image_size", c.image_size},     {"min_persons", c.min_persons},
                     {"max_persons", c.max_persons},   {"min_diagonal", c.min_diagonal},
                     {"max_diagonal", c.max_diagonal}, {"crowding", c.crowding},
                     {"num_keypoints", c.num_keypoints}, {"border_margin", c.border_margin},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SceneConfig& c) {
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("image_size", c.image_size);
  opt("min_persons", c.min_persons);
  opt("max_persons", c.max_persons);
  opt("min_diagonal", c.min_diagonal);
  opt("max_diagonal", c.max_diagonal);
  opt("crowding", c.crowding);
  opt("num_keypoints", c.num_keypoints);
  opt("border_margin", c.border_margin);
  opt("seed", c.seed);
}

KeypointSchema keypoint_schema(int num_keypoints) {
  KeypointSchema s;
  if (num_keypoints == 5) {
    s.names = {"head", "left_hand", "right_hand", "left_foot", "right_foot"};
    s.skeleton = {{0, 1}, {0, 2}, {0, 3}, {0, 4}};
    s.flip_index = {0, 2, 1, 4, 3};
  } else if (num_keypoints == 17) {
    s.names = {"nose",        "left_eye",   "right_eye",      "left_ear",        "right_ear",      "left_shoulder",
               "right_shoulder", "left_elbow", "right_elbow", "left_wrist",      "right_wrist",    "left_hip",
               "right_hip",   "left_knee",  "right_knee",     "left_ankle",      "right_ankle"};
    s.skeleton = {{15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12}, {5, 11}, {6, 12}, {5, 6}, {5, 7}, {6, 8},
                  {7, 9},   {8, 10},  {1, 2},   {0, 1},   {0, 2},   {1, 3},  {2, 4},  {3, 5}, {4, 6}};
    s.flip_index = {0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15};
  } else {
    throw std::invalid_argument("keypoint_schema: unsupported keypoint count " + std::to_string(num_keypoints));
  }
  s.oks_constants.assign(static_cast<std::size_t>(num_keypoints), 0.08);
  return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double box_iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double ix = std::max(0.0, std::min(a[0] + a[2], b[0] + b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[1] + a[3], b[1] + b[3]) - std::max(a[1], b[1]));
  const double inter = ix * iy, uni = a[2] * a[3] + b[2] * b[3] - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

struct Vec {
  double x = 0, y = 0;
  Vec operator+(Vec o) const { return {x + o.x, y + o.y}; }
  Vec operator-(Vec o) const { return {x - o.x, y - o.y}; }
  Vec operator*(double s) const { return {x * s, y * s}; }
};

Vec rotate(Vec v, double a) { return {v.x * std::cos(a) - v.y * std::sin(a), v.x * std::sin(a) + v.y * std::cos(a)}; }

// Body units: pelvis at the origin, y down, trunk about 0.45 long.
constexpr double kLimbRadius = 0.035;
constexpr double kHeadRadius = 0.075;

/// Joints of one figure. Left limbs sit at +x (the figure faces the viewer).
struct Figure {
  Vec head, neck, pelvis;
  Vec shoulder[2], elbow[2], hand[2], hip[2], knee[2], foot[2];  // [0] left, [1] right
  double head_tilt = 0;
  std::vector<Vec*> joints() {
    return {&head, &neck, &pelvis, &shoulder[0], &shoulder[1], &elbow[0], &elbow[1], &hand[0], &hand[1],
            &hip[0], &hip[1],  &knee[0],   &knee[1],     &foot[0],     &foot[1]};
  }
};

Figure sample_figure(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  Figure f;
  const double lean = range(-0.2, 0.2);
  f.neck = rotate({0, -0.45}, lean);
  f.head_tilt = lean + range(-0.3, 0.3);
  f.head = f.neck + rotate({0, -0.17}, f.head_tilt);
  for (int side = 0; side < 2; ++side) {
    const double s = side == 0 ? 1.0 : -1.0;
    f.shoulder[side] = f.neck + rotate({s * 0.11, 0.03}, lean);
    const double a1 = range(0.1, 2.4), a2 = a1 + range(-1.5, 1.5);
    f.elbow[side] = f.shoulder[side] + Vec{s * std::sin(a1), std::cos(a1)} * 0.2;
    f.hand[side] = f.elbow[side] + Vec{s * std::sin(a2), std::cos(a2)} * 0.18;
    f.hip[side] = rotate({s * 0.07, 0.0}, lean);
    const double b1 = range(-0.15, 0.6), b2 = b1 + range(-0.5, 0.3);
    f.knee[side] = f.hip[side] + Vec{s * std::sin(b1), std::cos(b1)} * 0.24;
    f.foot[side] = f.knee[side] + Vec{s * std::sin(b2), std::cos(b2)} * 0.24;
  }
  const double spin = range(-0.25, 0.25);
  for (Vec* j : f.joints()) *j = rotate(*j, spin);
  f.head_tilt += spin;
  return f;
}

std::vector<std::pair<Vec, Vec>> segments(const Figure& f) {
  std::vector<std::pair<Vec, Vec>> s{{f.neck, f.pelvis}, {f.shoulder[0], f.shoulder[1]}, {f.hip[0], f.hip[1]}};
  for (int side = 0; side < 2; ++side) {
    s.push_back({f.shoulder[side], f.elbow[side]});
    s.push_back({f.elbow[side], f.hand[side]});
    s.push_back({f.hip[side], f.knee[side]});
    s.push_back({f.knee[side], f.foot[side]});
  }
  return s;
}

std::vector<Vec> keypoints_of(const Figure& f, int K) {
  if (K == 5) return {f.head, f.hand[0], f.hand[1], f.foot[0], f.foot[1]};
  auto face = [&](Vec off) { return f.head + rotate(off, f.head_tilt); };
  return {face({0, 0.01}),      face({0.028, -0.018}), face({-0.028, -0.018}), face({0.055, 0.0}),
          face({-0.055, 0.0}),  f.shoulder[0],         f.shoulder[1],          f.elbow[0],
          f.elbow[1],           f.hand[0],             f.hand[1],              f.hip[0],
          f.hip[1],             f.knee[0],             f.knee[1],              f.foot[0],
          f.foot[1]};
}

struct Placed {
  Figure figure;  // in image pixels
  double limb_radius = 0;
  double head_radius = 0;
  std::array<double, 4> bbox{};
  Color color{};
};

double segment_distance(Vec p, Vec a, Vec b) {
  const Vec d = b - a;
  const double len2 = d.x * d.x + d.y * d.y;
  double t = len2 > 0 ? ((p.x - a.x) * d.x + (p.y - a.y) * d.y) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec q = a + d * t;
  return std::hypot(p.x - q.x, p.y - q.y);
}

bool covers(const Placed& p, Vec point) {
  if (std::hypot(point.x - p.figure.head.x, point.y - p.figure.head.y) <= p.head_radius) return true;
  for (const auto& [a, b] : segments(p.figure)) {
    if (segment_distance(point, a, b) <= p.limb_radius) return true;
  }
  return false;
}

}  // namespace

std::pair<Image, std::vector<Annotation>> generate_scene(const SceneConfig& config, std::uint64_t index) {
  config.validate();
  std::mt19937_64 rng(splitmix64(config.seed ^ index));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int S = config.image_size;
  const double m = config.border_margin;

  Image image(S, S);
  const double base = 0.2 + 0.3 * u(rng);
  const double fx = 0.02 + 0.08 * u(rng), fy = 0.02 + 0.08 * u(rng), phase = 6.283 * u(rng);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double wave = 0.05 * std::sin(fx * x + fy * y + phase);
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = static_cast<float>(base + wave + 0.08 * (u(rng) - 0.5));
    }
  }

  const int count = std::uniform_int_distribution<int>(config.min_persons, config.max_persons)(rng);
  std::vector<Placed> placed;
  for (int i = 0; i < count; ++i) {
    Figure fig = sample_figure(rng);
    const double diag = config.min_diagonal + (config.max_diagonal - config.min_diagonal) * u(rng);
    // Unit-frame bounds including stroke widths.
    double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
    for (Vec* j : fig.joints()) {
      const double r = j == &fig.head ? kHeadRadius : kLimbRadius;
      x0 = std::min(x0, j->x - r);
      x1 = std::max(x1, j->x + r);
      y0 = std::min(y0, j->y - r);
      y1 = std::max(y1, j->y + r);
    }
    const double scale = diag / std::hypot(x1 - x0, y1 - y0);
    const double bw = (x1 - x0) * scale, bh = (y1 - y0) * scale;

    // Independent and crowded placements share the same draws.
    const double free_x = m + (S - 2 * m - bw) * u(rng), free_y = m + (S - 2 * m - bh) * u(rng);
    const double angle = 6.283185307179586 * u(rng), reach = 0.2 + 0.4 * u(rng);
    const double pick = u(rng);
    double left = free_x, top = free_y;
    if (!placed.empty()) {
      const auto& anchor = placed[std::min(placed.size() - 1, static_cast<std::size_t>(pick * placed.size()))].bbox;
      // Slide the free centre toward the anchor centre along their joining ray,
      // so the distance to the anchor never grows with crowding.
      const double ax = anchor[0] + anchor[2] / 2, ay = anchor[1] + anchor[3] / 2;
      double dx = free_x + bw / 2 - ax, dy = free_y + bh / 2 - ay;
      const double r_free = std::hypot(dx, dy);
      if (r_free > 0) {
        dx /= r_free;
        dy /= r_free;
      } else {
        dx = std::cos(angle);
        dy = std::sin(angle);
      }
      const double r_near = std::min(reach * std::max(bw, bh), r_free);
      const double r = (1 - config.crowding) * r_free + config.crowding * r_near;
      left = std::clamp(ax + r * dx - bw / 2, m, S - m - bw);
      top = std::clamp(ay + r * dy - bh / 2, m, S - m - bh);
    }

    Placed p;
    p.figure = fig;
    for (Vec* j : p.figure.joints()) *j = Vec{left + (j->x - x0) * scale, top + (j->y - y0) * scale};
    p.limb_radius = kLimbRadius * scale;
    p.head_radius = kHeadRadius * scale;
    p.bbox = {left, top, bw, bh};
    for (auto& c : p.color) c = static_cast<float>(0.55 + 0.45 * u(rng));
    placed.push_back(p);
  }

  std::vector<Annotation> annos;
  for (std::size_t i = 0; i < placed.size(); ++i) {
    const Placed& p = placed[i];
    for (const auto& [a, b] : segments(p.figure)) draw_segment(image, a.x, a.y, b.x, b.y, std::max(0.0, p.limb_radius - 0.5), p.color);
    draw_disk(image, p.figure.head.x, p.figure.head.y, std::max(0.0, p.head_radius - 0.5), p.color);

    Annotation a;
    a.person_id = static_cast<int>(i) + 1;
    for (const Vec& k : keypoints_of(p.figure, config.num_keypoints)) {
      bool occluded = false;
      for (std::size_t j = i + 1; j < placed.size() && !occluded; ++j) occluded = covers(placed[j], k);
      a.keypoints.push_back({k.x, k.y, occluded ? 1 : 2});
    }
    a.bbox = p.bbox;
    a.area = p.bbox[2] * p.bbox[3];
    annos.push_back(std::move(a));
  }
  for (auto& v : image.data) v = std::clamp(v, 0.0f, 1.0f);
  return {std::move(image), std::move(annos)};
}

Dataset generate_split(const SceneConfig& config, int n_images, const std::string& prefix) {
  config.validate();
  if (n_images < 0) throw std::invalid_argument("generate_split: negative image count");
  Dataset ds;
  ds.schema = keypoint_schema(config.num_keypoints);
  for (int i = 0; i < n_images; ++i) {
    auto [image, annos] = generate_scene(config, static_cast<std::uint64_t>(i));
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%06d.png", prefix.c_str(), i);
    ds.infos.push_back({i, name, image.width, image.height});
    ds.images.push_back(std::move(image));
    ds.annotations.push_back(std::move(annos));
  }
  return ds;
}

void export_dataset(const Dataset& ds, const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < ds.images.size(); ++i) write_png(dir / "images" / ds.infos[i].file_name, ds.images[i]);
  CocoDataset coco{ds.schema, ds.infos, ds.annotations};
  save_json(dir / (name + ".json"), coco_to_json(coco));
}

Dataset load_dataset(const std::filesystem::path& json_path) {
  CocoDataset coco = load_coco(json_path);
  Dataset ds;
  ds.schema = coco.schema;
  ds.infos = coco.images;
  ds.annotations = coco.annotations;
  const auto image_dir = json_path.parent_path() / "images";
  for (const auto& info : ds.infos) ds.images.push_back(read_png(image_dir / info.file_name));
  return ds;
}

}  // namespace posepyr
