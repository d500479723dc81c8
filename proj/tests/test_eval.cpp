#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "posepyr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace posepyr;

namespace {

Annotation gt_person(std::vector<Keypoint> kps, double area) {
  Annotation a;
  a.keypoints = std::move(kps);
  a.area = area;
  return a;
}

Pose pose_from(const Annotation& a, double score, double dx = 0.0) {
  Pose p;
  for (const auto& k : a.keypoints) p.keypoints.push_back({k.x + dx, k.y, 1.0});
  p.instance_score = score;
  return p;
}

/// Random person with all keypoints visible inside a box of the given side.
Annotation random_person(std::mt19937_64& rng, int K, double x0, double y0, double side) {
  std::uniform_real_distribution<double> u(0, side);
  std::vector<Keypoint> kps;
  for (int k = 0; k < K; ++k) kps.push_back({x0 + u(rng), y0 + u(rng), 2});
  return gt_person(kps, side * side);
}

}  // namespace

TEST_CASE("oks fixtures") {
  const OksConstants c = OksConstants::uniform(3, 0.1);
  const Annotation gt = gt_person({{10, 10, 2}, {20, 10, 2}, {15, 30, 1}}, 400.0);

  CHECK(oks(pose_from(gt, 1.0), gt, c) == 1.0);

  // One visible keypoint with d^2 = 2 s^2 k^2.
  const Annotation single = gt_person({{10, 10, 2}, {0, 0, 0}, {0, 0, 0}}, 400.0);
  Pose p = pose_from(single, 1.0);
  p.keypoints[0][0] += std::sqrt(2.0 * 400.0 * 0.01);
  CHECK(oks(p, single, c) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  // Three visible keypoints: d^2 = 1, 4, 9; 2 s^2 k^2 = 2 * 400 * 0.01 = 8.
  Pose q = pose_from(gt, 1.0);
  q.keypoints[0][0] += 1;
  q.keypoints[1][1] -= 2;
  q.keypoints[2][0] += 3;
  const double hand = (std::exp(-1.0 / 8) + std::exp(-4.0 / 8) + std::exp(-9.0 / 8)) / 3;
  CHECK(std::abs(oks(q, gt, c) - hand) < 1e-9);

  CHECK_THROWS_AS(oks(p, gt_person({{1, 1, 0}, {2, 2, 0}, {3, 3, 0}}, 10), c), std::domain_error);
  CHECK_THROWS_AS(oks(p, gt, OksConstants::uniform(2)), std::invalid_argument);
}

TEST_CASE("oks properties") {
  std::mt19937_64 rng(4);
  const OksConstants c = OksConstants::uniform(5, 0.08);
  for (int trial = 0; trial < 20; ++trial) {
    const Annotation gt = random_person(rng, 5, 20, 30, 60);
    Pose p = pose_from(gt, 1.0);
    std::normal_distribution<double> n(0, 3);
    for (auto& k : p.keypoints) {
      k[0] += n(rng);
      k[1] += n(rng);
    }
    const double base = oks(p, gt, c);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);

    // Moving one keypoint further away lowers OKS.
    Pose farther = p;
    const double dx = farther.keypoints[2][0] - gt.keypoints[2].x;
    farther.keypoints[2][0] += dx >= 0 ? 1.0 : -1.0;
    CHECK(oks(farther, gt, c) < base);

    // Invisible extra keypoints change nothing.
    Annotation gt_extra = gt;
    Pose p_extra = p;
    OksConstants c_extra = c;
    gt_extra.keypoints.push_back({5, 5, 0});
    p_extra.keypoints.push_back({500, 500, 1});
    c_extra.k.push_back(0.5);
    CHECK(oks(p_extra, gt_extra, c_extra) == doctest::Approx(base).epsilon(1e-15));

    // Scale consistency: coordinates and sqrt(area) times 2.5.
    Annotation gt_s = gt;
    Pose p_s = p;
    for (auto& k : gt_s.keypoints) {
      k.x *= 2.5;
      k.y *= 2.5;
    }
    for (auto& k : p_s.keypoints) {
      k[0] *= 2.5;
      k[1] *= 2.5;
    }
    gt_s.area *= 2.5 * 2.5;
    CHECK(oks(p_s, gt_s, c) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("perfect and empty predictions") {
  std::mt19937_64 rng(1);
  std::vector<EvalImage> images;
  for (long id = 0; id < 4; ++id) {
    EvalImage im;
    im.image_id = id;
    im.gts.push_back(random_person(rng, 5, 10, 10, 60));   // medium: 3600
    im.gts.push_back(random_person(rng, 5, 100, 10, 120)); // large: 14400
    for (const auto& g : im.gts) im.preds.push_back(pose_from(g, 0.5 + 0.1 * static_cast<double>(id)));
    images.push_back(im);
  }
  const OksConstants c = OksConstants::uniform(5);
  const EvalReport r = evaluate(images, c);
  CHECK(r.ap == 1.0);
  CHECK(r.ap50 == 1.0);
  CHECK(r.ap75 == 1.0);
  CHECK(r.ap_m == 1.0);
  CHECK(r.ap_l == 1.0);
  CHECK(r.ar == 1.0);

  for (auto& im : images) im.preds.clear();
  const EvalReport e = evaluate(images, c);
  CHECK(e.ap == 0.0);
  CHECK(e.ap50 == 0.0);
  CHECK(e.ap75 == 0.0);
  CHECK(e.ap_m == 0.0);
  CHECK(e.ap_l == 0.0);
  CHECK(e.ar == 0.0);
}

TEST_CASE("hand-walked two-person fixture") {
  // gt A matched perfectly; pred for gt B reaches OKS 0.62 through one visible keypoint.
  const OksConstants c = OksConstants::uniform(3, 0.1);
  const Annotation a = gt_person({{10, 10, 2}, {40, 10, 2}, {25, 50, 2}}, 50 * 50);
  const Annotation b = gt_person({{110, 10, 2}, {0, 0, 0}, {0, 0, 0}}, 50 * 50);
  Pose pb = pose_from(b, 0.8);
  pb.keypoints[0][0] += std::sqrt(-2.0 * b.area * 0.01 * std::log(0.62));
  REQUIRE(oks(pb, b, c) == doctest::Approx(0.62).epsilon(1e-12));

  SUBCASE("better-scored prediction is the perfect one") {
    EvalImage im{7, {a, b}, {pose_from(a, 0.9), pb}};
    const EvalReport r = evaluate({im}, c);
    // t in {0.50, 0.55, 0.60}: both true positives, precision 1 at every recall point.
    // t >= 0.65: TP then FP; recall reaches 0.5 with precision 1, so 51 of 101 points are 1.
    const double hi = 51.0 / 101.0;
    CHECK(std::abs(r.ap - (3 * 1.0 + 7 * hi) / 10) < 1e-9);
    CHECK(std::abs(r.ap50 - 1.0) < 1e-9);
    CHECK(std::abs(r.ap75 - hi) < 1e-9);
    CHECK(std::abs(r.ar - (3 * 1.0 + 7 * 0.5) / 10) < 1e-9);
    REQUIRE(r.precision.size() == 10);
    CHECK(std::abs(r.precision[2][100] - 1.0) < 1e-9);
    CHECK(std::abs(r.precision[3][50] - 1.0) < 1e-9);
    CHECK(r.precision[3][51] == 0.0);
  }
  SUBCASE("false positive ranked first") {
    Pose pa = pose_from(a, 0.7);
    EvalImage im{7, {a, b}, {pa, pb}};
    const EvalReport r = evaluate({im}, c);
    // t >= 0.65: FP then TP, precision 0.5 once recall reaches 0.5.
    const double hi = 0.5 * 51.0 / 101.0;
    CHECK(std::abs(r.ap - (3 * 1.0 + 7 * hi) / 10) < 1e-9);
    CHECK(std::abs(r.ap75 - hi) < 1e-9);
  }
  SUBCASE("match log") {
    EvalImage im{7, {a, b}, {pose_from(a, 0.9), pb}};
    const EvalReport r = evaluate({im}, c);
    CHECK(r.matches.size() == 20);
    const auto& first = r.matches.front();
    CHECK(first.image_id == 7);
    CHECK(first.pred == 0);
    CHECK(first.gt == 0);
    CHECK(first.oks == 1.0);
    int unmatched = 0;
    for (const auto& m : r.matches) unmatched += m.gt < 0;
    CHECK(unmatched == 7);
  }
}

namespace {

std::vector<EvalImage> noisy_dataset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0, 4);
  std::uniform_real_distribution<double> score(0, 1), side(20, 150);
  std::vector<EvalImage> images;
  for (long id = 0; id < 8; ++id) {
    EvalImage im;
    im.image_id = 100 - id * 3;
    for (int p = 0; p < 4; ++p) {
      im.gts.push_back(random_person(rng, 5, 200.0 * p, 0, side(rng)));
      Pose pred = pose_from(im.gts.back(), score(rng));
      for (auto& k : pred.keypoints) {
        k[0] += noise(rng);
        k[1] += noise(rng);
      }
      if (score(rng) < 0.8) im.preds.push_back(pred);
    }
    images.push_back(im);
  }
  return images;
}

void check_same(const EvalReport& a, const EvalReport& b) {
  CHECK(a.ap == b.ap);
  CHECK(a.ap50 == b.ap50);
  CHECK(a.ap75 == b.ap75);
  CHECK(a.ap_m == b.ap_m);
  CHECK(a.ap_l == b.ap_l);
  CHECK(a.ar == b.ar);
}

}  // namespace

TEST_CASE("evaluation is invariant to image and gt order") {
  const OksConstants c = OksConstants::uniform(5);
  auto images = noisy_dataset(3);
  const EvalReport base = evaluate(images, c);
  CHECK(base.ap > 0.0);
  CHECK(base.ap < 1.0);
  CHECK(base.ap50 >= base.ap75);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    auto shuffled = images;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto& im : shuffled) std::shuffle(im.gts.begin(), im.gts.end(), rng);
    check_same(evaluate(shuffled, c), base);
  }
}

TEST_CASE("duplicate predictions are false positives") {
  const OksConstants c = OksConstants::uniform(5);
  auto images = noisy_dataset(5);
  const EvalReport base = evaluate(images, c);
  auto dup = images;
  for (auto& im : dup) {
    if (!im.preds.empty()) {
      Pose copy = im.preds.front();
      copy.instance_score = 1.5;  // ranked first, then the original becomes the duplicate
      im.preds.push_back(copy);
    }
  }
  CHECK(evaluate(dup, c).ap < base.ap);
}

TEST_CASE("area bins partition the gts") {
  const auto ranges = default_area_ranges();
  for (double area : {1.0, 1023.0, 1024.0, 1024.5, 5000.0, 9216.0, 9216.5, 1e6}) {
    const int bins = ranges[1].contains(area) + ranges[2].contains(area);
    CHECK(bins <= 1);
    CHECK(ranges[0].contains(area));
    if (area > 1024) CHECK(bins == 1);
  }
}

TEST_CASE("empty area bin reports -1") {
  std::mt19937_64 rng(2);
  EvalImage im;
  im.gts.push_back(random_person(rng, 5, 0, 0, 150));
  im.preds.push_back(pose_from(im.gts[0], 0.9));
  const EvalReport r = evaluate({im}, OksConstants::uniform(5));
  CHECK(std::abs(r.ap_l - 1.0) < 1e-9);
  CHECK(r.ap_m == -1.0);
}

TEST_CASE("crowd and keypoint-free gts are ignored") {
  std::mt19937_64 rng(6);
  EvalImage im;
  im.gts.push_back(random_person(rng, 5, 0, 0, 100));
  Annotation crowd = random_person(rng, 5, 300, 0, 100);
  crowd.iscrowd = true;
  im.gts.push_back(crowd);
  Annotation empty = random_person(rng, 5, 600, 0, 100);
  for (auto& k : empty.keypoints) k.v = 0;
  im.gts.push_back(empty);
  im.preds.push_back(pose_from(im.gts[0], 0.9));
  im.preds.push_back(pose_from(crowd, 0.95));  // matches the crowd region: neither TP nor FP
  const EvalReport r = evaluate({im}, OksConstants::uniform(5));
  CHECK(std::abs(r.ap - 1.0) < 1e-9);
  CHECK(r.ar == 1.0);
}

TEST_CASE("only the top max_dets predictions count") {
  std::mt19937_64 rng(8);
  EvalImage im;
  im.gts.push_back(random_person(rng, 5, 0, 0, 100));
  for (int i = 0; i < 20; ++i) {
    Pose junk = pose_from(im.gts[0], 0.9, 500.0);
    im.preds.push_back(junk);
  }
  im.preds.push_back(pose_from(im.gts[0], 0.1));
  CHECK(evaluate({im}, OksConstants::uniform(5)).ar == 0.0);
  EvalParams p;
  p.max_dets = 21;
  CHECK(evaluate({im}, OksConstants::uniform(5), p).ar == 1.0);
}

TEST_CASE("report json keeps a fixed metric order") {
  EvalReport r;
  const auto j = r.to_json(false);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  REQUIRE(keys.size() >= 6);
  CHECK(keys[0] == "AP");
  CHECK(keys[1] == "AP50");
  CHECK(keys[2] == "AP75");
  CHECK(keys[3] == "AP_M");
  CHECK(keys[4] == "AP_L");
  CHECK(keys[5] == "AR");
}

TEST_CASE("coco constants") {
  const auto c = OksConstants::coco17();
  REQUIRE(c.k.size() == 17);
  CHECK(c.k[0] == doctest::Approx(0.052));
  CHECK(c.k[11] == doctest::Approx(0.214));
  c.validate(17);
  const OksConstants bad{{0.1, 0.0}};
  CHECK_THROWS_AS(bad.validate(2), std::invalid_argument);
}

TEST_CASE("coco json round trip") {
  CocoDataset ds;
  ds.schema.names = {"head", "left_hand", "right_hand"};
  ds.schema.skeleton = {{0, 1}, {0, 2}};
  ds.schema.flip_index = {0, 2, 1};
  ds.schema.oks_constants = {0.08, 0.08, 0.08};
  ds.images = {{3, "a.png", 128, 96}, {5, "b.png", 64, 64}};
  Annotation a = gt_person({{1.1, 2.2, 2}, {3.3333333333333335, 4.4, 1}, {0, 0, 0}}, 123.456);
  a.person_id = 2;
  a.bbox = std::array<double, 4>{0.5, 1.5, 10.25, 20.125};
  ds.annotations = {{a}, {}};
  const auto j = coco_to_json(ds);
  CHECK(j["annotations"][0]["num_keypoints"] == 2);
  CHECK(j["categories"][0]["skeleton"][0][0] == 1);
  CHECK(coco_from_json(nlohmann::json::parse(j.dump())) == ds);

  nlohmann::json bad = j;
  bad["annotations"][0]["image_id"] = 99;
  CHECK_THROWS_AS(coco_from_json(bad), std::invalid_argument);
  CHECK_THROWS_WITH_AS(load_coco("/nonexistent/gt.json"), doctest::Contains("/nonexistent/gt.json"),
                       std::runtime_error);
}
