#include "posepyr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace posepyr {

OksConstants OksConstants::uniform(int num_keypoints, double value) {
  return {std::vector<double>(static_cast<std::size_t>(num_keypoints), value)};
}

OksConstants OksConstants::coco17() {
  // Published per-keypoint sigmas; k_i = 2 * sigma_i.
  const std::vector<double> sigmas{.26, .25, .25, .35, .35, .79, .79, .72, .72, .62, .62, 1.07, 1.07, .87, .87, .89, .89};
  OksConstants c;
  for (double s : sigmas) c.k.push_back(2 * s / 10.0);
  return c;
}

void OksConstants::validate(int num_keypoints) const {
  if (static_cast<int>(k.size()) != num_keypoints) {
    throw std::invalid_argument("OKS constants: " + std::to_string(k.size()) + " values for " +
                                std::to_string(num_keypoints) + " keypoints");
  }
  for (double v : k) {
    if (!(v > 0)) throw std::invalid_argument("OKS constants must be positive");
  }
}

double oks(const Pose& pred, const Annotation& gt, const OksConstants& consts) {
  const std::size_t n = gt.keypoints.size();
  if (pred.keypoints.size() != n || consts.k.size() != n) {
    throw std::invalid_argument("oks: keypoint counts differ (pred " + std::to_string(pred.keypoints.size()) +
                                ", gt " + std::to_string(n) + ", constants " + std::to_string(consts.k.size()) + ")");
  }
  double sum = 0.0;
  int visible = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Keypoint& g = gt.keypoints[i];
    if (g.v <= 0) continue;
    const double dx = pred.keypoints[i][0] - g.x, dy = pred.keypoints[i][1] - g.y;
    const double k = consts.k[i];
    sum += std::exp(-(dx * dx + dy * dy) / (2.0 * gt.area * k * k));
    ++visible;
  }
  if (visible == 0) throw std::domain_error("oks: ground truth has no visible keypoint");
  return sum / visible;
}

std::vector<AreaRange> default_area_ranges() {
  return {{"all", -1.0, std::numeric_limits<double>::infinity()},
          {"medium", 32.0 * 32.0, 96.0 * 96.0},
          {"large", 96.0 * 96.0, std::numeric_limits<double>::infinity()}};
}

double pose_area(const Pose& p) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
  bool any = false;
  for (const auto& k : p.keypoints) {
    if (k[2] <= 0) continue;
    any = true;
    x0 = std::min(x0, k[0]);
    x1 = std::max(x1, k[0]);
    y0 = std::min(y0, k[1]);
    y1 = std::max(y1, k[1]);
  }
  return any ? (x1 - x0) * (y1 - y0) : 0.0;
}

namespace {

struct Evaluated {
  std::vector<double> scores;             // per kept detection
  std::vector<std::vector<char>> matched;  // [threshold][det]
  std::vector<std::vector<char>> ignored;  // [threshold][det]
  int non_ignored_gts = 0;
};

Evaluated evaluate_image(const EvalImage& im, const OksConstants& consts, const std::vector<double>& thresholds,
                         int max_dets, const AreaRange& range, std::vector<MatchRecord>* log) {
  Evaluated out;
  const std::size_t G = im.gts.size();
  std::vector<char> gt_ignore(G);
  for (std::size_t g = 0; g < G; ++g) {
    const auto& a = im.gts[g];
    gt_ignore[g] = a.iscrowd || a.visible_count() == 0 || !range.contains(a.area);
    out.non_ignored_gts += !gt_ignore[g];
  }
  std::vector<int> gorder(G);
  std::iota(gorder.begin(), gorder.end(), 0);
  std::stable_sort(gorder.begin(), gorder.end(), [&](int a, int b) { return gt_ignore[a] < gt_ignore[b]; });

  std::vector<int> dorder(im.preds.size());
  std::iota(dorder.begin(), dorder.end(), 0);
  std::stable_sort(dorder.begin(), dorder.end(),
                   [&](int a, int b) { return im.preds[a].instance_score > im.preds[b].instance_score; });
  if (static_cast<int>(dorder.size()) > max_dets) dorder.resize(static_cast<std::size_t>(max_dets));
  const std::size_t D = dorder.size();

  // Ground truths without visible keypoints are ignored; their similarity is left at 0.
  std::vector<std::vector<double>> sim(D, std::vector<double>(G, 0.0));
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t g = 0; g < G; ++g) {
      if (im.gts[gorder[g]].visible_count() > 0) sim[d][g] = oks(im.preds[dorder[d]], im.gts[gorder[g]], consts);
    }
  }

  for (std::size_t d = 0; d < D; ++d) out.scores.push_back(im.preds[dorder[d]].instance_score);
  out.matched.assign(thresholds.size(), std::vector<char>(D, 0));
  out.ignored.assign(thresholds.size(), std::vector<char>(D, 0));
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    std::vector<char> gt_taken(G, 0);
    for (std::size_t d = 0; d < D; ++d) {
      double best = std::min(thresholds[t], 1 - 1e-10);
      int m = -1;
      for (std::size_t g = 0; g < G; ++g) {
        const int gi = gorder[g];
        if (gt_taken[g] && !im.gts[gi].iscrowd) continue;
        // Once matched to a real gt, ignored gts (sorted last) cannot take over.
        if (m > -1 && !gt_ignore[gorder[m]] && gt_ignore[gi]) break;
        if (sim[d][g] < best) continue;
        best = sim[d][g];
        m = static_cast<int>(g);
      }
      if (m > -1) {
        out.matched[t][d] = 1;
        out.ignored[t][d] = gt_ignore[gorder[m]];
        gt_taken[m] = 1;
      } else {
        out.ignored[t][d] = !range.contains(pose_area(im.preds[dorder[d]]));
      }
      if (log) {
        log->push_back({im.image_id, dorder[d], m > -1 ? gorder[m] : -1, m > -1 ? sim[d][m] : 0.0, thresholds[t],
                        static_cast<bool>(out.ignored[t][d])});
      }
    }
  }
  return out;
}

struct Accumulated {
  std::vector<std::vector<double>> precision;  // [t][r], -1 when no gts
  std::vector<double> recall;                  // [t], -1 when no gts
};

Accumulated accumulate(const std::vector<Evaluated>& per_image, std::size_t num_thresholds,
                       const std::vector<double>& recall_points) {
  Accumulated acc;
  int npig = 0;
  std::vector<double> scores;
  for (const auto& e : per_image) {
    npig += e.non_ignored_gts;
    scores.insert(scores.end(), e.scores.begin(), e.scores.end());
  }
  const std::size_t R = recall_points.size();
  if (npig == 0) {
    acc.precision.assign(num_thresholds, std::vector<double>(R, -1.0));
    acc.recall.assign(num_thresholds, -1.0);
    return acc;
  }
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });

  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t t = 0; t < num_thresholds; ++t) {
    std::vector<char> matched, ignored;
    for (const auto& e : per_image) {
      matched.insert(matched.end(), e.matched[t].begin(), e.matched[t].end());
      ignored.insert(ignored.end(), e.ignored[t].begin(), e.ignored[t].end());
    }
    const std::size_t nd = order.size();
    std::vector<double> rc(nd), pr(nd);
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < nd; ++i) {
      const int d = order[i];
      if (!ignored[d]) (matched[d] ? tp : fp) += 1;
      rc[i] = tp / npig;
      pr[i] = tp / (fp + tp + eps);
    }
    acc.recall.push_back(nd ? rc.back() : 0.0);
    for (std::size_t i = nd; i-- > 1;) pr[i - 1] = std::max(pr[i - 1], pr[i]);
    std::vector<double> q(R, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      const auto it = std::lower_bound(rc.begin(), rc.end(), recall_points[r]);
      if (it == rc.end()) break;
      q[r] = pr[static_cast<std::size_t>(it - rc.begin())];
    }
    acc.precision.push_back(std::move(q));
  }
  return acc;
}

double mean_valid(const std::vector<double>& v) {
  double s = 0;
  int n = 0;
  for (double x : v) {
    if (x > -1) {
      s += x;
      ++n;
    }
  }
  return n ? s / n : -1.0;
}

double mean_precision(const std::vector<std::vector<double>>& p, std::size_t first, std::size_t last) {
  std::vector<double> flat;
  for (std::size_t t = first; t < last; ++t) flat.insert(flat.end(), p[t].begin(), p[t].end());
  return mean_valid(flat);
}

std::size_t threshold_index(const std::vector<double>& ts, double t) {
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (std::abs(ts[i] - t) < 1e-9) return i;
  }
  return ts.size();
}

}  // namespace

EvalReport evaluate(const std::vector<EvalImage>& images, const OksConstants& consts, const EvalParams& params) {
  EvalReport report;
  report.thresholds = params.thresholds;
  if (report.thresholds.empty()) {
    for (int i = 0; i < 10; ++i) report.thresholds.push_back(0.5 + 0.05 * i);
  }
  for (int i = 0; i <= 100; ++i) report.recall_points.push_back(i / 100.0);
  const auto ranges = params.area_ranges.empty() ? default_area_ranges() : params.area_ranges;

  std::vector<const EvalImage*> sorted;
  for (const auto& im : images) {
    sorted.push_back(&im);
    report.num_gts += static_cast<int>(im.gts.size());
    report.num_preds += static_cast<int>(im.preds.size());
  }
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const EvalImage* a, const EvalImage* b) { return a->image_id < b->image_id; });

  const std::size_t T = report.thresholds.size();
  const std::size_t i50 = threshold_index(report.thresholds, 0.5), i75 = threshold_index(report.thresholds, 0.75);
  auto at = [&](const Accumulated& a, std::size_t ti) {
    return ti < T ? mean_precision(a.precision, ti, ti + 1) : -1.0;
  };
  auto rec_at = [&](const Accumulated& a, std::size_t ti) { return ti < T ? a.recall[ti] : -1.0; };

  for (const auto& range : ranges) {
    std::vector<Evaluated> per_image;
    const bool is_all = range.name == "all";
    for (const EvalImage* im : sorted) {
      per_image.push_back(evaluate_image(*im, consts, report.thresholds, params.max_dets, range,
                                         is_all ? &report.matches : nullptr));
    }
    const Accumulated acc = accumulate(per_image, T, report.recall_points);
    const double ap = mean_precision(acc.precision, 0, T), ar = mean_valid(acc.recall);
    if (is_all) {
      report.ap = ap;
      report.ar = ar;
      report.ap50 = at(acc, i50);
      report.ap75 = at(acc, i75);
      report.ar50 = rec_at(acc, i50);
      report.ar75 = rec_at(acc, i75);
      report.precision = acc.precision;
      report.recall = acc.recall;
    } else if (range.name == "medium") {
      report.ap_m = ap;
      report.ar_m = ar;
    } else if (range.name == "large") {
      report.ap_l = ap;
      report.ar_l = ar;
    }
  }
  return report;
}

nlohmann::ordered_json EvalReport::to_json(bool include_tables) const {
  nlohmann::ordered_json j;
  j["AP"] = ap;
  j["AP50"] = ap50;
  j["AP75"] = ap75;
  j["AP_M"] = ap_m;
  j["AP_L"] = ap_l;
  j["AR"] = ar;
  j["AR50"] = ar50;
  j["AR75"] = ar75;
  j["AR_M"] = ar_m;
  j["AR_L"] = ar_l;
  j["num_gts"] = num_gts;
  j["num_preds"] = num_preds;
  if (include_tables) {
    j["thresholds"] = thresholds;
    j["recall"] = recall;
    j["precision"] = precision;
    nlohmann::ordered_json log = nlohmann::ordered_json::array();
    for (const auto& m : matches) {
      log.push_back({{"image_id", m.image_id},
                     {"pred", m.pred},
                     {"gt", m.gt},
                     {"oks", m.oks},
                     {"threshold", m.threshold},
                     {"ignored", m.ignored}});
    }
    j["matches"] = log;
  }
  return j;
}

std::string EvalReport::summary() const {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(3);
  s << "AP " << ap << "  AP50 " << ap50 << "  AP75 " << ap75 << "  AP_M " << ap_m << "  AP_L " << ap_l << "  AR "
    << ar;
  return s.str();
}

// ---------------------------------------------------------------------------

nlohmann::json coco_to_json(const CocoDataset& ds) {
  if (ds.images.size() != ds.annotations.size()) {
    throw std::invalid_argument("coco_to_json: image and annotation lists differ in length");
  }
  nlohmann::json images = nlohmann::json::array(), annos = nlohmann::json::array();
  long next_id = 1;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& im = ds.images[i];
    images.push_back({{"id", im.id}, {"file_name", im.file_name}, {"width", im.width}, {"height", im.height}});
    for (const auto& a : ds.annotations[i]) {
      std::vector<double> flat;
      for (const auto& k : a.keypoints) flat.insert(flat.end(), {k.x, k.y, static_cast<double>(k.v)});
      nlohmann::json j{{"id", next_id++},
                       {"image_id", im.id},
                       {"category_id", 1},
                       {"person_id", a.person_id},
                       {"keypoints", flat},
                       {"num_keypoints", a.visible_count()},
                       {"area", a.area},
                       {"iscrowd", a.iscrowd ? 1 : 0}};
      if (a.bbox) j["bbox"] = *a.bbox;
      annos.push_back(std::move(j));
    }
  }
  nlohmann::json skeleton = nlohmann::json::array();
  for (const auto& e : ds.schema.skeleton) skeleton.push_back({e[0] + 1, e[1] + 1});
  nlohmann::json category{{"id", 1}, {"name", "person"}, {"supercategory", "person"},
                          {"keypoints", ds.schema.names}, {"skeleton", skeleton}};
  if (!ds.schema.flip_index.empty()) category["flip_index"] = ds.schema.flip_index;
  if (!ds.schema.oks_constants.empty()) category["oks_constants"] = ds.schema.oks_constants;
  return {{"images", images}, {"annotations", annos}, {"categories", nlohmann::json::array({category})}};
}

CocoDataset coco_from_json(const nlohmann::json& j) {
  CocoDataset ds;
  const auto& cats = j.at("categories");
  if (!cats.is_array() || cats.empty()) throw std::invalid_argument("COCO JSON: no categories");
  const auto& cat = cats.front();
  ds.schema.names = cat.at("keypoints").get<std::vector<std::string>>();
  if (cat.contains("skeleton")) {
    for (const auto& e : cat.at("skeleton")) ds.schema.skeleton.push_back({e.at(0).get<int>() - 1, e.at(1).get<int>() - 1});
  }
  if (cat.contains("flip_index")) ds.schema.flip_index = cat.at("flip_index").get<std::vector<int>>();
  if (cat.contains("oks_constants")) ds.schema.oks_constants = cat.at("oks_constants").get<std::vector<double>>();
  const int K = ds.schema.size();

  std::map<long, std::size_t> index;
  for (const auto& im : j.at("images")) {
    ImageInfo info{im.at("id").get<long>(), im.value("file_name", std::string()), im.value("width", 0),
                   im.value("height", 0)};
    index[info.id] = ds.images.size();
    ds.images.push_back(std::move(info));
  }
  ds.annotations.resize(ds.images.size());
  for (const auto& a : j.at("annotations")) {
    const long image_id = a.at("image_id").get<long>();
    const auto it = index.find(image_id);
    if (it == index.end()) throw std::invalid_argument("COCO JSON: annotation for unknown image " + std::to_string(image_id));
    const auto flat = a.at("keypoints").get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != 3 * K) {
      throw std::invalid_argument("COCO JSON: annotation " + std::to_string(a.value("id", 0L)) + " has " +
                                  std::to_string(flat.size()) + " keypoint values, expected " + std::to_string(3 * K));
    }
    Annotation ann;
    ann.person_id = a.contains("person_id") ? a.at("person_id").get<int>() : static_cast<int>(a.value("id", 0L));
    for (int k = 0; k < K; ++k) ann.keypoints.push_back({flat[3 * k], flat[3 * k + 1], static_cast<int>(flat[3 * k + 2])});
    ann.area = a.at("area").get<double>();
    ann.iscrowd = a.value("iscrowd", 0) != 0;
    if (a.contains("bbox")) ann.bbox = a.at("bbox").get<std::array<double, 4>>();
    ds.annotations[it->second].push_back(std::move(ann));
  }
  return ds;
}

nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

CocoDataset load_coco(const std::filesystem::path& path) {
  try {
    return coco_from_json(load_json(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out << text << '\n';
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void save_json(const std::filesystem::path& path, const nlohmann::json& j, int indent) {
  write_text(path, j.dump(indent));
}

void save_json(const std::filesystem::path& path, const nlohmann::ordered_json& j, int indent) {
  write_text(path, j.dump(indent));
}

}  // namespace posepyr
