#include "posepyr/decode.hpp"

#include <algorithm>
#include <limits>
#include <tuple>

namespace posepyr {

std::vector<KeypointCandidate> extract_peaks(const double* heatmaps, const double* tags, int num_types, int h, int w,
                                             int max_per_type, double threshold) {
  std::vector<KeypointCandidate> out;
  for (int k = 0; k < num_types; ++k) {
    const double* m = heatmaps + static_cast<std::size_t>(k) * h * w;
    const double* t = tags + static_cast<std::size_t>(k) * h * w;
    auto value = [&](int x, int y) { return m[static_cast<std::size_t>(y) * w + x]; };
    std::vector<KeypointCandidate> peaks;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = value(x, y);
        if (!(v > threshold)) continue;
        bool peak = true;
        for (int dy = -1; dy <= 1 && peak; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const double u = value(nx, ny);
            const bool earlier = dy < 0 || (dy == 0 && dx < 0);
            if (u > v || (earlier && u == v)) {
              peak = false;
              break;
            }
          }
        }
        if (!peak) continue;
        KeypointCandidate c;
        c.type = k;
        c.px = x;
        c.py = y;
        c.score = v;
        c.tag = t[static_cast<std::size_t>(y) * w + x];
        c.x = x;
        c.y = y;
        if (x > 0 && x < w - 1) {
          const double l = value(x - 1, y), r = value(x + 1, y);
          c.x += r > l ? 0.25 : (r < l ? -0.25 : 0.0);
        }
        if (y > 0 && y < h - 1) {
          const double u = value(x, y - 1), d = value(x, y + 1);
          c.y += d > u ? 0.25 : (d < u ? -0.25 : 0.0);
        }
        peaks.push_back(c);
      }
    }
    std::stable_sort(peaks.begin(), peaks.end(),
                     [](const KeypointCandidate& a, const KeypointCandidate& b) { return a.score > b.score; });
    if (static_cast<int>(peaks.size()) > max_per_type) peaks.resize(static_cast<std::size_t>(std::max(0, max_per_type)));
    out.insert(out.end(), peaks.begin(), peaks.end());
  }
  return out;
}

namespace {

struct Building {
  Pose pose;
  double tag_sum = 0.0;
  int members = 0;

  double mean() const { return tag_sum / members; }
};

Building new_pose(int num_types) {
  Building b;
  b.pose.keypoints.assign(static_cast<std::size_t>(num_types), {0.0, 0.0, 0.0});
  return b;
}

void join(Building& b, const KeypointCandidate& c) {
  b.pose.keypoints[c.type] = {c.x, c.y, c.score};
  b.tag_sum += c.tag;
  ++b.members;
}

void order_candidates(std::vector<KeypointCandidate>& cs) {
  std::stable_sort(cs.begin(), cs.end(), [](const KeypointCandidate& a, const KeypointCandidate& b) {
    return std::make_tuple(a.type, -a.score, a.py, a.px) < std::make_tuple(b.type, -b.score, b.py, b.px);
  });
}

std::vector<Pose> finish(std::vector<Building>& building) {
  std::vector<Pose> out;
  for (auto& b : building) {
    double s = 0.0;
    int n = 0;
    for (const auto& k : b.pose.keypoints) {
      if (k[2] > 0) {
        s += k[2];
        ++n;
      }
    }
    b.pose.instance_score = n ? s / n : 0.0;
    b.pose.tag_mean = b.mean();
    out.push_back(std::move(b.pose));
  }
  return out;
}

void check_types(const std::vector<KeypointCandidate>& cs, int num_types) {
  for (const auto& c : cs) {
    if (c.type < 0 || c.type >= num_types) {
      throw std::invalid_argument("group: candidate type " + std::to_string(c.type) + " outside [0, " +
                                  std::to_string(num_types) + ")");
    }
  }
}

}  // namespace

std::vector<Pose> group(std::vector<KeypointCandidate> candidates, int num_types, const DecodeParams& params) {
  check_types(candidates, num_types);
  order_candidates(candidates);
  std::vector<Building> poses;
  for (const auto& c : candidates) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < poses.size(); ++p) {
      if (poses[p].pose.keypoints[c.type][2] > 0) continue;
      const double d = std::abs(c.tag - poses[p].mean());
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(p);
      }
    }
    if (best >= 0 && best_d < params.tag_threshold) {
      join(poses[best], c);
    } else {
      poses.push_back(new_pose(num_types));
      join(poses.back(), c);
    }
  }
  return finish(poses);
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) return {};
  const int m = static_cast<int>(cost.front().size());
  if (m < n) throw std::invalid_argument("hungarian: more rows than columns");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials method, 1-based with column 0 as the virtual start.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j]) assignment[p[j] - 1] = j - 1;
  }
  return assignment;
}

std::vector<Pose> group_optimal(std::vector<KeypointCandidate> candidates, int num_types, const DecodeParams& params) {
  check_types(candidates, num_types);
  order_candidates(candidates);
  std::vector<Building> poses;
  std::size_t begin = 0;
  while (begin < candidates.size()) {
    std::size_t end = begin;
    while (end < candidates.size() && candidates[end].type == candidates[begin].type) ++end;
    const int type = candidates[begin].type;
    const int rows = static_cast<int>(end - begin);
    std::vector<int> open;
    for (std::size_t p = 0; p < poses.size(); ++p) {
      if (poses[p].pose.keypoints[type][2] <= 0) open.push_back(static_cast<int>(p));
    }
    // Columns: open poses, then one "new pose" slot per candidate at the threshold cost.
    const double forbidden = 1e9;
    std::vector<std::vector<double>> cost(rows, std::vector<double>(open.size() + rows, forbidden));
    for (int r = 0; r < rows; ++r) {
      const auto& c = candidates[begin + r];
      for (std::size_t o = 0; o < open.size(); ++o) {
        const double d = std::abs(c.tag - poses[open[o]].mean());
        if (d < params.tag_threshold) cost[r][o] = d;
      }
      cost[r][open.size() + r] = params.tag_threshold;
    }
    const std::vector<int> assign = hungarian(cost);
    for (int r = 0; r < rows; ++r) {
      const auto& c = candidates[begin + r];
      const int col = assign[r];
      if (col < static_cast<int>(open.size()) && cost[r][col] < forbidden) {
        join(poses[open[col]], c);
      } else {
        poses.push_back(new_pose(num_types));
        join(poses.back(), c);
      }
    }
    begin = end;
  }
  return finish(poses);
}

nlohmann::json poses_to_results(long image_id, const std::vector<Pose>& poses) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : poses) {
    std::vector<double> flat;
    for (const auto& k : p.keypoints) flat.insert(flat.end(), {k[0], k[1], k[2]});
    out.push_back({{"image_id", image_id}, {"category_id", 1}, {"keypoints", flat}, {"score", p.instance_score}});
  }
  return out;
}

std::vector<std::pair<long, Pose>> results_from_json(const nlohmann::json& j, int num_keypoints) {
  if (!j.is_array()) throw std::invalid_argument("results JSON must be an array");
  std::vector<std::pair<long, Pose>> out;
  for (const auto& r : j) {
    const auto flat = r.at("keypoints").get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != 3 * num_keypoints) {
      throw std::invalid_argument("result for image " + std::to_string(r.at("image_id").get<long>()) + " has " +
                                  std::to_string(flat.size()) + " keypoint values, expected " +
                                  std::to_string(3 * num_keypoints));
    }
    Pose p;
    for (int k = 0; k < num_keypoints; ++k) p.keypoints.push_back({flat[3 * k], flat[3 * k + 1], flat[3 * k + 2]});
    p.instance_score = r.at("score").get<double>();
    out.emplace_back(r.at("image_id").get<long>(), std::move(p));
  }
  return out;
}

}  // namespace posepyr
