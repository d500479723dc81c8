#pragma once

#include "posepyr/checkpoint.hpp"
#include "posepyr/ops.hpp"
#include "posepyr/optim.hpp"
#include "posepyr/tensor.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace posepyr {

/// Architecture description. Branch r of the backbone runs at 1/(4 * 2^r) of
/// the input with width base_width * 2^r.
struct ModelConfig {
  int base_width = 32;                    // C
  int num_keypoints = 17;                 // K
  std::vector<int> stage_spec{1, 4, 3};  // multi-resolution blocks in stages 2..4
  int units_per_branch = 4;               // basic residual units per branch per block
  int num_deconv_modules = 1;
  int deconv_residual_blocks = 4;
  bool concat_heatmaps_into_deconv = true;
  int input_size = 512;
  int stem_width = 64;    // both stride-2 stem convs
  int stage1_width = 64;  // bottleneck width; output is 4x this
  int stage1_units = 4;

  static ModelConfig w32() { return {}; }
  static ModelConfig w48() {
    ModelConfig c;
    c.base_width = 48;
    c.input_size = 640;
    return c;
  }
  /// Small configuration used for CPU training runs and tests.
  static ModelConfig toy();

  /// Required divisor of the input side: 4 * 2^num_deconv_modules.
  int size_divisor() const { return 4 << num_deconv_modules; }
  int num_branches() const { return static_cast<int>(stage_spec.size()) + 1; }

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Per-resolution heatmaps (level 0 at 1/4 input, level i at 2^i times that)
/// and the single tagmap attached to level 0.
template <typename T>
struct HeatmapPyramid {
  std::vector<Tensor<T>> levels;
  Tensor<T> tagmap;
};

/// Parameter and cost tally for one named section of the network.
struct CostRow {
  std::string section;
  Index params = 0;
  double gflops = 0.0;
};

/// Multiply-accumulates counted as FLOPs: one MAC is one FLOP.
inline constexpr double kFlopsPerMac = 1.0;

/// Weight std of the prediction heads at initialisation.
inline constexpr double kHeadInitStd = 1e-3;

inline double conv_macs(Index in_channels, Index out_channels, Index kernel, Index out_h, Index out_w) {
  return static_cast<double>(in_channels) * out_channels * kernel * kernel * out_h * out_w;
}

inline Index conv_param_count(Index in_channels, Index out_channels, Index kernel, bool bias) {
  return in_channels * out_channels * kernel * kernel + (bias ? out_channels : 0);
}

template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // O x I x K x K
  Tensor<T> bias;    // optional
  int stride = 1;
  int padding = 0;
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma, beta, running_mean, running_var;
};

template <typename T>
struct ConvBn {
  ConvLayer<T> conv;
  BatchNormLayer<T> bn;
  bool relu = true;
};

/// Residual unit: body convs (relu on all but the last), optional projection
/// shortcut, relu after the sum. Two 3x3 convs for basic blocks, 1-3-1 for bottlenecks.
template <typename T>
struct ResidualUnit {
  std::vector<ConvBn<T>> body;
  std::optional<ConvBn<T>> shortcut;
};

/// Cross-resolution path from branch j to branch i: a 1x1 conv then bilinear
/// upsampling when j > i, a chain of stride-2 3x3 convs when j < i.
template <typename T>
struct FusePath {
  std::vector<ConvBn<T>> convs;
  bool upsample = false;
};

template <typename T>
struct MultiResBlock {
  std::vector<std::vector<ResidualUnit<T>>> branches;
  std::vector<std::vector<FusePath<T>>> fuse;  // fuse[out][in]; identity when out == in
};

template <typename T>
struct Stage {
  std::optional<ConvBn<T>> new_branch;  // stride-2 conv spawning the lowest-resolution branch
  std::vector<MultiResBlock<T>> blocks;
};

template <typename T>
struct DeconvModule {
  Tensor<T> weight;  // (C [+K]) x C x 4 x 4
  BatchNormLayer<T> bn;
  std::vector<ResidualUnit<T>> blocks;
  ConvLayer<T> head;
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  std::span<Parameter<T>> parameters() { return params_; }
  std::span<const Parameter<T>> parameters() const { return params_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& buffers() const { return buffers_; }

  /// images: N x 3 x H x W with H, W divisible by config().size_divisor().
  HeatmapPyramid<T> forward(const Tensor<T>& images, Mode mode) const;

  /// Multiply-accumulates executed by the most recent forward call.
  double last_forward_macs() const { return macs_; }

  /// Snapshot of parameters (with Adam state) and running statistics.
  Archive state(std::uint64_t step) const;
  /// Restores a snapshot; throws naming the first missing or mis-shaped tensor.
  void load_state(const Archive& archive);

  /// Per-section parameter counts and analytic GFLOPs at a square input side.
  std::vector<CostRow> cost_breakdown(Index input_size) const;

 private:
  class Builder;

  Tensor<T> conv(const Tensor<T>& x, const ConvLayer<T>& c) const;
  Tensor<T> conv_bn(const Tensor<T>& x, const ConvBn<T>& cb, Mode mode) const;
  Tensor<T> residual(const Tensor<T>& x, const ResidualUnit<T>& u, Mode mode) const;
  std::vector<Tensor<T>> fuse(const MultiResBlock<T>& block, const std::vector<Tensor<T>>& xs, Mode mode) const;

  ModelConfig config_;
  std::vector<Parameter<T>> params_;
  std::vector<std::pair<std::string, Tensor<T>>> buffers_;

  ConvBn<T> stem1_, stem2_;
  std::vector<ResidualUnit<T>> stage1_;
  ConvBn<T> reduce_;  // stage-1 output -> C at 1/4 resolution
  std::vector<Stage<T>> stages_;
  ConvLayer<T> head_;  // K heatmaps + K tags at level 0
  std::vector<DeconvModule<T>> deconvs_;

  mutable double macs_ = 0.0;
};

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  return Model<T>(config, seed);
}

/// Scalar parameters: conv weights and biases plus batch-norm affine terms.
template <typename T>
Index count_params(const Model<T>& model) {
  Index n = 0;
  for (const auto& p : model.parameters()) n += p.tensor.numel();
  return n;
}

/// Analytic GFLOPs (one MAC = one FLOP) at a square input of the given side.
template <typename T>
double count_flops(const Model<T>& model, Index input_size) {
  double g = 0.0;
  for (const auto& row : model.cost_breakdown(input_size)) g += row.gflops;
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
class Model<T>::Builder {
 public:
  Builder(Model& m, std::uint64_t seed) : m_(m), rng_(seed) {}

  ConvLayer<T> conv(const std::string& name, Index in, Index out, int k, int stride, bool bias) {
    ConvLayer<T> c;
    c.weight = kaiming({out, in, k, k}, out * k * k);
    m_.params_.emplace_back(name + ".weight", c.weight);
    if (bias) {
      c.bias = Tensor<T>::zeros({out});
      m_.params_.emplace_back(name + ".bias", c.bias);
    }
    c.stride = stride;
    c.padding = k / 2;
    return c;
  }

  /// Prediction layer: 1x1 conv with bias, weights drawn with std 1e-3 so the
  /// initial maps start near zero.
  ConvLayer<T> head(const std::string& name, Index in, Index out) {
    ConvLayer<T> c = conv(name, in, out, 1, 1, true);
    std::normal_distribution<double> dist(0.0, kHeadInitStd);
    for (Index i = 0; i < c.weight.numel(); ++i) c.weight.data()[i] = static_cast<T>(dist(rng_));
    return c;
  }

  BatchNormLayer<T> bn(const std::string& name, Index c) {
    BatchNormLayer<T> b{Tensor<T>::full({c}, T(1)), Tensor<T>::zeros({c}), Tensor<T>::zeros({c}),
                        Tensor<T>::full({c}, T(1))};
    m_.params_.emplace_back(name + ".gamma", b.gamma);
    m_.params_.emplace_back(name + ".beta", b.beta);
    m_.buffers_.emplace_back(name + ".running_mean", b.running_mean);
    m_.buffers_.emplace_back(name + ".running_var", b.running_var);
    return b;
  }

  ConvBn<T> conv_bn(const std::string& name, Index in, Index out, int k, int stride, bool relu) {
    ConvBn<T> cb;
    cb.conv = conv(name + ".conv", in, out, k, stride, false);
    cb.bn = bn(name + ".bn", out);
    cb.relu = relu;
    return cb;
  }

  ResidualUnit<T> basic(const std::string& name, Index width) {
    ResidualUnit<T> u;
    u.body.push_back(conv_bn(name + ".conv1", width, width, 3, 1, true));
    u.body.push_back(conv_bn(name + ".conv2", width, width, 3, 1, false));
    return u;
  }

  ResidualUnit<T> bottleneck(const std::string& name, Index in, Index width) {
    ResidualUnit<T> u;
    const Index out = 4 * width;
    u.body.push_back(conv_bn(name + ".conv1", in, width, 1, 1, true));
    u.body.push_back(conv_bn(name + ".conv2", width, width, 3, 1, true));
    u.body.push_back(conv_bn(name + ".conv3", width, out, 1, 1, false));
    if (in != out) u.shortcut = conv_bn(name + ".shortcut", in, out, 1, 1, false);
    return u;
  }

  Tensor<T> transposed_weight(const std::string& name, Index in, Index out, int k) {
    Tensor<T> w = kaiming({in, out, k, k}, out * k * k);
    m_.params_.emplace_back(name + ".weight", w);
    return w;
  }

 private:
  Tensor<T> kaiming(Shape shape, Index fan_out) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_out)));
    Tensor<T> t(std::move(shape));
    for (Index i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(dist(rng_));
    return t;
  }

  Model& m_;
  std::mt19937_64 rng_;
};

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Builder b(*this, seed);
  const Index C = config_.base_width, K = config_.num_keypoints;

  stem1_ = b.conv_bn("stem.conv1", 3, config_.stem_width, 3, 2, true);
  stem2_ = b.conv_bn("stem.conv2", config_.stem_width, config_.stem_width, 3, 2, true);

  Index in = config_.stem_width;
  for (int u = 0; u < config_.stage1_units; ++u) {
    stage1_.push_back(b.bottleneck("stage1.unit" + std::to_string(u), in, config_.stage1_width));
    in = 4 * config_.stage1_width;
  }
  reduce_ = b.conv_bn("stage1.reduce", in, C, 3, 1, true);

  std::vector<Index> widths{C};
  Index spawn_from = in;  // stage 2 spawns its new branch from the stage-1 output
  const int num_stages = static_cast<int>(config_.stage_spec.size());
  for (int s = 0; s < num_stages; ++s) {
    const std::string sname = "stage" + std::to_string(s + 2);
    Stage<T> stage;
    const Index new_width = C << widths.size();
    stage.new_branch = b.conv_bn(sname + ".transition", spawn_from, new_width, 3, 2, true);
    widths.push_back(new_width);
    const int nb = static_cast<int>(widths.size());
    for (int blk = 0; blk < config_.stage_spec[s]; ++blk) {
      const std::string bname = sname + ".block" + std::to_string(blk);
      MultiResBlock<T> block;
      block.branches.resize(nb);
      for (int i = 0; i < nb; ++i) {
        for (int u = 0; u < config_.units_per_branch; ++u) {
          block.branches[i].push_back(
              b.basic(bname + ".branch" + std::to_string(i) + ".unit" + std::to_string(u), widths[i]));
        }
      }
      const bool last = (s == num_stages - 1) && (blk == config_.stage_spec[s] - 1);
      const int outputs = last ? 1 : nb;
      block.fuse.resize(outputs);
      for (int i = 0; i < outputs; ++i) {
        block.fuse[i].resize(nb);
        for (int j = 0; j < nb; ++j) {
          const std::string fname = bname + ".fuse" + std::to_string(i) + "_" + std::to_string(j);
          FusePath<T>& path = block.fuse[i][j];
          if (j > i) {
            path.upsample = true;
            path.convs.push_back(b.conv_bn(fname, widths[j], widths[i], 1, 1, false));
          } else if (j < i) {
            for (int k = 0; k < i - j; ++k) {
              const bool final_hop = k == i - j - 1;
              path.convs.push_back(b.conv_bn(fname + ".hop" + std::to_string(k), widths[j],
                                             final_hop ? widths[i] : widths[j], 3, 2, !final_hop));
            }
          }
        }
      }
      stage.blocks.push_back(std::move(block));
    }
    stages_.push_back(std::move(stage));
    spawn_from = widths.back();
  }

  head_ = b.head("head", C, 2 * K);

  for (int d = 0; d < config_.num_deconv_modules; ++d) {
    const std::string dname = "deconv" + std::to_string(d + 1);
    DeconvModule<T> dm;
    const Index din = C + (config_.concat_heatmaps_into_deconv ? K : 0);
    dm.weight = b.transposed_weight(dname + ".up", din, C, 4);
    dm.bn = b.bn(dname + ".up.bn", C);
    for (int r = 0; r < config_.deconv_residual_blocks; ++r) {
      dm.blocks.push_back(b.basic(dname + ".block" + std::to_string(r), C));
    }
    dm.head = b.head(dname + ".head", C, K);
    deconvs_.push_back(std::move(dm));
  }
}

template <typename T>
Tensor<T> Model<T>::conv(const Tensor<T>& x, const ConvLayer<T>& c) const {
  Tensor<T> y = conv2d(x, c.weight, c.bias, c.stride, c.padding);
  macs_ += static_cast<double>(y.dim(0)) *
           conv_macs(c.weight.dim(1), c.weight.dim(0), c.weight.dim(2), y.dim(2), y.dim(3));
  return y;
}

template <typename T>
Tensor<T> Model<T>::conv_bn(const Tensor<T>& x, const ConvBn<T>& cb, Mode mode) const {
  Tensor<T> y = batchnorm2d(conv(x, cb.conv), cb.bn.gamma, cb.bn.beta, cb.bn.running_mean, cb.bn.running_var, mode);
  return cb.relu ? relu(y) : y;
}

template <typename T>
Tensor<T> Model<T>::residual(const Tensor<T>& x, const ResidualUnit<T>& u, Mode mode) const {
  Tensor<T> y = x;
  for (const auto& layer : u.body) y = conv_bn(y, layer, mode);
  return relu(add(y, u.shortcut ? conv_bn(x, *u.shortcut, mode) : x));
}

template <typename T>
std::vector<Tensor<T>> Model<T>::fuse(const MultiResBlock<T>& block, const std::vector<Tensor<T>>& xs,
                                      Mode mode) const {
  std::vector<Tensor<T>> out;
  for (std::size_t i = 0; i < block.fuse.size(); ++i) {
    Tensor<T> acc = xs[i];
    for (std::size_t j = 0; j < xs.size(); ++j) {
      if (j == i) continue;
      const FusePath<T>& path = block.fuse[i][j];
      Tensor<T> term = xs[j];
      for (const auto& layer : path.convs) term = conv_bn(term, layer, mode);
      if (path.upsample) term = bilinear_upsample(term, xs[i].dim(2), xs[i].dim(3));
      acc = add(acc, term);
    }
    out.push_back(relu(acc));
  }
  return out;
}

template <typename T>
HeatmapPyramid<T> Model<T>::forward(const Tensor<T>& images, Mode mode) const {
  detail::require(images.ndim() == 4 && images.dim(1) == 3,
                  "forward: expected N x 3 x H x W images, got " + shape_str(images.shape()));
  const int div = config_.size_divisor();
  detail::require(images.dim(2) % div == 0 && images.dim(3) % div == 0,
                  "forward: input size " + std::to_string(images.dim(2)) + "x" + std::to_string(images.dim(3)) +
                      " is not divisible by " + std::to_string(div));
  macs_ = 0.0;
  const Index K = config_.num_keypoints;

  Tensor<T> x = conv_bn(conv_bn(images, stem1_, mode), stem2_, mode);
  for (const auto& u : stage1_) x = residual(x, u, mode);
  std::vector<Tensor<T>> branches{conv_bn(x, reduce_, mode)};
  Tensor<T> spawn = x;
  for (const auto& stage : stages_) {
    branches.push_back(conv_bn(spawn, *stage.new_branch, mode));
    for (const auto& block : stage.blocks) {
      for (std::size_t i = 0; i < branches.size(); ++i) {
        for (const auto& u : block.branches[i]) branches[i] = residual(branches[i], u, mode);
      }
      branches = fuse(block, branches, mode);
    }
    spawn = branches.back();
  }

  HeatmapPyramid<T> out;
  Tensor<T> features = branches.front();
  Tensor<T> head = conv(features, head_);
  out.levels.push_back(slice_channels(head, 0, K));
  out.tagmap = slice_channels(head, K, 2 * K);

  for (const auto& dm : deconvs_) {
    Tensor<T> in = config_.concat_heatmaps_into_deconv ? concat_channels<T>({features, out.levels.back()}) : features;
    Tensor<T> y = transposed_conv2d(in, dm.weight, 2, 1);
    macs_ += static_cast<double>(in.dim(0)) *
             conv_macs(dm.weight.dim(0), dm.weight.dim(1), dm.weight.dim(2), in.dim(2), in.dim(3));
    y = relu(batchnorm2d(y, dm.bn.gamma, dm.bn.beta, dm.bn.running_mean, dm.bn.running_var, mode));
    for (const auto& u : dm.blocks) y = residual(y, u, mode);
    out.levels.push_back(conv(y, dm.head));
    features = y;
  }
  return out;
}

template <typename T>
Archive Model<T>::state(std::uint64_t step) const {
  Archive a;
  a.scalar_bytes = sizeof(T);
  a.step = step;
  a.meta = nlohmann::json(config_).dump();
  for (const auto& p : params_) a.entries.push_back(to_entry(p));
  for (const auto& [name, t] : buffers_) a.entries.push_back(to_entry(name, t));
  return a;
}

template <typename T>
void Model<T>::load_state(const Archive& archive) {
  for (auto& p : params_) {
    const ArchiveEntry* e = archive.find(p.name);
    if (!e) throw std::invalid_argument("checkpoint is missing parameter '" + p.name + "'");
    load_entry(*e, p);
  }
  for (auto& [name, t] : buffers_) {
    const ArchiveEntry* e = archive.find(name);
    if (!e) throw std::invalid_argument("checkpoint is missing buffer '" + name + "'");
    load_entry(*e, t);
  }
}

template <typename T>
std::vector<CostRow> Model<T>::cost_breakdown(Index input_size) const {
  std::vector<CostRow> rows;
  auto row = [&](const std::string& section) -> CostRow& {
    for (auto& r : rows) {
      if (r.section == section) return r;
    }
    rows.push_back({section, 0, 0.0});
    return rows.back();
  };
  for (const auto& p : params_) row(p.name.substr(0, p.name.find('.'))).params += p.tensor.numel();

  auto stride2 = [](Index s) { return (s + 2 - 3) / 2 + 1; };
  auto add_conv = [&](CostRow& r, const ConvLayer<T>& c, Index out_side) {
    r.gflops += kFlopsPerMac * conv_macs(c.weight.dim(1), c.weight.dim(0), c.weight.dim(2), out_side, out_side) * 1e-9;
  };
  auto add_unit = [&](CostRow& r, const ResidualUnit<T>& u, Index side) {
    for (const auto& l : u.body) add_conv(r, l.conv, side);
    if (u.shortcut) add_conv(r, u.shortcut->conv, side);
  };

  Index side = stride2(input_size);
  add_conv(row("stem"), stem1_.conv, side);
  side = stride2(side);
  add_conv(row("stem"), stem2_.conv, side);
  for (const auto& u : stage1_) add_unit(row("stage1"), u, side);
  add_conv(row("stage1"), reduce_.conv, side);

  std::vector<Index> sides{side};
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    CostRow& r = row("stage" + std::to_string(s + 2));
    sides.push_back(stride2(sides.back()));
    add_conv(r, stages_[s].new_branch->conv, sides.back());
    for (const auto& block : stages_[s].blocks) {
      for (std::size_t i = 0; i < block.branches.size(); ++i) {
        for (const auto& u : block.branches[i]) add_unit(r, u, sides[i]);
      }
      for (std::size_t i = 0; i < block.fuse.size(); ++i) {
        for (std::size_t j = 0; j < block.fuse[i].size(); ++j) {
          const auto& path = block.fuse[i][j];
          Index sj = sides[j];
          for (const auto& l : path.convs) {
            if (!path.upsample) sj = stride2(sj);
            add_conv(r, l.conv, sj);
          }
        }
      }
    }
  }
  add_conv(row("head"), head_, side);
  for (std::size_t d = 0; d < deconvs_.size(); ++d) {
    CostRow& r = row("deconv" + std::to_string(d + 1));
    const auto& dm = deconvs_[d];
    r.gflops += kFlopsPerMac * conv_macs(dm.weight.dim(0), dm.weight.dim(1), 4, side, side) * 1e-9;
    side *= 2;
    for (const auto& u : dm.blocks) add_unit(r, u, side);
    add_conv(r, dm.head, side);
  }
  return rows;
}

}  // namespace posepyr
