#pragma once

#include "core.hpp"
#include "io.hpp"
#include "tubemesh.hpp"

#include <algorithm>
#include <span>
#include <string>
#include <vector>

namespace tubegcn {

enum class LayerMode { gcn, mlp };

inline std::string to_string(LayerMode m) { return m == LayerMode::gcn ? "gcn" : "mlp"; }

inline LayerMode parse_layer_mode(const std::string& s) {
  if (s == "gcn") return LayerMode::gcn;
  if (s == "mlp") return LayerMode::mlp;
  throw ValidationError("unknown network mode '" + s + "' (expected gcn or mlp)");
}

inline const std::vector<int>& default_layer_dims() {
  static const std::vector<int> dims{32, 64, 64, 64, 64, 1};
  return dims;
}

inline constexpr double kDefaultDropout = 0.5;
inline constexpr double kMinRadiusMm = 0.05;

struct LayerParams {
  Matrix weight;  // out x in
  Vector bias;    // out
  Matrix weight_grad;
  Vector bias_grad;

  LayerParams(int in, int out)
      : weight(Matrix::Zero(out, in)),
        bias(Vector::Zero(out)),
        weight_grad(Matrix::Zero(out, in)),
        bias_grad(Vector::Zero(out)) {}

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
  std::size_t parameter_count() const { return static_cast<std::size_t>(weight.size() + bias.size()); }
};

/// Row-wise mean over the closed neighbourhood {v} u N(v).
inline void mean_aggregate(const Adjacency& nb, const Matrix& in, Matrix& out) {
  require(static_cast<Eigen::Index>(nb.size()) == in.rows(), "adjacency size does not match feature rows");
  out.resize(in.rows(), in.cols());
  for (Eigen::Index v = 0; v < in.rows(); ++v) {
    auto row = out.row(v);
    row = in.row(v);
    for (int u : nb[v]) row += in.row(u);
    row /= static_cast<double>(nb[v].size() + 1);
  }
}

/// Adjoint of mean_aggregate: each vertex's gradient is routed with weight
/// 1/(deg(v)+1) to v and to every u in N(v).
inline void mean_aggregate_adjoint(const Adjacency& nb, const Matrix& grad_out, Matrix& grad_in) {
  grad_in.setZero(grad_out.rows(), grad_out.cols());
  Eigen::RowVectorXd share(grad_out.cols());
  for (Eigen::Index v = 0; v < grad_out.rows(); ++v) {
    share = grad_out.row(v) / static_cast<double>(nb[v].size() + 1);
    grad_in.row(v) += share;
    for (int u : nb[v]) grad_in.row(u) += share;
  }
}

/// Fills `out` with inverted-dropout multipliers: 0 with probability p,
/// 1/(1-p) otherwise. Each 64-bit draw yields four 16-bit lanes, so p is
/// resolved to a multiple of 1/65536.
inline void sample_dropout_mask(double p, Rng& rng, std::span<double> out) {
  const auto threshold = static_cast<std::uint64_t>(std::llround(p * 65536.0));
  const double keep_scale = 1.0 / (1.0 - p);
  std::size_t i = 0;
  while (i < out.size()) {
    std::uint64_t bits = rng.next_u64();
    for (int lane = 0; lane < 4 && i < out.size(); ++lane, ++i, bits >>= 16)
      out[i] = keep_scale * static_cast<double>((bits & 0xffff) >= threshold);
  }
}

/// Inverted dropout on one vector: zero with probability p, scale survivors
/// by 1/(1-p). Identity when not training or p == 0.
inline Vector dropout(const Vector& h, double p, Rng& rng, bool training) {
  require(p >= 0.0 && p < 1.0, "dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return h;
  Vector mask(h.size());
  sample_dropout_mask(p, rng, std::span<double>(mask.data(), static_cast<std::size_t>(mask.size())));
  return h.cwiseProduct(mask);
}

/// L = 1/|V| sum_v |r_v^3 - f_v^3|
inline double cubed_distance_loss(std::span<const double> pred, std::span<const double> ref) {
  require(!pred.empty(), "loss over an empty vertex set");
  require(pred.size() == ref.size(), "prediction and reference lengths differ");
  double sum = 0.0;
  for (std::size_t v = 0; v < pred.size(); ++v) {
    const double f = pred[v], r = ref[v];
    sum += std::abs(r * r * r - f * f * f);
  }
  return sum / static_cast<double>(pred.size());
}

/// dL/df_v = 3 f_v^2 sign(f_v^3 - r_v^3) / |V|, with sign(0) = 0.
inline Vector cubed_distance_loss_grad(std::span<const double> pred, std::span<const double> ref) {
  require(!pred.empty() && pred.size() == ref.size(), "prediction and reference lengths differ");
  Vector g(static_cast<Eigen::Index>(pred.size()));
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (std::size_t v = 0; v < pred.size(); ++v) {
    const double f = pred[v], r = ref[v];
    // The cube is monotone, so the sign of f^3 - r^3 is that of f - r.
    const double sign = f > r ? 1.0 : (f < r ? -1.0 : 0.0);
    g[static_cast<Eigen::Index>(v)] = inv_n * 3.0 * f * f * sign;
  }
  return g;
}

/// Stack of mean-aggregation layers (GCN) or plain dense layers (MLP).
/// Hidden layers use ReLU followed by dropout; the last layer is linear.
/// There is no normalization layer of any kind.
class GcnModel {
 public:
  explicit GcnModel(LayerMode mode = LayerMode::gcn, double dropout_p = kDefaultDropout,
                    std::vector<int> dims = default_layer_dims())
      : mode_(mode), dropout_p_(dropout_p), dims_(std::move(dims)) {
    require(dims_.size() >= 2, "model needs at least one layer");
    require(dims_.back() == 1, "output layer must have a single unit");
    require(dropout_p_ >= 0.0 && dropout_p_ < 1.0, "dropout probability must be in [0, 1)");
    for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
      require(dims_[k] > 0 && dims_[k + 1] > 0, "layer dims must be positive");
      layers_.emplace_back(dims_[k], dims_[k + 1]);
    }
  }

  LayerMode mode() const { return mode_; }
  double dropout_probability() const { return dropout_p_; }
  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  std::size_t layer_count() const { return layers_.size(); }
  std::vector<LayerParams>& layers() { return layers_; }
  const std::vector<LayerParams>& layers() const { return layers_; }
  std::uint64_t seed() const { return seed_; }

  /// Controls dropout in forward().
  bool training = false;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.parameter_count();
    return n;
  }

  /// Glorot-uniform weights, zero biases. Also reseeds the dropout stream.
  void init_params(std::uint64_t seed) {
    seed_ = seed;
    Rng rng(seed);
    for (auto& l : layers_) {
      const double bound = std::sqrt(6.0 / (l.in_dim() + l.out_dim()));
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = rng.uniform(-bound, bound);
      l.bias.setZero();
    }
    zero_grad();
    reseed_dropout(mix_seed(seed, 0xd50));
  }

  void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  void zero_grad() {
    for (auto& l : layers_) {
      l.weight_grad.setZero();
      l.bias_grad.setZero();
    }
  }

  /// Eval-mode prediction: no dropout, no cached state; safe to call concurrently.
  Vector predict(const Adjacency& nb, const Matrix& x) const {
    check_input(nb, x);
    Matrix h = x, m, z;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      affine(k, nb, h, m, z);
      if (k + 1 < layers_.size()) h = z.cwiseMax(0.0);
    }
    return z.col(0);
  }

  Vector predict(const TubeGraph& g) const { return predict(g.neighbors, g.features); }

  /// Forward pass that caches activations (and dropout masks when training)
  /// for a subsequent backward() on the same graph.
  Vector forward(const Adjacency& nb, const Matrix& x) {
    check_input(nb, x);
    const std::size_t n_layers = layers_.size();
    cache_.aggregated.resize(n_layers);
    cache_.pre_activation.resize(n_layers);
    cache_.masks.resize(n_layers);
    cache_.use_masks = training && dropout_p_ > 0.0;
    Matrix h = x;
    for (std::size_t k = 0; k < n_layers; ++k) {
      affine(k, nb, h, cache_.aggregated[k], cache_.pre_activation[k]);
      if (k + 1 < n_layers) {
        h = cache_.pre_activation[k].cwiseMax(0.0);
        if (cache_.use_masks) {
          Matrix& mask = cache_.masks[k];
          mask.resize(h.rows(), h.cols());
          sample_dropout_mask(dropout_p_, dropout_rng_, std::span<double>(mask.data(), static_cast<std::size_t>(mask.size())));
          h.array() *= mask.array();
        }
      }
    }
    cache_.output = cache_.pre_activation.back().col(0);
    cache_.vertices = x.rows();
    cache_.valid = true;
    return cache_.output;
  }

  Vector forward(const TubeGraph& g) { return forward(g.neighbors, g.features); }

  /// Accumulates dL/dW and dL/db of the cubed-distance loss for the cached
  /// forward pass into the gradient buffers. Returns the loss.
  double backward(const Adjacency& nb, std::span<const double> ref) {
    require(cache_.valid, "backward() called without a preceding forward()");
    require(static_cast<Eigen::Index>(nb.size()) == cache_.vertices && static_cast<Eigen::Index>(ref.size()) == cache_.vertices,
            "backward() graph or reference does not match the cached forward pass");
    std::span<const double> pred(cache_.output.data(), static_cast<std::size_t>(cache_.output.size()));
    const double loss = cubed_distance_loss(pred, ref);
    Matrix grad = cubed_distance_loss_grad(pred, ref);  // n x 1
    Matrix grad_m, grad_h;
    for (std::size_t kk = layers_.size(); kk-- > 0;) {
      auto& l = layers_[kk];
      l.weight_grad.noalias() += grad.transpose() * cache_.aggregated[kk];
      l.bias_grad += grad.colwise().sum().transpose();
      if (kk == 0) break;
      grad_m.noalias() = grad * l.weight;
      if (mode_ == LayerMode::gcn) {
        mean_aggregate_adjoint(nb, grad_m, grad_h);
      } else {
        grad_h.swap(grad_m);
      }
      // Through dropout and ReLU of the previous hidden layer.
      const Matrix& z = cache_.pre_activation[kk - 1];
      if (cache_.use_masks) grad_h.array() *= cache_.masks[kk - 1].array();
      grad_h.array() *= (z.array() > 0.0).cast<double>();
      grad.swap(grad_h);
    }
    return loss;
  }

  double backward(const TubeGraph& g, std::span<const double> ref) { return backward(g.neighbors, ref); }

  template <typename F>
  void for_each_buffer(F&& f) {
    for (auto& l : layers_) {
      f(std::span<double>(l.weight.data(), static_cast<std::size_t>(l.weight.size())),
        std::span<double>(l.weight_grad.data(), static_cast<std::size_t>(l.weight_grad.size())));
      f(std::span<double>(l.bias.data(), static_cast<std::size_t>(l.bias.size())),
        std::span<double>(l.bias_grad.data(), static_cast<std::size_t>(l.bias_grad.size())));
    }
  }

  /// Layer order; per layer the row-major weight then the bias.
  std::vector<double> flat_parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
      out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
      out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
  }

  std::vector<double> flat_gradients() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
      out.insert(out.end(), l.weight_grad.data(), l.weight_grad.data() + l.weight_grad.size());
      out.insert(out.end(), l.bias_grad.data(), l.bias_grad.data() + l.bias_grad.size());
    }
    return out;
  }

  void set_flat_parameters(std::span<const double> values) {
    require(values.size() == parameter_count(), "parameter vector has the wrong length");
    std::size_t off = 0;
    for (auto& l : layers_) {
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), l.weight.size(), l.weight.data());
      off += static_cast<std::size_t>(l.weight.size());
      std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), l.bias.size(), l.bias.data());
      off += static_cast<std::size_t>(l.bias.size());
    }
  }

 private:
  void check_input(const Adjacency& nb, const Matrix& x) const {
    require(x.cols() == input_dim(), "feature length " + std::to_string(x.cols()) + " does not match the model input size " +
                                         std::to_string(input_dim()));
    require(x.rows() > 0, "graph has no vertices");
    require(static_cast<Eigen::Index>(nb.size()) == x.rows(), "adjacency size does not match the number of vertices");
  }

  // m = MEAN(h) (GCN) or h (MLP); z = m W^T + b.
  void affine(std::size_t k, const Adjacency& nb, const Matrix& h, Matrix& m, Matrix& z) const {
    if (mode_ == LayerMode::gcn) {
      mean_aggregate(nb, h, m);
    } else {
      m = h;
    }
    const auto& l = layers_[k];
    z.noalias() = m * l.weight.transpose();
    z.rowwise() += l.bias.transpose();
  }

  struct Cache {
    std::vector<Matrix> aggregated;
    std::vector<Matrix> pre_activation;
    std::vector<Matrix> masks;
    Vector output;
    Eigen::Index vertices = 0;
    bool use_masks = false;
    bool valid = false;
  };

  LayerMode mode_;
  double dropout_p_;
  std::vector<int> dims_;
  std::vector<LayerParams> layers_;
  std::uint64_t seed_ = 0;
  Rng dropout_rng_{0};
  Cache cache_;
};

/// Eval-mode radii, clamped to kMinRadiusMm.
inline std::vector<double> predict_radii(const GcnModel& model, const TubeGraph& g) {
  const Vector f = model.predict(g);
  std::vector<double> r(static_cast<std::size_t>(f.size()));
  for (Eigen::Index v = 0; v < f.size(); ++v) {
    if (!std::isfinite(f[v])) throw NumericalError("non-finite prediction at vertex " + std::to_string(v));
    r[static_cast<std::size_t>(v)] = std::max(f[v], kMinRadiusMm);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint: one JSON header line, '\n', then the float64 LE parameter blob
// in flat_parameters() order.

namespace checkpoint {

struct Loaded {
  GcnModel model;
  io::json header;
};

inline io::json make_header(const GcnModel& m, std::uint64_t iteration, const io::json& extra = io::json::object()) {
  io::json h{{"format", "tubegcn-checkpoint"},
             {"version", 1},
             {"layerDims", m.dims()},
             {"mode", to_string(m.mode())},
             {"dropout", m.dropout_probability()},
             {"seed", m.seed()},
             {"iteration", iteration},
             {"parameterCount", m.parameter_count()},
             {"dtype", "float64"},
             {"byteOrder", "little"}};
  for (auto it = extra.begin(); it != extra.end(); ++it) h[it.key()] = it.value();
  return h;
}

inline std::string serialize(const GcnModel& m, const io::json& header) {
  std::string out = header.dump();
  out.push_back('\n');
  const auto params = m.flat_parameters();
  io::append_binary<double>(out, params);
  return out;
}

inline Loaded deserialize(std::string_view bytes, const std::string& ctx = "checkpoint") {
  const auto eol = bytes.find('\n');
  require(eol != std::string_view::npos, ctx + ": missing header line");
  io::json header;
  try {
    header = io::json::parse(bytes.substr(0, eol));
  } catch (const io::json::exception& e) {
    throw ValidationError(ctx + ": bad header (" + e.what() + ")");
  }
  require(io::get_field_or<std::string>(header, "format", "", ctx) == "tubegcn-checkpoint", ctx + ": not a checkpoint");
  auto dims = io::get_field<std::vector<int>>(header, "layerDims", ctx);
  GcnModel m(parse_layer_mode(io::get_field<std::string>(header, "mode", ctx)),
             io::get_field<double>(header, "dropout", ctx), dims);
  const std::string_view blob = bytes.substr(eol + 1);
  require(blob.size() == m.parameter_count() * sizeof(double), ctx + ": parameter blob has the wrong size");
  const auto params = io::parse_binary<double>(blob, m.parameter_count());
  m.set_flat_parameters(params);
  return {std::move(m), std::move(header)};
}

inline void write(const GcnModel& m, const io::json& header, const io::fs::path& path) {
  io::write_text(path, serialize(m, header));
}

inline Loaded read(const io::fs::path& path) { return deserialize(io::read_text(path), path.string()); }

}  // namespace checkpoint

}  // namespace tubegcn
