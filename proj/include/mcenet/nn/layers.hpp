#pragma once

#include "mcenet/nn/tape.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace mcenet::nn {

/// Named parameter matrices plus their Adam state.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat value;
    Mat adam_m, adam_v;
  };

  int add(std::string name, Mat init) {
    entries_.push_back(Entry{std::move(name), std::move(init), Mat(), Mat()});
    return static_cast<int>(entries_.size() - 1);
  }

  std::size_t size() const { return entries_.size(); }
  Entry& entry(int i) { return entries_[static_cast<std::size_t>(i)]; }
  const Entry& entry(int i) const { return entries_[static_cast<std::size_t>(i)]; }
  Mat& value(int i) { return entries_[static_cast<std::size_t>(i)].value; }
  const Mat& value(int i) const { return entries_[static_cast<std::size_t>(i)].value; }

  Entry* find(const std::string& name) {
    for (auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

 private:
  std::vector<Entry> entries_;
};

/// Xavier-uniform initialization.
inline Mat glorot(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  return m;
}

/// Binds every parameter in a store as a grad-tracking leaf on one tape.
struct TapeBinding {
  std::vector<Tape::Id> ids;

  static TapeBinding bind(Tape& tape, const ParamStore& params, bool needs_grad = true) {
    TapeBinding b;
    b.ids.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      b.ids.push_back(tape.leaf(params.value(static_cast<int>(i)), needs_grad));
    return b;
  }

  Tape::Id operator[](int param_index) const {
    return ids[static_cast<std::size_t>(param_index)];
  }

  std::vector<Mat> gradients(const Tape& tape) const {
    std::vector<Mat> out;
    out.reserve(ids.size());
    for (Tape::Id id : ids) out.push_back(tape.grad(id));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Layers: parameter handles into a ParamStore + tape-building apply functions.
// ---------------------------------------------------------------------------

struct Dense {
  int w = -1, b = -1;
  int in = 0, out = 0;

  static Dense create(ParamStore& p, const std::string& name, int in, int out,
                      std::mt19937_64& rng) {
    Dense d;
    d.in = in;
    d.out = out;
    d.w = p.add(name + ".w", glorot(out, in, rng));
    d.b = p.add(name + ".b", Mat::Zero(out, 1));
    return d;
  }

  Tape::Id apply(Tape& t, const TapeBinding& bind, Tape::Id x) const {
    return t.add_bias(t.matmul(bind[w], x), bind[b]);
  }
};

/// 1-D convolution over the time axis with same-length zero padding, one
/// weight matrix per kernel tap. Inputs and outputs are per-step feature
/// matrices (features x batch).
struct Conv1d {
  std::vector<int> taps;
  int b = -1;
  int in = 0, out = 0, kernel = 0;

  static Conv1d create(ParamStore& p, const std::string& name, int in, int out, int kernel,
                       std::mt19937_64& rng) {
    Conv1d c;
    c.in = in;
    c.out = out;
    c.kernel = kernel;
    for (int k = 0; k < kernel; ++k)
      c.taps.push_back(p.add(name + ".w" + std::to_string(k), glorot(out, in, rng)));
    c.b = p.add(name + ".b", Mat::Zero(out, 1));
    return c;
  }

  std::vector<Tape::Id> apply(Tape& t, const TapeBinding& bind,
                              const std::vector<Tape::Id>& steps) const {
    const int len = static_cast<int>(steps.size());
    const int pad_left = (kernel - 1) / 2;
    std::vector<Tape::Id> out;
    out.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
      Tape::Id acc = -1;
      for (int k = 0; k < kernel; ++k) {
        const int src = i + k - pad_left;
        if (src < 0 || src >= len) continue;  // zero padding
        const Tape::Id term = t.matmul(bind[taps[static_cast<std::size_t>(k)]],
                                       steps[static_cast<std::size_t>(src)]);
        acc = acc < 0 ? term : t.add(acc, term);
      }
      out.push_back(t.relu(t.add_bias(acc, bind[b])));
    }
    return out;
  }
};

/// Single-layer LSTM; returns the final hidden state. Gate rows are ordered
/// [input; forget; candidate; output]; the forget bias starts at 1.
struct Lstm {
  int wx = -1, wh = -1, b = -1;
  int in = 0, hidden = 0;

  static Lstm create(ParamStore& p, const std::string& name, int in, int hidden,
                     std::mt19937_64& rng) {
    Lstm l;
    l.in = in;
    l.hidden = hidden;
    l.wx = p.add(name + ".wx", glorot(4 * hidden, in, rng));
    l.wh = p.add(name + ".wh", glorot(4 * hidden, hidden, rng));
    Mat bias = Mat::Zero(4 * hidden, 1);
    bias.middleRows(hidden, hidden).setOnes();
    l.b = p.add(name + ".b", std::move(bias));
    return l;
  }

  Tape::Id apply(Tape& t, const TapeBinding& bind, const std::vector<Tape::Id>& steps) const {
    return apply_all(t, bind, steps).back();
  }

  /// Hidden state at every step.
  std::vector<Tape::Id> apply_all(Tape& t, const TapeBinding& bind,
                                  const std::vector<Tape::Id>& steps) const {
    if (steps.empty()) throw std::invalid_argument("Lstm::apply: empty sequence");
    std::vector<Tape::Id> hiddens;
    hiddens.reserve(steps.size());
    Tape::Id h = -1, c = -1;
    for (std::size_t s = 0; s < steps.size(); ++s) {
      Tape::Id gates = t.matmul(bind[wx], steps[s]);
      if (h >= 0) gates = t.add(gates, t.matmul(bind[wh], h));
      gates = t.add_bias(gates, bind[b]);
      const Tape::Id gi = t.sigmoid(t.slice_rows(gates, 0, hidden));
      const Tape::Id gf = t.sigmoid(t.slice_rows(gates, hidden, hidden));
      const Tape::Id gg = t.tanh_(t.slice_rows(gates, 2 * hidden, hidden));
      const Tape::Id go = t.sigmoid(t.slice_rows(gates, 3 * hidden, hidden));
      const Tape::Id ig = t.emul(gi, gg);
      c = c < 0 ? ig : t.add(t.emul(gf, c), ig);
      h = t.emul(go, t.tanh_(c));
      hiddens.push_back(h);
    }
    return hiddens;
  }
};

/// Three stacked valid convolutions with ReLU, followed by a per-channel
/// spatial mean. Turns a flattened image batch into a feature vector batch.
struct ConvStack {
  struct Layer {
    int w = -1, b = -1;
    Conv2dDims dims;
  };
  std::vector<Layer> layers;
  int out_features = 0;

  static ConvStack create(ParamStore& p, const std::string& name, int in_c, int in_hw,
                          const std::vector<int>& kernels, const std::vector<int>& channels,
                          int stride, std::mt19937_64& rng) {
    ConvStack cs;
    int c = in_c, h = in_hw, w = in_hw;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      Layer layer;
      layer.dims = Conv2dDims{c, h, w, channels[i], kernels[i], stride};
      layer.dims.validate();
      const int fan_in = layer.dims.patch();
      layer.w = p.add(name + ".conv" + std::to_string(i) + ".w",
                      glorot(channels[i], fan_in, rng));
      layer.b = p.add(name + ".conv" + std::to_string(i) + ".b", Mat::Zero(channels[i], 1));
      cs.layers.push_back(layer);
      c = channels[i];
      h = layer.dims.out_h();
      w = layer.dims.out_w();
    }
    cs.out_features = c;
    return cs;
  }

  Tape::Id apply(Tape& t, const TapeBinding& bind, Tape::Id images) const {
    Tape::Id x = images;
    for (const auto& layer : layers)
      x = t.relu(t.conv2d(x, bind[layer.w], bind[layer.b], layer.dims));
    const auto& last = layers.back().dims;
    return t.spatial_mean(x, last.out_c, last.out_h() * last.out_w());
  }
};

}  // namespace mcenet::nn
