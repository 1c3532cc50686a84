#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mcenet::nn {

using Mat = Eigen::MatrixXd;

/// Valid (no-padding) 2-D convolution geometry. Images are stored flattened
/// per column as (c * height + y) * width + x.
struct Conv2dDims {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, kernel = 0, stride = 1;

  int out_h() const { return (in_h - kernel) / stride + 1; }
  int out_w() const { return (in_w - kernel) / stride + 1; }
  int patch() const { return in_c * kernel * kernel; }
  void validate() const {
    if (in_h < kernel || in_w < kernel)
      throw std::invalid_argument("conv2d: input smaller than kernel");
    if (stride < 1 || out_c < 1 || in_c < 1)
      throw std::invalid_argument("conv2d: bad dims");
  }
};

/// Reverse-mode autodiff over dense matrices. Values are computed eagerly;
/// backward() replays the recorded pull closures in reverse creation order.
/// Columns are batch entries throughout.
class Tape {
 public:
  using Id = int;
  using Pull = std::function<void(Tape&, const Mat&)>;

  Id leaf(Mat value, bool needs_grad = false) {
    return push(std::move(value), needs_grad, nullptr);
  }

  const Mat& val(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs(Id id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  /// Gradient of the last backward() root w.r.t. node `id`. Zero matrix if the
  /// node does not influence the root.
  Mat grad(Id id) const {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- elementwise and linear ops -----------------------------------------

  Id matmul(Id a, Id b) {
    Mat v = val(a) * val(b);
    return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a).noalias() += g * t.val(b).transpose();
      if (t.needs(b)) t.grad_buffer(b).noalias() += t.val(a).transpose() * g;
    });
  }

  Id add(Id a, Id b) {
    Mat v = val(a) + val(b);
    return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a) += g;
      if (t.needs(b)) t.grad_buffer(b) += g;
    });
  }

  Id sub(Id a, Id b) {
    Mat v = val(a) - val(b);
    return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a) += g;
      if (t.needs(b)) t.grad_buffer(b) -= g;
    });
  }

  /// a + bias, bias is (rows x 1) broadcast over columns.
  Id add_bias(Id a, Id bias) {
    Mat v = val(a);
    v.colwise() += val(bias).col(0);
    return push(std::move(v), needs(a) || needs(bias), [a, bias](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a) += g;
      if (t.needs(bias)) t.grad_buffer(bias) += g.rowwise().sum();
    });
  }

  Id emul(Id a, Id b) {
    Mat v = val(a).cwiseProduct(val(b));
    return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a) += g.cwiseProduct(t.val(b));
      if (t.needs(b)) t.grad_buffer(b) += g.cwiseProduct(t.val(a));
    });
  }

  /// Elementwise scale * x + shift.
  Id affine(Id a, double scale, double shift) {
    Mat v = (scale * val(a).array() + shift).matrix();
    return push(std::move(v), needs(a), [a, scale](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a) += scale * g;
    });
  }

  /// Per-row scale and shift, broadcast over columns.
  Id row_affine(Id a, Eigen::VectorXd scale, Eigen::VectorXd shift) {
    Mat v = (val(a).array().colwise() * scale.array()).matrix();
    v.colwise() += shift;
    return push(std::move(v), needs(a), [a, scale](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a) += (g.array().colwise() * scale.array()).matrix();
    });
  }

  Id relu(Id a) {
    Mat v = val(a).cwiseMax(0.0);
    return push(std::move(v), needs(a), [a](Tape& t, const Mat& g) {
      if (!t.needs(a)) return;
      t.grad_buffer(a) +=
          g.cwiseProduct((t.val(a).array() > 0.0).cast<double>().matrix());
    });
  }

  Id tanh_(Id a) {
    Mat v = val(a).array().tanh().matrix();
    const Id self = next_id();
    return push(std::move(v), needs(a), [a, self](Tape& t, const Mat& g) {
      if (!t.needs(a)) return;
      t.grad_buffer(a) += g.cwiseProduct((1.0 - t.val(self).array().square()).matrix());
    });
  }

  Id sigmoid(Id a) {
    Mat v = (1.0 / (1.0 + (-val(a)).array().exp())).matrix();
    const Id self = next_id();
    return push(std::move(v), needs(a), [a, self](Tape& t, const Mat& g) {
      if (!t.needs(a)) return;
      const auto s = t.val(self).array();
      t.grad_buffer(a) += g.cwiseProduct((s * (1.0 - s)).matrix());
    });
  }

  Id exp_(Id a) {
    Mat v = val(a).array().exp().matrix();
    const Id self = next_id();
    return push(std::move(v), needs(a), [a, self](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a) += g.cwiseProduct(t.val(self));
    });
  }

  Id square(Id a) {
    Mat v = val(a).array().square().matrix();
    return push(std::move(v), needs(a), [a](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a) += 2.0 * g.cwiseProduct(t.val(a));
    });
  }

  // ---- shape ops -----------------------------------------------------------

  Id concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    Eigen::Index rows = 0;
    const Eigen::Index cols = val(parts[0]).cols();
    bool any_grad = false;
    for (Id p : parts) {
      rows += val(p).rows();
      any_grad = any_grad || needs(p);
      if (val(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    }
    Mat v(rows, cols);
    Eigen::Index r = 0;
    for (Id p : parts) {
      v.middleRows(r, val(p).rows()) = val(p);
      r += val(p).rows();
    }
    return push(std::move(v), any_grad, [parts](Tape& t, const Mat& g) {
      Eigen::Index r = 0;
      for (Id p : parts) {
        const Eigen::Index n = t.val(p).rows();
        if (t.needs(p)) t.grad_buffer(p) += g.middleRows(r, n);
        r += n;
      }
    });
  }

  Id slice_rows(Id a, int row0, int nrows) {
    Mat v = val(a).middleRows(row0, nrows);
    return push(std::move(v), needs(a), [a, row0, nrows](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a).middleRows(row0, nrows) += g;
    });
  }

  /// out.col(j) = a.col(index[j]); used to share one computed column (e.g. a
  /// scene feature) across many batch entries.
  Id gather_cols(Id a, std::vector<int> index) {
    Mat v(val(a).rows(), static_cast<Eigen::Index>(index.size()));
    for (std::size_t j = 0; j < index.size(); ++j) v.col(static_cast<Eigen::Index>(j)) = val(a).col(index[j]);
    return push(std::move(v), needs(a), [a, index = std::move(index)](Tape& t, const Mat& g) {
      if (!t.needs(a)) return;
      Mat& buf = t.grad_buffer(a);
      for (std::size_t j = 0; j < index.size(); ++j)
        buf.col(index[j]) += g.col(static_cast<Eigen::Index>(j));
    });
  }

  Id sum_all(Id a) {
    Mat v(1, 1);
    v(0, 0) = val(a).sum();
    return push(std::move(v), needs(a), [a](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a).array() += g(0, 0);
    });
  }

  Id mean_all(Id a) {
    const double n = static_cast<double>(val(a).size());
    Mat v(1, 1);
    v(0, 0) = val(a).sum() / n;
    return push(std::move(v), needs(a), [a, n](Tape& t, const Mat& g) {
      if (t.needs(a)) t.grad_buffer(a).array() += g(0, 0) / n;
    });
  }

  // ---- convolution ----------------------------------------------------------

  /// Valid 2-D convolution via im2col. x: (in_c*in_h*in_w) x batch,
  /// w: out_c x (in_c*k*k), bias: out_c x 1. Output rows are laid out
  /// (c_out * out_h + y) * out_w + x.
  Id conv2d(Id x, Id w, Id bias, const Conv2dDims& d) {
    d.validate();
    const Mat& xin = val(x);
    const int batch = static_cast<int>(xin.cols());
    const int ohw = d.out_h() * d.out_w();
    auto cols = std::make_shared<std::vector<Mat>>();
    cols->reserve(static_cast<std::size_t>(batch));
    Mat out(static_cast<Eigen::Index>(d.out_c) * ohw, batch);
    for (int s = 0; s < batch; ++s) {
      Mat col = im2col(xin.col(s), d);
      Mat oc = val(w) * col;  // out_c x ohw
      oc.colwise() += val(bias).col(0);
      Mat ocT = oc.transpose();  // ohw x out_c, col-major => flat index c*ohw + p
      out.col(s) = Eigen::Map<const Eigen::VectorXd>(ocT.data(), ocT.size());
      cols->push_back(std::move(col));
    }
    const bool any = needs(x) || needs(w) || needs(bias);
    return push(std::move(out), any, [x, w, bias, d, cols](Tape& t, const Mat& g) {
      const int ohw = d.out_h() * d.out_w();
      for (int s = 0; s < static_cast<int>(g.cols()); ++s) {
        const Eigen::Map<const Mat> gT(g.col(s).data(), ohw, d.out_c);
        const Mat gc = gT.transpose();  // out_c x ohw
        if (t.needs(w)) t.grad_buffer(w).noalias() += gc * (*cols)[static_cast<std::size_t>(s)].transpose();
        if (t.needs(bias)) t.grad_buffer(bias) += gc.rowwise().sum();
        if (t.needs(x)) {
          Mat dcol = t.val(w).transpose() * gc;  // patch x ohw
          col2im_add(dcol, d, t.grad_buffer(x), s);
        }
      }
    });
  }

  /// Mean over the spatial extent of each channel: (c*hw) x batch -> c x batch.
  Id spatial_mean(Id a, int channels, int hw) {
    const Mat& in = val(a);
    Mat v(channels, in.cols());
    for (int c = 0; c < channels; ++c)
      v.row(c) = in.middleRows(static_cast<Eigen::Index>(c) * hw, hw).colwise().mean();
    return push(std::move(v), needs(a), [a, channels, hw](Tape& t, const Mat& g) {
      if (!t.needs(a)) return;
      Mat& buf = t.grad_buffer(a);
      for (int c = 0; c < channels; ++c)
        buf.middleRows(static_cast<Eigen::Index>(c) * hw, hw).rowwise() +=
            g.row(c) / static_cast<double>(hw);
    });
  }

  // ---- backward -------------------------------------------------------------

  void backward(Id root) {
    if (val(root).size() != 1)
      throw std::logic_error("Tape::backward: root must be a 1x1 scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[static_cast<std::size_t>(root)].grad = Mat::Ones(1, 1);
    for (Id i = root; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.size() == 0 || !n.pull) continue;
      n.pull(*this, n.grad);
    }
  }

  /// Lazily allocated, zero-initialized gradient accumulator for a node.
  Mat& grad_buffer(Id id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Pull pull;
  };

  Id next_id() const { return static_cast<Id>(nodes_.size()); }

  Id push(Mat value, bool needs_grad, Pull pull) {
    nodes_.push_back(Node{std::move(value), Mat(), needs_grad, std::move(pull)});
    return static_cast<Id>(nodes_.size() - 1);
  }

  static Mat im2col(const Eigen::Ref<const Eigen::VectorXd>& image, const Conv2dDims& d) {
    Mat col(d.patch(), static_cast<Eigen::Index>(d.out_h()) * d.out_w());
    for (int oy = 0; oy < d.out_h(); ++oy)
      for (int ox = 0; ox < d.out_w(); ++ox) {
        const Eigen::Index p = static_cast<Eigen::Index>(oy) * d.out_w() + ox;
        for (int c = 0; c < d.in_c; ++c)
          for (int ky = 0; ky < d.kernel; ++ky)
            for (int kx = 0; kx < d.kernel; ++kx) {
              const int iy = oy * d.stride + ky;
              const int ix = ox * d.stride + kx;
              col((static_cast<Eigen::Index>(c) * d.kernel + ky) * d.kernel + kx, p) =
                  image((static_cast<Eigen::Index>(c) * d.in_h + iy) * d.in_w + ix);
            }
      }
    return col;
  }

  static void col2im_add(const Mat& dcol, const Conv2dDims& d, Mat& dst, int column) {
    for (int oy = 0; oy < d.out_h(); ++oy)
      for (int ox = 0; ox < d.out_w(); ++ox) {
        const Eigen::Index p = static_cast<Eigen::Index>(oy) * d.out_w() + ox;
        for (int c = 0; c < d.in_c; ++c)
          for (int ky = 0; ky < d.kernel; ++ky)
            for (int kx = 0; kx < d.kernel; ++kx) {
              const int iy = oy * d.stride + ky;
              const int ix = ox * d.stride + kx;
              dst((static_cast<Eigen::Index>(c) * d.in_h + iy) * d.in_w + ix, column) +=
                  dcol((static_cast<Eigen::Index>(c) * d.kernel + ky) * d.kernel + kx, p);
            }
      }
  }

  std::vector<Node> nodes_;
};

}  // namespace mcenet::nn
