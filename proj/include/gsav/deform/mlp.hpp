#pragma once

// Per-pixel residual decoder: a fixed-architecture MLP with tanh hidden
// layers and a zero-initialized output layer, batched over covered pixels.
// Exact reverse-mode gradients for parameters and inputs.

#include "gsav/core/rng.hpp"
#include "gsav/core/gaussian.hpp"

namespace gsav {

struct MlpSpec {
  int input_dim = 0;
  int output_dim = 0;
  int depth = 2;  // hidden layers (the paper's n_mlp knob)
  int width = 32; // 32 * cm

  std::uint64_t hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (int v : {input_dim, output_dim, depth, width}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return h;
  }
};

struct Mlp {
  MlpSpec spec;
  std::vector<Eigen::MatrixXd> W;  // depth+1 matrices
  std::vector<Eigen::VectorXd> b;

  static Mlp create(const MlpSpec& spec, Rng& rng) {
    Mlp m;
    m.spec = spec;
    int in = spec.input_dim;
    for (int l = 0; l <= spec.depth; ++l) {
      const int out = (l == spec.depth) ? spec.output_dim : spec.width;
      Eigen::MatrixXd Wl = Eigen::MatrixXd::Zero(out, in);
      Eigen::VectorXd bl = Eigen::VectorXd::Zero(out);
      if (l < spec.depth) {
        const double s = std::sqrt(2.0 / (in + out));
        for (Eigen::Index i = 0; i < Wl.size(); ++i) Wl.data()[i] = s * rng.normal();
      }
      // Output layer stays zero so the pipeline starts at the canonical model.
      m.W.push_back(std::move(Wl));
      m.b.push_back(std::move(bl));
      in = (l == spec.depth) ? 0 : spec.width;
    }
    return m;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W.size(); ++l) n += W[l].size() + b[l].size();
    return n;
  }

  struct Cache {
    Eigen::MatrixXd input;                  // n x in
    std::vector<Eigen::MatrixXd> hidden;    // post-tanh activations per hidden layer
  };

  // X: n x input_dim rows of per-pixel features. Returns n x output_dim.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X, Cache* cache = nullptr) const {
    if (X.cols() != spec.input_dim)
      throw std::invalid_argument("mlp: input dimension mismatch");
    if (cache) {
      cache->input = X;
      cache->hidden.clear();
    }
    Eigen::MatrixXd h = X;
    for (int l = 0; l < spec.depth; ++l) {
      h = ((h * W[l].transpose()).rowwise() + b[l].transpose()).array().tanh().matrix();
      if (cache) cache->hidden.push_back(h);
    }
    return (h * W[spec.depth].transpose()).rowwise() + b[spec.depth].transpose();
  }

  struct Gradients {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;

    static Gradients zeros_like(const Mlp& m) {
      Gradients g;
      for (std::size_t l = 0; l < m.W.size(); ++l) {
        g.dW.push_back(Eigen::MatrixXd::Zero(m.W[l].rows(), m.W[l].cols()));
        g.db.push_back(Eigen::VectorXd::Zero(m.b[l].size()));
      }
      return g;
    }

    std::size_t flatten_into(Eigen::VectorXd& out, std::size_t pos) const {
      for (std::size_t l = 0; l < dW.size(); ++l) {
        out.segment(static_cast<Eigen::Index>(pos), dW[l].size()) =
            Eigen::Map<const Eigen::VectorXd>(dW[l].data(), dW[l].size());
        pos += static_cast<std::size_t>(dW[l].size());
        out.segment(static_cast<Eigen::Index>(pos), db[l].size()) = db[l];
        pos += static_cast<std::size_t>(db[l].size());
      }
      return pos;
    }
  };

  // Accumulates parameter gradients; returns gradient w.r.t. the input rows.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dY,
                           Gradients& grads) const {
    Eigen::MatrixXd delta = dY;  // gradient at pre-activation of current layer output
    for (int l = spec.depth; l >= 0; --l) {
      const Eigen::MatrixXd& prev = (l == 0) ? cache.input : cache.hidden[l - 1];
      grads.dW[l] += delta.transpose() * prev;
      grads.db[l] += delta.colwise().sum().transpose();
      Eigen::MatrixXd dprev = delta * W[l];
      if (l > 0)  // through tanh
        dprev.array() *= (1.0 - cache.hidden[l - 1].array().square());
      delta = std::move(dprev);
    }
    return delta;
  }

  std::size_t flatten_into(Eigen::VectorXd& out, std::size_t pos) const {
    for (std::size_t l = 0; l < W.size(); ++l) {
      out.segment(static_cast<Eigen::Index>(pos), W[l].size()) =
          Eigen::Map<const Eigen::VectorXd>(W[l].data(), W[l].size());
      pos += static_cast<std::size_t>(W[l].size());
      out.segment(static_cast<Eigen::Index>(pos), b[l].size()) = b[l];
      pos += static_cast<std::size_t>(b[l].size());
    }
    return pos;
  }

  std::size_t unflatten_from(const Eigen::VectorXd& in, std::size_t pos) {
    for (std::size_t l = 0; l < W.size(); ++l) {
      Eigen::Map<Eigen::VectorXd>(W[l].data(), W[l].size()) =
          in.segment(static_cast<Eigen::Index>(pos), W[l].size());
      pos += static_cast<std::size_t>(W[l].size());
      b[l] = in.segment(static_cast<Eigen::Index>(pos), b[l].size());
      pos += static_cast<std::size_t>(b[l].size());
    }
    return pos;
  }
};

/// Sinusoidal positional encoding: [p, sin(2^k pi p), cos(2^k pi p)] for
// k = 0..bands-1, applied per coordinate.
inline int positional_encoding_dim(int bands) { return 3 + 6 * bands; }

template <typename Derived>
void positional_encoding(const Vec3& p, int bands, const Eigen::DenseBase<Derived>& out_) {
  auto& out = const_cast<Eigen::DenseBase<Derived>&>(out_);
  for (int c = 0; c < 3; ++c) out(c) = p[c];
  int k = 3;
  for (int band = 0; band < bands; ++band) {
    const double f = M_PI * static_cast<double>(1 << band);
    for (int c = 0; c < 3; ++c) {
      out[k++] = std::sin(f * p[c]);
      out[k++] = std::cos(f * p[c]);
    }
  }
}

}  // namespace gsav
