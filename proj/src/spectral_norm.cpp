// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>
#include <cmath>

#include "amodal/error.hpp"
#include "amodal/network.hpp"

namespace amodal {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;

constexpr double kNormEps = 1e-12;

ConstMatMap as_matrix(const Tensor& w) {
  const Shape& s = w.shape();
  return ConstMatMap(w.data().data(), s.n, static_cast<Eigen::Index>(w.size() / static_cast<std::size_t>(s.n)));
}

}  // namespace

SpectralState init_spectral_state(int rows, std::mt19937_64& rng) {
  SpectralState s;
  std::normal_distribution<double> dist(0.0, 1.0);
  s.u.resize(static_cast<std::size_t>(rows));
  double norm = 0.0;
  for (auto& v : s.u) {
    v = dist(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (auto& v : s.u) v /= norm;
  return s;
}

SpectralResult spectral_normalize(const Tensor& weight, SpectralState& state, int iters) {
  require(iters >= 1, ErrorKind::kUsage, "spectral_normalize: iters must be >= 1");
  const ConstMatMap w = as_matrix(weight);
  require(state.u.size() == static_cast<std::size_t>(w.rows()), ErrorKind::kShape,
          "spectral_normalize: power vector length mismatch");
  require(w.squaredNorm() > 0.0, ErrorKind::kNumeric, "spectral_normalize: zero weight matrix");

  Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(state.u.data(), w.rows());
  Eigen::VectorXd v(w.cols());
  for (int i = 0; i < iters; ++i) {
    v = w.transpose() * u;
    v /= std::max(v.norm(), kNormEps);
    u = w * v;
    u /= std::max(u.norm(), kNormEps);
  }
  SpectralResult r;
  r.sigma = u.dot(w * v);
  require(r.sigma > 0.0, ErrorKind::kNumeric, "spectral_normalize: degenerate power iteration");
  r.weight = Tensor(weight.shape());
  for (std::size_t i = 0; i < weight.size(); ++i) r.weight[i] = weight[i] / r.sigma;
  state.u.assign(u.data(), u.data() + u.size());
  r.v.assign(v.data(), v.data() + v.size());
  return r;
}

Var spectral_normalized(Var weight, const std::vector<double>& u, const std::vector<double>& v) {
  const Tensor& wt = weight.value();
  const ConstMatMap w = as_matrix(wt);
  require(u.size() == static_cast<std::size_t>(w.rows()) && v.size() == static_cast<std::size_t>(w.cols()),
          ErrorKind::kShape, "spectral_normalized: power vector length mismatch");
  const Eigen::VectorXd uu = Eigen::Map<const Eigen::VectorXd>(u.data(), w.rows());
  const Eigen::VectorXd vv = Eigen::Map<const Eigen::VectorXd>(v.data(), w.cols());
  const double sigma = uu.dot(w * vv);
  require(sigma > 0.0, ErrorKind::kNumeric, "spectral_normalized: non-positive sigma");
  Tensor out(wt.shape());
  for (std::size_t i = 0; i < wt.size(); ++i) out[i] = wt[i] / sigma;

  return weight.tape->record("spectral_normalized", {weight}, std::move(out), [u, v, sigma](BackwardCtx& ctx) {
    // d(W/s) with s = u^T W v: dW = G/s - <G, W> u v^T / s^2
    const Tensor& wv = *ctx.in_values[0];
    Tensor& dw = *ctx.in_grads[0];
    double inner = 0.0;
    for (std::size_t i = 0; i < wv.size(); ++i) inner += ctx.out_grad[i] * wv[i];
    const std::size_t cols = v.size();
    for (std::size_t r = 0; r < u.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        dw[i] += ctx.out_grad[i] / sigma - inner * u[r] * v[c] / (sigma * sigma);
      }
  });
}

}  // namespace amodal
