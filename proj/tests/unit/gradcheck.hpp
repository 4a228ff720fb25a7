#pragma once

// Central finite-difference gradient checking for double-precision layers.
// The scalar probed is sum(output .* R) for a fixed random R, so one
// backward pass with dy = R yields the analytic gradient.

#include "hitspace/nn.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gradcheck {

using hitspace::nn::Mat;
using hitspace::nn::ParamList;
using hitspace::nn::TensorBuf;

struct Result {
  std::string name;
  double rel_error = 0.0;
};

inline Mat<double> random_like(Eigen::Index r, Eigen::Index c, hitspace::Rng& rng, double scale = 1.0) {
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = hitspace::gaussian(rng, scale);
  return m;
}

/// Tensor-wise relative error ||a - n|| / max(||a||, ||n||) over up to
/// max_entries sampled entries per tensor. `loss` must recompute the forward
/// pass from the current parameter values; `analytic` must leave the
/// analytic gradients in every tensor's grad.
inline std::vector<Result> check(const ParamList<double>& tensors, const std::function<double()>& loss,
                                 const std::function<void()>& analytic, double h = 1e-6, int max_entries = 48,
                                 std::uint64_t seed = 1) {
  for (TensorBuf<double>* t : tensors) t->zero_grad();
  analytic();
  std::vector<Result> out;
  hitspace::Rng rng(seed);
  for (TensorBuf<double>* t : tensors) {
    std::vector<Eigen::Index> idx;
    if (t->size() <= max_entries) {
      for (Eigen::Index i = 0; i < t->size(); ++i) idx.push_back(i);
    } else {
      for (int k = 0; k < max_entries; ++k)
        idx.push_back(std::uniform_int_distribution<Eigen::Index>(0, t->size() - 1)(rng));
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (Eigen::Index i : idx) {
      double& v = t->value.data()[i];
      const double saved = v;
      v = saved + h;
      const double lp = loss();
      v = saved - h;
      const double lm = loss();
      v = saved;
      const double num = (lp - lm) / (2 * h);
      const double ana = t->grad.data()[i];
      diff2 += (num - ana) * (num - ana);
      a2 += ana * ana;
      n2 += num * num;
    }
    // Some gradients are identically zero (e.g. key biases under softmax);
    // compare those absolutely instead of dividing roundoff by roundoff.
    const double scale = std::sqrt(std::max(a2, n2));
    out.push_back({t->name, scale < 1e-6 ? std::sqrt(diff2) : std::sqrt(diff2) / scale});
  }
  return out;
}

inline double weighted_sum(const Mat<double>& y, const Mat<double>& r) { return y.cwiseProduct(r).sum(); }

}  // namespace gradcheck
