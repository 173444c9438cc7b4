#pragma once

#include <unsupported/Eigen/FFT>

#include "kinuq/types.hpp"

namespace kinuq {

using ArrayXXc = Eigen::ArrayXXcd;

/// Reusable 2D complex FFT over n x n column-major data. Forward is
/// unnormalized; inverse carries the 1/n^2 factor.
class Fft2 {
 public:
  explicit Fft2(Index n);

  void forward(ArrayXXc& a);
  void inverse(ArrayXXc& a);

 private:
  void rows(ArrayXXc& a, bool fwd);
  void cols(ArrayXXc& a, bool fwd);

  Index n_;
  Eigen::FFT<Real> fft_;
  Eigen::VectorXcd line_, out_;
};

}  // namespace kinuq
