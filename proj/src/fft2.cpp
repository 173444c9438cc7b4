#include "kinuq/fft2.hpp"

namespace kinuq {

Fft2::Fft2(Index n) : n_(n), line_(n), out_(n) {}

void Fft2::cols(ArrayXXc& a, bool fwd) {
  for (Index j = 0; j < n_; ++j) {
    line_ = a.matrix().col(j);
    if (fwd)
      fft_.fwd(out_, line_);
    else
      fft_.inv(out_, line_);
    a.matrix().col(j) = out_;
  }
}

void Fft2::rows(ArrayXXc& a, bool fwd) {
  for (Index i = 0; i < n_; ++i) {
    line_ = a.matrix().row(i).transpose();
    if (fwd)
      fft_.fwd(out_, line_);
    else
      fft_.inv(out_, line_);
    a.matrix().row(i) = out_.transpose();
  }
}

void Fft2::forward(ArrayXXc& a) {
  cols(a, true);
  rows(a, true);
}

void Fft2::inverse(ArrayXXc& a) {
  cols(a, false);
  rows(a, false);
}

}  // namespace kinuq
