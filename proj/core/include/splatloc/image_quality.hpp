#pragma once

#include "splatloc/types.hpp"

namespace splatloc {

// Peak signal-to-noise ratio in dB for images on a [0,1] range. Identical
// images return +infinity.
double psnr(const Image& a, const Image& b);

// Mean structural similarity over pixels and channels. 11x11 gaussian window
// with sigma 1.5, C1 = 0.01^2, C2 = 0.03^2. Windows are truncated and
// renormalized at the borders, so images smaller than the window work and
// ssim(x, x) == 1 exactly.
double ssim(const Image& a, const Image& b);

struct SsimGradient {
    double value = 0.0;
    Image d_first;  // derivative of the mean SSIM w.r.t. the first image
};

SsimGradient ssim_with_gradient(const Image& a, const Image& b);

}  // namespace splatloc
