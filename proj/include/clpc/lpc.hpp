#pragma once

#include <array>
#include <span>
#include <vector>

#include "clpc/features.hpp"

namespace clpc {

constexpr int kLpcOrder = 16;

// Order-16 predictor plus the Levinson residual energy.
struct LpcFrame {
    std::array<double, kLpcOrder> a{};
    double gain = 0.0;       // final prediction-error energy E
    bool clamped = false;    // a reflection coefficient had to be clamped
};

// Band energies -> piecewise-linear power spectrum on a 512-point FFT grid ->
// first 17 autocorrelation lags, Gaussian lag window (40 Hz bandwidth).
std::array<double, kLpcOrder + 1> bfcc_to_autocorr(const std::array<double, kNumBands>& coeffs);

// Levinson-Durbin on r[0..order]. Throws "invalid autocorrelation" when
// r[0] <= 0; clamps reflection coefficients into (-1, 1) and flags when the
// sequence is not positive definite.
LpcFrame levinson_durbin(std::span<const double> r, int order = kLpcOrder);

// p_t = sum a_i * x_{t-i}; history[0] is the most recent sample.
double predict(std::span<const double> history, const std::array<double, kLpcOrder>& a);

LpcFrame lpc_from_bfcc(const std::array<double, kNumBands>& coeffs);

// --- mu-law codec (mu = 255) -------------------------------------------------
// Code 128 is the smallest nonnegative level and decodes to exactly 0;
// codes 0 and 255 decode to exactly -1 and +1.

int mulaw_encode(double x);
double mulaw_decode(int code);

}  // namespace clpc
