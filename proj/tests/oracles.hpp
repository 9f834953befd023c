#pragma once

// Independent reference implementations used only by the tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "vad/numeric.hpp"

namespace vad::oracle {

using HighPrecision = boost::multiprecision::cpp_dec_float_50;

inline Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
    Tensor<double> out(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (Eigen::Index k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(k, j);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

/// Pairwise AUC: wins plus half the ties over all positive/negative pairs.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) {
                wins += 1.0;
            } else if (scores[i] == scores[j]) {
                wins += 0.5;
            }
        }
    }
    return wins / pairs;
}

/// Karras schedule entry in 50-digit arithmetic.
inline double karras_sigma(double sigma_min, double sigma_max, double rho, int i, int steps) {
    const HighPrecision inv_rho = HighPrecision(1) / HighPrecision(rho);
    const HighPrecision lo = boost::multiprecision::pow(HighPrecision(sigma_min), inv_rho);
    const HighPrecision hi = boost::multiprecision::pow(HighPrecision(sigma_max), inv_rho);
    const HighPrecision ramp = HighPrecision(i) / HighPrecision(steps - 1);
    return static_cast<double>(boost::multiprecision::pow(hi + ramp * (lo - hi), HighPrecision(rho)));
}

/// Population standard deviation with two explicit passes.
inline double two_pass_std(const std::vector<double>& values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size()));
}

}  // namespace vad::oracle
