#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vad/error.hpp"

namespace vad {

/// Dense row-major matrix. Rows are batch instances, columns are features.
template <typename T>
using Tensor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row vector used for biases and per-unit FiLM parameters.
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Independent random streams, one per consumer, so that adding draws in one
/// place never shifts the samples seen by another.
enum class Stream : std::uint64_t {
    Init = 1,
    Fourier = 2,
    Shuffle = 3,
    TrainNoise = 4,
    Sampling = 5,
    SynthFeatures = 6,
    SynthLayout = 7,
};

/// Seeded generator: 64-bit Mersenne twister plus a cached normal distribution.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Stream derived from a master seed; distinct streams are decorrelated
    /// through a splitmix64 finalizer.
    static Rng for_stream(std::uint64_t master_seed, Stream stream);

    std::uint64_t seed() const { return seed_; }

    double normal();
    double uniform();  // [0, 1)
    std::uint64_t next_u64() { return engine_(); }
    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

/// Tensor of i.i.d. standard normal entries filled in row-major order.
template <typename T>
Tensor<T> gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols);

/// y = x * w + b, with b broadcast over rows.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const RowVector<T>& b);

/// Column sums accumulated in double regardless of T.
template <typename T>
RowVector<T> column_sums(const Tensor<T>& x);

/// Sum of all entries, accumulated in double.
template <typename T>
double total_sum(const Tensor<T>& x);

template <typename T>
bool all_finite(const Tensor<T>& x);

/// Throws DataError when the two shapes differ; `what` names the operation.
void require_shape(Eigen::Index rows_a, Eigen::Index cols_a, Eigen::Index rows_b,
                   Eigen::Index cols_b, const std::string& what);

}  // namespace vad
