#include "vad/numeric.hpp"

#include <cmath>
#include <sstream>

namespace vad {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

Rng Rng::for_stream(std::uint64_t master_seed, Stream stream) {
    const auto tag = static_cast<std::uint64_t>(stream);
    return Rng(splitmix64(splitmix64(master_seed) ^ (tag * 0xd1b54a32d192ed03ULL)));
}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() { return std::generate_canonical<double, 64>(engine_); }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> dist(lo, hi);
    return dist(engine_);
}

template <typename T>
Tensor<T> gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    if (rows < 1 || cols < 1) {
        throw UsageError("gaussian: rows and cols must be positive");
    }
    Tensor<T> out(rows, cols);
    T* data = out.data();
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        data[i] = static_cast<T>(rng.normal());
    }
    return out;
}

void require_shape(Eigen::Index rows_a, Eigen::Index cols_a, Eigen::Index rows_b,
                   Eigen::Index cols_b, const std::string& what) {
    if (rows_a != rows_b || cols_a != cols_b) {
        std::ostringstream msg;
        msg << what << ": shape mismatch " << rows_a << "x" << cols_a << " vs " << rows_b << "x"
            << cols_b;
        throw DataError(msg.str());
    }
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const RowVector<T>& b) {
    if (x.cols() != w.rows() || b.size() != w.cols()) {
        std::ostringstream msg;
        msg << "affine: dimension mismatch x " << x.rows() << "x" << x.cols() << ", w " << w.rows()
            << "x" << w.cols() << ", b " << b.size();
        throw DataError(msg.str());
    }
    Tensor<T> y(x.rows(), w.cols());
    y.noalias() = x * w;
    y.rowwise() += b;
    return y;
}

template <typename T>
RowVector<T> column_sums(const Tensor<T>& x) {
    std::vector<double> acc(static_cast<std::size_t>(x.cols()), 0.0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const T* row = x.data() + i * x.cols();
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            acc[static_cast<std::size_t>(j)] += static_cast<double>(row[j]);
        }
    }
    RowVector<T> out(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        out[j] = static_cast<T>(acc[static_cast<std::size_t>(j)]);
    }
    return out;
}

template <typename T>
double total_sum(const Tensor<T>& x) {
    double acc = 0.0;
    const T* data = x.data();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        acc += static_cast<double>(data[i]);
    }
    return acc;
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
    const T* data = x.data();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!std::isfinite(data[i])) {
            return false;
        }
    }
    return true;
}

#define VAD_INSTANTIATE(T)                                                                   \
    template Tensor<T> gaussian<T>(Rng&, Eigen::Index, Eigen::Index);                        \
    template Tensor<T> affine<T>(const Tensor<T>&, const Tensor<T>&, const RowVector<T>&);   \
    template RowVector<T> column_sums<T>(const Tensor<T>&);                                  \
    template double total_sum<T>(const Tensor<T>&);                                          \
    template bool all_finite<T>(const Tensor<T>&);

VAD_INSTANTIATE(float)
VAD_INSTANTIATE(double)
#undef VAD_INSTANTIATE

}  // namespace vad
