#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "vad/network.hpp"
#include "vad/training.hpp"

namespace vad {

struct ScheduleConfig {
    std::size_t steps = 10;  // T, number of denoiser evaluations
    double sigma_min = 0.02;
    double sigma_max = 80.0;
    double rho = 7.0;

    void validate() const;
};

/// sigma_0 = sigma_max > ... > sigma_{T-1} = sigma_min > sigma_T = 0.
struct NoiseSchedule {
    std::vector<double> sigmas;

    /// T (the final zero is not a step).
    std::size_t steps() const { return sigmas.size() - 1; }
    double operator[](std::size_t i) const { return sigmas[i]; }
};

NoiseSchedule karras_schedule(const ScheduleConfig& cfg);

/// (sigma_min, sigma_max) = exp(p_mean -/+ 5 p_std).
std::pair<double, double> noise_bounds(const TrainNoiseConfig& cfg);

/// Schedule whose bounds come from the training noise distribution.
ScheduleConfig schedule_from_noise(const TrainNoiseConfig& noise, std::size_t steps, double rho);

/// Any function x, sigma -> D(x; sigma).
template <typename T>
using DenoiserFn = std::function<Tensor<T>(const Tensor<T>&, double)>;

template <typename T>
DenoiserFn<T> make_denoiser(const DenoiserParams<T>& params, const Preconditioner& precond);

/// Probability-flow derivative (x - D(x; sigma)) / sigma.
template <typename T>
Tensor<T> ode_derivative(const DenoiserFn<T>& denoiser, const Tensor<T>& x, double sigma);

inline constexpr std::size_t kDefaultLmsOrder = 4;

/// Integral over [sigmas[i], sigmas[i+1]] of the Lagrange basis polynomial for
/// history entry `j` (0 = current) built on the last `order` noise levels.
double lms_coefficient(const std::vector<double>& sigmas, std::size_t i, std::size_t order,
                       std::size_t j);

/// Integrates the probability-flow ODE from sigma_{start} down to 0 with a
/// linear multistep method of at most `order`.
template <typename T>
Tensor<T> lms_sample(const DenoiserFn<T>& denoiser, const NoiseSchedule& schedule,
                     const Tensor<T>& x_start, std::size_t start_index,
                     std::size_t order = kDefaultLmsOrder);

/// Corrupts `features` to noise level sigma_t and reconstructs them.
template <typename T>
Tensor<T> partial_reconstruct(const DenoiserFn<T>& denoiser, const NoiseSchedule& schedule,
                              const Tensor<T>& features, std::size_t start_index, Rng& rng,
                              std::size_t order = kDefaultLmsOrder);

}  // namespace vad
