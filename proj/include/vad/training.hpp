#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vad/data.hpp"
#include "vad/network.hpp"

namespace vad {

/// Log-normal training noise: ln(sigma) ~ N(p_mean, p_std^2).
struct TrainNoiseConfig {
    double p_mean = -1.2;
    double p_std = 1.2;

    void validate() const;
};

struct OptimizerConfig {
    double base_lr = 2e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double inv_gamma = 20000.0;
    double power = 1.0;
    double ema_decay = 0.999;

    void validate() const;
};

/// Adam moments plus the EMA copy of the parameters.
template <typename T>
struct OptimizerState {
    OptimizerConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor<T>> first_moment;
    std::vector<Tensor<T>> second_moment;
    DenoiserParams<T> ema;

    /// Zero moments; EMA initialised to a copy of params.
    static OptimizerState create(const OptimizerConfig& config, const DenoiserParams<T>& params);
};

std::vector<double> sample_train_sigma(Rng& rng, const TrainNoiseConfig& cfg, std::size_t n);

/// (sigma^2 + sigma_data^2) / (sigma sigma_data)^2
double loss_weight(const Preconditioner& p, double sigma);

template <typename T>
struct LossResult {
    double loss = 0.0;
    DenoiserParams<T> grads;
};

/// Weighted denoising loss for explicit noise: mean over rows of
/// lambda(sigma_i) * ||D(x_i + sigma_i eps_i; sigma_i) - x_i||^2 / dim.
template <typename T>
LossResult<T> dsm_loss_with_noise(const DenoiserParams<T>& params, const Preconditioner& p,
                                  const Tensor<T>& batch, const std::vector<double>& sigmas,
                                  const Tensor<T>& noise);

/// As dsm_loss_with_noise with eps drawn from rng.
template <typename T>
LossResult<T> dsm_loss(const DenoiserParams<T>& params, const Preconditioner& p,
                       const Tensor<T>& batch, const std::vector<double>& sigmas, Rng& rng);

/// base_lr / (1 + step / inv_gamma)^power
double inverse_lr(const OptimizerConfig& cfg, std::uint64_t step);

/// One Adam update with bias correction and decoupled weight decay at the
/// scheduled learning rate. Increments state.step.
template <typename T>
void adam_step(OptimizerState<T>& state, DenoiserParams<T>& params, const DenoiserParams<T>& grads);

/// ema <- d * ema + (1 - d) * params.
template <typename T>
void ema_update(DenoiserParams<T>& ema, const DenoiserParams<T>& params, double decay);

struct FitConfig {
    NetworkConfig network;  // input_dim is taken from the data
    TrainNoiseConfig noise;
    OptimizerConfig optimizer;
    std::size_t epochs = 50;
    std::size_t batch_size = 8192;
    bool center = false;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    std::uint64_t step = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
};

template <typename T>
struct FitResult {
    DenoiserParams<T> params;
    DenoiserParams<T> ema;
    DataStats stats;
    std::vector<EpochLog> log;
};

inline constexpr std::size_t kMaxEpochs = 50;

/// Unsupervised training on the feature rows only; the manifest is never
/// consulted. Throws NumericError if the loss becomes non-finite.
template <typename T>
FitResult<T> fit(const Tensor<float>& features, const FitConfig& cfg,
                 const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace vad
