#include "vad/training.hpp"

#include <cmath>
#include <sstream>

namespace vad {

void TrainNoiseConfig::validate() const {
    if (!(p_std > 0.0) || !std::isfinite(p_std) || !std::isfinite(p_mean)) {
        throw UsageError("training noise: p_std must be positive and p_mean finite");
    }
}

void OptimizerConfig::validate() const {
    if (!(base_lr > 0.0) || weight_decay < 0.0 || !(inv_gamma > 0.0) || power < 0.0) {
        throw UsageError("optimizer: lr and inv_gamma must be positive, decay and power >= 0");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || !(eps > 0.0)) {
        throw UsageError("optimizer: betas must lie in [0, 1) and eps be positive");
    }
    if (ema_decay < 0.0 || ema_decay > 1.0) {
        throw UsageError("optimizer: ema_decay must lie in [0, 1]");
    }
}

void FitConfig::validate() const {
    noise.validate();
    optimizer.validate();
    if (epochs == 0 || epochs > kMaxEpochs) {
        throw UsageError("fit: epochs must be between 1 and " + std::to_string(kMaxEpochs));
    }
    if (batch_size == 0) {
        throw UsageError("fit: batch_size must be positive");
    }
}

template <typename T>
OptimizerState<T> OptimizerState<T>::create(const OptimizerConfig& config,
                                            const DenoiserParams<T>& params) {
    config.validate();
    OptimizerState<T> s;
    s.config = config;
    for (const Tensor<T>* p : params.trainable()) {
        s.first_moment.push_back(Tensor<T>::Zero(p->rows(), p->cols()));
        s.second_moment.push_back(Tensor<T>::Zero(p->rows(), p->cols()));
    }
    s.ema = params;
    return s;
}

std::vector<double> sample_train_sigma(Rng& rng, const TrainNoiseConfig& cfg, std::size_t n) {
    cfg.validate();
    std::vector<double> out(n);
    for (auto& s : out) {
        s = std::exp(cfg.p_mean + cfg.p_std * rng.normal());
    }
    return out;
}

double loss_weight(const Preconditioner& p, double sigma) {
    if (!(sigma > 0.0)) {
        throw UsageError("loss_weight: sigma must be positive");
    }
    const double sd = p.sigma_data;
    return (sigma * sigma + sd * sd) / ((sigma * sd) * (sigma * sd));
}

template <typename T>
LossResult<T> dsm_loss_with_noise(const DenoiserParams<T>& params, const Preconditioner& p,
                                  const Tensor<T>& batch, const std::vector<double>& sigmas,
                                  const Tensor<T>& noise) {
    const auto rows = batch.rows();
    if (rows == 0) {
        throw DataError("dsm_loss: empty batch");
    }
    if (static_cast<Eigen::Index>(sigmas.size()) != rows) {
        throw DataError("dsm_loss: need exactly one sigma per batch row");
    }
    require_shape(batch.rows(), batch.cols(), noise.rows(), noise.cols(), "dsm_loss noise");

    std::vector<T> c_in(sigmas.size());
    std::vector<T> c_out(sigmas.size());
    std::vector<double> c_noise(sigmas.size());
    std::vector<double> weight(sigmas.size());
    Tensor<T> x_in(rows, batch.cols());
    Tensor<T> residual(rows, batch.cols());  // c_skip * (x + sigma eps) - x
    const double norm = 1.0 / (static_cast<double>(rows) * static_cast<double>(batch.cols()));
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const Scalings s = p.scalings(sigmas[k]);
        const auto noisy = (batch.row(i) + noise.row(i) * static_cast<T>(sigmas[k])).eval();
        x_in.row(i) = noisy * static_cast<T>(s.c_in);
        residual.row(i) = noisy * static_cast<T>(s.c_skip) - batch.row(i);
        c_out[k] = static_cast<T>(s.c_out);
        c_noise[k] = s.c_noise;
        weight[k] = loss_weight(p, sigmas[k]) * norm;
    }
    const Tensor<T> embedding = fourier_embed_rows(params, c_noise);

    Tape<T> tape;
    const Var f = record_forward(tape, params, tape.constant_ref(x_in), embedding);
    const Var err = tape.add(tape.scale_rows(f, std::move(c_out)), tape.constant_ref(residual));
    const Var loss = tape.weighted_sum_squares(err, std::move(weight));
    tape.backward(loss, Tensor<T>::Ones(1, 1));

    LossResult<T> result{static_cast<double>(tape.value(loss)(0, 0)),
                         DenoiserParams<T>::zeros(params.config)};
    auto src = params.trainable();
    auto dst = result.grads.trainable();
    for (std::size_t i = 0; i < src.size(); ++i) {
        *dst[i] = tape.grad_of(*src[i]);
    }
    return result;
}

template <typename T>
LossResult<T> dsm_loss(const DenoiserParams<T>& params, const Preconditioner& p,
                       const Tensor<T>& batch, const std::vector<double>& sigmas, Rng& rng) {
    if (batch.rows() == 0) {
        throw DataError("dsm_loss: empty batch");
    }
    const Tensor<T> noise = gaussian<T>(rng, batch.rows(), batch.cols());
    return dsm_loss_with_noise(params, p, batch, sigmas, noise);
}

double inverse_lr(const OptimizerConfig& cfg, std::uint64_t step) {
    return cfg.base_lr /
           std::pow(1.0 + static_cast<double>(step) / cfg.inv_gamma, cfg.power);
}

template <typename T>
void adam_step(OptimizerState<T>& state, DenoiserParams<T>& params, const DenoiserParams<T>& grads) {
    auto p = params.trainable();
    auto g = grads.trainable();
    if (p.size() != g.size() || p.size() != state.first_moment.size()) {
        throw DataError("adam_step: parameter and gradient lists differ");
    }
    const OptimizerConfig& c = state.config;
    const double lr = inverse_lr(c, state.step);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < p.size(); ++k) {
        require_shape(p[k]->rows(), p[k]->cols(), g[k]->rows(), g[k]->cols(), "adam_step");
        T* w = p[k]->data();
        const T* gk = g[k]->data();
        T* m = state.first_moment[k].data();
        T* v = state.second_moment[k].data();
        for (Eigen::Index i = 0; i < p[k]->size(); ++i) {
            const double gi = static_cast<double>(gk[i]);
            const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * gi;
            const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = (mi / bias1) / (std::sqrt(vi / bias2) + c.eps);
            const double wi = static_cast<double>(w[i]);
            w[i] = static_cast<T>(wi - lr * (update + c.weight_decay * wi));
        }
    }
}

template <typename T>
void ema_update(DenoiserParams<T>& ema, const DenoiserParams<T>& params, double decay) {
    auto e = ema.trainable();
    auto p = params.trainable();
    if (e.size() != p.size()) {
        throw DataError("ema_update: parameter lists differ");
    }
    const T d = static_cast<T>(decay);
    const T rest = static_cast<T>(1.0 - decay);
    for (std::size_t k = 0; k < p.size(); ++k) {
        require_shape(e[k]->rows(), e[k]->cols(), p[k]->rows(), p[k]->cols(), "ema_update");
        *e[k] = d * *e[k] + rest * *p[k];
    }
}

template <typename T>
FitResult<T> fit(const Tensor<float>& features, const FitConfig& cfg,
                 const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    if (features.rows() < 1) {
        throw DataError("fit: dataset has no rows");
    }
    FitResult<T> result;
    result.stats = estimate_sigma_data(features, cfg.center);
    const Tensor<float> data = apply_centering(features, result.stats);
    const Preconditioner precond(result.stats.sigma_data);

    NetworkConfig net = cfg.network;
    net.input_dim = static_cast<std::size_t>(features.cols());
    result.params = init_params<T>(net, cfg.seed);
    OptimizerState<T> state = OptimizerState<T>::create(cfg.optimizer, result.params);

    Rng shuffle_rng = Rng::for_stream(cfg.seed, Stream::Shuffle);
    Rng noise_rng = Rng::for_stream(cfg.seed, Stream::TrainNoise);
    const std::size_t n = static_cast<std::size_t>(data.rows());
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        double lr = 0.0;
        for (const auto& batch_rows : make_batches(n, cfg.batch_size, true, shuffle_rng)) {
            const Tensor<T> batch = gather_rows<T>(data, batch_rows);
            const auto sigmas = sample_train_sigma(noise_rng, cfg.noise, batch_rows.size());
            const LossResult<T> res = dsm_loss(result.params, precond, batch, sigmas, noise_rng);
            if (!std::isfinite(res.loss)) {
                std::ostringstream msg;
                msg << "fit: non-finite loss at epoch " << epoch << ", step " << state.step;
                throw NumericError(msg.str());
            }
            lr = inverse_lr(cfg.optimizer, state.step);
            adam_step(state, result.params, res.grads);
            ema_update(state.ema, result.params, cfg.optimizer.ema_decay);
            loss_sum += res.loss * static_cast<double>(batch_rows.size());
        }
        for (const Tensor<T>* p : result.params.trainable()) {
            if (!all_finite(*p)) {
                throw NumericError("fit: parameters became non-finite at epoch " +
                                   std::to_string(epoch));
            }
        }
        const EpochLog entry{epoch, state.step, lr, loss_sum / static_cast<double>(n)};
        result.log.push_back(entry);
        if (on_epoch) {
            on_epoch(entry);
        }
    }
    result.ema = std::move(state.ema);
    return result;
}

#define VAD_INSTANTIATE(T)                                                                     \
    template struct OptimizerState<T>;                                                         \
    template LossResult<T> dsm_loss_with_noise<T>(const DenoiserParams<T>&, const Preconditioner&, \
                                                  const Tensor<T>&, const std::vector<double>&,   \
                                                  const Tensor<T>&);                              \
    template LossResult<T> dsm_loss<T>(const DenoiserParams<T>&, const Preconditioner&,        \
                                       const Tensor<T>&, const std::vector<double>&, Rng&);    \
    template void adam_step<T>(OptimizerState<T>&, DenoiserParams<T>&, const DenoiserParams<T>&); \
    template void ema_update<T>(DenoiserParams<T>&, const DenoiserParams<T>&, double);         \
    template FitResult<T> fit<T>(const Tensor<float>&, const FitConfig&,                       \
                                 const std::function<void(const EpochLog&)>&);

VAD_INSTANTIATE(float)
VAD_INSTANTIATE(double)
#undef VAD_INSTANTIATE

}  // namespace vad
