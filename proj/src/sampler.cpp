#include "vad/sampler.hpp"

#include <cmath>
#include <deque>
#include <sstream>

namespace vad {

void ScheduleConfig::validate() const {
    if (steps < 2) {
        throw UsageError("schedule: at least two steps are required");
    }
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min) || !std::isfinite(sigma_max)) {
        throw UsageError("schedule: need 0 < sigma_min < sigma_max");
    }
    if (!(rho > 0.0) || !std::isfinite(rho)) {
        throw UsageError("schedule: rho must be positive");
    }
}

NoiseSchedule karras_schedule(const ScheduleConfig& cfg) {
    cfg.validate();
    const double min_inv_rho = std::pow(cfg.sigma_min, 1.0 / cfg.rho);
    const double max_inv_rho = std::pow(cfg.sigma_max, 1.0 / cfg.rho);
    const double last = static_cast<double>(cfg.steps - 1);
    NoiseSchedule s;
    s.sigmas.resize(cfg.steps + 1);
    for (std::size_t i = 0; i < cfg.steps; ++i) {
        const double ramp = static_cast<double>(i) / last;
        s.sigmas[i] = std::pow(max_inv_rho + ramp * (min_inv_rho - max_inv_rho), cfg.rho);
    }
    // The endpoints are pinned so that round-off in pow never moves them.
    s.sigmas.front() = cfg.sigma_max;
    s.sigmas[cfg.steps - 1] = cfg.sigma_min;
    s.sigmas.back() = 0.0;
    for (std::size_t i = 0; i + 1 < s.sigmas.size(); ++i) {
        if (!(s.sigmas[i] > s.sigmas[i + 1])) {
            throw NumericError("schedule: sigmas are not strictly decreasing");
        }
    }
    return s;
}

std::pair<double, double> noise_bounds(const TrainNoiseConfig& cfg) {
    cfg.validate();
    return {std::exp(cfg.p_mean - 5.0 * cfg.p_std), std::exp(cfg.p_mean + 5.0 * cfg.p_std)};
}

ScheduleConfig schedule_from_noise(const TrainNoiseConfig& noise, std::size_t steps, double rho) {
    const auto [lo, hi] = noise_bounds(noise);
    return ScheduleConfig{steps, lo, hi, rho};
}

template <typename T>
DenoiserFn<T> make_denoiser(const DenoiserParams<T>& params, const Preconditioner& precond) {
    return [&params, precond](const Tensor<T>& x, double sigma) {
        return denoise(params, precond, x, sigma);
    };
}

template <typename T>
Tensor<T> ode_derivative(const DenoiserFn<T>& denoiser, const Tensor<T>& x, double sigma) {
    if (!(sigma > 0.0)) {
        throw UsageError("ode_derivative: sigma must be positive");
    }
    const Tensor<T> d = denoiser(x, sigma);
    require_shape(x.rows(), x.cols(), d.rows(), d.cols(), "ode_derivative");
    return (x - d) / static_cast<T>(sigma);
}

double lms_coefficient(const std::vector<double>& sigmas, std::size_t i, std::size_t order,
                       std::size_t j) {
    if (order == 0 || j >= order || i + 1 >= sigmas.size() || i + 1 < order) {
        throw UsageError("lms_coefficient: invalid step, order or history index");
    }
    // tau = sigma_i + u h maps the step onto u in [0, 1].
    const double h = sigmas[i + 1] - sigmas[i];
    std::vector<double> nodes(order);
    for (std::size_t m = 0; m < order; ++m) {
        nodes[m] = (sigmas[i - m] - sigmas[i]) / h;
    }
    // Numerator polynomial prod_{m != j} (u - u_m), coefficients by ascending power.
    std::vector<double> poly{1.0};
    double denom = 1.0;
    for (std::size_t m = 0; m < order; ++m) {
        if (m == j) {
            continue;
        }
        std::vector<double> next(poly.size() + 1, 0.0);
        for (std::size_t k = 0; k < poly.size(); ++k) {
            next[k + 1] += poly[k];
            next[k] -= nodes[m] * poly[k];
        }
        poly = std::move(next);
        denom *= nodes[j] - nodes[m];
    }
    double integral = 0.0;
    for (std::size_t k = 0; k < poly.size(); ++k) {
        integral += poly[k] / static_cast<double>(k + 1);
    }
    return h * (integral / denom);
}

template <typename T>
Tensor<T> lms_sample(const DenoiserFn<T>& denoiser, const NoiseSchedule& schedule,
                     const Tensor<T>& x_start, std::size_t start_index, std::size_t order) {
    const std::size_t steps = schedule.steps();
    if (start_index > steps) {
        std::ostringstream msg;
        msg << "lms_sample: start index " << start_index << " outside [0, " << steps << "]";
        throw UsageError(msg.str());
    }
    if (order == 0) {
        throw UsageError("lms_sample: order must be positive");
    }
    Tensor<T> x = x_start;
    std::deque<Tensor<T>> history;  // most recent derivative first
    for (std::size_t i = start_index; i < steps; ++i) {
        history.push_front(ode_derivative(denoiser, x, schedule[i]));
        if (history.size() > order) {
            history.pop_back();
        }
        const std::size_t current = std::min(i - start_index + 1, order);
        for (std::size_t j = 0; j < current; ++j) {
            x += static_cast<T>(lms_coefficient(schedule.sigmas, i, current, j)) * history[j];
        }
    }
    return x;
}

template <typename T>
Tensor<T> partial_reconstruct(const DenoiserFn<T>& denoiser, const NoiseSchedule& schedule,
                              const Tensor<T>& features, std::size_t start_index, Rng& rng,
                              std::size_t order) {
    if (start_index >= schedule.steps()) {
        std::ostringstream msg;
        msg << "partial_reconstruct: start index " << start_index << " outside [0, "
            << schedule.steps() << ")";
        throw UsageError(msg.str());
    }
    Tensor<T> noisy = gaussian<T>(rng, features.rows(), features.cols());
    noisy = features + noisy * static_cast<T>(schedule[start_index]);
    return lms_sample(denoiser, schedule, noisy, start_index, order);
}

#define VAD_INSTANTIATE(T)                                                                     \
    template DenoiserFn<T> make_denoiser<T>(const DenoiserParams<T>&, const Preconditioner&);  \
    template Tensor<T> ode_derivative<T>(const DenoiserFn<T>&, const Tensor<T>&, double);      \
    template Tensor<T> lms_sample<T>(const DenoiserFn<T>&, const NoiseSchedule&,               \
                                     const Tensor<T>&, std::size_t, std::size_t);              \
    template Tensor<T> partial_reconstruct<T>(const DenoiserFn<T>&, const NoiseSchedule&,      \
                                              const Tensor<T>&, std::size_t, Rng&, std::size_t);

VAD_INSTANTIATE(float)
VAD_INSTANTIATE(double)
#undef VAD_INSTANTIATE

}  // namespace vad
