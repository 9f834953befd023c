#include "vad/pipeline.hpp"

#include <sstream>

namespace vad {

Checkpoint train_model(const Tensor<float>& features, const FitConfig& cfg,
                       const std::function<void(const EpochLog&)>& on_epoch) {
    FitResult<float> result = fit<float>(features, cfg, on_epoch);
    return Checkpoint{std::move(result.params), std::move(result.ema), std::move(result.stats),
                      cfg.noise};
}

ScheduleConfig ScheduleOptions::resolve(const TrainNoiseConfig& trained) const {
    TrainNoiseConfig noise = trained;
    if (p_mean) noise.p_mean = *p_mean;
    if (p_std) noise.p_std = *p_std;
    ScheduleConfig cfg = schedule_from_noise(noise, steps, rho);
    if (sigma_min) cfg.sigma_min = *sigma_min;
    if (sigma_max) cfg.sigma_max = *sigma_max;
    cfg.validate();
    return cfg;
}

DatasetScores score_model(const Checkpoint& ckpt, const Tensor<float>& features,
                          const Manifest& manifest, const ScoreSettings& settings) {
    const NetworkConfig& net = ckpt.params.config;
    if (static_cast<std::size_t>(features.cols()) != net.input_dim) {
        std::ostringstream msg;
        msg << "feature dimension " << features.cols() << " does not match checkpoint input_dim "
            << net.input_dim;
        throw DataError(msg.str());
    }
    const NoiseSchedule schedule = karras_schedule(settings.schedule.resolve(ckpt.noise));
    settings.scoring.validate(schedule);
    const Tensor<float> data = apply_centering(features, ckpt.stats);
    const Preconditioner precond(ckpt.stats.sigma_data);
    const DenoiserParams<float>& weights = settings.use_ema ? ckpt.ema : ckpt.params;
    Rng rng = Rng::for_stream(settings.seed, Stream::Sampling);
    return score_dataset<float>(make_denoiser(weights, precond), schedule, settings.scoring, data,
                                manifest, rng);
}

}  // namespace vad
