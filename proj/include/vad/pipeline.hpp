#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "vad/checkpoint.hpp"
#include "vad/data.hpp"
#include "vad/sampler.hpp"
#include "vad/scoring.hpp"
#include "vad/training.hpp"

namespace vad {

/// Trains in 32-bit floats and packages the result for scoring.
Checkpoint train_model(const Tensor<float>& features, const FitConfig& cfg,
                       const std::function<void(const EpochLog&)>& on_epoch = {});

/// How the sampling schedule is chosen at scoring time. Bounds default to
/// noise_bounds() of the checkpoint's training distribution (optionally
/// overridden by p_mean / p_std); explicit sigma bounds take precedence.
struct ScheduleOptions {
    std::size_t steps = 10;
    double rho = 7.0;
    std::optional<double> p_mean;
    std::optional<double> p_std;
    std::optional<double> sigma_min;
    std::optional<double> sigma_max;

    ScheduleConfig resolve(const TrainNoiseConfig& trained) const;
};

struct ScoreSettings {
    ScheduleOptions schedule;
    ScoringConfig scoring;
    bool use_ema = true;
    std::uint64_t seed = 0;
};

/// Centers (if the checkpoint says so), reconstructs and thresholds every
/// segment. Only the manifest's video layout is used.
DatasetScores score_model(const Checkpoint& ckpt, const Tensor<float>& features,
                          const Manifest& manifest, const ScoreSettings& settings);

}  // namespace vad
