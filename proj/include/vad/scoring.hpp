#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vad/data.hpp"
#include "vad/sampler.hpp"

namespace vad {

struct ScoringConfig {
    std::size_t start_index = 9;  // t
    double k = 1.0;               // threshold sensitivity
    std::size_t batch_size = 8192;
    std::size_t lms_order = kDefaultLmsOrder;

    void validate(const NoiseSchedule& schedule) const;
};

struct Threshold {
    double mu = 0.0;
    double sigma = 0.0;  // population standard deviation
    double l_th = 0.0;   // mu + k sigma
};

/// Decision for one batch: losses, statistics, and the abnormal flags.
struct BatchDecision {
    std::vector<double> losses;
    Threshold threshold;
    std::vector<std::uint8_t> flags;  // losses[i] > l_th
};

/// Mean squared difference per row, accumulated in double.
template <typename T>
std::vector<double> mse_per_instance(const Tensor<T>& features, const Tensor<T>& reconstruction);

/// Throws UsageError for fewer than two losses.
Threshold batch_threshold(const std::vector<double>& losses, double k);

/// Flags for precomputed losses. A single loss is never flagged (its batch
/// has zero spread).
BatchDecision decide(std::vector<double> losses, double k);

/// Reconstruct, measure, threshold.
template <typename T>
BatchDecision score_batch(const DenoiserFn<T>& denoiser, const NoiseSchedule& schedule,
                          const ScoringConfig& cfg, const Tensor<T>& batch, Rng& rng);

struct SegmentScore {
    std::string video_id;
    std::size_t segment_index = 0;  // within the video
    double mse = 0.0;
    bool flagged = false;
    std::size_t batch_id = 0;
    double l_th = 0.0;
};

struct DatasetScores {
    std::vector<SegmentScore> segments;  // feature row order
    std::vector<BatchDecision> batches;
};

/// Scores all rows in manifest order, batch by batch. Labels are never read.
template <typename T>
DatasetScores score_dataset(const DenoiserFn<T>& denoiser, const NoiseSchedule& schedule,
                            const ScoringConfig& cfg, const Tensor<T>& features,
                            const Manifest& manifest, Rng& rng);

/// Re-thresholds stored batch losses at a different k; continuous scores are unchanged.
DatasetScores rethreshold(const DatasetScores& scores, double k);

/// CSV columns: video_id,segment_index,mse,flagged,batch_id,l_th
void write_scores_csv(const std::filesystem::path& path, const std::vector<SegmentScore>& scores);
std::vector<SegmentScore> read_scores_csv(const std::filesystem::path& path);

/// Shortest decimal text that round-trips the double.
std::string format_real(double v);

}  // namespace vad
