#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vad/numeric.hpp"

namespace vad {

inline constexpr std::size_t kDefaultSegmentLen = 16;

/// One video of the manifest: a contiguous range of feature rows.
struct VideoRecord {
    std::string video_id;
    std::size_t frame_count = 0;
    std::size_t segment_offset = 0;
    std::size_t segment_count = 0;
    /// Per-frame 0/1 ground truth. Only evaluation reads this.
    std::optional<std::vector<std::uint8_t>> labels;

    bool operator==(const VideoRecord&) const = default;
};

struct Manifest {
    std::size_t segment_len = kDefaultSegmentLen;
    std::vector<VideoRecord> videos;

    bool has_labels() const;
    /// Copy with every label array removed.
    Manifest without_labels() const;
    /// Number of segments implied by frame counts.
    std::size_t total_segments() const;

    bool operator==(const Manifest&) const = default;
};

/// Per-segment features plus the manifest linking rows to videos.
struct FeatureSet {
    Tensor<float> features;  // n_segments x dim
    Manifest manifest;

    std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
};

/// Checks that videos tile the feature rows in order and that frame counts,
/// segment counts and label lengths agree. Throws DataError naming the video.
void validate(const FeatureSet& fs);
void validate(const Manifest& m, std::size_t n_segments);

/// Segments needed to cover `frame_count` frames.
std::size_t segments_for_frames(std::size_t frame_count, std::size_t segment_len);

// ---- VADF binary feature file and JSON manifest ----

inline constexpr char kFeatureMagic[4] = {'V', 'A', 'D', 'F'};
inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr int kManifestVersion = 1;

void save_features(const std::filesystem::path& path, const Tensor<float>& features);
Tensor<float> load_features_tensor(const std::filesystem::path& path);

enum class LabelPolicy { Keep, Drop };

void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
/// With LabelPolicy::Drop the label arrays are skipped during parsing.
Manifest load_manifest(const std::filesystem::path& path, LabelPolicy policy = LabelPolicy::Keep);

void save_feature_set(const std::filesystem::path& features_path,
                      const std::filesystem::path& manifest_path, const FeatureSet& fs);
FeatureSet load_feature_set(const std::filesystem::path& features_path,
                            const std::filesystem::path& manifest_path,
                            LabelPolicy policy = LabelPolicy::Keep);

// ---- statistics and batching ----

struct DataStats {
    double sigma_data = 1.0;
    /// Per-dimension means; empty when centering is disabled.
    std::vector<double> means;

    bool centered() const { return !means.empty(); }
};

/// Pooled population standard deviation over every entry (after centering,
/// when enabled). Throws NumericError when the features are constant.
DataStats estimate_sigma_data(const Tensor<float>& features, bool center = false);

/// Subtracts the recorded means (no-op when not centered).
Tensor<float> apply_centering(const Tensor<float>& features, const DataStats& stats);

/// Partition of [0, n) into consecutive slices of `batch_size`, after an
/// optional Fisher-Yates shuffle. The last slice may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   bool shuffle, Rng& rng);

/// Rows of `source` selected by `rows`, converted to T.
template <typename T>
Tensor<T> gather_rows(const Tensor<float>& source, const std::vector<std::size_t>& rows);

// ---- synthetic data ----

struct SynthConfig {
    std::size_t n_normal = 20000;
    std::size_t n_anomalous = 1000;
    std::size_t dim = 64;
    /// RMS per-dimension offset of the anomaly cluster, in units of normal_std.
    double shift = 3.0;
    double normal_std = 1.0;
    double anomaly_std = 1.0;
    std::size_t segment_len = kDefaultSegmentLen;
    std::size_t min_video_segments = 24;
    std::size_t max_video_segments = 96;
    std::size_t min_anomaly_run = 4;
    std::size_t max_anomaly_run = 24;
    bool with_labels = true;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Gaussian normal cluster plus a shifted anomaly cluster laid out as
/// pseudo-videos: every other video carries one contiguous anomalous run.
FeatureSet synth_generate(const SynthConfig& cfg);

/// Per-segment ground truth (1 if any frame of the segment is anomalous).
std::vector<std::uint8_t> segment_labels(const Manifest& m);

}  // namespace vad
