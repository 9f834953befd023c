#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vad/data.hpp"
#include "vad/scoring.hpp"

namespace vad {

/// Repeats each segment score segment_len times and truncates to frame_count.
/// Throws DataError unless the segment count covers frame_count exactly.
template <typename V>
std::vector<V> expand_segments(const std::vector<V>& segment_values, std::size_t segment_len,
                               std::size_t frame_count);

/// Mann-Whitney AUC with midranks for ties. Throws NumericError when only one
/// class is present.
double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

struct VideoFrames {
    std::string video_id;
    std::vector<double> scores;
    std::vector<std::uint8_t> flags;
    std::vector<std::uint8_t> labels;
};

struct EvalReport {
    double auc = 0.0;       // from continuous scores
    double flag_auc = 0.0;  // from the binary flags (depends on k)
    std::size_t frame_count = 0;
    std::size_t positive_count = 0;
    std::size_t negative_count = 0;
    std::size_t flagged_frames = 0;
    double true_positive_rate = 0.0;
    double false_positive_rate = 0.0;
    std::vector<VideoFrames> videos;
};

/// Global frame-level evaluation over every video of the manifest.
EvalReport evaluate(const std::vector<SegmentScore>& scores, const Manifest& manifest);

nlohmann::json report_to_json(const EvalReport& report);
void write_frame_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace vad
