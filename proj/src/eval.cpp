#include "vad/eval.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace vad {

template <typename V>
std::vector<V> expand_segments(const std::vector<V>& segment_values, std::size_t segment_len,
                               std::size_t frame_count) {
    if (segment_len == 0) {
        throw UsageError("expand_segments: segment_len must be positive");
    }
    if (segment_values.size() != segments_for_frames(frame_count, segment_len)) {
        std::ostringstream msg;
        msg << "expand_segments: " << segment_values.size() << " segments cannot cover "
            << frame_count << " frames of length " << segment_len;
        throw DataError(msg.str());
    }
    std::vector<V> frames(frame_count);
    for (std::size_t f = 0; f < frame_count; ++f) {
        frames[f] = segment_values[f / segment_len];
    }
    return frames;
}

template std::vector<double> expand_segments<double>(const std::vector<double>&, std::size_t,
                                                     std::size_t);
template std::vector<std::uint8_t> expand_segments<std::uint8_t>(const std::vector<std::uint8_t>&,
                                                                 std::size_t, std::size_t);

double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size()) {
        throw DataError("roc_auc: scores and labels differ in length");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positive_rank_sum = 0.0;
    double positives = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        // Ranks i+1..j share their mean.
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) {
                positive_rank_sum += midrank;
                positives += 1.0;
            }
        }
        i = j;
    }
    const double negatives = static_cast<double>(scores.size()) - positives;
    if (positives == 0.0 || negatives == 0.0) {
        throw NumericError("roc_auc: undefined with a single class present");
    }
    return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

EvalReport evaluate(const std::vector<SegmentScore>& scores, const Manifest& manifest) {
    std::map<std::string, std::vector<const SegmentScore*>> by_video;
    for (const auto& s : scores) {
        by_video[s.video_id].push_back(&s);
    }
    EvalReport report;
    std::vector<double> all_scores;
    std::vector<double> all_flags;
    std::vector<std::uint8_t> all_labels;
    for (const auto& v : manifest.videos) {
        if (!v.labels) {
            throw DataError("evaluate: video '" + v.video_id + "' has no frame labels");
        }
        auto it = by_video.find(v.video_id);
        if (it == by_video.end()) {
            throw DataError("evaluate: no scores for video '" + v.video_id + "'");
        }
        std::vector<double> seg_scores(v.segment_count);
        std::vector<std::uint8_t> seg_flags(v.segment_count);
        std::vector<bool> seen(v.segment_count, false);
        for (const SegmentScore* s : it->second) {
            if (s->segment_index >= v.segment_count || seen[s->segment_index]) {
                throw DataError("evaluate: unexpected or duplicate segment " +
                                std::to_string(s->segment_index) + " for video '" + v.video_id +
                                "'");
            }
            seen[s->segment_index] = true;
            seg_scores[s->segment_index] = s->mse;
            seg_flags[s->segment_index] = s->flagged ? 1 : 0;
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
            throw DataError("evaluate: missing segment scores for video '" + v.video_id + "'");
        }
        VideoFrames frames{v.video_id,
                           expand_segments(seg_scores, manifest.segment_len, v.frame_count),
                           expand_segments(seg_flags, manifest.segment_len, v.frame_count),
                           *v.labels};
        all_scores.insert(all_scores.end(), frames.scores.begin(), frames.scores.end());
        all_flags.insert(all_flags.end(), frames.flags.begin(), frames.flags.end());
        all_labels.insert(all_labels.end(), frames.labels.begin(), frames.labels.end());
        by_video.erase(it);
        report.videos.push_back(std::move(frames));
    }
    if (!by_video.empty()) {
        throw DataError("evaluate: scored video '" + by_video.begin()->first +
                        "' is missing from the manifest");
    }
    report.frame_count = all_labels.size();
    double true_pos = 0.0;
    double false_pos = 0.0;
    for (std::size_t i = 0; i < all_labels.size(); ++i) {
        const bool positive = all_labels[i] != 0;
        const bool flagged = all_flags[i] != 0.0;
        report.positive_count += positive ? 1 : 0;
        report.flagged_frames += flagged ? 1 : 0;
        true_pos += (positive && flagged) ? 1.0 : 0.0;
        false_pos += (!positive && flagged) ? 1.0 : 0.0;
    }
    report.negative_count = report.frame_count - report.positive_count;
    report.auc = roc_auc(all_scores, all_labels);
    report.flag_auc = roc_auc(all_flags, all_labels);
    report.true_positive_rate = true_pos / static_cast<double>(report.positive_count);
    report.false_positive_rate = false_pos / static_cast<double>(report.negative_count);
    return report;
}

nlohmann::json report_to_json(const EvalReport& r) {
    return {{"auc", r.auc},
            {"flag_auc", r.flag_auc},
            {"frame_count", r.frame_count},
            {"positive_count", r.positive_count},
            {"negative_count", r.negative_count},
            {"flagged_frames", r.flagged_frames},
            {"true_positive_rate", r.true_positive_rate},
            {"false_positive_rate", r.false_positive_rate},
            {"video_count", r.videos.size()}};
}

void write_frame_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "video_id,frame,score,flagged,label\n";
    for (const auto& v : report.videos) {
        for (std::size_t f = 0; f < v.scores.size(); ++f) {
            out << v.video_id << ',' << f << ',' << format_real(v.scores[f]) << ','
                << static_cast<int>(v.flags[f]) << ',' << static_cast<int>(v.labels[f]) << '\n';
        }
    }
}

}  // namespace vad
