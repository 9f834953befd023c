#include "vad/scoring.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vad {

void ScoringConfig::validate(const NoiseSchedule& schedule) const {
    if (start_index >= schedule.steps()) {
        std::ostringstream msg;
        msg << "start index t=" << start_index << " must be below T=" << schedule.steps();
        throw UsageError(msg.str());
    }
    if (batch_size < 2) {
        throw UsageError("scoring batch_size must be at least 2");
    }
    if (!std::isfinite(k)) {
        throw UsageError("threshold sensitivity k must be finite");
    }
    if (lms_order == 0) {
        throw UsageError("LMS order must be positive");
    }
}

template <typename T>
std::vector<double> mse_per_instance(const Tensor<T>& features, const Tensor<T>& reconstruction) {
    require_shape(features.rows(), features.cols(), reconstruction.rows(), reconstruction.cols(),
                  "mse_per_instance");
    std::vector<double> out(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < features.cols(); ++j) {
            const double d =
                static_cast<double>(features(i, j)) - static_cast<double>(reconstruction(i, j));
            acc += d * d;
        }
        out[static_cast<std::size_t>(i)] = acc / static_cast<double>(features.cols());
    }
    return out;
}

Threshold batch_threshold(const std::vector<double>& losses, double k) {
    if (losses.size() < 2) {
        throw UsageError("batch_threshold: need at least two losses");
    }
    const double n = static_cast<double>(losses.size());
    double mean = 0.0;
    for (double l : losses) {
        mean += l;
    }
    mean /= n;
    double ss = 0.0;
    for (double l : losses) {
        ss += (l - mean) * (l - mean);
    }
    const double sd = std::sqrt(ss / n);
    return Threshold{mean, sd, mean + k * sd};
}

BatchDecision decide(std::vector<double> losses, double k) {
    BatchDecision d;
    if (losses.size() >= 2) {
        d.threshold = batch_threshold(losses, k);
    } else if (losses.size() == 1) {
        d.threshold = Threshold{losses[0], 0.0, losses[0]};
    }
    d.flags.reserve(losses.size());
    for (double l : losses) {
        d.flags.push_back(l > d.threshold.l_th ? 1 : 0);
    }
    d.losses = std::move(losses);
    return d;
}

template <typename T>
BatchDecision score_batch(const DenoiserFn<T>& denoiser, const NoiseSchedule& schedule,
                          const ScoringConfig& cfg, const Tensor<T>& batch, Rng& rng) {
    cfg.validate(schedule);
    if (batch.rows() == 0) {
        throw DataError("score_batch: empty batch");
    }
    const Tensor<T> recon =
        partial_reconstruct(denoiser, schedule, batch, cfg.start_index, rng, cfg.lms_order);
    if (!all_finite(recon)) {
        throw NumericError("score_batch: reconstruction contains non-finite values");
    }
    return decide(mse_per_instance(batch, recon), cfg.k);
}

template <typename T>
DatasetScores score_dataset(const DenoiserFn<T>& denoiser, const NoiseSchedule& schedule,
                            const ScoringConfig& cfg, const Tensor<T>& features,
                            const Manifest& manifest, Rng& rng) {
    cfg.validate(schedule);
    const auto n = static_cast<std::size_t>(features.rows());
    if (n == 0) {
        throw DataError("score_dataset: no segments");
    }
    validate(manifest, n);

    DatasetScores out;
    out.segments.resize(n);
    for (const auto& v : manifest.videos) {
        for (std::size_t s = 0; s < v.segment_count; ++s) {
            auto& seg = out.segments[v.segment_offset + s];
            seg.video_id = v.video_id;
            seg.segment_index = s;
        }
    }
    for (std::size_t start = 0, batch_id = 0; start < n; start += cfg.batch_size, ++batch_id) {
        const std::size_t rows = std::min(cfg.batch_size, n - start);
        const Tensor<T> batch =
            features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(rows));
        BatchDecision d = score_batch(denoiser, schedule, cfg, batch, rng);
        for (std::size_t i = 0; i < rows; ++i) {
            auto& seg = out.segments[start + i];
            seg.mse = d.losses[i];
            seg.flagged = d.flags[i] != 0;
            seg.batch_id = batch_id;
            seg.l_th = d.threshold.l_th;
        }
        out.batches.push_back(std::move(d));
    }
    return out;
}

DatasetScores rethreshold(const DatasetScores& scores, double k) {
    DatasetScores out;
    out.segments = scores.segments;
    std::size_t row = 0;
    for (const auto& b : scores.batches) {
        BatchDecision d = decide(b.losses, k);
        for (std::size_t i = 0; i < d.flags.size(); ++i, ++row) {
            out.segments[row].flagged = d.flags[i] != 0;
            out.segments[row].l_th = d.threshold.l_th;
        }
        out.batches.push_back(std::move(d));
    }
    return out;
}

std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<SegmentScore>& scores) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "video_id,segment_index,mse,flagged,batch_id,l_th\n";
    for (const auto& s : scores) {
        if (s.video_id.find_first_of(",\"\r\n") != std::string::npos) {
            throw DataError("video id '" + s.video_id + "' cannot be written to CSV");
        }
        out << s.video_id << ',' << s.segment_index << ',' << format_real(s.mse) << ','
            << (s.flagged ? 1 : 0) << ',' << s.batch_id << ',' << format_real(s.l_th) << '\n';
    }
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

namespace {

double parse_real(const std::string& text, const std::string& context) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw DataError(context + ": bad number '" + text + "'");
    }
    return v;
}

std::size_t parse_count(const std::string& text, const std::string& context) {
    std::size_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw DataError(context + ": bad integer '" + text + "'");
    }
    return v;
}

}  // namespace

std::vector<SegmentScore> read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != "video_id,segment_index,mse,flagged,batch_id,l_th") {
        throw DataError(path.string() + ": missing or unexpected score CSV header");
    }
    std::vector<SegmentScore> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        const std::string context = path.string() + ":" + std::to_string(line_no);
        if (fields.size() != 6) {
            throw DataError(context + ": expected 6 fields");
        }
        SegmentScore s;
        s.video_id = fields[0];
        s.segment_index = parse_count(fields[1], context);
        s.mse = parse_real(fields[2], context);
        s.flagged = parse_count(fields[3], context) != 0;
        s.batch_id = parse_count(fields[4], context);
        s.l_th = parse_real(fields[5], context);
        out.push_back(std::move(s));
    }
    return out;
}

#define VAD_INSTANTIATE(T)                                                                       \
    template std::vector<double> mse_per_instance<T>(const Tensor<T>&, const Tensor<T>&);        \
    template BatchDecision score_batch<T>(const DenoiserFn<T>&, const NoiseSchedule&,            \
                                          const ScoringConfig&, const Tensor<T>&, Rng&);         \
    template DatasetScores score_dataset<T>(const DenoiserFn<T>&, const NoiseSchedule&,          \
                                            const ScoringConfig&, const Tensor<T>&,              \
                                            const Manifest&, Rng&);

VAD_INSTANTIATE(float)
VAD_INSTANTIATE(double)
#undef VAD_INSTANTIATE

}  // namespace vad
