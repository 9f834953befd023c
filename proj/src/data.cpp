#include "vad/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vad {

namespace {

using json = nlohmann::json;

template <typename U>
void put_le(std::ostream& os, U value) {
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu);
    }
    os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return static_cast<U>(v);
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

bool Manifest::has_labels() const {
    return !videos.empty() &&
           std::all_of(videos.begin(), videos.end(), [](const auto& v) { return v.labels.has_value(); });
}

Manifest Manifest::without_labels() const {
    Manifest out = *this;
    for (auto& v : out.videos) {
        v.labels.reset();
    }
    return out;
}

std::size_t Manifest::total_segments() const {
    std::size_t total = 0;
    for (const auto& v : videos) {
        total += segments_for_frames(v.frame_count, segment_len);
    }
    return total;
}

std::size_t segments_for_frames(std::size_t frame_count, std::size_t segment_len) {
    return (frame_count + segment_len - 1) / segment_len;
}

void validate(const Manifest& m, std::size_t n_segments) {
    if (m.segment_len == 0) {
        throw DataError("manifest: segment_len must be positive");
    }
    std::size_t expected_offset = 0;
    for (const auto& v : m.videos) {
        if (v.frame_count == 0) {
            throw DataError("manifest: video '" + v.video_id + "' has no frames");
        }
        if (v.segment_offset != expected_offset) {
            throw DataError("manifest: video '" + v.video_id +
                            "' does not start where the previous video ends");
        }
        if (v.segment_count != segments_for_frames(v.frame_count, m.segment_len)) {
            std::ostringstream msg;
            msg << "manifest: video '" << v.video_id << "' lists " << v.segment_count
                << " segments but " << v.frame_count << " frames need "
                << segments_for_frames(v.frame_count, m.segment_len);
            throw DataError(msg.str());
        }
        if (v.labels && v.labels->size() != v.frame_count) {
            throw DataError("manifest: video '" + v.video_id +
                            "' label count differs from frame_count");
        }
        if (v.labels) {
            for (auto l : *v.labels) {
                if (l > 1) {
                    throw DataError("manifest: video '" + v.video_id + "' has a non-binary label");
                }
            }
        }
        expected_offset += v.segment_count;
    }
    if (expected_offset != n_segments) {
        std::ostringstream msg;
        msg << "manifest covers " << expected_offset << " segments but the feature file has "
            << n_segments;
        throw DataError(msg.str());
    }
}

void validate(const FeatureSet& fs) { validate(fs.manifest, fs.size()); }

void save_features(const std::filesystem::path& path, const Tensor<float>& features) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(kFeatureMagic, 4);
    put_le<std::uint16_t>(out, kFeatureVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(features.cols()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(features.rows()));
    for (Eigen::Index i = 0; i < features.size(); ++i) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(features.data()[i]));
    }
    if (!out) {
        throw DataError("write failed for " + path.string());
    }
}

Tensor<float> load_features_tensor(const std::filesystem::path& path) {
    const auto bytes = read_all(path);
    constexpr std::size_t header = 4 + 2 + 4 + 8;
    if (bytes.size() < header) {
        throw DataError(path.string() + ": truncated header");
    }
    if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
        throw DataError(path.string() + ": bad magic (expected VADF)");
    }
    const auto version = get_le<std::uint16_t>(bytes.data() + 4);
    if (version != kFeatureVersion) {
        throw DataError(path.string() + ": unsupported version " + std::to_string(version));
    }
    const auto dim = get_le<std::uint32_t>(bytes.data() + 6);
    const auto count = get_le<std::uint64_t>(bytes.data() + 10);
    if (dim == 0) {
        throw DataError(path.string() + ": zero feature dimension");
    }
    const std::uint64_t payload = static_cast<std::uint64_t>(dim) * count * 4;
    if (bytes.size() - header < payload) {
        std::ostringstream msg;
        msg << path.string() << ": truncated payload (" << bytes.size() - header << " of "
            << payload << " bytes)";
        throw DataError(msg.str());
    }
    if (bytes.size() - header > payload) {
        throw DataError(path.string() + ": trailing bytes after payload");
    }
    Tensor<float> features(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    const unsigned char* p = bytes.data() + header;
    for (Eigen::Index i = 0; i < features.size(); ++i, p += 4) {
        features.data()[i] = std::bit_cast<float>(get_le<std::uint32_t>(p));
    }
    return features;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    json videos = json::array();
    for (const auto& v : manifest.videos) {
        json j = {{"video_id", v.video_id},
                  {"frame_count", v.frame_count},
                  {"segment_offset", v.segment_offset},
                  {"segment_count", v.segment_count}};
        if (v.labels) {
            j["labels"] = *v.labels;
        }
        videos.push_back(std::move(j));
    }
    const json doc = {{"version", kManifestVersion},
                      {"segment_len", manifest.segment_len},
                      {"videos", std::move(videos)}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << doc.dump() << '\n';
}

Manifest load_manifest(const std::filesystem::path& path, LabelPolicy policy) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    Manifest m;
    try {
        const json doc = json::parse(in);
        const int version = doc.at("version").get<int>();
        if (version != kManifestVersion) {
            throw DataError(path.string() + ": unsupported manifest version " +
                            std::to_string(version));
        }
        m.segment_len = doc.value("segment_len", kDefaultSegmentLen);
        for (const auto& j : doc.at("videos")) {
            VideoRecord v;
            v.video_id = j.at("video_id").get<std::string>();
            v.frame_count = j.at("frame_count").get<std::size_t>();
            v.segment_offset = j.at("segment_offset").get<std::size_t>();
            v.segment_count = j.at("segment_count").get<std::size_t>();
            if (policy == LabelPolicy::Keep && j.contains("labels")) {
                v.labels = j.at("labels").get<std::vector<std::uint8_t>>();
            }
            m.videos.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": malformed manifest: " + e.what());
    }
    return m;
}

void save_feature_set(const std::filesystem::path& features_path,
                      const std::filesystem::path& manifest_path, const FeatureSet& fs) {
    validate(fs);
    save_features(features_path, fs.features);
    save_manifest(manifest_path, fs.manifest);
}

FeatureSet load_feature_set(const std::filesystem::path& features_path,
                            const std::filesystem::path& manifest_path, LabelPolicy policy) {
    FeatureSet fs{load_features_tensor(features_path), load_manifest(manifest_path, policy)};
    validate(fs);
    return fs;
}

DataStats estimate_sigma_data(const Tensor<float>& features, bool center) {
    if (features.size() < 2 || (center && features.rows() < 2)) {
        throw DataError("estimate_sigma_data: need at least two values (two rows when centering)");
    }
    DataStats stats;
    const auto rows = features.rows();
    const auto cols = features.cols();
    if (center) {
        stats.means.assign(static_cast<std::size_t>(cols), 0.0);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                stats.means[static_cast<std::size_t>(j)] += features(i, j);
            }
        }
        for (auto& m : stats.means) {
            m /= static_cast<double>(rows);
        }
    }
    const double n = static_cast<double>(features.size());
    double pooled_mean = 0.0;
    if (!center) {
        pooled_mean = total_sum<float>(features) / n;
    }
    double ss = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            const double offset = center ? stats.means[static_cast<std::size_t>(j)] : pooled_mean;
            const double d = static_cast<double>(features(i, j)) - offset;
            ss += d * d;
        }
    }
    stats.sigma_data = std::sqrt(ss / n);
    if (!(stats.sigma_data > 0.0) || !std::isfinite(stats.sigma_data)) {
        throw NumericError("estimate_sigma_data: features have zero (or non-finite) spread");
    }
    return stats;
}

Tensor<float> apply_centering(const Tensor<float>& features, const DataStats& stats) {
    if (!stats.centered()) {
        return features;
    }
    if (stats.means.size() != static_cast<std::size_t>(features.cols())) {
        throw DataError("apply_centering: mean vector does not match feature dimension");
    }
    Tensor<float> out = features;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            out(i, j) = static_cast<float>(out(i, j) - stats.means[static_cast<std::size_t>(j)]);
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   bool shuffle, Rng& rng) {
    if (batch_size == 0) {
        throw UsageError("make_batches: batch_size must be positive");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    if (shuffle) {
        for (std::size_t i = n; i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
            std::swap(order[i - 1], order[j]);
        }
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return batches;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<float>& source, const std::vector<std::size_t>& rows) {
    Tensor<T> out(static_cast<Eigen::Index>(rows.size()), source.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) =
            source.row(static_cast<Eigen::Index>(rows[i])).template cast<T>();
    }
    return out;
}

template Tensor<float> gather_rows<float>(const Tensor<float>&, const std::vector<std::size_t>&);
template Tensor<double> gather_rows<double>(const Tensor<float>&, const std::vector<std::size_t>&);

void SynthConfig::validate() const {
    if (dim == 0 || segment_len == 0) {
        throw UsageError("synth: dim and segment_len must be positive");
    }
    if (n_normal + n_anomalous == 0) {
        throw UsageError("synth: at least one segment is required");
    }
    if (n_anomalous > n_normal) {
        throw UsageError("synth: anomalies must not outnumber normal segments");
    }
    if (min_video_segments == 0 || min_video_segments > max_video_segments) {
        throw UsageError("synth: invalid video length range");
    }
    if (min_anomaly_run == 0 || min_anomaly_run > max_anomaly_run) {
        throw UsageError("synth: invalid anomaly run range");
    }
    if (!(normal_std > 0.0) || !(anomaly_std > 0.0) || !std::isfinite(shift)) {
        throw UsageError("synth: invalid distribution parameters");
    }
}

FeatureSet synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng layout = Rng::for_stream(cfg.seed, Stream::SynthLayout);
    auto draw = [&layout](std::size_t lo, std::size_t hi) {
        return static_cast<std::size_t>(
            layout.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    };

    // Segment kinds (0 normal, 1 anomalous) for every video, in row order.
    std::vector<std::vector<std::uint8_t>> kinds;
    std::vector<std::size_t> frame_counts;
    std::size_t normal_left = cfg.n_normal;
    std::size_t anomalous_left = cfg.n_anomalous;
    while (normal_left + anomalous_left > 0) {
        const std::size_t length = draw(cfg.min_video_segments, cfg.max_video_segments);
        std::size_t run = 0;
        const bool carries_anomaly = anomalous_left > 0 && (kinds.size() % 2 == 1 || normal_left == 0);
        if (carries_anomaly) {
            run = std::min(anomalous_left, draw(cfg.min_anomaly_run, cfg.max_anomaly_run));
        }
        const std::size_t normal = std::min(normal_left, length > run ? length - run : 0);
        const std::size_t position = draw(0, normal);
        std::vector<std::uint8_t> video(normal + run, 0);
        std::fill_n(video.begin() + static_cast<std::ptrdiff_t>(position), run, 1);
        normal_left -= normal;
        anomalous_left -= run;
        const std::size_t trim = draw(0, cfg.segment_len - 1);
        frame_counts.push_back(video.size() * cfg.segment_len - trim);
        kinds.push_back(std::move(video));
    }

    const std::size_t total = cfg.n_normal + cfg.n_anomalous;
    const auto dim = static_cast<Eigen::Index>(cfg.dim);
    Rng feat = Rng::for_stream(cfg.seed, Stream::SynthFeatures);
    RowVector<double> direction(dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
        direction[j] = feat.normal();
    }
    const RowVector<double> offset = direction.normalized() * cfg.shift * cfg.normal_std *
                                     std::sqrt(static_cast<double>(cfg.dim));

    FeatureSet fs;
    fs.features.resize(static_cast<Eigen::Index>(total), dim);
    fs.manifest.segment_len = cfg.segment_len;
    Eigen::Index row = 0;
    for (std::size_t v = 0; v < kinds.size(); ++v) {
        VideoRecord rec;
        rec.video_id = "synth_" + std::to_string(v);
        rec.frame_count = frame_counts[v];
        rec.segment_offset = static_cast<std::size_t>(row);
        rec.segment_count = kinds[v].size();
        for (std::uint8_t kind : kinds[v]) {
            for (Eigen::Index j = 0; j < dim; ++j) {
                const double z = feat.normal();
                fs.features(row, j) = static_cast<float>(
                    kind != 0 ? offset[j] + cfg.anomaly_std * z : cfg.normal_std * z);
            }
            ++row;
        }
        if (cfg.with_labels) {
            std::vector<std::uint8_t> labels(rec.frame_count);
            for (std::size_t f = 0; f < rec.frame_count; ++f) {
                labels[f] = kinds[v][f / cfg.segment_len];
            }
            rec.labels = std::move(labels);
        }
        fs.manifest.videos.push_back(std::move(rec));
    }
    return fs;
}

std::vector<std::uint8_t> segment_labels(const Manifest& m) {
    std::vector<std::uint8_t> out;
    for (const auto& v : m.videos) {
        if (!v.labels) {
            throw DataError("segment_labels: video '" + v.video_id + "' has no labels");
        }
        for (std::size_t s = 0; s < v.segment_count; ++s) {
            std::uint8_t any = 0;
            const std::size_t stop = std::min(v.frame_count, (s + 1) * m.segment_len);
            for (std::size_t f = s * m.segment_len; f < stop; ++f) {
                any |= (*v.labels)[f];
            }
            out.push_back(any);
        }
    }
    return out;
}

}  // namespace vad
