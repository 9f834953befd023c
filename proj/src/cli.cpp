#include "vad/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vad/eval.hpp"
#include "vad/pipeline.hpp"

namespace vad {

namespace {

namespace fs = std::filesystem;

std::atomic<bool> g_interrupted{false};

extern "C" void on_sigint(int) { g_interrupted.store(true); }

struct CommonOptions {
    std::string features;
    std::string manifest;
    std::string checkpoint;
    std::string out;
    std::uint64_t seed = 0;
};

struct TrainFlags {
    FitConfig fit;
    std::vector<std::size_t> encoder{1024, 512, 256};
    std::vector<std::size_t> decoder{256, 512, 1024};
    std::string activation = "silu";
    std::string log;
};

struct ScheduleFlags {
    ScheduleOptions schedule;
    std::optional<std::size_t> start_t;
    double k = 1.0;
    std::size_t batch_size = 8192;
    std::size_t order = kDefaultLmsOrder;
    std::string weights = "ema";
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--p-mean", f.fit.noise.p_mean, "Mean of ln(sigma) during training")
        ->capture_default_str();
    cmd->add_option("--p-std", f.fit.noise.p_std, "Std of ln(sigma) during training")
        ->capture_default_str();
    cmd->add_option("--batch-size", f.fit.batch_size)->capture_default_str();
    cmd->add_option("--epochs", f.fit.epochs)->capture_default_str()->check(
        CLI::Range(std::size_t{1}, kMaxEpochs));
    cmd->add_option("--lr", f.fit.optimizer.base_lr, "Initial learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", f.fit.optimizer.weight_decay)->capture_default_str();
    cmd->add_option("--inv-gamma", f.fit.optimizer.inv_gamma)->capture_default_str();
    cmd->add_option("--inv-power", f.fit.optimizer.power)->capture_default_str();
    cmd->add_option("--ema-decay", f.fit.optimizer.ema_decay)->capture_default_str();
    cmd->add_flag("--center", f.fit.center, "Subtract per-dimension means before training");
    cmd->add_option("--embed-dim", f.fit.network.embed_dim)->capture_default_str();
    cmd->add_option("--encoder-widths", f.encoder)->capture_default_str()->delimiter(',');
    cmd->add_option("--decoder-widths", f.decoder)->capture_default_str()->delimiter(',');
    cmd->add_option("--activation", f.activation)
        ->capture_default_str()
        ->check(CLI::IsMember({"silu", "relu", "tanh"}));
}

void finish_train_flags(TrainFlags& f, std::uint64_t seed) {
    f.fit.network.encoder_widths = f.encoder;
    f.fit.network.decoder_widths = f.decoder;
    f.fit.network.activation = parse_activation(f.activation);
    f.fit.seed = seed;
}

void add_schedule_flags(CLI::App* cmd, ScheduleFlags& f, bool with_t_and_k) {
    cmd->add_option("--steps", f.schedule.steps, "Number of sampling steps T")
        ->capture_default_str();
    cmd->add_option("--rho", f.schedule.rho)->capture_default_str();
    cmd->add_option("--sigma-min", f.schedule.sigma_min, "Override the schedule's lower bound");
    cmd->add_option("--sigma-max", f.schedule.sigma_max, "Override the schedule's upper bound");
    cmd->add_option("--lms-order", f.order)->capture_default_str();
    cmd->add_option("--weights", f.weights, "Which weights to score with")
        ->capture_default_str()
        ->check(CLI::IsMember({"ema", "raw"}));
    if (with_t_and_k) {
        cmd->add_option("--start-t", f.start_t, "Start index t of the reverse process (default T-1)");
        cmd->add_option("--k", f.k, "Threshold sensitivity")->capture_default_str();
        cmd->add_option("--batch-size", f.batch_size)->capture_default_str();
    }
}

ScoreSettings settings_for(const ScheduleFlags& f, std::size_t start_t, double k,
                           std::uint64_t seed) {
    ScoreSettings s;
    s.schedule = f.schedule;
    s.scoring.start_index = start_t;
    s.scoring.k = k;
    s.scoring.batch_size = f.batch_size;
    s.scoring.lms_order = f.order;
    s.use_ema = f.weights == "ema";
    s.seed = seed;
    return s;
}

void check_start(std::size_t t, std::size_t steps) {
    if (t >= steps) {
        throw UsageError("--start-t " + std::to_string(t) + " must be below --steps " +
                         std::to_string(steps));
    }
}

void write_train_log(const fs::path& path, const std::vector<EpochLog>& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "epoch,step,lr,mean_loss\n";
    for (const auto& e : log) {
        out << e.epoch << ',' << e.step << ',' << format_real(e.lr) << ','
            << format_real(e.mean_loss) << '\n';
    }
}

void require_path(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw UsageError(std::string(flag) + " is required");
    }
}

// ---- commands ----

int cmd_synth(const CommonOptions& c, SynthConfig cfg, std::optional<double> anomaly_fraction,
              std::ostream& out) {
    if (anomaly_fraction) {
        if (*anomaly_fraction < 0.0 || *anomaly_fraction > 0.5) {
            throw UsageError("--anomaly-fraction must lie in [0, 0.5]");
        }
        const std::size_t total = cfg.n_normal + cfg.n_anomalous;
        cfg.n_anomalous = static_cast<std::size_t>(
            std::llround(*anomaly_fraction * static_cast<double>(total)));
        cfg.n_normal = total - cfg.n_anomalous;
    }
    cfg.seed = c.seed;
    const std::string prefix = c.out.empty() ? "synth" : c.out;
    const fs::path features = c.features.empty() ? fs::path(prefix + ".vadf") : fs::path(c.features);
    const fs::path manifest =
        c.manifest.empty() ? fs::path(prefix + ".json") : fs::path(c.manifest);
    const FeatureSet set = synth_generate(cfg);
    save_feature_set(features, manifest, set);
    out << "wrote " << set.size() << " segments of dim " << set.dim() << " in "
        << set.manifest.videos.size() << " videos to " << features.string() << " and "
        << manifest.string() << '\n';
    return kExitOk;
}

int cmd_train(const CommonOptions& c, TrainFlags f, std::ostream& out) {
    require_path(c.features, "--features");
    require_path(c.manifest, "--manifest");
    require_path(c.checkpoint, "--checkpoint");
    finish_train_flags(f, c.seed);
    f.fit.validate();
    f.fit.network.validate();
    const FeatureSet data = load_feature_set(c.features, c.manifest, LabelPolicy::Drop);
    out << "train: segments=" << data.size() << " dim=" << data.dim()
        << " p_mean=" << f.fit.noise.p_mean << " p_std=" << f.fit.noise.p_std
        << " lr=" << f.fit.optimizer.base_lr << " weight_decay=" << f.fit.optimizer.weight_decay
        << " ema_decay=" << f.fit.optimizer.ema_decay << " batch_size=" << f.fit.batch_size
        << " epochs=" << f.fit.epochs << " seed=" << c.seed << '\n';
    std::vector<EpochLog> log;
    const Checkpoint ckpt = train_model(data.features, f.fit, [&](const EpochLog& e) {
        log.push_back(e);
        out << "epoch " << e.epoch << " step " << e.step << " lr " << e.lr << " loss "
            << e.mean_loss << '\n';
    });
    save_checkpoint(c.checkpoint, ckpt);
    write_train_log(f.log.empty() ? c.checkpoint + ".log.csv" : f.log, log);
    return kExitOk;
}

int cmd_score(const CommonOptions& c, const ScheduleFlags& f, std::ostream& out) {
    const std::size_t t = f.start_t.value_or(f.schedule.steps - 1);
    check_start(t, f.schedule.steps);
    require_path(c.checkpoint, "--checkpoint");
    require_path(c.features, "--features");
    require_path(c.manifest, "--manifest");
    require_path(c.out, "--out");
    const Checkpoint ckpt = load_checkpoint(c.checkpoint);
    const FeatureSet data = load_feature_set(c.features, c.manifest, LabelPolicy::Drop);
    const DatasetScores scores =
        score_model(ckpt, data.features, data.manifest, settings_for(f, t, f.k, c.seed));
    write_scores_csv(c.out, scores.segments);
    const auto flagged = std::count_if(scores.segments.begin(), scores.segments.end(),
                                       [](const SegmentScore& s) { return s.flagged; });
    out << "scored " << scores.segments.size() << " segments in " << scores.batches.size()
        << " batches, flagged " << flagged << '\n';
    return kExitOk;
}

int cmd_eval(const std::string& scores_path, const std::string& manifest_path,
             const std::string& out_path, const std::string& frame_path, std::ostream& out) {
    require_path(scores_path, "--scores");
    require_path(manifest_path, "--manifest");
    const Manifest manifest = load_manifest(manifest_path, LabelPolicy::Keep);
    if (!manifest.has_labels()) {
        throw DataError("eval: manifest " + manifest_path + " carries no frame labels");
    }
    const EvalReport report = evaluate(read_scores_csv(scores_path), manifest);
    nlohmann::json doc = report_to_json(report);
    doc["config"] = {{"scores", scores_path},
                     {"manifest", manifest_path},
                     {"segment_len", manifest.segment_len}};
    out << doc.dump(2) << '\n';
    if (!out_path.empty()) {
        std::ofstream f(out_path, std::ios::trunc);
        if (!f) {
            throw DataError("cannot write " + out_path);
        }
        f << doc.dump(2) << '\n';
    }
    if (!frame_path.empty()) {
        write_frame_csv(frame_path, report);
    }
    return kExitOk;
}

struct SweepFlags {
    std::vector<double> p_means{-1.2};
    std::vector<double> p_stds{1.2};
    std::vector<std::size_t> starts;
    std::vector<double> ks{0.1, 0.3, 0.5, 0.7, 1.0};
};

int cmd_sweep(const CommonOptions& c, TrainFlags tf, const ScheduleFlags& sf, SweepFlags grid,
              std::ostream& out) {
    require_path(c.features, "--features");
    require_path(c.manifest, "--manifest");
    require_path(c.out, "--out");
    if (grid.starts.empty()) {
        grid.starts = {sf.schedule.steps - 1};
    }
    if (grid.p_means.empty() || grid.p_stds.empty() || grid.ks.empty()) {
        throw UsageError("sweep: every grid list must be non-empty");
    }
    for (std::size_t t : grid.starts) {
        check_start(t, sf.schedule.steps);
    }
    finish_train_flags(tf, c.seed);
    tf.fit.network.validate();

    const FeatureSet train_view = load_feature_set(c.features, c.manifest, LabelPolicy::Drop);
    const Manifest labelled = load_manifest(c.manifest, LabelPolicy::Keep);
    if (!labelled.has_labels()) {
        throw DataError("sweep: manifest carries no frame labels");
    }

    std::ofstream csv(c.out, std::ios::trunc);
    if (!csv) {
        throw DataError("cannot write " + c.out);
    }
    csv << "p_mean,p_std,t,k,auc,flag_auc,flagged,best_t\n" << std::flush;

    g_interrupted.store(false);
    auto previous = std::signal(SIGINT, on_sigint);
    bool interrupted = false;
    for (double p_mean : grid.p_means) {
        for (double p_std : grid.p_stds) {
            if (g_interrupted.load()) break;
            FitConfig fit = tf.fit;
            fit.noise = TrainNoiseConfig{p_mean, p_std};
            out << "sweep: training p_mean=" << p_mean << " p_std=" << p_std << '\n';
            const Checkpoint ckpt = train_model(train_view.features, fit);
            std::map<double, std::pair<std::size_t, EvalReport>> best;  // per k
            for (std::size_t t : grid.starts) {
                if (g_interrupted.load()) break;
                const DatasetScores scores =
                    score_model(ckpt, train_view.features, train_view.manifest,
                                settings_for(sf, t, grid.ks.front(), c.seed));
                for (double k : grid.ks) {
                    const DatasetScores at_k = rethreshold(scores, k);
                    const EvalReport report = evaluate(at_k.segments, labelled);
                    csv << format_real(p_mean) << ',' << format_real(p_std) << ',' << t << ','
                        << format_real(k) << ',' << format_real(report.auc) << ','
                        << format_real(report.flag_auc) << ',' << report.flagged_frames << ",\n"
                        << std::flush;
                    auto it = best.find(k);
                    if (it == best.end() || report.auc > it->second.second.auc) {
                        best[k] = {t, report};
                    }
                }
            }
            for (double k : grid.ks) {
                auto it = best.find(k);
                if (it == best.end()) continue;
                const EvalReport& r = it->second.second;
                csv << format_real(p_mean) << ',' << format_real(p_std) << ",best,"
                    << format_real(k) << ',' << format_real(r.auc) << ','
                    << format_real(r.flag_auc) << ',' << r.flagged_frames << ','
                    << it->second.first << '\n'
                    << std::flush;
            }
        }
    }
    interrupted = g_interrupted.load();
    std::signal(SIGINT, previous);
    if (interrupted) {
        out << "sweep: interrupted, partial results kept in " << c.out << '\n';
        return kExitInterrupted;
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Unsupervised video anomaly scoring by diffusion reconstruction", "vad"};
    app.set_config("--config", "", "INI/TOML file with option defaults (flags win)");
    app.require_subcommand(1);

    CommonOptions common;
    auto add_common = [&common](CLI::App* cmd, bool features, bool manifest, bool checkpoint,
                                bool out_path) {
        if (features) cmd->add_option("--features", common.features, "VADF feature file");
        if (manifest) cmd->add_option("--manifest", common.manifest, "JSON manifest");
        if (checkpoint) cmd->add_option("--checkpoint", common.checkpoint, "VADW checkpoint");
        if (out_path) cmd->add_option("--out", common.out, "Output path");
        cmd->add_option("--seed", common.seed, "Master random seed")->capture_default_str();
    };

    SynthConfig synth_cfg;
    std::optional<double> anomaly_fraction;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic feature set and manifest");
    add_common(synth, true, true, false, true);
    synth->add_option("--n-normal", synth_cfg.n_normal)->capture_default_str();
    synth->add_option("--n-anomalous", synth_cfg.n_anomalous)->capture_default_str();
    synth->add_option("--anomaly-fraction", anomaly_fraction,
                      "Share of anomalous segments (keeps the total)");
    synth->add_option("--dim", synth_cfg.dim)->capture_default_str();
    synth->add_option("--shift", synth_cfg.shift, "RMS per-dimension anomaly offset")
        ->capture_default_str();
    synth->add_option("--segment-len", synth_cfg.segment_len)->capture_default_str();

    TrainFlags train_flags;
    auto* train = app.add_subcommand("train", "Train the denoiser on unlabeled features");
    add_common(train, true, true, true, false);
    add_train_flags(train, train_flags);
    train->add_option("--log", train_flags.log, "Training log CSV (default <checkpoint>.log.csv)");

    ScheduleFlags score_flags;
    auto* score = app.add_subcommand("score", "Score segments by reconstruction error");
    add_common(score, true, true, true, true);
    add_schedule_flags(score, score_flags, true);
    score->add_option("--p-mean", score_flags.schedule.p_mean,
                      "Override the checkpoint's P_mean for the schedule bounds");
    score->add_option("--p-std", score_flags.schedule.p_std,
                      "Override the checkpoint's P_std for the schedule bounds");

    std::string scores_path;
    std::string frame_path;
    auto* eval = app.add_subcommand("eval", "Frame-level ROC-AUC of a score CSV");
    eval->add_option("--scores", scores_path, "Score CSV from `score`");
    eval->add_option("--manifest", common.manifest, "Labelled manifest");
    eval->add_option("--out", common.out, "JSON report path");
    eval->add_option("--frame-scores", frame_path, "Optional per-frame CSV");

    TrainFlags sweep_train;
    ScheduleFlags sweep_sched;
    SweepFlags grid;
    auto* sweep = app.add_subcommand("sweep", "Grid over P_mean, P_std, t and k");
    add_common(sweep, true, true, false, true);
    add_train_flags(sweep, sweep_train);
    add_schedule_flags(sweep, sweep_sched, false);
    sweep->add_option("--score-batch-size", sweep_sched.batch_size)->capture_default_str();
    sweep->add_option("--p-means", grid.p_means)->delimiter(',')->capture_default_str();
    sweep->add_option("--p-stds", grid.p_stds)->delimiter(',')->capture_default_str();
    sweep->add_option("--starts", grid.starts, "Start indices t (default T-1)")->delimiter(',');
    sweep->add_option("--ks", grid.ks)->delimiter(',')->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(common, synth_cfg, anomaly_fraction, out);
        if (*train) return cmd_train(common, train_flags, out);
        if (*score) return cmd_score(common, score_flags, out);
        if (*eval) return cmd_eval(scores_path, common.manifest, common.out, frame_path, out);
        if (*sweep) return cmd_sweep(common, sweep_train, sweep_sched, grid, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace vad
