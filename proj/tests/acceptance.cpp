// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "vad/cli.hpp"
#include "vad/eval.hpp"
#include "vad/network.hpp"
#include "vad/pipeline.hpp"
#include "vad/sampler.hpp"
#include "vad/scoring.hpp"
#include "vad/training.hpp"

namespace fs = std::filesystem;
using namespace vad;

namespace {

// Tolerances and budgets.
constexpr double kPrecondTol = 1e-12;
constexpr double kScheduleTol = 1e-10;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradFloor = 1e-8;
constexpr double kOdeRelTol = 0.01;
constexpr double kOdeRoundingTol = 1e-12;
constexpr double kAucTol = 1e-12;
constexpr double kFlagFraction = 0.158655;
constexpr double kFlagFractionTol = 0.01;
constexpr double kAucShifted = 0.85;
constexpr double kAucNullLo = 0.45;
constexpr double kAucNullHi = 0.55;
constexpr double kBoundsTol = 1e-12;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    if (code != 0) std::cerr << err.str();
    return code;
}

Outcome preconditioning_identity() {
    double worst = 0.0;
    for (double sd : {0.25, 0.5, 1.0, 2.0}) {
        const Preconditioner p(sd);
        for (int i = 0; i < 1000; ++i) {
            const double sigma = std::pow(10.0, -4.0 + 7.0 * i / 999.0);
            const double c_out = p.scalings(sigma).c_out;
            worst = std::max(worst, std::abs(loss_weight(p, sigma) * c_out * c_out - 1.0));
        }
    }
    return {worst <= kPrecondTol, "max |lambda c_out^2 - 1| = " + fmt(worst)};
}

Outcome schedule_exactness() {
    const auto s = karras_schedule(ScheduleConfig{10, 0.02, 80.0, 7.0});
    bool ok = s.sigmas.size() == 11 && s[0] == 80.0 && s[9] == 0.02 && s[10] == 0.0;
    for (std::size_t i = 0; i + 1 < s.sigmas.size(); ++i) ok = ok && s[i] > s[i + 1];
    const double ref = oracle::karras_sigma(0.02, 80.0, 7.0, 5, 10);
    const double err = std::abs(s[5] - ref);
    return {ok && err <= kScheduleTol, "sigma_5 = " + fmt(s[5]) + ", |err| = " + fmt(err)};
}

Outcome gradient_check() {
    NetworkConfig c;
    c.input_dim = 16;
    c.encoder_widths = {2, 2};
    c.decoder_widths = {2, 2};
    c.embed_dim = 4;
    auto params = init_params<double>(c, 17);
    Rng rng(18);
    for (Tensor<double>* t : params.trainable()) {
        *t += gaussian<double>(rng, t->rows(), t->cols()) * 0.3;
    }
    const Preconditioner pre(0.8);
    const auto x = gaussian<double>(rng, 12, 16);
    const auto eps = gaussian<double>(rng, 12, 16);
    std::vector<double> sigmas;
    for (int i = 0; i < 12; ++i) sigmas.push_back(std::exp(-4.0 + 0.7 * i));
    const auto res = dsm_loss_with_noise(params, pre, x, sigmas, eps);
    auto tensors = params.trainable();
    const auto grads = res.grads.trainable();
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        Tensor<double>& w = *tensors[t];
        for (Eigen::Index k = 0; k < w.size(); ++k) {
            const double orig = w.data()[k];
            const double h = 1e-6 * std::max(1.0, std::abs(orig));
            w.data()[k] = orig + h;
            const double up = dsm_loss_with_noise(params, pre, x, sigmas, eps).loss;
            w.data()[k] = orig - h;
            const double down = dsm_loss_with_noise(params, pre, x, sigmas, eps).loss;
            w.data()[k] = orig;
            const double fd = (up - down) / (2.0 * h);
            const double an = grads[t]->data()[k];
            const double denom = std::max({std::abs(fd), std::abs(an), kGradFloor});
            worst = std::max(worst, std::abs(an - fd) / denom);
            ++checked;
        }
    }
    return {worst <= kGradRelTol, std::to_string(checked) + " entries, max rel err = " + fmt(worst)};
}

Outcome ode_solver() {
    // Order one against a hand-written Euler loop, bit for bit.
    const auto sched = karras_schedule(ScheduleConfig{});
    NetworkConfig c;
    c.input_dim = 8;
    c.encoder_widths = {16};
    c.decoder_widths = {16};
    c.embed_dim = 8;
    auto params = init_params<double>(c, 3);
    Rng rng(4);
    for (Tensor<double>* t : params.trainable()) *t += gaussian<double>(rng, t->rows(), t->cols()) * 0.2;
    const auto den = make_denoiser(params, Preconditioner(1.0));
    const auto x0 = gaussian<double>(rng, 32, 8);
    Tensor<double> euler = x0 * sched[0];
    const Tensor<double> start = euler;
    for (std::size_t i = 0; i < sched.steps(); ++i) {
        const Tensor<double> d = ode_derivative(den, euler, sched[i]);
        euler += static_cast<double>(sched[i + 1] - sched[i]) * d;
    }
    const bool bitwise = lms_sample(den, sched, start, 0, 1) == euler;

    // dx/dsigma = x / sigma (D = 0): x(sigma) = x0 sigma / sigma0, checked at every schedule point.
    const DenoiserFn<double> zero = [](const Tensor<double>& x, double) {
        return Tensor<double>(Tensor<double>::Zero(x.rows(), x.cols()));
    };
    auto trajectory_error = [&](std::size_t steps) {
        const auto s = karras_schedule(ScheduleConfig{steps, 0.02, 80.0, 7.0});
        Tensor<double> y(1, 1);
        y << 1.0;
        double worst = 0.0;
        for (std::size_t t = 1; t <= steps; ++t) {
            // Integrate from sigma_0 to sigma_t by truncating the schedule.
            NoiseSchedule part;
            part.sigmas.assign(s.sigmas.begin(), s.sigmas.begin() + static_cast<long>(t) + 1);
            const double exact = s[t] / s[0];
            const double got = lms_sample(zero, part, y, 0)(0, 0);
            // Relative error, or absolute at the final sigma = 0.
            const double err = exact > 0.0 ? std::abs(got - exact) / exact : std::abs(got);
            worst = std::max(worst, err);
        }
        return worst;
    };
    const double e10 = trajectory_error(10);
    const double e20 = trajectory_error(20);
    const bool ok = bitwise && e10 <= kOdeRelTol && e20 <= e10 + kOdeRoundingTol;
    return {ok, std::string("order-1 == Euler: ") + (bitwise ? "yes" : "no") + ", T=10 max rel err = " +
                    fmt(e10) + ", T=20 = " + fmt(e20)};
}

Outcome auc_oracle() {
    Rng rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(2, 500));
        const auto levels = rng.uniform_int(1, 40);
        std::vector<double> scores(n);
        std::vector<std::uint8_t> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = static_cast<double>(rng.uniform_int(0, levels));
            labels[i] = static_cast<std::uint8_t>(rng.uniform() < 0.3 ? 1 : 0);
        }
        labels[0] = 0;
        labels[1] = 1;
        worst = std::max(worst, std::abs(roc_auc(scores, labels) - oracle::pairwise_auc(scores, labels)));
    }
    return {worst <= kAucTol, "max |rank - pairwise| = " + fmt(worst)};
}

Outcome threshold_semantics() {
    const auto d = decide({1, 2, 3, 4, 10}, 1.0);
    const bool example = d.flags == std::vector<std::uint8_t>{0, 0, 0, 0, 1};
    Rng rng(6);
    std::vector<double> l(100000);
    for (auto& x : l) x = rng.normal();
    const auto g = decide(l, 1.0);
    double frac = 0.0;
    for (auto f : g.flags) frac += f;
    frac /= static_cast<double>(l.size());
    bool monotone = true;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> b(static_cast<std::size_t>(rng.uniform_int(2, 400)));
        for (auto& x : b) x = std::exp(rng.normal());
        std::vector<std::uint8_t> prev(b.size(), 1);
        for (double k = -2.0; k <= 4.0; k += 0.1) {
            const auto fl = decide(b, k).flags;
            for (std::size_t i = 0; i < b.size(); ++i) monotone = monotone && fl[i] <= prev[i];
            prev = fl;
        }
    }
    const bool ok = example && std::abs(frac - kFlagFraction) <= kFlagFractionTol && monotone;
    return {ok, std::string("example ") + (example ? "ok" : "wrong") + ", flagged fraction = " + fmt(frac) +
                    ", monotone " + (monotone ? "yes" : "no")};
}

struct SyntheticRun {
    double auc_default = 0.0;
    double auc_diagnostic = 0.0;  // same model, start index kDiagnosticStart
};

constexpr std::size_t kAcceptanceEpochs = 20;
constexpr std::size_t kDiagnosticStart = 4;

SyntheticRun synthetic_auc(double shift, std::uint64_t seed) {
    SynthConfig sc;
    sc.shift = shift;
    sc.seed = seed;
    const FeatureSet data = synth_generate(sc);
    FitConfig fc;
    fc.epochs = kAcceptanceEpochs;
    fc.seed = seed;
    const Checkpoint ckpt = train_model(data.features, fc);
    ScoreSettings ss;
    ss.seed = seed;
    const Manifest layout = data.manifest.without_labels();
    SyntheticRun out;
    out.auc_default = evaluate(score_model(ckpt, data.features, layout, ss).segments, data.manifest).auc;
    ss.scoring.start_index = kDiagnosticStart;
    out.auc_diagnostic = evaluate(score_model(ckpt, data.features, layout, ss).segments, data.manifest).auc;
    return out;
}

Outcome synthetic_experiment() {
    const SyntheticRun shifted = synthetic_auc(3.0, 1);
    const SyntheticRun null = synthetic_auc(0.0, 2);
    const bool ok = shifted.auc_default >= kAucShifted && null.auc_default >= kAucNullLo &&
                    null.auc_default <= kAucNullHi;
    return {ok, "default t: AUC shift 3 = " + fmt(shifted.auc_default) + ", shift 0 = " +
                    fmt(null.auc_default) + " (t=" + std::to_string(kDiagnosticStart) + ": " +
                    fmt(shifted.auc_diagnostic) + ", " + fmt(null.auc_diagnostic) + ")"};
}

Outcome noise_bounds_formula() {
    Rng rng(7);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double pm = -4.0 + 6.0 * rng.uniform();
        const double ps = 0.05 + 2.0 * rng.uniform();
        const auto [lo, hi] = noise_bounds(TrainNoiseConfig{pm, ps});
        worst = std::max({worst, std::abs((std::log(hi) - pm) - 5.0 * ps),
                          std::abs((pm - std::log(lo)) - 5.0 * ps)});
    }
    // Path (a): bounds derived from the default training noise.
    const ScheduleConfig derived = ScheduleOptions{}.resolve(TrainNoiseConfig{});
    const bool derived_ok = std::abs(derived.sigma_min - 7.4659e-4) < 1e-7 &&
                            std::abs(derived.sigma_max - 121.51) < 1e-2;
    // Path (b): explicit overrides give the conventional defaults.
    ScheduleOptions explicit_opts;
    explicit_opts.sigma_min = 0.02;
    explicit_opts.sigma_max = 80.0;
    const ScheduleConfig overridden = explicit_opts.resolve(TrainNoiseConfig{});
    const bool explicit_ok = overridden.sigma_min == 0.02 && overridden.sigma_max == 80.0;
    const bool differ = derived.sigma_min != overridden.sigma_min && derived.sigma_max != overridden.sigma_max;
    const bool ok = worst <= kBoundsTol && derived_ok && explicit_ok && differ;
    return {ok, "identity err = " + fmt(worst) + ", derived (" + fmt(derived.sigma_min) + ", " +
                    fmt(derived.sigma_max) + ") vs explicit (" + fmt(overridden.sigma_min) + ", " +
                    fmt(overridden.sigma_max) + ")"};
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / ("vad_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        const int code = run({"synth", "--out", (dir / "data").string(), "--n-normal", "3000",
                              "--n-anomalous", "150", "--seed", "42"});
        if (code != 0) throw std::runtime_error("synth failed");
        nlohmann::json m;
        std::ifstream(dir / "data.json") >> m;
        for (auto& v : m["videos"]) v.erase("labels");
        std::ofstream(dir / "stripped.json") << m.dump(2);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string path(const std::string& n) const { return (dir / n).string(); }

    bool train_and_score(const std::string& manifest, const std::string& tag) const {
        return run({"train", "--features", path("data.vadf"), "--manifest", path(manifest), "--checkpoint",
                    path(tag + ".vadw"), "--seed", "42"}) == 0 &&
               run({"score", "--features", path("data.vadf"), "--manifest", path(manifest), "--checkpoint",
                    path(tag + ".vadw"), "--out", path(tag + ".csv"), "--seed", "42"}) == 0;
    }
};

Outcome determinism(const Workspace& ws) {
    if (!ws.train_and_score("data.json", "run1") || !ws.train_and_score("data.json", "run2")) {
        return {false, "a command failed"};
    }
    const bool ck = slurp(ws.path("run1.vadw")) == slurp(ws.path("run2.vadw"));
    const bool csv = slurp(ws.path("run1.csv")) == slurp(ws.path("run2.csv"));
    return {ck && csv, std::string("checkpoint ") + (ck ? "identical" : "differs") + ", scores " +
                           (csv ? "identical" : "differ")};
}

Outcome unsupervised_contract(const Workspace& ws) {
    if (!fs::exists(ws.path("run1.vadw")) && !ws.train_and_score("data.json", "run1")) {
        return {false, "labelled run failed"};
    }
    if (!ws.train_and_score("stripped.json", "nolabels")) {
        return {false, "unlabelled run failed"};
    }
    const bool ck = slurp(ws.path("run1.vadw")) == slurp(ws.path("nolabels.vadw"));
    const bool csv = slurp(ws.path("run1.csv")) == slurp(ws.path("nolabels.csv"));
    const bool log = slurp(ws.path("run1.vadw.log.csv")) == slurp(ws.path("nolabels.vadw.log.csv"));
    return {ck && csv && log, std::string("checkpoint ") + (ck ? "identical" : "differs") + ", scores " +
                                  (csv ? "identical" : "differ") + ", log " + (log ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
    std::unique_ptr<Workspace> ws;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"preconditioning identity", preconditioning_identity},
        {"schedule exactness", schedule_exactness},
        {"gradient check", gradient_check},
        {"ODE solver", ode_solver},
        {"AUC oracle", auc_oracle},
        {"threshold semantics", threshold_semantics},
        {"end-to-end synthetic experiment", synthetic_experiment},
        {"noise-bounds formula", noise_bounds_formula},
        {"determinism", [&] {
             if (!ws) ws = std::make_unique<Workspace>();
             return determinism(*ws);
         }},
        {"unsupervised contract", [&] {
             if (!ws) ws = std::make_unique<Workspace>();
             return unsupervised_contract(*ws);
         }},
    };
    // Optional arguments select criteria by number; default runs all.
    std::vector<std::size_t> selected;
    for (int a = 1; a < argc; ++a) {
        const long n = std::strtol(argv[a], nullptr, 10);
        if (n < 1 || n > static_cast<long>(criteria.size())) {
            std::fprintf(stderr, "unknown criterion '%s'\n", argv[a]);
            return 2;
        }
        selected.push_back(static_cast<std::size_t>(n - 1));
    }
    if (selected.empty()) {
        for (std::size_t i = 0; i < criteria.size(); ++i) selected.push_back(i);
    }
    int failed = 0;
    for (std::size_t i : selected) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += o.pass ? 0 : 1;
        std::printf("%s  %2zu  %-32s %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed;
}
