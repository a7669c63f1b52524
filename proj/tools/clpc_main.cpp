// clpc: pitch-shifting and time-stretching of speech from the command line.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "clpc/augment.hpp"
#include "clpc/evaluate.hpp"
#include "clpc/excitation_net.hpp"
#include "clpc/psola.hpp"
#include "clpc/synthesis.hpp"

namespace fs = std::filesystem;
using namespace clpc;

namespace {

uint64_t default_seed() {
    if (const char* env = std::getenv("CLPC_SEED")) return std::strtoull(env, nullptr, 10);
    return 42;
}

struct CommonOptions {
    uint64_t seed = default_seed();
    int sample_rate = kTargetRate;
    bool no_highpass = false;
    double preemphasis_coef = 0.85;
    bool no_dither = false;
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--seed", opt.seed, "Random seed (default 42, or CLPC_SEED)");
    cmd->add_option("--sample-rate", opt.sample_rate, "Processing sample rate");
    cmd->add_flag("--no-highpass", opt.no_highpass, "Skip the 65 Hz high-pass");
    cmd->add_option("--preemphasis", opt.preemphasis_coef, "Preemphasis coefficient");
    cmd->add_flag("--no-dither", opt.no_dither, "Disable pitch dither");
}

PreprocessOptions preprocess_options(const CommonOptions& opt) {
    PreprocessOptions p;
    p.sample_rate = opt.sample_rate;
    p.apply_highpass = !opt.no_highpass;
    p.preemphasis_coef = opt.preemphasis_coef;
    return p;
}

struct Analyzed {
    AudioBuffer prepared;
    PitchContour contour;
    std::vector<FeatureFrame> features;
};

Analyzed analyze_file(const std::string& path, const CommonOptions& opt) {
    Analyzed out;
    out.prepared = preprocess(load_wav(path), preprocess_options(opt));
    out.contour = track(out.prepared);
    FeatureOptions fopt;
    fopt.seed = opt.seed;
    if (opt.no_dither) fopt.dither_width_cents = 0.0;
    out.features = extract_features(out.prepared, out.contour, fopt);
    return out;
}

AudioBuffer run_backend(const ControlScript& script, const std::string& backend,
                        const std::string& checkpoint, uint64_t seed) {
    Rng rng(seed);
    if (backend == "dsp") {
        DspBackend dsp(rng);
        return synthesize(script, dsp, rng);
    }
    if (backend == "neural") {
        if (checkpoint.empty())
            throw std::invalid_argument("neural backend requires --checkpoint");
        const NetParams params = load_checkpoint(checkpoint);
        return generate(script, params, rng);
    }
    throw std::invalid_argument("unknown backend: " + backend);
}

void write_output(const AudioBuffer& synth, const CommonOptions& opt, const std::string& path) {
    save_wav(limit(deemphasis(synth, opt.preemphasis_coef)), path);
}

std::vector<double> parse_ratio_list(const std::string& text) {
    std::vector<double> ratios;
    std::stringstream ss(text);
    std::string field;
    while (std::getline(ss, field, ',')) {
        if (!field.empty()) ratios.push_back(std::stod(field));
    }
    if (ratios.empty()) throw std::invalid_argument("empty ratio list");
    return ratios;
}

std::vector<std::string> wav_inputs(const std::string& path) {
    std::vector<std::string> files;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_regular_file() && entry.path().extension() == ".wav")
                files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    if (files.empty()) throw std::invalid_argument("no .wav inputs under " + path);
    return files;
}

ShiftSystem make_system(const std::string& name, const CommonOptions& opt,
                        const std::string& checkpoint) {
    if (name == "clpc-dsp" || name == "clpc-neural") {
        const std::string backend = name == "clpc-dsp" ? "dsp" : "neural";
        return [=](const AudioBuffer& audio, double ratio) {
            CommonOptions eval_opt = opt;
            eval_opt.no_dither = true;  // deterministic evaluation path
            Analyzed a;
            a.prepared = preprocess(audio, preprocess_options(eval_opt));
            a.contour = track(a.prepared);
            FeatureOptions fopt;
            fopt.dither_width_cents = 0.0;
            a.features = extract_features(a.prepared, a.contour, fopt);
            const auto script = constant_shift_script(a.features, a.contour, ratio);
            return limit(deemphasis(run_backend(script, backend, checkpoint, opt.seed),
                                    opt.preemphasis_coef));
        };
    }
    if (name == "psola") {
        return [=](const AudioBuffer& audio, double ratio) {
            const auto prepared = preprocess(audio, preprocess_options(opt));
            const auto contour = track(prepared);
            return limit(deemphasis(psola_shift_stretch(prepared, contour, ratio, 1.0),
                                    opt.preemphasis_coef));
        };
    }
    throw std::invalid_argument("unknown system: " + name);
}

int run_cli(int argc, char** argv) {
    CLI::App app{"CLPCNet-style speech pitch-shifting and time-stretching"};
    app.require_subcommand(1);

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Extract features and a pitch contour");
    std::string analyze_in, analyze_features, analyze_pitch, analyze_features_csv;
    CommonOptions analyze_opt;
    analyze->add_option("input", analyze_in, "Input wav")->required();
    analyze->add_option("--features", analyze_features, "Binary feature file to write");
    analyze->add_option("--features-csv", analyze_features_csv, "CSV feature export");
    analyze->add_option("--pitch", analyze_pitch, "Pitch contour CSV to write");
    add_common(analyze, analyze_opt);

    // shift
    auto* shift = app.add_subcommand("shift", "Constant-ratio pitch shift");
    std::string shift_in, shift_out, shift_backend = "dsp", shift_ckpt;
    double shift_ratio = 1.0;
    CommonOptions shift_opt;
    shift->add_option("input", shift_in)->required();
    shift->add_option("output", shift_out)->required();
    shift->add_option("--ratio", shift_ratio, "Pitch ratio")->required();
    shift->add_option("--backend", shift_backend, "dsp or neural");
    shift->add_option("--checkpoint", shift_ckpt, "Checkpoint for the neural backend");
    add_common(shift, shift_opt);

    // stretch
    auto* stretch = app.add_subcommand("stretch", "Constant-ratio time stretch");
    std::string stretch_in, stretch_out, stretch_backend = "dsp", stretch_ckpt;
    double stretch_ratio = 1.0;
    CommonOptions stretch_opt;
    stretch->add_option("input", stretch_in)->required();
    stretch->add_option("output", stretch_out)->required();
    stretch->add_option("--ratio", stretch_ratio, "Duration ratio")->required();
    stretch->add_option("--backend", stretch_backend, "dsp or neural");
    stretch->add_option("--checkpoint", stretch_ckpt, "Checkpoint for the neural backend");
    add_common(stretch, stretch_opt);

    // edit
    auto* edit = app.add_subcommand("edit", "Apply a per-frame control script");
    std::string edit_in, edit_out, edit_script, edit_features, edit_backend = "dsp", edit_ckpt;
    CommonOptions edit_opt;
    edit->add_option("input", edit_in)->required();
    edit->add_option("output", edit_out)->required();
    edit->add_option("--script", edit_script, "Control script CSV")->required();
    edit->add_option("--features", edit_features, "Feature file (else analyze input)");
    edit->add_option("--backend", edit_backend, "dsp or neural");
    edit->add_option("--checkpoint", edit_ckpt, "Checkpoint for the neural backend");
    add_common(edit, edit_opt);

    // psola
    auto* psola_cmd = app.add_subcommand("psola", "TD-PSOLA baseline");
    std::string psola_in, psola_out, psola_marks;
    double psola_shift = 1.0, psola_stretch = 1.0;
    CommonOptions psola_opt;
    psola_cmd->add_option("input", psola_in)->required();
    psola_cmd->add_option("output", psola_out)->required();
    psola_cmd->add_option("--shift", psola_shift, "Pitch ratio");
    psola_cmd->add_option("--stretch", psola_stretch, "Duration ratio");
    psola_cmd->add_option("--marks", psola_marks, "Export pitch marks CSV");
    add_common(psola_cmd, psola_opt);

    // augment
    auto* augment_cmd = app.add_subcommand("augment", "Resampling augmentation over a corpus");
    std::string augment_in, augment_out;
    augment_cmd->add_option("--in", augment_in, "Input directory")->required();
    augment_cmd->add_option("--out", augment_out, "Output directory")->required();

    // train-toy
    auto* train = app.add_subcommand("train-toy", "Train the desk-scale excitation model");
    std::string train_data, train_ckpt;
    long train_steps = 500;
    int train_batch = 1, train_frames = 15;
    NetConfig train_cfg;
    CommonOptions train_opt;
    train->add_option("--data", train_data, "Wav file or directory")->required();
    train->add_option("--steps", train_steps, "Optimizer steps");
    train->add_option("--checkpoint", train_ckpt, "Checkpoint to write")->required();
    train->add_option("--batch", train_batch, "Slices per step");
    train->add_option("--frames", train_frames, "Frames per slice");
    train->add_option("--gru-a", train_cfg.gru_a_dim, "Main GRU width");
    train->add_option("--gru-b", train_cfg.gru_b_dim, "Second GRU width");
    train->add_option("--cond", train_cfg.cond_dim, "Conditioning width");
    train->add_option("--conv", train_cfg.conv_channels, "Conv channels");
    train->add_option("--embed", train_cfg.sample_embed_dim, "Sample code embedding");
    train->add_option("--pitch-embed", train_cfg.pitch_embed_dim, "Pitch embedding");
    add_common(train, train_opt);

    // evaluate
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Constant-ratio objective evaluation");
    std::string eval_system, eval_in, eval_report, eval_ckpt, eval_ratios = "0.71,1,1.41";
    CommonOptions eval_opt;
    evaluate_cmd->add_option("--system", eval_system, "clpc-dsp, clpc-neural or psola")
        ->required();
    evaluate_cmd->add_option("--in", eval_in, "Wav file or directory")->required();
    evaluate_cmd->add_option("--ratios", eval_ratios, "Comma-separated ratio list");
    evaluate_cmd->add_option("--report", eval_report, "Report CSV to write");
    evaluate_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint for clpc-neural");
    add_common(evaluate_cmd, eval_opt);

    // compare
    auto* compare = app.add_subcommand("compare", "Track two files and report pitch metrics");
    std::string compare_a, compare_b, compare_report;
    CommonOptions compare_opt;
    compare->add_option("a", compare_a)->required();
    compare->add_option("b", compare_b)->required();
    compare->add_option("--report", compare_report, "Report CSV to write");
    add_common(compare, compare_opt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // help is success; anything else is a usage error
    }

    if (*analyze) {
        const auto a = analyze_file(analyze_in, analyze_opt);
        if (!analyze_features.empty()) save_features(a.features, analyze_features);
        if (!analyze_features_csv.empty()) save_features_csv(a.features, analyze_features_csv);
        if (!analyze_pitch.empty()) save_contour_csv(a.contour, analyze_pitch);
        std::cout << "frames=" << a.features.size() << "\n";
        return 0;
    }

    if (*shift) {
        const auto a = analyze_file(shift_in, shift_opt);
        const auto script = constant_shift_script(a.features, a.contour, shift_ratio);
        write_output(run_backend(script, shift_backend, shift_ckpt, shift_opt.seed), shift_opt,
                     shift_out);
        return 0;
    }

    if (*stretch) {
        const auto a = analyze_file(stretch_in, stretch_opt);
        const auto script = constant_stretch_script(a.features, a.contour, stretch_ratio);
        write_output(run_backend(script, stretch_backend, stretch_ckpt, stretch_opt.seed),
                     stretch_opt, stretch_out);
        return 0;
    }

    if (*edit) {
        const auto a = analyze_file(edit_in, edit_opt);
        const auto file = load_script_csv(edit_script);
        std::vector<FeatureFrame> features = a.features;
        const std::string feature_path =
            !edit_features.empty() ? edit_features : file.feature_file;
        if (!feature_path.empty()) features = load_features(feature_path);
        const auto script = script_from_file(file, features);
        write_output(run_backend(script, edit_backend, edit_ckpt, edit_opt.seed), edit_opt,
                     edit_out);
        return 0;
    }

    if (*psola_cmd) {
        const auto prepared = preprocess(load_wav(psola_in), preprocess_options(psola_opt));
        const auto contour = track(prepared);
        if (!psola_marks.empty()) save_marks_csv(detect_marks(prepared, contour), psola_marks);
        const auto out = psola_shift_stretch(prepared, contour, psola_shift, psola_stretch);
        write_output(out, psola_opt, psola_out);
        return 0;
    }

    if (*augment_cmd) {
        const auto manifest = augment_corpus(augment_in, augment_out);
        std::cout << "outputs=" << manifest.size() << "\n";
        return 0;
    }

    if (*train) {
        NetParams params(train_cfg);
        Rng rng(train_opt.seed);
        init_params(params, rng);
        AmsgradState opt_state(train_cfg);

        struct Clip {
            AudioBuffer audio;
            std::vector<FeatureFrame> features;
        };
        std::vector<Clip> clips;
        for (const auto& path : wav_inputs(train_data)) {
            Clip clip;
            CommonOptions clip_opt = train_opt;
            const auto a = analyze_file(path, clip_opt);
            clip.audio = a.prepared;
            clip.features = a.features;
            if (int(clip.features.size()) >= train_frames) clips.push_back(std::move(clip));
        }
        if (clips.empty()) throw std::invalid_argument("no usable training clips");

        double loss = 0.0;
        for (long step = 0; step < train_steps; ++step) {
            std::vector<TrainingSlice> batch;
            for (int b = 0; b < train_batch; ++b) {
                const auto& clip = clips[rng.below(clips.size())];
                const int max_start = int(clip.features.size()) - train_frames;
                const int start = max_start > 0 ? int(rng.below(uint64_t(max_start) + 1)) : 0;
                batch.push_back(
                    make_training_slice(clip.audio, clip.features, start, train_frames));
            }
            loss = train_step(params, batch, opt_state);
            if (step % 50 == 0 || step == train_steps - 1)
                std::cout << "step " << step << " loss " << loss << "\n";
        }
        save_checkpoint(params, train_ckpt);
        std::cout << "final_loss=" << loss << "\n";
        return 0;
    }

    if (*evaluate_cmd) {
        const auto ratios = parse_ratio_list(eval_ratios);
        const auto system = make_system(eval_system, eval_opt, eval_ckpt);

        struct Accumulator {
            double f1_weighted = 0.0, mse_weighted = 0.0, gpe_weighted = 0.0;
            size_t frames = 0;
        };
        std::vector<Accumulator> acc(ratios.size());
        for (const auto& path : wav_inputs(eval_in)) {
            const auto audio = load_wav(path);
            const auto results = evaluate_shift(system, audio, ratios);
            for (size_t k = 0; k < results.size(); ++k) {
                const auto& m = results[k].metrics;
                acc[k].f1_weighted += m.f1 * double(m.n_frames);
                acc[k].mse_weighted += m.rms_cents * m.rms_cents * double(m.n_frames);
                acc[k].gpe_weighted += m.gpe * double(m.n_frames);
                acc[k].frames += m.n_frames;
            }
        }
        std::vector<ReportRow> rows;
        for (size_t k = 0; k < ratios.size(); ++k) {
            PitchMetrics m;
            const double n = std::max<double>(1.0, double(acc[k].frames));
            m.f1 = acc[k].f1_weighted / n;
            m.rms_cents = std::sqrt(acc[k].mse_weighted / n);
            m.gpe = acc[k].gpe_weighted / n;
            m.n_frames = acc[k].frames;
            rows.push_back({eval_system, ratios[k], m});
            std::cout << eval_system << " ratio " << ratios[k] << ": f1=" << m.f1
                      << " rms_cents=" << m.rms_cents << " gpe=" << m.gpe
                      << " frames=" << m.n_frames << "\n";
        }
        if (!eval_report.empty()) save_report_csv(rows, eval_report);
        return 0;
    }

    if (*compare) {
        const auto a = analyze_file(compare_a, compare_opt);
        const auto b = analyze_file(compare_b, compare_opt);
        const auto metrics = pitch_metrics(a.contour, b.contour);
        std::cout << "f1=" << metrics.f1 << " rms_cents=" << metrics.rms_cents
                  << " gpe=" << metrics.gpe << " frames=" << metrics.n_frames << "\n";
        if (!compare_report.empty())
            save_report_csv({{"compare", 1.0, metrics}}, compare_report);
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
}
