#pragma once

#include "loopshift/codec.hpp"
#include "loopshift/errors.hpp"
#include "loopshift/gaussian_oracle.hpp"
#include "loopshift/io/checkpoint.hpp"
#include "loopshift/io/ppm.hpp"
#include "loopshift/io/tensor_dump.hpp"
#include "loopshift/metrics.hpp"
#include "loopshift/periodic_dataset.hpp"
#include "loopshift/pipeline.hpp"
#include "loopshift/schedule.hpp"
#include "loopshift/toy_training.hpp"
#include "loopshift/toy_transformer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

// Subcommands of the loopshift tool. Exit codes: 0 success, 2 configuration
// or input error, 3 numeric abort, 1 anything else.
namespace loopshift::cli {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

namespace detail {

// Options shared by `generate` and `ablate`.
struct SamplingOptions {
    std::string denoiser;
    std::string checkpoint;
    std::size_t N = 16;
    std::size_t f = 8;
    int plan_steps = 50;
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    double rope_base = 10000.0;
    std::uint32_t condition = 0;
    std::string mode = "loop";
    std::string decode = "auto";
    std::size_t latent_dim = 8;
    double prior_length_scale = 0.7;
    std::size_t prior_period = 0;
    int rate = 4;
    std::size_t prepend = 3;
    std::size_t frame_dim = 64;
    std::uint64_t codec_seed = 11;

    void add_to(CLI::App& app) {
        app.add_option("--denoiser", denoiser, "oracle | toy")->required()->check(CLI::IsMember({"oracle", "toy"}));
        app.add_option("--checkpoint", checkpoint, "toy model checkpoint (required for --denoiser toy)");
        app.add_option("--N", N, "latent count of the cycle / sequence")->required();
        app.add_option("--f", f, "denoiser context (window length)")->required();
        app.add_option("--steps", plan_steps, "DDIM inference steps")->capture_default_str();
        app.add_option("--T", T, "training timesteps of the noise schedule")->capture_default_str();
        app.add_option("--beta-start", beta_start)->capture_default_str();
        app.add_option("--beta-end", beta_end)->capture_default_str();
        app.add_option("--rope-base", rope_base)->capture_default_str();
        app.add_option("--condition", condition, "condition class id")->capture_default_str();
        app.add_option("--mode", mode, "loop | long")->check(CLI::IsMember({"loop", "long"}))->capture_default_str();
        app.add_option("--decode", decode, "auto | direct | frame-invariant")
            ->check(CLI::IsMember({"auto", "direct", "frame-invariant"}))
            ->capture_default_str();
        app.add_option("--latent-dim", latent_dim, "latent channels (oracle only)")->capture_default_str();
        app.add_option("--prior-length-scale", prior_length_scale, "oracle periodic-kernel length scale")
            ->capture_default_str();
        app.add_option("--prior-period", prior_period, "oracle prior cycle length (0 = N)")->capture_default_str();
        app.add_option("--rate", rate, "codec temporal rate")->capture_default_str();
        app.add_option("--prepend", prepend, "latents copied in front for frame-invariant decoding")
            ->capture_default_str();
        app.add_option("--frame-dim", frame_dim, "decoded frame vector length")->capture_default_str();
        app.add_option("--codec-seed", codec_seed)->capture_default_str();
    }

    NoiseSchedule schedule() const { return make_linear_schedule(T, beta_start, beta_end); }

    std::unique_ptr<Denoiser> make_denoiser(const NoiseSchedule& sched) const {
        if (denoiser == "toy") {
            if (checkpoint.empty()) {
                throw ConfigError("--checkpoint is required when --denoiser toy");
            }
            if (!std::filesystem::exists(checkpoint)) {
                throw ConfigError("--checkpoint: file not found: " + checkpoint);
            }
            TrainState state = io::load_checkpoint(checkpoint);
            return std::make_unique<ToyTransformerDenoiser>(state.params.cast<double>());
        }
        const std::size_t period = prior_period == 0 ? N : prior_period;
        return std::make_unique<GaussianOracleDenoiser>(make_periodic_prior(period, latent_dim, prior_length_scale),
                                                        sched);
    }

    TemporalCodec codec(std::size_t latents) const {
        CodecConfig cfg;
        cfg.rate = rate;
        cfg.latent_dim = latents;
        cfg.frame_dim = frame_dim;
        cfg.prepend = prepend;
        cfg.seed = codec_seed;
        return TemporalCodec(cfg);
    }

    GenerationConfig generation(std::size_t skip, RopeMode rope, std::uint64_t seed) const {
        GenerationConfig cfg;
        cfg.N = N;
        cfg.f = f;
        cfg.skip = skip;
        cfg.plan_steps = plan_steps;
        cfg.rope_mode = rope;
        cfg.rope_base = rope_base;
        cfg.condition = ConditionId{condition};
        cfg.seed = seed;
        cfg.mode = parse_generation_mode(mode);
        if (decode != "auto") {
            cfg.decode = parse_decode_mode(decode);
        }
        return cfg;
    }
};

inline void configure(CLI::App& app) {
    app.set_config("--config", "", "key=value run configuration; command-line flags override it");
    app.allow_config_extras(CLI::config_extras_mode::error);
}

// CLI11 consumes arguments back to front.
inline void parse(CLI::App& app, std::vector<std::string> args) {
    std::reverse(args.begin(), args.end());
    app.parse(args);
}

inline void remove_old_frames(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        return;
    }
    std::vector<std::filesystem::path> stale;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".ppm") {
            stale.push_back(entry.path());
        }
    }
    for (const auto& p : stale) {
        std::filesystem::remove(p);
    }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    out << text;
}

inline Boundary boundary_for(const GenerationConfig& cfg) {
    return cfg.mode == GenerationMode::loop ? Boundary::cyclic : Boundary::open;
}

template <typename Body>
int guarded(CLI::App& app, const std::vector<std::string>& args, std::ostream& out, std::ostream& err, Body&& body) {
    try {
        parse(app, args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << app.get_name() << ": " << e.what() << '\n';
        return kExitConfig;
    }
    try {
        return body();
    } catch (const ConfigError& e) {
        err << app.get_name() << ": configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const FormatError& e) {
        err << app.get_name() << ": input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& e) {
        err << app.get_name() << ": numeric abort: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << app.get_name() << ": error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace detail

// generate: one looping (or long) video; writes frames, latents.llt and report.txt.
inline int cmd_generate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Generate a looping video with latent-shift denoising", "generate"};
    detail::configure(app);
    detail::SamplingOptions opts;
    opts.add_to(app);
    std::size_t skip = 6;
    std::string rope = "fixed";
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    app.add_option("--s", skip, "latent shift per denoising step")->capture_default_str();
    app.add_option("--rope", rope, "fixed | shifted")->check(CLI::IsMember({"fixed", "shifted"}))->capture_default_str();
    app.add_option("--seed", seed, "initial-noise seed")->required();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();

    return detail::guarded(app, args, out, err, [&] {
        const NoiseSchedule sched = opts.schedule();
        const GenerationConfig cfg = opts.generation(skip, parse_rope_mode(rope), seed);
        const std::unique_ptr<Denoiser> denoiser = opts.make_denoiser(sched);
        cfg.validate(*denoiser);
        const TemporalCodec codec = opts.codec(denoiser->latent_dim());
        const GenerationResult result = generate(cfg, sched, *denoiser, codec);

        const std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);
        detail::remove_old_frames(dir);
        const io::Normalization norm = io::export_frames(dir, result.frames);

        io::TensorDump dump;
        dump.add(io::matrix_record("latents", result.latents));
        dump.add(io::matrix_record("frames", result.frames.frames));
        io::write_dump(dir / "latents.llt", dump);

        const LoopReport report = make_loop_report(result.frames.frames, detail::boundary_for(cfg));
        std::string text = to_key_value(report);
        text += "norm_min=" + format_real(norm.min) + "\n";
        text += "norm_max=" + format_real(norm.max) + "\n";
        detail::write_text(dir / "report.txt", text);
        out << text;
        return kExitOk;
    });
}

// train-toy: fits the toy transformer on the periodic dataset; writes the
// checkpoint and a step,loss CSV.
inline int cmd_train_toy(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Train the toy temporal-transformer denoiser", "train-toy"};
    detail::configure(app);
    TrainConfig cfg;
    std::string checkpoint_path = "toy.llt";
    std::string loss_path = "loss.csv";
    std::string resume;
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    long log_every = 1000;
    app.add_option("--out", checkpoint_path, "checkpoint to write")->capture_default_str();
    app.add_option("--loss-csv", loss_path, "loss curve CSV (step,loss)")->capture_default_str();
    app.add_option("--resume", resume, "continue from this checkpoint");
    app.add_option("--steps", cfg.steps, "optimizer steps to run")->capture_default_str();
    app.add_option("--batch", cfg.batch)->capture_default_str();
    app.add_option("--lr", cfg.learning_rate)->capture_default_str();
    app.add_option("--seed", cfg.seed)->capture_default_str();
    app.add_option("--dataset-cycle", cfg.dataset_cycle)->capture_default_str();
    app.add_option("--dataset-seed", cfg.dataset_seed)->capture_default_str();
    app.add_option("--classes", cfg.arch.classes)->capture_default_str();
    app.add_option("--context", cfg.arch.max_context, "trained window length f")->capture_default_str();
    app.add_option("--layers", cfg.arch.layers)->capture_default_str();
    app.add_option("--width", cfg.arch.width)->capture_default_str();
    app.add_option("--heads", cfg.arch.heads)->capture_default_str();
    app.add_option("--latent-dim", cfg.arch.latent_dim)->capture_default_str();
    app.add_option("--mlp-hidden", cfg.arch.mlp_hidden)->capture_default_str();
    app.add_option("--rope-base", cfg.rope_base)->capture_default_str();
    app.add_option("--T", T)->capture_default_str();
    app.add_option("--beta-start", beta_start)->capture_default_str();
    app.add_option("--beta-end", beta_end)->capture_default_str();
    app.add_option("--log-every", log_every, "progress line interval on stderr (0 = quiet)")->capture_default_str();

    return detail::guarded(app, args, out, err, [&] {
        if (cfg.arch.heads > 0) {
            cfg.arch.head_dim = cfg.arch.width / cfg.arch.heads;
        }
        std::optional<TrainState> start;
        if (!resume.empty()) {
            if (!std::filesystem::exists(resume)) {
                throw ConfigError("--resume: file not found: " + resume);
            }
            start = io::load_checkpoint(resume);
            cfg.arch = start->params.arch;
        }
        const NoiseSchedule sched = make_linear_schedule(T, beta_start, beta_end);
        const PeriodicDataset data = make_periodic_dataset(static_cast<std::size_t>(cfg.arch.classes),
                                                           cfg.dataset_cycle,
                                                           static_cast<std::size_t>(cfg.arch.latent_dim),
                                                           cfg.dataset_seed);
        double running = 0.0;
        const TrainResult result = train_toy(cfg, data, sched, std::move(start), [&](long step, double loss) {
            running = running == 0.0 ? loss : 0.99 * running + 0.01 * loss;
            if (log_every > 0 && (step + 1) % log_every == 0) {
                err << "step " << step + 1 << " loss " << format_real(running) << '\n';
            }
        });
        io::save_checkpoint(checkpoint_path, result.state);
        std::string csv = "step,loss\n";
        for (const auto& [step, loss] : result.losses) {
            char line[64];
            std::snprintf(line, sizeof(line), "%ld,%.9g\n", step, loss);
            csv += line;
        }
        detail::write_text(loss_path, csv);
        out << "steps_run=" << result.losses.size() << "\n";
        out << "global_step=" << result.state.step << "\n";
        out << "parameters=" << result.state.params.parameter_count() << "\n";
        out << "smoothed_loss_ratio=" << format_real(smoothed_loss_ratio(result.losses)) << "\n";
        return kExitOk;
    });
}

// eval: LoopReport for a frames directory or a tensor dump holding "frames".
inline int cmd_eval(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Compute loop metrics for a frame sequence", "eval"};
    detail::configure(app);
    std::string frames_dir;
    std::string dump_path;
    std::string boundary = "cyclic";
    auto* frames_opt = app.add_option("--frames", frames_dir, "directory of frame_*.ppm files");
    auto* dump_opt = app.add_option("--dump", dump_path, "tensor dump with a 'frames' record");
    frames_opt->excludes(dump_opt);
    app.add_option("--boundary", boundary, "cyclic | open")
        ->check(CLI::IsMember({"cyclic", "open"}))
        ->capture_default_str();

    return detail::guarded(app, args, out, err, [&] {
        Matrix frames;
        if (!frames_dir.empty()) {
            frames = io::load_frames(frames_dir).frames;
        } else if (!dump_path.empty()) {
            if (!std::filesystem::exists(dump_path)) {
                throw ConfigError("--dump: file not found: " + dump_path);
            }
            frames = io::record_matrix(io::read_dump(dump_path).at("frames"));
        } else {
            throw ConfigError("one of --frames or --dump is required");
        }
        out << to_key_value(make_loop_report(frames, boundary == "cyclic" ? Boundary::cyclic : Boundary::open));
        return kExitOk;
    });
}

struct AblationCell {
    RopeMode rope = RopeMode::fixed;
    std::size_t skip = 0;
    std::vector<double> seam_gap_ratios;
    std::vector<double> first_last;
    std::vector<double> dynamic;
    std::vector<double> smoothness;
};

struct DirectionTest {
    std::string name;
    std::size_t trials = 0;
    std::size_t wins = 0;
    std::size_t ties = 0;
    double median_better = 0.0;
    double median_other = 0.0;
    double p_value = 1.0;

    bool holds() const { return median_better <= median_other && p_value < 0.05; }
};

// Seed-paired comparison: a win is a seed where `better` has the smaller ratio.
inline DirectionTest compare_cells(std::string name, const AblationCell& better, const AblationCell& other) {
    DirectionTest d;
    d.name = std::move(name);
    for (std::size_t i = 0; i < better.seam_gap_ratios.size(); ++i) {
        const double a = better.seam_gap_ratios[i];
        const double b = other.seam_gap_ratios[i];
        if (a == b) {
            ++d.ties;
        } else {
            ++d.trials;
            if (a < b) {
                ++d.wins;
            }
        }
    }
    d.median_better = median(better.seam_gap_ratios);
    d.median_other = median(other.seam_gap_ratios);
    d.p_value = sign_test_p_value(d.wins, d.trials);
    return d;
}

constexpr std::array<std::size_t, 4> kAblationSkips{1, 2, 6, 12};
constexpr std::array<RopeMode, 2> kAblationRopes{RopeMode::fixed, RopeMode::shifted};

// ablate: skip step x rope mode sweep, seed-paired across cells.
inline int cmd_ablate(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sweep skip step and rope mode", "ablate"};
    detail::configure(app);
    detail::SamplingOptions opts;
    opts.add_to(app);
    std::size_t seeds = 50;
    std::uint64_t first_seed = 0;
    std::string out_dir = "ablate";
    app.add_option("--seeds", seeds, "number of paired seeds per cell")->capture_default_str();
    app.add_option("--seed", first_seed, "first seed")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();

    return detail::guarded(app, args, out, err, [&] {
        if (seeds < 1) {
            throw ConfigError("--seeds must be >= 1");
        }
        const NoiseSchedule sched = opts.schedule();
        const std::unique_ptr<Denoiser> denoiser = opts.make_denoiser(sched);
        const TemporalCodec codec = opts.codec(denoiser->latent_dim());
        const std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);

        std::vector<AblationCell> cells;
        for (RopeMode rope : kAblationRopes) {
            for (std::size_t skip : kAblationSkips) {
                AblationCell cell{rope, skip, {}, {}, {}, {}};
                for (std::size_t k = 0; k < seeds; ++k) {
                    const GenerationConfig cfg = opts.generation(skip, rope, first_seed + k);
                    cfg.validate(*denoiser);
                    const GenerationResult result = generate(cfg, sched, *denoiser, codec);
                    const LoopReport r = make_loop_report(result.frames.frames, detail::boundary_for(cfg));
                    cell.seam_gap_ratios.push_back(r.seam_gap_ratio);
                    cell.first_last.push_back(r.first_last_mse);
                    cell.dynamic.push_back(r.dynamic_proxy);
                    cell.smoothness.push_back(r.smoothness_proxy);
                }
                std::ostringstream report;
                report << "rope_mode=" << to_string(rope) << "\nskip=" << skip << "\nseeds=" << seeds
                       << "\nfirst_seed=" << first_seed
                       << "\nmedian_seam_gap_ratio=" << format_real(median(cell.seam_gap_ratios))
                       << "\nmedian_first_last_mse=" << format_real(median(cell.first_last))
                       << "\nmedian_dynamic_proxy=" << format_real(median(cell.dynamic))
                       << "\nmedian_smoothness_proxy=" << format_real(median(cell.smoothness)) << "\nseam_gap_ratios=";
                for (std::size_t i = 0; i < cell.seam_gap_ratios.size(); ++i) {
                    report << (i ? "," : "") << format_real(cell.seam_gap_ratios[i]);
                }
                report << '\n';
                detail::write_text(dir / ("cell_" + std::string(to_string(rope)) + "_s" + std::to_string(skip) + ".txt"),
                                   report.str());
                cells.push_back(std::move(cell));
            }
        }

        std::string csv = "rope_mode,skip,seeds,median_seam_gap_ratio,median_first_last_mse,median_dynamic_proxy,"
                          "median_smoothness_proxy\n";
        for (const AblationCell& c : cells) {
            csv += std::string(to_string(c.rope)) + "," + std::to_string(c.skip) + "," + std::to_string(seeds) + "," +
                   format_real(median(c.seam_gap_ratios)) + "," + format_real(median(c.first_last)) + "," +
                   format_real(median(c.dynamic)) + "," + format_real(median(c.smoothness)) + "\n";
        }
        detail::write_text(dir / "summary.csv", csv);

        auto find = [&](RopeMode rope, std::size_t skip) -> const AblationCell& {
            return *std::find_if(cells.begin(), cells.end(),
                                 [&](const AblationCell& c) { return c.rope == rope && c.skip == skip; });
        };
        const std::array<DirectionTest, 2> directions{
            compare_cells("fixed_vs_shifted_s6", find(RopeMode::fixed, 6), find(RopeMode::shifted, 6)),
            compare_cells("s6_vs_s1_fixed", find(RopeMode::fixed, 6), find(RopeMode::fixed, 1)),
        };
        std::ostringstream dirs;
        for (const DirectionTest& d : directions) {
            dirs << d.name << ".trials=" << d.trials << '\n'
                 << d.name << ".wins=" << d.wins << '\n'
                 << d.name << ".ties=" << d.ties << '\n'
                 << d.name << ".median_better=" << format_real(d.median_better) << '\n'
                 << d.name << ".median_other=" << format_real(d.median_other) << '\n'
                 << d.name << ".p_value=" << format_real(d.p_value) << '\n'
                 << d.name << ".holds=" << (d.holds() ? 1 : 0) << '\n';
        }
        detail::write_text(dir / "directions.txt", dirs.str());
        out << csv << dirs.str();
        return kExitOk;
    });
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    static const char* usage =
        "usage: loopshift <command> [options]\n"
        "commands:\n"
        "  generate   looping / long video generation\n"
        "  train-toy  train the toy transformer denoiser\n"
        "  eval       loop metrics for frames or a tensor dump\n"
        "  ablate     skip-step x rope-mode sweep\n"
        "run `loopshift <command> --help` for options\n";
    if (args.empty()) {
        err << usage;
        return kExitConfig;
    }
    const std::string& command = args.front();
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    if (command == "generate") {
        return cmd_generate(rest, out, err);
    }
    if (command == "train-toy") {
        return cmd_train_toy(rest, out, err);
    }
    if (command == "eval") {
        return cmd_eval(rest, out, err);
    }
    if (command == "ablate") {
        return cmd_ablate(rest, out, err);
    }
    if (command == "--help" || command == "-h" || command == "help") {
        out << usage;
        return kExitOk;
    }
    err << "unknown command '" << command << "'\n" << usage;
    return kExitConfig;
}

} // namespace loopshift::cli
