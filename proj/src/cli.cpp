#include "cvhssr/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "cvhssr/io.hpp"
#include "cvhssr/losses.hpp"
#include "cvhssr/model.hpp"
#include "cvhssr/parallel.hpp"
#include "cvhssr/verify.hpp"

namespace cvh {

namespace fs = std::filesystem;

namespace {

// Bad flag combinations discovered after parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelOptions {
    std::string weights;
    std::string preset;
    std::size_t scale = 0;
    std::uint64_t seed = 0;
    bool tlc = false;
    std::string tlc_window;
};

void add_model_options(CLI::App* cmd, ModelOptions& o) {
    cmd->add_option("--weights", o.weights, "Weight file (CVHW)");
    cmd->add_option("--preset", o.preset, "Model preset: t or s")->check(CLI::IsMember({"t", "s", "T", "S"}));
    cmd->add_option("--scale", o.scale, "Upscaling factor: 2 or 4")->check(CLI::IsMember({2, 4}));
    cmd->add_option("--seed", o.seed, "Seed for random weights when --weights is not given");
    cmd->add_flag("--tlc", o.tlc, "Use local pooling in channel attention (test-time local converter)");
    cmd->add_option("--tlc-window", o.tlc_window, "TLC pooling window HxW (default 45x135)");
}

TlcWindow parse_window(const std::string& text) {
    const auto x = text.find_first_of("xX");
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        std::size_t used_h = 0, used_w = 0;
        const std::string hs = text.substr(0, x), ws = text.substr(x + 1);
        const long h = std::stol(hs, &used_h);
        const long w = std::stol(ws, &used_w);
        if (used_h != hs.size() || used_w != ws.size() || h <= 0 || w <= 0) throw std::invalid_argument(text);
        return {static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
    } catch (const std::exception&) {
        throw UsageError("invalid --tlc-window '" + text + "', expected HxW with positive integers");
    }
}

Model load_model(const ModelOptions& o) {
    ModelConfig config;
    ParameterStore store;
    if (!o.weights.empty()) {
        LoadedWeights loaded = read_weights(o.weights);
        if (!o.preset.empty()) {
            const auto wanted = parse_preset(o.preset);
            if (loaded.config.matching_preset() != wanted) {
                throw std::invalid_argument("weights " + o.weights + " (C=" + std::to_string(loaded.config.channels) +
                                            ", N=" + std::to_string(loaded.config.num_blocks) +
                                            ") do not match preset " + o.preset);
            }
        }
        if (o.scale != 0 && o.scale != loaded.config.scale) {
            throw std::invalid_argument("weights " + o.weights + " are for x" + std::to_string(loaded.config.scale) +
                                        ", not x" + std::to_string(o.scale));
        }
        config = loaded.config;
        store = std::move(loaded.store);
    } else {
        if (o.preset.empty() || o.scale == 0) throw UsageError("either --weights or both --preset and --scale are required");
        config = ModelConfig::preset(*parse_preset(o.preset), o.scale);
        store = init_parameters(config, o.seed);
    }
    Model model = build_model(config, std::move(store));
    if (o.tlc || !o.tlc_window.empty()) {
        const TlcWindow window = o.tlc_window.empty() ? kDefaultTlcWindow : parse_window(o.tlc_window);
        model = set_tlc(model, true, window);
    }
    return model;
}

StereoPair load_pair(const fs::path& left, const fs::path& right) {
    StereoPair pair{load_png(left), load_png(right)};
    pair.validate();
    return pair;
}

// Writes both images, or neither.
void save_pair(const StereoPair& pair, const fs::path& left, const fs::path& right) {
    fs::path tmp_left = left, tmp_right = right;
    tmp_left += ".partial";
    tmp_right += ".partial";
    try {
        save_png(pair.left, tmp_left);
        save_png(pair.right, tmp_right);
        fs::rename(tmp_left, left);
        fs::rename(tmp_right, right);
    } catch (...) {
        std::error_code ignored;
        fs::remove(tmp_left, ignored);
        fs::remove(tmp_right, ignored);
        throw;
    }
}

std::string exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fixed(double v, int digits) {
    if (std::isinf(v)) return "inf";
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

void write_csv(std::ostream& out, const EvalReport& report) {
    out << "scene,psnr_left,ssim_left,psnr_pair,ssim_pair\n";
    for (const auto& m : report.images) {
        out << m.scene << ',' << exact(m.psnr_left) << ',' << exact(m.ssim_left) << ',' << exact(m.psnr_pair) << ','
            << exact(m.ssim_pair) << '\n';
    }
    out << "mean," << exact(report.mean_psnr_left) << ',' << exact(report.mean_ssim_left) << ','
        << exact(report.mean_psnr_pair) << ',' << exact(report.mean_ssim_pair) << '\n';
}

void write_table(std::ostream& out, const EvalReport& report) {
    std::size_t width = 5;
    for (const auto& m : report.images) width = std::max(width, m.scene.size());
    auto row = [&](const std::string& scene, double pl, double sl, double pp, double sp) {
        out << std::left << std::setw(static_cast<int>(width)) << scene << std::right << "  " << std::setw(9)
            << fixed(pl, 4) << "  " << std::setw(7) << fixed(sl, 4) << "  " << std::setw(9) << fixed(pp, 4) << "  "
            << std::setw(7) << fixed(sp, 4) << '\n';
    };
    out << std::left << std::setw(static_cast<int>(width)) << "scene" << std::right << "  " << std::setw(9) << "PSNR(L)"
        << "  " << std::setw(7) << "SSIM(L)" << "  " << std::setw(9) << "PSNR(L+R)" << "  " << std::setw(7) << "SSIM(L+R)"
        << '\n';
    for (const auto& m : report.images) row(m.scene, m.psnr_left, m.ssim_left, m.psnr_pair, m.ssim_pair);
    row("mean", report.mean_psnr_left, report.mean_ssim_left, report.mean_psnr_pair, report.mean_ssim_pair);
}

int run_verify(std::uint64_t seed, std::ostream& out) {
    const auto results = run_invariant_suite(seed);
    std::size_t failed = 0;
    for (const auto& r : results) {
        out << (r.passed ? "PASS  " : "FAIL  ") << r.name;
        if (!r.detail.empty()) out << "  (" << r.detail << ")";
        out << '\n';
        if (!r.passed) ++failed;
    }
    out << results.size() - failed << "/" << results.size() << " invariants hold\n";
    return failed == 0 ? kExitOk : kExitVerifyFailed;
}

} // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Stereo image super-resolution inference engine"};
    app.name(args.empty() ? "cvhssr" : fs::path(args[0]).filename().string());
    app.require_subcommand(1);
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);

    ModelOptions run_model;
    std::string left, right, out_left, out_right;
    auto* run = app.add_subcommand("run", "Super-resolve one stereo pair");
    add_model_options(run, run_model);
    run->add_option("--left", left, "Left low-resolution PNG")->required();
    run->add_option("--right", right, "Right low-resolution PNG")->required();
    run->add_option("--out-left", out_left, "Output left PNG")->required();
    run->add_option("--out-right", out_right, "Output right PNG")->required();

    ModelOptions eval_model;
    std::string dataset, csv_path;
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM over a stereo dataset");
    add_model_options(eval, eval_model);
    eval->add_option("--dataset", dataset, "Dataset root")->required();
    eval->add_option("--csv", csv_path, "Write the CSV here instead of standard output");

    std::string params_preset;
    std::size_t params_scale = 2;
    auto* params = app.add_subcommand("params", "Print the parameter count");
    params->add_option("--preset", params_preset, "t or s")->required()->check(CLI::IsMember({"t", "s", "T", "S"}));
    params->add_option("--scale", params_scale, "2 or 4")->required()->check(CLI::IsMember({2, 4}));

    std::string init_preset, init_out;
    std::size_t init_scale = 2;
    std::uint64_t init_seed = 0;
    auto* init = app.add_subcommand("init-weights", "Write a deterministic random weight file");
    init->add_option("--preset", init_preset, "t or s")->required()->check(CLI::IsMember({"t", "s", "T", "S"}));
    init->add_option("--scale", init_scale, "2 or 4")->required()->check(CLI::IsMember({2, 4}));
    init->add_option("--seed", init_seed, "Seed")->required();
    init->add_option("--out", init_out, "Output weight file")->required();

    std::string sr_left, sr_right, hr_left, hr_right;
    LossConfig loss_config;
    auto* loss = app.add_subcommand("loss", "Evaluate the training objective on a stereo pair");
    loss->add_option("--sr-left", sr_left)->required();
    loss->add_option("--sr-right", sr_right)->required();
    loss->add_option("--hr-left", hr_left)->required();
    loss->add_option("--hr-right", hr_right)->required();
    loss->add_option("--lambda", loss_config.lambda, "Weight of the frequency term")->capture_default_str();
    loss->add_option("--epsilon", loss_config.epsilon, "Charbonnier epsilon")->capture_default_str();

    std::uint64_t verify_seed = 2024;
    auto* verify = app.add_subcommand("verify", "Run the invariant suite");
    verify->add_option("--seed", verify_seed, "Seed for the random instances")->capture_default_str();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("cvhssr");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }
    set_num_threads(threads);

    try {
        if (*run) {
            const Model model = load_model(run_model);
            const StereoPair input = load_pair(left, right);
            save_pair(model.forward(input), out_left, out_right);
            return kExitOk;
        }
        if (*eval) {
            const Model model = load_model(eval_model);
            const DatasetScan scan = scan_dataset(dataset, model.config().scale);
            for (const auto& w : scan.warnings) err << "warning: " << w << '\n';
            std::vector<ImageMetrics> rows;
            for (const auto& entry : scan.entries) {
                const StereoPair sr = model.forward(load_pair(entry.lr_left, entry.lr_right));
                rows.push_back(stereo_eval(sr, load_pair(entry.hr_left, entry.hr_right), entry.scene));
            }
            const EvalReport report = aggregate(std::move(rows));
            if (csv_path.empty()) {
                write_csv(out, report);
                out << '\n';
            } else {
                write_file_atomic(csv_path, [&](const fs::path& tmp) {
                    std::ofstream file(tmp);
                    write_csv(file, report);
                    file.close();
                    if (!file) throw IoError(IoErrorKind::WriteFailed, "cannot write " + csv_path);
                });
            }
            write_table(out, report);
            return kExitOk;
        }
        if (*params) {
            const Preset preset = *parse_preset(params_preset);
            const ModelConfig config = ModelConfig::preset(preset, params_scale);
            out << "CVHSSR-" << preset_name(preset) << " x" << params_scale << " (C=" << config.channels
                << ", N=" << config.num_blocks << ")\n";
            for (const auto& group : param_breakdown(config))
                out << "  " << std::left << std::setw(16) << group.name << std::right << std::setw(10) << group.count << '\n';
            const std::size_t total = param_count(config);
            out << "  " << std::left << std::setw(16) << "total" << std::right << std::setw(10) << total << "  ("
                << fixed(static_cast<double>(total) / 1e6, 2) << "M)\n";
            return kExitOk;
        }
        if (*init) {
            const ModelConfig config = ModelConfig::preset(*parse_preset(init_preset), init_scale);
            write_weights(config, init_parameters(config, init_seed), init_out);
            return kExitOk;
        }
        if (*loss) {
            loss_config.validate();
            const StereoPair sr = load_pair(sr_left, sr_right);
            const StereoPair hr = load_pair(hr_left, hr_right);
            const double mse = mse_loss(sr, hr);
            const double fc = freq_charbonnier_loss(sr, hr, loss_config.epsilon);
            char buf[160];
            std::snprintf(buf, sizeof(buf), "L_MSE = %.9g\nL_FC = %.9g\nL_total = %.9g\n", mse, fc,
                          total_loss(sr, hr, loss_config));
            out << buf;
            return kExitOk;
        }
        if (*verify) return run_verify(verify_seed, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const IoError& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitUsage;
}

int cli_run(int argc, char** argv) {
    return cli_run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

} // namespace cvh
