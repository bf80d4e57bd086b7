// din: data preparation, training, inference, evaluation and verification.
//
// Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
// 3 I/O error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "din/config.hpp"
#include "din/error.hpp"
#include "din/image.hpp"
#include "din/model.hpp"
#include "din/parameter_store.hpp"
#include "din/training.hpp"
#include "din/verify.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace din;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr double kReferenceParameters = 19.88e6;

enum Exit { kOk = 0, kUsage = 1, kNumeric = 2, kIo = 3 };

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// Configs resolved from profile, optional files and `--set` overrides.
struct ConfigOptions {
    std::string profile = "desk";
    std::string model_file;
    std::string train_file;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string precision;

    void attach(CLI::App* cmd, bool with_train) {
        cmd->add_option("--profile", profile, "Default profile")->check(CLI::IsMember({"paper", "desk"}));
        cmd->add_option("--model-config", model_file, "Model config file");
        if (with_train) {
            cmd->add_option("--train-config", train_file, "Train config file");
            cmd->add_option("--seed", seed, "Random seed");
            cmd->add_option("--precision", precision, "float or double")->check(CLI::IsMember({"float", "double"}));
        }
        cmd->add_option("--set", overrides, "key=value override (repeatable)");
    }

    ModelConfig model() const {
        ModelConfig m = ModelConfig::profile(profile);
        if (!model_file.empty()) m = load_model_config(model_file, m);
        for (const auto& o : overrides) {
            if (is_model_key(o)) apply_override(m, o);
        }
        m.validate();
        return m;
    }

    TrainConfig train() const {
        TrainConfig t = TrainConfig::profile(profile);
        if (!train_file.empty()) t = load_train_config(train_file, t);
        for (const auto& o : overrides) {
            if (!is_model_key(o)) apply_override(t, o);
        }
        if (seed) t.seed = *seed;
        if (!precision.empty()) t.precision = precision;
        t.validate();
        return t;
    }

    // Routes an override by key; keys belonging to neither schema are errors.
    static bool is_model_key(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
        std::string key = assignment.substr(0, eq);
        key.erase(0, key.find_first_not_of(' '));
        key.erase(key.find_last_not_of(' ') + 1);
        if (has_key(ModelConfig::paper().to_text(), key)) return true;
        if (has_key(TrainConfig::paper().to_text(), key)) return false;
        throw ConfigError("override: unknown field '" + key + "'");
    }

    static bool has_key(const std::string& text, const std::string& key) {
        std::istringstream is(text);
        for (std::string line; std::getline(is, line);) {
            if (line.substr(0, line.find(' ')) == key) return true;
        }
        return false;
    }
};

class Manifest {
public:
    explicit Manifest(std::string command) : start_(timestamp()) {
        doc_["command"] = std::move(command);
        doc_["tool_version"] = kVersion;
    }
    void model(const ModelConfig& m) { doc_["model_config"] = m.to_text(); }
    void train(const TrainConfig& t) {
        doc_["train_config"] = t.to_text();
        doc_["seed"] = t.seed;
    }
    void input(const std::string& key, const fs::path& p) { doc_["inputs"][key] = p.string(); }
    void output(const std::string& key, const fs::path& p) { doc_["outputs"][key] = p.string(); }
    json& extra() { return doc_; }

    void write(const fs::path& dir) {
        doc_["started"] = start_;
        doc_["finished"] = timestamp();
        fs::create_directories(dir);
        std::ofstream os(dir / "manifest.json");
        os << doc_.dump(2) << "\n";
        if (!os) throw IoError("cannot write '" + (dir / "manifest.json").string() + "'");
    }

private:
    std::string start_;
    json doc_;
};

// SR and infer outputs drop the `x<r>` suffix degrade adds so names match HR.
std::string base_stem(const fs::path& p, int scale) {
    std::string stem = p.stem().string();
    const std::string suffix = "x" + std::to_string(scale);
    if (stem.size() > suffix.size() && stem.ends_with(suffix)) stem.resize(stem.size() - suffix.size());
    return stem;
}

std::vector<fs::path> png_inputs(const fs::path& input) {
    if (fs::is_regular_file(input)) return {input};
    return list_png(input);
}

// ---------------------------------------------------------------- degrade

struct DegradeArgs {
    std::string hr, out;
    int scale = 2;
};

int cmd_degrade(const DegradeArgs& a) {
    Manifest m("degrade");
    m.input("hr_dir", a.hr);
    m.extra()["scale"] = a.scale;
    const auto pairs = degrade_dataset(a.hr, a.scale, a.out);
    m.output("lr_dir", a.out);
    m.extra()["images"] = pairs.size();
    m.write(a.out);
    std::cout << "wrote " << pairs.size() << " LR images to " << a.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------- bicubic

struct BicubicArgs {
    std::string input, out;
    int scale = 2;
};

int cmd_bicubic(const BicubicArgs& a) {
    Manifest m("bicubic");
    m.input("lr", a.input);
    m.extra()["scale"] = a.scale;
    if (a.scale < 2 || a.scale > 4) throw ConfigError("scale must be 2, 3 or 4");
    const auto files = png_inputs(a.input);
    fs::create_directories(a.out);
    for (const auto& f : files) {
        const ImagePlane up = quantize(bicubic_resize(read_png(f), ResizeFactor{a.scale, 1}));
        write_png(fs::path(a.out) / (base_stem(f, a.scale) + ".png"), up);
    }
    m.output("sr_dir", a.out);
    m.write(a.out);
    std::cout << "upscaled " << files.size() << " images by " << a.scale << "\n";
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    ConfigOptions cfg;
    std::string hr, lr, val_hr, val_lr, out;
    bool resume = false;
    std::int64_t max_steps = -1;
    bool quiet = false;
};

template <typename T>
int run_train(const TrainArgs& a, const ModelConfig& mc, const TrainConfig& tc) {
    Manifest m("train");
    m.model(mc);
    m.train(tc);
    m.input("hr_dir", a.hr);
    if (!a.lr.empty()) m.input("lr_dir", a.lr);
    Dataset<T> data;
    data.train = load_pairs<T>(a.hr, mc.scale, a.lr.empty() ? std::nullopt : std::optional<fs::path>(a.lr));
    if (!a.val_hr.empty()) {
        m.input("val_hr_dir", a.val_hr);
        data.validation = load_pairs<T>(a.val_hr, mc.scale,
                                        a.val_lr.empty() ? std::nullopt : std::optional<fs::path>(a.val_lr));
    }
    Trainer<T> trainer(mc, tc, std::move(data));
    TrainOptions o;
    o.out_dir = a.out;
    o.resume = a.resume;
    o.max_steps = a.max_steps;
    if (!a.quiet) {
        o.on_record = [](const TrainRecord& r) {
            if (r.val_psnr) {
                std::cout << "epoch " << r.epoch << " step " << r.step + 1 << " loss " << r.loss << " val_psnr "
                          << *r.val_psnr << "\n";
            }
        };
    }
    const auto result = train_loop(trainer, o);
    m.output("weights", fs::path(a.out) / "weights.dinw");
    m.output("records", fs::path(a.out) / "records.csv");
    m.output("checkpoint", fs::path(a.out) / "checkpoint");
    m.extra()["steps"] = result.steps;
    m.write(a.out);
    std::cout << "trained " << result.steps << " steps; weights in " << (fs::path(a.out) / "weights.dinw").string()
              << "\n";
    return kOk;
}

int cmd_train(const TrainArgs& a) {
    const ModelConfig mc = a.cfg.model();
    const TrainConfig tc = a.cfg.train();
    return tc.precision == "double" ? run_train<double>(a, mc, tc) : run_train<float>(a, mc, tc);
}

// ---------------------------------------------------------------- infer

struct InferArgs {
    ConfigOptions cfg;
    std::string weights, input, out;
    bool ensemble = false;
};

template <typename T>
int run_infer(const InferArgs& a, const ModelConfig& mc) {
    Manifest m("infer");
    m.model(mc);
    m.input("weights", a.weights);
    m.input("lr", a.input);
    m.extra()["ensemble"] = a.ensemble;
    DinModel<T> model(mc, 0);
    load_parameters(a.weights, model.parameters(), mc.hash());
    const auto files = png_inputs(a.input);
    fs::create_directories(a.out);
    for (const auto& f : files) {
        const Tensor<T> lr = image_to_tensor<T>(to_range(read_png(f), ValueRange::Unit));
        Tensor<T> sr;
        if (a.ensemble) {
            sr = self_ensemble_infer(model, lr);
        } else {
            Tape<T> tape(false);
            sr = model.forward(tape, lr);
        }
        write_png(fs::path(a.out) / (base_stem(f, mc.scale) + ".png"),
                  quantize(to_range(tensor_to_image(sr), ValueRange::Byte)));
    }
    m.output("sr_dir", a.out);
    m.write(a.out);
    std::cout << "super-resolved " << files.size() << " images" << (a.ensemble ? " (self-ensemble)" : "") << "\n";
    return kOk;
}

int cmd_infer(const InferArgs& a, const std::string& precision) {
    const ModelConfig mc = a.cfg.model();
    return precision == "double" ? run_infer<double>(a, mc) : run_infer<float>(a, mc);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string sr, hr, out;
    int scale = 2;
};

int cmd_eval(const EvalArgs& a) {
    Manifest m("eval");
    m.input("sr_dir", a.sr);
    m.input("hr_dir", a.hr);
    m.extra()["scale"] = a.scale;
    if (a.scale < 2 || a.scale > 4) throw ConfigError("scale must be 2, 3 or 4");
    std::ostringstream report;
    report << "# Y channel (ITU-R BT.601, 8-bit range), border crop " << a.scale
           << " px; identical images report PSNR inf\n";
    report << "image\tpsnr_db\tssim\n";
    double psnr_sum = 0.0, ssim_sum = 0.0;
    int n = 0;
    for (const auto& hr_path : list_png(a.hr)) {
        const std::string stem = base_stem(hr_path, a.scale);
        fs::path sr_path = fs::path(a.sr) / (stem + ".png");
        if (!fs::exists(sr_path)) sr_path = fs::path(a.sr) / (stem + "x" + std::to_string(a.scale) + ".png");
        if (!fs::exists(sr_path)) throw IoError("no SR image for '" + hr_path.filename().string() + "' in " + a.sr);
        ImagePlane hr = read_png(hr_path);
        hr = modcrop(hr, a.scale);
        const ImagePlane sr = modcrop(read_png(sr_path), a.scale);
        if (sr.width != hr.width || sr.height != hr.height) {
            throw ShapeError("size mismatch for '" + stem + "': SR " + std::to_string(sr.width) + "x" +
                             std::to_string(sr.height) + ", HR " + std::to_string(hr.width) + "x" +
                             std::to_string(hr.height));
        }
        const double p = psnr_y(sr, hr, a.scale);
        const double s = ssim_y(sr, hr, a.scale);
        char row[256];
        std::snprintf(row, sizeof row, "%s\t%.4f\t%.6f\n", stem.c_str(), p, s);
        report << row;
        psnr_sum += p;
        ssim_sum += s;
        ++n;
    }
    char mean[128];
    std::snprintf(mean, sizeof mean, "mean\t%.4f\t%.6f\n", psnr_sum / n, ssim_sum / n);
    report << mean;
    std::cout << report.str();
    if (!a.out.empty()) {
        const fs::path out = a.out;
        if (out.has_parent_path()) fs::create_directories(out.parent_path());
        std::ofstream os(out);
        os << report.str();
        if (!os) throw IoError("cannot write '" + a.out + "'");
        m.output("report", out);
        m.write(out.has_parent_path() ? out.parent_path() : fs::path("."));
    }
    return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
    ConfigOptions cfg;
    std::string out;
    std::uint64_t seed = 0;
    double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    Manifest m("gradcheck");
    const ModelConfig mc = a.cfg.model();
    m.model(mc);
    m.extra()["seed"] = a.seed;
    m.extra()["tolerance"] = a.tolerance;
    const auto rows = run_gradcheck_suite(mc, a.seed, a.tolerance);
    const std::string report = format_gradcheck_report(rows);
    std::cout << report;
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        std::ofstream os(fs::path(a.out) / "gradcheck.tsv");
        os << report;
        if (!os) throw IoError("cannot write gradcheck report in '" + a.out + "'");
        m.output("report", fs::path(a.out) / "gradcheck.tsv");
        m.extra()["pass"] = all_pass(rows);
        m.write(a.out);
    }
    return all_pass(rows) ? kOk : kNumeric;
}

// ---------------------------------------------------------------- count-params

int cmd_count_params(const ConfigOptions& cfg) {
    const ModelConfig mc = cfg.model();
    const auto b = count_parameters(mc);
    std::cout << "module\tparameters\n";
    for (const auto& r : b.rows) std::cout << r.module << "\t" << r.count << "\n";
    std::cout << "total\t" << b.total << "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "# reference 19.88M; this config %.2fM (%+.1f%%)\n", b.total / 1e6,
                  100.0 * (b.total - kReferenceParameters) / kReferenceParameters);
    std::cout << buf;
    return kOk;
}

// ---------------------------------------------------------------- ablate / fusion-bench

struct HarnessArgs {
    ConfigOptions cfg;
    std::string hr, lr, out;
};

template <typename T>
int run_harness(const HarnessArgs& a, bool fusion) {
    const ModelConfig mc = a.cfg.model();
    const TrainConfig tc = a.cfg.train();
    Manifest m(fusion ? "fusion-bench" : "ablate");
    m.model(mc);
    m.train(tc);
    m.input("hr_dir", a.hr);
    Dataset<T> data;
    data.train = load_pairs<T>(a.hr, mc.scale, a.lr.empty() ? std::nullopt : std::optional<fs::path>(a.lr));
    const auto runs = fusion ? fusion_comparison<T>(fusion_configs(mc), tc, data, a.out)
                             : ablation<T>(mc, tc, data, a.out);
    json list = json::array();
    for (const auto& r : runs) {
        json j;
        j["label"] = r.label;
        j["fusion_mode"] = std::string(to_string(r.model.fusion_mode));
        j["use_asyca"] = r.model.use_asyca;
        j["use_dwc"] = r.model.use_dwc;
        j["use_gff"] = r.model.use_gff;
        j["parameters"] = r.parameters;
        j["records"] = r.records.string();
        j["steps"] = r.series.size();
        j["final_loss"] = r.series.empty() ? 0.0 : r.series.back().loss;
        list.push_back(j);
        std::cout << r.label << "\tparams " << r.parameters << "\tsteps " << r.series.size() << "\tfinal loss "
                  << (r.series.empty() ? 0.0 : r.series.back().loss) << "\n";
    }
    m.extra()["runs"] = list;
    m.write(a.out);
    return kOk;
}

int cmd_harness(const HarnessArgs& a, bool fusion) {
    return a.cfg.train().precision == "double" ? run_harness<double>(a, fusion) : run_harness<float>(a, fusion);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DIN super-resolution kit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    DegradeArgs degrade;
    auto* c_degrade = app.add_subcommand("degrade", "Bicubic-downscale HR PNGs into an LR set");
    c_degrade->add_option("--hr", degrade.hr, "HR image directory")->required();
    c_degrade->add_option("--scale", degrade.scale, "Scale factor")->check(CLI::Range(2, 4));
    c_degrade->add_option("--out", degrade.out, "LR output directory")->required();

    BicubicArgs bicubic;
    auto* c_bicubic = app.add_subcommand("bicubic", "Bicubic-upscale LR PNGs (baseline)");
    c_bicubic->add_option("--input", bicubic.input, "LR image or directory")->required();
    c_bicubic->add_option("--scale", bicubic.scale, "Scale factor")->check(CLI::Range(2, 4));
    c_bicubic->add_option("--out", bicubic.out, "Output directory")->required();

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train a model");
    train.cfg.attach(c_train, true);
    c_train->add_option("--hr", train.hr, "HR training images")->required();
    c_train->add_option("--lr", train.lr, "Matching LR images from degrade (default: derived)");
    c_train->add_option("--val-hr", train.val_hr, "HR validation images");
    c_train->add_option("--val-lr", train.val_lr, "LR validation images");
    c_train->add_option("--out", train.out, "Run directory")->required();
    c_train->add_flag("--resume", train.resume, "Continue from <out>/checkpoint");
    c_train->add_option("--max-steps", train.max_steps, "Stop after this many total steps");
    c_train->add_flag("--quiet", train.quiet, "No per-epoch output");

    InferArgs infer;
    std::string infer_precision = "float";
    auto* c_infer = app.add_subcommand("infer", "Super-resolve LR images");
    infer.cfg.attach(c_infer, false);
    c_infer->add_option("--precision", infer_precision, "float or double")->check(CLI::IsMember({"float", "double"}));
    c_infer->add_option("--weights", infer.weights, "weights.dinw")->required();
    c_infer->add_option("--input", infer.input, "LR image or directory")->required();
    c_infer->add_option("--out", infer.out, "Output directory")->required();
    c_infer->add_flag("--ensemble", infer.ensemble, "Average over the 8 dihedral transforms");

    EvalArgs eval;
    auto* c_eval = app.add_subcommand("eval", "Y-channel PSNR/SSIM of SR images against HR");
    c_eval->add_option("--sr", eval.sr, "SR image directory")->required();
    c_eval->add_option("--hr", eval.hr, "HR image directory")->required();
    c_eval->add_option("--scale", eval.scale, "Scale factor (also the border crop)")->check(CLI::Range(2, 4));
    c_eval->add_option("--out", eval.out, "Write the report to this file");

    GradcheckArgs grad;
    auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    grad.cfg.attach(c_grad, false);
    c_grad->add_option("--seed", grad.seed, "Random seed");
    c_grad->add_option("--tolerance", grad.tolerance, "Max relative error");
    c_grad->add_option("--out", grad.out, "Report directory");

    ConfigOptions count;
    count.profile = "paper";
    auto* c_count = app.add_subcommand("count-params", "Per-module parameter breakdown");
    count.attach(c_count, false);

    ConfigOptions show;
    auto* c_show = app.add_subcommand("show-config", "Print the resolved model and train configs");
    show.attach(c_show, true);

    HarnessArgs ablate;
    auto* c_ablate = app.add_subcommand("ablate", "Train the AsyCA x DWC x GFF grid");
    ablate.cfg.attach(c_ablate, true);
    c_ablate->add_option("--hr", ablate.hr, "HR training images")->required();
    c_ablate->add_option("--lr", ablate.lr, "Matching LR images");
    c_ablate->add_option("--out", ablate.out, "Output directory")->required();

    HarnessArgs fusion;
    auto* c_fusion = app.add_subcommand("fusion-bench", "Train sum, concat and asyca fusion side by side");
    fusion.cfg.attach(c_fusion, true);
    c_fusion->add_option("--hr", fusion.hr, "HR training images")->required();
    c_fusion->add_option("--lr", fusion.lr, "Matching LR images");
    c_fusion->add_option("--out", fusion.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*c_degrade) return cmd_degrade(degrade);
        if (*c_bicubic) return cmd_bicubic(bicubic);
        if (*c_train) return cmd_train(train);
        if (*c_infer) return cmd_infer(infer, infer_precision);
        if (*c_eval) return cmd_eval(eval);
        if (*c_grad) return cmd_gradcheck(grad);
        if (*c_count) return cmd_count_params(count);
        if (*c_show) {
            const ModelConfig mc = show.model();
            const TrainConfig tc = show.train();
            std::cout << "# model\n" << mc.to_text() << "# train\n" << tc.to_text();
            return kOk;
        }
        if (*c_ablate) return cmd_harness(ablate, false);
        if (*c_fusion) return cmd_harness(fusion, true);
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
