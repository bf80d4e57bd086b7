#include "din/training.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "din/error.hpp"
#include "din/tape.hpp"

namespace din {
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSamplerSalt = 0x9e3779b97f4a7c15ULL;

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
    const Shape one = items.front().shape();
    std::vector<T> values;
    values.reserve(static_cast<std::size_t>(one.numel()) * items.size());
    for (const auto& t : items) {
        if (t.shape() != one) throw ShapeError("stack_batch: mismatched patch shapes");
        values.insert(values.end(), t.data().begin(), t.data().end());
    }
    return Tensor<T>::from(Shape{static_cast<std::int64_t>(items.size()), one.c, one.h, one.w},
                           std::move(values));
}

template <typename T>
Tensor<T> crop_tensor(const Tensor<T>& x, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w) {
    const Shape s = x.shape();
    if (y0 < 0 || x0 < 0 || y0 + h > s.h || x0 + w > s.w) throw ShapeError("patch outside image");
    auto out = Tensor<T>::zeros(Shape{s.n, s.c, h, w});
    for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
            for (std::int64_t i = 0; i < h; ++i) {
                for (std::int64_t j = 0; j < w; ++j) out.at(n, c, i, j) = x.at(n, c, y0 + i, x0 + j);
            }
        }
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

ImagePlane to_bytes(const ImagePlane& img) { return quantize(to_range(img, ValueRange::Byte)); }

}  // namespace

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ParameterStore<T>& store) {
    AdamState s;
    for (const auto& e : store.entries()) {
        s.m.emplace_back(static_cast<std::size_t>(e.tensor.numel()), T(0));
        s.v.emplace_back(static_cast<std::size_t>(e.tensor.numel()), T(0));
    }
    return s;
}

template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state, double lr, const AdamHyper& hyper) {
    const auto& entries = params.entries();
    if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
        throw Error("adam_step: optimiser state does not match the parameter store");
    }
    for (const auto& e : entries) {
        if (!e.tensor.has_grad()) throw Error("adam_step: parameter '" + e.name + "' has no gradient");
    }
    state.t += 1;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
    const T b1 = static_cast<T>(hyper.beta1);
    const T b2 = static_cast<T>(hyper.beta2);
    for (std::size_t k = 0; k < entries.size(); ++k) {
        Tensor<T> p = entries[k].tensor;
        const auto g = p.grad();
        auto w = p.mutable_data();
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const double m_hat = static_cast<double>(m[i]) / c1;
            const double v_hat = static_cast<double>(v[i]) / c2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * m_hat / (std::sqrt(v_hat) + hyper.eps));
        }
    }
}

double lr_schedule(int epoch, const TrainConfig& config) {
    if (epoch < 0) throw ConfigError("lr_schedule: negative epoch");
    return config.lr0 * std::pow(0.5, epoch / config.lr_halve_every);
}

template <typename T>
TrainPair<T> make_train_pair(const ImagePlane& hr, int scale) {
    const ImagePlane cropped = modcrop(to_bytes(hr), scale);
    const ImagePlane lr = quantize(bicubic_resize(cropped, ResizeFactor{1, scale}));
    return {image_to_tensor<T>(cropped), image_to_tensor<T>(lr)};
}

template <typename T>
TrainPair<T> make_train_pair(const ImagePlane& hr, const ImagePlane& lr, int scale) {
    const ImagePlane cropped = modcrop(to_bytes(hr), scale);
    if (lr.width * scale != cropped.width || lr.height * scale != cropped.height) {
        throw ShapeError("training pair: LR " + std::to_string(lr.width) + "x" + std::to_string(lr.height) +
                         " does not match HR " + std::to_string(cropped.width) + "x" +
                         std::to_string(cropped.height) + " at scale " + std::to_string(scale));
    }
    return {image_to_tensor<T>(cropped), image_to_tensor<T>(to_bytes(lr))};
}

PatchWindow draw_patch_window(int lr_width, int lr_height, int patch, bool augment, std::mt19937_64& rng) {
    if (patch < 1 || lr_width < patch || lr_height < patch) {
        throw ShapeError("sample_patch_pair: LR image " + std::to_string(lr_width) + "x" +
                         std::to_string(lr_height) + " is smaller than the " + std::to_string(patch) +
                         " pixel patch");
    }
    PatchWindow w;
    // Modulo keeps the draw identical across standard libraries.
    w.x = static_cast<int>(rng() % static_cast<std::uint64_t>(lr_width - patch + 1));
    w.y = static_cast<int>(rng() % static_cast<std::uint64_t>(lr_height - patch + 1));
    w.transform = augment ? static_cast<int>(rng() % 8) : 0;
    return w;
}

template <typename T>
TrainPair<T> extract_patch(const TrainPair<T>& pair, int scale, int patch, const PatchWindow& window) {
    const Tensor<T> lr = crop_tensor(pair.lr, window.y, window.x, patch, patch);
    const Tensor<T> hr = crop_tensor(pair.hr, std::int64_t{window.y} * scale, std::int64_t{window.x} * scale,
                                     std::int64_t{patch} * scale, std::int64_t{patch} * scale);
    if (window.transform == 0) return {hr, lr};
    return {dihedral_transform(hr, window.transform), dihedral_transform(lr, window.transform)};
}

template <typename T>
TrainPair<T> sample_patch_pair(const TrainPair<T>& pair, int scale, int patch, bool augment,
                               std::mt19937_64& rng) {
    const Shape s = pair.lr.shape();
    const PatchWindow w = draw_patch_window(static_cast<int>(s.w), static_cast<int>(s.h), patch, augment, rng);
    return extract_patch(pair, scale, patch, w);
}

std::string train_record_header() { return "step,epoch,lr,loss,val_psnr"; }

std::string format_train_record(const TrainRecord& r) {
    std::string line = std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + format_double(r.lr) +
                       "," + format_double(r.loss) + ",";
    if (r.val_psnr) line += format_double(*r.val_psnr);
    return line;
}

TrainRecord parse_train_record(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 5) throw Error("malformed train record: '" + line + "'");
    TrainRecord r;
    try {
        r.step = std::stoll(cells[0]);
        r.epoch = std::stoi(cells[1]);
        r.lr = std::stod(cells[2]);
        r.loss = std::stod(cells[3]);
        if (!cells[4].empty()) r.val_psnr = std::stod(cells[4]);
    } catch (const std::exception&) {
        throw Error("malformed train record: '" + line + "'");
    }
    return r;
}

std::vector<TrainRecord> read_train_records(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read '" + path.string() + "'");
    std::string line;
    if (!std::getline(is, line) || line != train_record_header()) {
        throw IoError("'" + path.string() + "' is not a train record file");
    }
    std::vector<TrainRecord> out;
    while (std::getline(is, line)) {
        if (!line.empty()) out.push_back(parse_train_record(line));
    }
    return out;
}

template <typename T>
std::vector<TrainPair<T>> load_pairs(const fs::path& hr_dir, int scale, const std::optional<fs::path>& lr_dir) {
    std::vector<TrainPair<T>> pairs;
    for (const auto& hr_path : list_png(hr_dir)) {
        const ImagePlane hr = read_png(hr_path);
        if (lr_dir) {
            const fs::path lr_path = *lr_dir / (hr_path.stem().string() + "x" + std::to_string(scale) + ".png");
            pairs.push_back(make_train_pair<T>(hr, read_png(lr_path), scale));
        } else {
            pairs.push_back(make_train_pair<T>(hr, scale));
        }
    }
    return pairs;
}

template <typename T>
double evaluate_psnr(const DinModel<T>& model, const std::vector<TrainPair<T>>& pairs) {
    if (pairs.empty()) throw Error("evaluate_psnr: no pairs");
    const int r = model.config().scale;
    double total = 0.0;
    for (const auto& p : pairs) {
        Tape<T> tape(false);
        const Tensor<T> sr = model.forward(tape, p.lr);
        total += psnr_y(to_bytes(tensor_to_image(sr)), to_bytes(tensor_to_image(p.hr)), r);
    }
    return total / static_cast<double>(pairs.size());
}

template <typename T>
Trainer<T>::Trainer(const ModelConfig& model_config, const TrainConfig& train_config, Dataset<T> data)
    : model_config_(model_config),
      train_config_(train_config),
      data_(std::move(data)),
      model_(model_config, train_config.seed),
      rng_(train_config.seed ^ kSamplerSalt) {
    train_config_.validate();
    if (data_.train.empty()) throw ConfigError("training dataset is empty");
    state_ = AdamState<T>::zeros_like(model_.parameters());
}

template <typename T>
TrainRecord Trainer<T>::step() {
    const TrainConfig& tc = train_config_;
    const int r = model_config_.scale;
    std::vector<Tensor<T>> lr_items;
    std::vector<Tensor<T>> hr_items;
    for (int b = 0; b < tc.batch_size; ++b) {
        const auto& pair = data_.train[rng_() % data_.train.size()];
        TrainPair<T> patch = sample_patch_pair(pair, r, tc.lr_patch, tc.augment, rng_);
        lr_items.push_back(std::move(patch.lr));
        hr_items.push_back(std::move(patch.hr));
    }
    const Tensor<T> lr = stack_batch(lr_items);
    const Tensor<T> hr = stack_batch(hr_items);

    TrainRecord rec;
    rec.step = state_.t;
    rec.epoch = static_cast<int>(state_.t / tc.steps_per_epoch);
    rec.lr = lr_schedule(rec.epoch, tc);

    Tape<T> tape;
    const Tensor<T> loss = l1_loss(tape, model_.forward(tape, lr), hr);
    rec.loss = static_cast<double>(loss.item());
    if (!std::isfinite(rec.loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(rec.step));
    }
    model_.parameters().zero_grad();
    tape.backward(loss);
    tape.clear();
    adam_step(model_.parameters(), state_, rec.lr, AdamHyper{tc.beta1, tc.beta2, tc.eps});

    const bool epoch_end = state_.t % tc.steps_per_epoch == 0;
    if (epoch_end && tc.validate_every > 0 && (state_.t / tc.steps_per_epoch) % tc.validate_every == 0) {
        rec.val_psnr = evaluate_psnr(model_, data_.validation.empty() ? data_.train : data_.validation);
    }
    return rec;
}

template <typename T>
void Trainer<T>::save_checkpoint(const fs::path& dir) const {
    fs::create_directories(dir);
    const std::uint64_t hash = model_config_.hash();
    save_parameters(dir / "weights.dinw", model_.parameters(), hash);

    std::vector<NamedTensor<T>> moments;
    const auto& entries = model_.parameters().entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const Shape s = entries[k].tensor.shape();
        moments.push_back({"m:" + entries[k].name, Tensor<T>::from(s, state_.m[k])});
        moments.push_back({"v:" + entries[k].name, Tensor<T>::from(s, state_.v[k])});
    }
    save_container(dir / "adam.dinw", moments, hash);

    std::ostringstream rng_state;
    rng_state << rng_;
    nlohmann::json j;
    j["step"] = state_.t;
    j["rng"] = rng_state.str();
    j["config_hash"] = hash;
    j["model_config"] = model_config_.to_text();
    j["train_config"] = train_config_.to_text();
    std::ofstream os(dir / "state.json", std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint state in '" + dir.string() + "'");
    os << j.dump(2) << '\n';
}

template <typename T>
void Trainer<T>::load_checkpoint(const fs::path& dir) {
    std::ifstream is(dir / "state.json");
    if (!is) throw IoError("no checkpoint state in '" + dir.string() + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt checkpoint state in '" + dir.string() + "': " + e.what());
    }
    const std::uint64_t hash = model_config_.hash();
    if (j.at("config_hash").get<std::uint64_t>() != hash) {
        throw ConfigError("checkpoint in '" + dir.string() + "' was written for a different model config");
    }
    load_parameters(dir / "weights.dinw", model_.parameters(), hash);

    const auto moments = load_container<T>(dir / "adam.dinw");
    const auto& entries = model_.parameters().entries();
    if (moments.size() != 2 * entries.size()) throw ConfigError("checkpoint optimiser state size mismatch");
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto& m = moments[2 * k];
        const auto& v = moments[2 * k + 1];
        if (m.name != "m:" + entries[k].name || v.name != "v:" + entries[k].name ||
            m.tensor.shape() != entries[k].tensor.shape() || v.tensor.shape() != entries[k].tensor.shape()) {
            throw ConfigError("checkpoint optimiser state does not match parameter '" + entries[k].name + "'");
        }
        state_.m[k].assign(m.tensor.data().begin(), m.tensor.data().end());
        state_.v[k].assign(v.tensor.data().begin(), v.tensor.data().end());
    }
    state_.t = j.at("step").get<std::int64_t>();
    std::istringstream rs(j.at("rng").get<std::string>());
    rs >> rng_;
    if (!rs) throw IoError("corrupt sampler state in '" + dir.string() + "'");
}

template <typename T>
TrainResult<T> train_loop(Trainer<T>& trainer, const TrainOptions& options) {
    TrainResult<T> result;
    const bool write = !options.out_dir.empty();
    const fs::path ckpt = options.out_dir / "checkpoint";
    const fs::path records_path = options.out_dir / "records.csv";
    if (write && options.resume && fs::exists(ckpt / "state.json")) {
        trainer.load_checkpoint(ckpt);
        if (fs::exists(records_path)) {
            for (const auto& r : read_train_records(records_path)) {
                if (r.step < trainer.steps_done()) result.records.push_back(r);
            }
        }
    }

    std::ofstream records;
    if (write) {
        fs::create_directories(options.out_dir);
        records.open(records_path, std::ios::binary | std::ios::trunc);
        if (!records) throw IoError("cannot write '" + records_path.string() + "'");
        records << train_record_header() << '\n';
        for (const auto& r : result.records) records << format_train_record(r) << '\n';
    }

    const TrainConfig& tc = trainer.train_config();
    while (!trainer.finished() && (options.max_steps < 0 || trainer.steps_done() < options.max_steps)) {
        const TrainRecord rec = trainer.step();
        result.records.push_back(rec);
        if (write) records << format_train_record(rec) << '\n' << std::flush;
        if (options.on_record) options.on_record(rec);
        const std::int64_t done = trainer.steps_done();
        if (write && tc.checkpoint_every > 0 && done % tc.steps_per_epoch == 0 &&
            (done / tc.steps_per_epoch) % tc.checkpoint_every == 0) {
            trainer.save_checkpoint(ckpt);
        }
    }
    if (write) {
        trainer.save_checkpoint(ckpt);
        save_parameters(options.out_dir / "weights.dinw", trainer.model().parameters(),
                        trainer.model().config().hash());
    }
    result.steps = trainer.steps_done();
    return result;
}

std::vector<ModelConfig> fusion_configs(const ModelConfig& base) {
    std::vector<ModelConfig> out;
    for (const FusionMode mode : {FusionMode::Sum, FusionMode::Concat, FusionMode::Asyca}) {
        ModelConfig c = base;
        c.fusion_mode = mode;
        c.use_asyca = mode == FusionMode::Asyca;
        out.push_back(c);
    }
    return out;
}

void require_fusion_only_difference(const std::vector<ModelConfig>& configs) {
    if (configs.empty()) throw ConfigError("fusion comparison needs at least one config");
    const auto normalised = [](ModelConfig c) {
        c.fusion_mode = FusionMode::Asyca;
        c.use_asyca = true;
        return c;
    };
    const ModelConfig ref = normalised(configs.front());
    for (const auto& c : configs) {
        c.validate();
        if (!(normalised(c) == ref)) {
            throw ConfigError("fusion comparison configs must differ only in fusion_mode");
        }
    }
}

template <typename T>
std::vector<SeriesRun> fusion_comparison(const std::vector<ModelConfig>& configs, const TrainConfig& train,
                                         const Dataset<T>& data, const fs::path& out_dir) {
    require_fusion_only_difference(configs);
    std::vector<SeriesRun> runs;
    for (const auto& config : configs) {
        SeriesRun run;
        run.label = std::string(to_string(config.fusion_mode));
        run.model = config;
        run.records = out_dir / run.label / "records.csv";
        Trainer<T> trainer(config, train, data);
        run.parameters = trainer.model().parameters().scalar_count();
        TrainOptions opts;
        opts.out_dir = out_dir / run.label;
        run.series = train_loop(trainer, opts).records;
        runs.push_back(std::move(run));
    }
    return runs;
}

std::vector<ModelConfig> ablation_grid(const ModelConfig& base) {
    std::vector<ModelConfig> out;
    for (int bits = 0; bits < 8; ++bits) {
        ModelConfig c = base;
        c.use_asyca = (bits & 4) != 0;
        c.use_dwc = (bits & 2) != 0;
        c.use_gff = (bits & 1) != 0;
        c.fusion_mode = c.use_asyca ? FusionMode::Asyca : FusionMode::Concat;
        out.push_back(c);
    }
    return out;
}

std::string ablation_label(const ModelConfig& c) {
    return std::string("asyca") + (c.use_asyca ? "1" : "0") + "_dwc" + (c.use_dwc ? "1" : "0") + "_gff" +
           (c.use_gff ? "1" : "0");
}

template <typename T>
std::vector<SeriesRun> ablation(const ModelConfig& base, const TrainConfig& train, const Dataset<T>& data,
                                const fs::path& out_dir) {
    std::vector<SeriesRun> runs;
    for (const auto& config : ablation_grid(base)) {
        SeriesRun run;
        run.label = ablation_label(config);
        run.model = config;
        run.records = out_dir / run.label / "records.csv";
        Trainer<T> trainer(config, train, data);
        run.parameters = trainer.model().parameters().scalar_count();
        TrainOptions opts;
        opts.out_dir = out_dir / run.label;
        run.series = train_loop(trainer, opts).records;
        runs.push_back(std::move(run));
    }
    return runs;
}

#define DIN_INSTANTIATE(T)                                                                              \
    template struct AdamState<T>;                                                                      \
    template void adam_step<T>(ParameterStore<T>&, AdamState<T>&, double, const AdamHyper&);           \
    template TrainPair<T> make_train_pair<T>(const ImagePlane&, int);                                  \
    template TrainPair<T> make_train_pair<T>(const ImagePlane&, const ImagePlane&, int);               \
    template TrainPair<T> extract_patch<T>(const TrainPair<T>&, int, int, const PatchWindow&);         \
    template TrainPair<T> sample_patch_pair<T>(const TrainPair<T>&, int, int, bool, std::mt19937_64&); \
    template std::vector<TrainPair<T>> load_pairs<T>(const fs::path&, int, const std::optional<fs::path>&); \
    template double evaluate_psnr<T>(const DinModel<T>&, const std::vector<TrainPair<T>>&);            \
    template class Trainer<T>;                                                                         \
    template TrainResult<T> train_loop<T>(Trainer<T>&, const TrainOptions&);                           \
    template std::vector<SeriesRun> fusion_comparison<T>(const std::vector<ModelConfig>&,              \
                                                         const TrainConfig&, const Dataset<T>&,        \
                                                         const fs::path&);                             \
    template std::vector<SeriesRun> ablation<T>(const ModelConfig&, const TrainConfig&,                \
                                                const Dataset<T>&, const fs::path&);

DIN_INSTANTIATE(float)
DIN_INSTANTIATE(double)

#undef DIN_INSTANTIATE

}  // namespace din
