#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "din/config.hpp"
#include "din/error.hpp"
#include "din/image.hpp"
#include "din/model.hpp"
#include "din/parameter_store.hpp"
#include "din/training.hpp"
#include "din/verify.hpp"

namespace py = pybind11;
using namespace din;

namespace {

using ByteArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (h, w, 3) or (h, w) byte-range array -> planar image.
ImagePlane from_numpy(const ByteArray& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected an (h, w) or (h, w, c) array");
    const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
    const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
    if (c != 1 && c != 3) throw ShapeError("expected 1 or 3 channels");
    ImagePlane img = ImagePlane::blank(w, h, c, ValueRange::Byte, c == 3 ? ColorSpace::RGB : ColorSpace::Y);
    const double* p = a.data();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int k = 0; k < c; ++k) img.at(k, y, x) = p[(static_cast<std::size_t>(y) * w + x) * c + k];
        }
    }
    return img;
}

py::array_t<double> to_numpy(const ImagePlane& img) {
    const ImagePlane b = to_range(img, ValueRange::Byte);
    std::vector<py::ssize_t> shape{b.height, b.width};
    if (b.channels > 1) shape.push_back(b.channels);
    py::array_t<double> out(shape);
    double* q = out.mutable_data();
    for (int y = 0; y < b.height; ++y) {
        for (int x = 0; x < b.width; ++x) {
            for (int k = 0; k < b.channels; ++k) {
                q[(static_cast<std::size_t>(y) * b.width + x) * b.channels + k] = b.at(k, y, x);
            }
        }
    }
    return out;
}

// Float model loaded for inference.
class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed) : model_(config, seed) {}

    void load(const std::filesystem::path& weights) {
        load_parameters(weights, model_.parameters(), model_.config().hash());
    }
    void save(const std::filesystem::path& weights) const {
        save_parameters(weights, model_.parameters(), model_.config().hash());
    }
    [[nodiscard]] std::int64_t parameter_count() const { return model_.parameters().scalar_count(); }

    py::array_t<double> super_resolve(const ByteArray& image, bool ensemble) const {
        const Tensor<float> lr = image_to_tensor<float>(to_range(from_numpy(image), ValueRange::Unit));
        Tensor<float> sr;
        if (ensemble) {
            sr = self_ensemble_infer(model_, lr);
        } else {
            Tape<float> tape(false);
            sr = model_.forward(tape, lr);
        }
        return to_numpy(quantize(to_range(tensor_to_image(sr), ValueRange::Byte)));
    }

private:
    DinModel<float> model_;
};

py::dict record_dict(const TrainRecord& r) {
    py::dict d;
    d["step"] = r.step;
    d["epoch"] = r.epoch;
    d["lr"] = r.lr;
    d["loss"] = r.loss;
    d["val_psnr"] = r.val_psnr ? py::cast(*r.val_psnr) : py::none();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "DIN super-resolution kit";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::enum_<FusionMode>(m, "FusionMode")
        .value("ASYCA", FusionMode::Asyca)
        .value("CONCAT", FusionMode::Concat)
        .value("SUM", FusionMode::Sum)
        .value("MEAN", FusionMode::Mean);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_static("profile", &ModelConfig::profile, py::arg("name"))
        .def_static("parse", [](const std::string& text) { return parse_model_config(text, "<string>"); })
        .def_readwrite("branches", &ModelConfig::branches)
        .def_readwrite("wrdbs_per_branch", &ModelConfig::wrdbs_per_branch)
        .def_readwrite("rdbs_per_wrdb", &ModelConfig::rdbs_per_wrdb)
        .def_readwrite("convs_per_rdb", &ModelConfig::convs_per_rdb)
        .def_readwrite("growth", &ModelConfig::growth)
        .def_readwrite("base_channels", &ModelConfig::base_channels)
        .def_readwrite("scale", &ModelConfig::scale)
        .def_readwrite("attn_reduction", &ModelConfig::attn_reduction)
        .def_readwrite("use_asyca", &ModelConfig::use_asyca)
        .def_readwrite("use_dwc", &ModelConfig::use_dwc)
        .def_readwrite("use_gff", &ModelConfig::use_gff)
        .def_readwrite("fusion_mode", &ModelConfig::fusion_mode)
        .def_readwrite("asyca_zero_init", &ModelConfig::asyca_zero_init)
        .def("validate", &ModelConfig::validate)
        .def("to_text", &ModelConfig::to_text)
        .def("hash", &ModelConfig::hash)
        .def("set", [](ModelConfig& c, const std::string& kv) { apply_override(c, kv); })
        .def(py::self == py::self);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_static("profile", &TrainConfig::profile, py::arg("name"))
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("lr_patch", &TrainConfig::lr_patch)
        .def_readwrite("lr0", &TrainConfig::lr0)
        .def_readwrite("lr_halve_every", &TrainConfig::lr_halve_every)
        .def_readwrite("max_epochs", &TrainConfig::max_epochs)
        .def_readwrite("steps_per_epoch", &TrainConfig::steps_per_epoch)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("augment", &TrainConfig::augment)
        .def_readwrite("checkpoint_every", &TrainConfig::checkpoint_every)
        .def_readwrite("validate_every", &TrainConfig::validate_every)
        .def("validate", &TrainConfig::validate)
        .def("to_text", &TrainConfig::to_text)
        .def("set", [](TrainConfig& c, const std::string& kv) { apply_override(c, kv); });

    m.def("count_parameters", [](const ModelConfig& c) {
        const auto b = count_parameters(c);
        py::dict d;
        for (const auto& r : b.rows) d[py::str(r.module)] = r.count;
        d["total"] = b.total;
        return d;
    });

    py::class_<Model>(m, "Model")
        .def(py::init<const ModelConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
        .def("load", &Model::load)
        .def("save", &Model::save)
        .def_property_readonly("parameter_count", &Model::parameter_count)
        .def("super_resolve", &Model::super_resolve, py::arg("image"), py::arg("ensemble") = false,
             "(h, w, 3) byte-range array -> (r h, r w, 3) 8-bit values");

    m.def("bicubic_resize",
          [](const ByteArray& a, int num, int den) { return to_numpy(bicubic_resize(from_numpy(a), {num, den})); },
          py::arg("image"), py::arg("num"), py::arg("den") = 1);
    m.def("rgb_to_y", [](const ByteArray& a) { return to_numpy(rgb_to_y(from_numpy(a))); });
    m.def("psnr_y", [](const ByteArray& a, const ByteArray& b, int border) {
        return psnr_y(from_numpy(a), from_numpy(b), border);
    }, py::arg("a"), py::arg("b"), py::arg("border") = 0);
    m.def("ssim_y", [](const ByteArray& a, const ByteArray& b, int border) {
        return ssim_y(from_numpy(a), from_numpy(b), border);
    }, py::arg("a"), py::arg("b"), py::arg("border") = 0);
    m.def("read_png", [](const std::filesystem::path& p) { return to_numpy(read_png(p)); });
    m.def("write_png", [](const std::filesystem::path& p, const ByteArray& a) { write_png(p, from_numpy(a)); });

    m.def("gradcheck", [](const ModelConfig& c, std::uint64_t seed) {
        py::list out;
        for (const auto& r : run_gradcheck_suite(c, seed)) {
            py::dict d;
            d["name"] = r.name;
            d["coordinates"] = r.report.coordinates;
            d["max_rel_error"] = r.report.max_rel_error;
            d["pass"] = r.report.pass;
            out.append(d);
        }
        return out;
    }, py::arg("config"), py::arg("seed") = 0);

    m.def("train", [](const ModelConfig& mc, const TrainConfig& tc, const std::filesystem::path& hr_dir,
                      const std::filesystem::path& out_dir) {
        Dataset<float> data;
        data.train = load_pairs<float>(hr_dir, mc.scale, std::nullopt);
        Trainer<float> trainer(mc, tc, std::move(data));
        TrainOptions o;
        o.out_dir = out_dir;
        py::list out;
        for (const auto& r : train_loop(trainer, o).records) out.append(record_dict(r));
        return out;
    }, py::arg("model_config"), py::arg("train_config"), py::arg("hr_dir"), py::arg("out_dir"));
}
