#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <string>

#include "vitgan/checkpoint.hpp"
#include "vitgan/config.hpp"
#include "vitgan/dataset.hpp"
#include "vitgan/discriminator.hpp"
#include "vitgan/error.hpp"
#include "vitgan/generator.hpp"
#include "vitgan/image_io.hpp"
#include "vitgan/metrics.hpp"
#include "vitgan/nn/functional.hpp"
#include "vitgan/training.hpp"

namespace py = pybind11;
using namespace vitgan;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor<T> to_tensor(const Array<T>& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    Buffer<T> data(a.data(), a.data() + a.size());
    return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
py::array_t<T> to_array(const Tensor<T>& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<T> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

std::vector<std::vector<double>> rows_of(const Array<double>& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-d array of shape [n, dim]");
    std::vector<std::vector<double>> rows(a.shape(0));
    const double* p = a.data();
    for (auto& r : rows) {
        r.assign(p, p + a.shape(1));
        p += a.shape(1);
    }
    return rows;
}

nn::Phase phase_of(bool train) { return train ? nn::Phase::train : nn::Phase::eval; }

py::dict metrics_dict(const StepMetrics& m) {
    py::dict d;
    d["step"] = m.step;
    d["d_loss"] = m.d_loss;
    d["g_adv"] = m.g_adv;
    d["g_l1"] = m.g_l1;
    d["g_total"] = m.g_total;
    d["d_step_gen_grad_max"] = m.d_step_gen_grad_max;
    return d;
}

py::dict checkpoint_to_dict(const std::vector<CheckpointEntry>& entries) {
    py::dict d;
    for (const auto& e : entries) {
        std::vector<py::ssize_t> shape(e.shape.begin(), e.shape.end());
        std::visit(
            [&](const auto& values) {
                using V = typename std::decay_t<decltype(values)>::value_type;
                py::array_t<V> a(shape);
                std::copy(values.begin(), values.end(), a.mutable_data());
                d[py::str(e.name)] = a;
            },
            e.values);
    }
    return d;
}

std::vector<CheckpointEntry> dict_to_checkpoint(const py::dict& d) {
    std::vector<CheckpointEntry> entries;
    for (const auto& [key, value] : d) {
        const auto a = py::array::ensure(value, py::array::c_style);
        if (!a) throw ContractError("checkpoint values must be arrays");
        CheckpointEntry e;
        e.name = py::cast<std::string>(key);
        e.shape.assign(a.shape(), a.shape() + a.ndim());
        if (a.dtype().is(py::dtype::of<float>())) {
            const auto t = a.cast<Array<float>>();
            e.values = std::vector<float>(t.data(), t.data() + t.size());
        } else if (a.dtype().is(py::dtype::of<double>())) {
            const auto t = a.cast<Array<double>>();
            e.values = std::vector<double>(t.data(), t.data() + t.size());
        } else if (a.dtype().is(py::dtype::of<std::uint64_t>())) {
            const auto t = a.cast<Array<std::uint64_t>>();
            e.values = std::vector<std::uint64_t>(t.data(), t.data() + t.size());
        } else {
            throw ContractError("entry '" + e.name + "' must be float32, float64 or uint64");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

// Training state built from YAML text, stepped on caller-supplied batches.
class Trainer {
public:
    explicit Trainer(const std::string& yaml)
        : config_(parse_experiment_config(yaml)), state_(config_.generator, config_.discriminator, config_.train) {}

    py::dict step(const Array<float>& input, const Array<float>& target) {
        Batch b{to_tensor(input), to_tensor(target), {}};
        return metrics_dict(train_step(state_, b));
    }
    py::array_t<float> generate(const Array<float>& input) const {
        return to_array(state_.generator.forward(to_tensor(input), nn::Phase::eval));
    }
    void save(const std::filesystem::path& p) const { save_checkpoint(state_, p); }
    void load(const std::filesystem::path& p) { load_checkpoint(p, state_); }
    std::uint64_t steps() const { return state_.step; }
    const ExperimentConfig& config() const { return config_; }

private:
    ExperimentConfig config_;
    TrainState state_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "ViT generator and PatchGAN discriminator for paired image translation";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<LoadError>(m, "LoadError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    py::class_<GeneratorConfig>(m, "GeneratorConfig")
        .def(py::init<>())
        .def_readwrite("image_size", &GeneratorConfig::image_size)
        .def_readwrite("patch_size", &GeneratorConfig::patch_size)
        .def_readwrite("in_channels", &GeneratorConfig::in_channels)
        .def_readwrite("out_channels", &GeneratorConfig::out_channels)
        .def_readwrite("embed_dim", &GeneratorConfig::embed_dim)
        .def_readwrite("num_layers", &GeneratorConfig::num_layers)
        .def_readwrite("num_heads", &GeneratorConfig::num_heads)
        .def_readwrite("mlp_ratio", &GeneratorConfig::mlp_ratio)
        .def_readwrite("residual_channels", &GeneratorConfig::residual_channels)
        .def_readwrite("num_residual_blocks", &GeneratorConfig::num_residual_blocks)
        .def_property_readonly("num_patches", &GeneratorConfig::num_patches)
        .def("validate", &GeneratorConfig::validate);

    py::class_<Generator<float>>(m, "Generator")
        .def(py::init<const GeneratorConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
        .def(
            "forward",
            [](const Generator<float>& g, const Array<float>& x, bool train) {
                return to_array(g.forward(to_tensor(x), phase_of(train)));
            },
            py::arg("images"), py::arg("train") = false, "[b, c, h, w] in [-1, 1] -> [b, out_c, h, w]")
        .def("load", [](Generator<float>& g, const std::filesystem::path& p) { load_generator(p, g); })
        .def("parameter_count", [](const Generator<float>& g) {
            std::size_t n = 0;
            for (const auto& [name, t] : g.parameters()) n += t.numel();
            return n;
        });

    py::class_<DiscriminatorConfig>(m, "DiscriminatorConfig")
        .def(py::init<>())
        .def_readwrite("image_size", &DiscriminatorConfig::image_size)
        .def_readwrite("condition_channels", &DiscriminatorConfig::condition_channels)
        .def_readwrite("image_channels", &DiscriminatorConfig::image_channels)
        .def_readwrite("base_channels", &DiscriminatorConfig::base_channels)
        .def_readwrite("num_downsamples", &DiscriminatorConfig::num_downsamples)
        .def_property_readonly("output_grid", &DiscriminatorConfig::output_grid)
        .def("validate", &DiscriminatorConfig::validate);

    py::class_<Discriminator<float>>(m, "Discriminator")
        .def(py::init<const DiscriminatorConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
        .def(
            "forward",
            [](const Discriminator<float>& d, const Array<float>& condition, const Array<float>& candidate,
               bool train) {
                return to_array(d.discriminate(to_tensor(condition), to_tensor(candidate), phase_of(train)).logits);
            },
            py::arg("condition"), py::arg("candidate"), py::arg("train") = false, "Raw logits [b, 1, N, N]");

    m.def(
        "attention",
        [](const Array<double>& q, const Array<double>& k, const Array<double>& v) {
            return to_array(nn::attention(to_tensor(q), to_tensor(k), to_tensor(v)));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), "softmax(q k^T / sqrt(d)) v over the last two axes");

    m.def(
        "ssim",
        [](const Array<double>& x, const Array<double>& y, std::size_t window, double sigma, double data_range) {
            SsimOptions o;
            o.window = window;
            o.sigma = sigma;
            o.data_range = data_range;
            return ssim(to_tensor(x), to_tensor(y), o);
        },
        py::arg("x"), py::arg("y"), py::arg("window") = 11, py::arg("sigma") = 1.5, py::arg("data_range") = 2.0);
    m.def(
        "fid", [](const Array<double>& a, const Array<double>& b) {
            return fid(gaussian_stats(rows_of(a)), gaussian_stats(rows_of(b)));
        },
        py::arg("features_a"), py::arg("features_b"), "Frechet distance between Gaussian fits of two [n, dim] sets");
    m.def(
        "inception_score",
        [](const Array<double>& probs, std::size_t splits) {
            const InceptionScore s = inception_score(rows_of(probs), splits);
            return py::make_tuple(s.mean, s.stddev);
        },
        py::arg("probs"), py::arg("splits") = 1, "(mean, std) over splits of a [n, classes] probability table");
    m.def(
        "mean_abs_laplacian", [](const Array<double>& x) { return mean_abs_laplacian(to_tensor(x)); },
        py::arg("images"));

    m.def(
        "synth_pair",
        [](const std::string& task, std::size_t image_size, std::uint64_t seed, std::uint64_t index,
           std::size_t min_shapes, std::size_t max_shapes) {
            SyntheticTaskSpec spec;
            spec.task = parse_synthetic_task(task);
            spec.image_size = image_size;
            spec.seed = seed;
            spec.min_shapes = min_shapes;
            spec.max_shapes = max_shapes;
            const PairedSample s = synth_pair(spec, index);
            return py::make_tuple(to_array(s.input), to_array(s.target));
        },
        py::arg("task") = "seg_maps", py::arg("image_size") = 64, py::arg("seed") = 0, py::arg("index") = 0,
        py::arg("min_shapes") = 2, py::arg("max_shapes") = 4, "(input, target) as [c, h, w] float32 in [-1, 1]");

    m.def(
        "load_image", [](const std::filesystem::path& p) { return to_array(load_image(p)); }, py::arg("path"));
    m.def(
        "save_image", [](const Array<float>& chw, const std::filesystem::path& p) { save_image(to_tensor(chw), p); },
        py::arg("image"), py::arg("path"));

    m.def(
        "read_checkpoint", [](const std::filesystem::path& p) { return checkpoint_to_dict(read_checkpoint_file(p)); },
        py::arg("path"), "name -> array for every entry of a checkpoint file");
    m.def(
        "write_checkpoint",
        [](const std::filesystem::path& p, const py::dict& entries) {
            write_checkpoint_file(dict_to_checkpoint(entries), p);
        },
        py::arg("path"), py::arg("entries"));

    py::class_<Trainer>(m, "Trainer")
        .def(py::init<const std::string&>(), py::arg("config_yaml") = "",
             "Training state from experiment-config YAML text")
        .def("step", &Trainer::step, py::arg("input"), py::arg("target"),
             "One D and one G update on a [b, c, h, w] batch; returns the step metrics")
        .def("generate", &Trainer::generate, py::arg("input"))
        .def("save", &Trainer::save, py::arg("path"))
        .def("load", &Trainer::load, py::arg("path"))
        .def_property_readonly("steps", &Trainer::steps)
        .def_property_readonly("mode", [](const Trainer& t) { return to_string(t.config().train.mode); });
}
