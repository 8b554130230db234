#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "vitgan/checkpoint.hpp"
#include "vitgan/config.hpp"
#include "vitgan/dataset.hpp"
#include "vitgan/error.hpp"
#include "vitgan/metrics.hpp"
#include "vitgan/ops.hpp"
#include "vitgan/training.hpp"

namespace vitgan::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    std::optional<std::size_t> count;
    std::string resume;
    std::string checkpoint;
    std::vector<std::string> inputs;
    std::string out;
};

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// defaults < file < flags
ExperimentConfig resolve_config(const Options& o) {
    ExperimentConfig c = o.config.empty() ? default_experiment_config() : load_experiment_config(o.config);
    if (o.seed) c.set_seed(*o.seed);
    if (o.mode) {
        try {
            c.train.mode = parse_train_mode(*o.mode);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("--mode: ") + e.what());
        }
    }
    if (o.count) {
        if (!c.data.synthetic) throw ConfigError("--count needs a 'data.synthetic' section");
        c.data.synthetic->count = *o.count;
    }
    c.sync();
    c.validate();
    return c;
}

fs::path output_dir(const Options& o, const ExperimentConfig& c, const char* sub) {
    if (!o.out.empty()) return o.out;
    return sub ? c.output_dir / sub : c.output_dir;
}

std::string size_str(const Shape& s) {
    if (s.size() != 3) return shape_str(s);
    return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}

void check_sample(const PairedSample& s, const GeneratorConfig& g) {
    const Shape in{g.in_channels, g.image_size, g.image_size};
    const Shape out{g.out_channels, g.image_size, g.image_size};
    if (s.input.shape() != in) {
        throw DimensionError("input '" + s.id + "' is " + size_str(s.input.shape()) + " (CxHxW) but the model expects " +
                             size_str(in));
    }
    if (s.target.defined() && s.target.shape() != out) {
        throw DimensionError("target '" + s.id + "' is " + size_str(s.target.shape()) +
                             " (CxHxW) but the model produces " + size_str(out));
    }
}

// The identity stub echoes the reference target; anything else is a
// generator checkpoint run in eval phase.
ImageModel load_model(const fs::path& checkpoint, const GeneratorConfig& g, std::uint64_t seed) {
    if (is_identity_stub(read_checkpoint_file(checkpoint))) {
        return [](const PairedSample& s) {
            if (!s.target.defined()) throw ContractError("identity stub needs a target for '" + s.id + "'");
            return s.target;
        };
    }
    auto gen = std::make_shared<Generator<float>>(g, generator_seed(seed));
    load_generator(checkpoint, *gen);
    return [gen, g](const PairedSample& s) {
        check_sample(s, g);
        const Tensor<float> x = reshape(s.input, {1, g.in_channels, g.image_size, g.image_size});
        const Tensor<float> y = gen->forward(x, nn::Phase::eval);
        return reshape(y, {g.out_channels, g.image_size, g.image_size});
    };
}

int cmd_gen_data(const Options& o, std::ostream& out) {
    const ExperimentConfig c = resolve_config(o);
    if (!c.data.synthetic) throw ConfigError("gen-data needs a 'data.synthetic' section");
    const SyntheticDataConfig& syn = *c.data.synthetic;
    const fs::path dir = output_dir(o, c, "data");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    std::ostringstream manifest;
    manifest << "spec " << canonical_spec(syn.spec) << "\n";
    manifest << "spec_hash " << hex64(spec_hash(syn.spec)) << "\n";
    manifest << "count " << syn.count << "\n";
    manifest << "index_offset " << syn.index_offset << "\n";
    for (std::size_t i = 0; i < syn.count; ++i) {
        const std::uint64_t index = syn.index_offset + i;
        const SyntheticImages images = render_synthetic(syn.spec, index);
        const std::string id = synthetic_id(index);
        write_image8(images.input, dir / (id + kInputSuffix));
        write_image8(images.target, dir / (id + kTargetSuffix));
        manifest << "id " << id << "\n";
    }
    write_text(dir / "manifest.txt", manifest.str());
    out << "wrote " << syn.count << " pairs to " << dir.string() << " (spec_hash " << hex64(spec_hash(syn.spec))
        << ")\n";
    return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    const ExperimentConfig c = resolve_config(o);
    const fs::path dir = output_dir(o, c, nullptr);

    // Everything that can be rejected is rejected before step 0.
    const std::unique_ptr<PairedDataset> dataset = make_dataset(c.data);
    if (dataset->size() < c.train.batch_size) {
        throw ContractError("dataset has " + std::to_string(dataset->size()) + " pairs, fewer than batch_size " +
                            std::to_string(c.train.batch_size));
    }
    for (std::size_t i = 0; i < dataset->size(); ++i) check_sample(dataset->get(i), c.generator);

    TrainState state(c.generator, c.discriminator, c.train);
    if (!o.resume.empty()) {
        load_checkpoint(o.resume, state);
        if (state.config.seed != c.seed) {
            err << "note: using seed " << state.config.seed << " stored in " << o.resume << "\n";
        }
    }
    const std::uint64_t first = state.step;

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    TrainRunOptions run;
    run.metrics_path = dir / c.metrics_file;
    run.checkpoint_dir = dir / "checkpoints";
    run.append_metrics = !o.resume.empty();
    StepMetrics last;
    const std::size_t report_every = std::max<std::size_t>(1, c.train.total_steps / 10);
    run.on_step = [&](const StepMetrics& m) {
        last = m;
        if ((m.step + 1) % report_every == 0) {
            out << "step " << m.step + 1 << "/" << c.train.total_steps << "  " << format_metrics_line(m) << "\n";
        }
        return true;
    };
    run_training(state, *dataset, run);

    out << "trained " << to_string(state.config.mode) << " steps " << first << ".." << state.step << "; metrics "
        << run.metrics_path.string() << "; checkpoint " << (run.checkpoint_dir / kFinalCheckpointName).string()
        << "\n";
    return kExitOk;
}

struct InferInput {
    std::string id;
    fs::path input;
    std::optional<fs::path> target;
};

std::vector<InferInput> collect_inputs(const std::vector<std::string>& args) {
    const std::string in_suffix = kInputSuffix;
    auto describe = [&](const fs::path& p) {
        InferInput r{p.stem().string(), p, std::nullopt};
        const std::string name = p.filename().string();
        if (name.size() > in_suffix.size() && name.ends_with(in_suffix)) {
            r.id = name.substr(0, name.size() - in_suffix.size());
            const fs::path t = p.parent_path() / (r.id + kTargetSuffix);
            if (fs::exists(t)) r.target = t;
        }
        return r;
    };
    std::vector<InferInput> result;
    for (const std::string& a : args) {
        const fs::path p(a);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p)) {
                if (e.path().filename().string().ends_with(in_suffix)) found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            for (const auto& f : found) result.push_back(describe(f));
        } else if (fs::exists(p)) {
            result.push_back(describe(p));
        } else {
            throw IoError("input not found: " + a);
        }
    }
    if (result.empty()) throw ContractError("no input images");
    return result;
}

int cmd_infer(const Options& o, std::ostream& out) {
    const ExperimentConfig c = resolve_config(o);
    const fs::path dir = output_dir(o, c, "infer");
    const std::vector<InferInput> inputs = collect_inputs(o.inputs);
    const bool with_target = std::all_of(inputs.begin(), inputs.end(), [](const InferInput& i) { return i.target; });

    std::vector<PairedSample> samples;
    for (const InferInput& in : inputs) {
        PairedSample s{load_image(in.input), {}, in.id};
        if (in.target) s.target = load_image(*in.target);
        check_sample(s, c.generator);
        samples.push_back(std::move(s));
    }
    const ImageModel model = load_model(o.checkpoint, c.generator, c.seed);

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::vector<Image8>> rows;
    for (const PairedSample& s : samples) {
        const Image8 output = tensor_to_image(model(s));
        write_image8(output, dir / (s.id + ".output.png"));
        std::vector<Image8> row{tensor_to_image(s.input)};
        if (with_target) row.push_back(tensor_to_image(s.target));
        row.push_back(output);
        rows.push_back(std::move(row));
    }
    const Image8 sheet = compose_sheet(rows);
    write_image8(sheet, dir / "sheet.png");
    out << "wrote " << samples.size() << " outputs and sheet.png (" << rows.size() << " rows: input | "
        << (with_target ? "target | " : "") << "output) to " << dir.string() << "\n";
    return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
    const ExperimentConfig c = resolve_config(o);
    const fs::path dir = output_dir(o, c, nullptr);
    const std::unique_ptr<PairedDataset> dataset = make_dataset(c.eval.data ? *c.eval.data : c.data);
    if (dataset->size() == 0) throw ContractError("evaluation dataset is empty");
    const std::unique_ptr<FeatureProvider> features = make_feature_provider(c.eval);
    const IntensityHistogramProvider classes(c.eval.histogram_bins);
    const ImageModel model = load_model(o.checkpoint, c.generator, c.seed);

    const EvalReport report = evaluate_model(model, *dataset, *features, classes, c.eval.is_splits);
    const std::string table = format_report_table(report);
    out << table;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / "report.txt", table);
    write_text(dir / "report.kv", format_report_kv(report));
    return kExitOk;
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const LoadError*>(&e) ||
        dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const ContractError*>(&e) ||
        dynamic_cast<const BoundsError*>(&e)) {
        return kExitData;
    }
    return kExitFailure;
}

Image8 compose_sheet(const std::vector<std::vector<Image8>>& rows) {
    if (rows.empty() || rows[0].empty()) throw ContractError("sheet needs at least one cell");
    const std::size_t cols = rows[0].size();
    const std::size_t cw = rows[0][0].width, ch = rows[0][0].height;
    Image8 sheet(cols * cw + (cols - 1) * kSheetGutter, rows.size() * ch + (rows.size() - 1) * kSheetGutter, 3);
    std::fill(sheet.pixels.begin(), sheet.pixels.end(), kSheetBackground);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw ContractError("sheet rows differ in length");
        for (std::size_t k = 0; k < cols; ++k) {
            const Image8& cell = rows[r][k];
            if (cell.width != cw || cell.height != ch) throw ContractError("sheet cells differ in size");
            const std::size_t x0 = k * (cw + kSheetGutter), y0 = r * (ch + kSheetGutter);
            for (std::size_t y = 0; y < ch; ++y) {
                for (std::size_t x = 0; x < cw; ++x) {
                    for (std::size_t c = 0; c < 3; ++c) {
                        sheet.at(x0 + x, y0 + y, c) = cell.at(x, y, cell.channels == 1 ? 0 : c);
                    }
                }
            }
        }
    }
    return sheet;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"ViT generator / PatchGAN image-to-image translation", "vitgan"};
    app.require_subcommand(1);
    Options o;

    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "YAML experiment config")->check(CLI::ExistingFile);
    };
    auto add_out = [&](CLI::App* sub, const char* what) { sub->add_option("--out", o.out, what); };

    CLI::App* gen = app.add_subcommand("gen-data", "Render a synthetic paired dataset to disk");
    add_config(gen);
    add_out(gen, "Dataset directory (default <output_dir>/data)");
    gen->add_option("--count", o.count, "Number of pairs (overrides data.synthetic.count)");
    gen->add_option("--seed", o.seed, "Experiment seed");

    CLI::App* train = app.add_subcommand("train", "Train and write metrics and checkpoints");
    add_config(train);
    add_out(train, "Run directory (default <output_dir>)");
    train->add_option("--seed", o.seed, "Experiment seed");
    train->add_option("--mode", o.mode, "cgan_l1 or l1_only");
    train->add_option("--resume", o.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

    CLI::App* infer = app.add_subcommand("infer", "Translate images and write a comparison sheet");
    add_config(infer);
    add_out(infer, "Output directory (default <output_dir>/infer)");
    infer->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    infer->add_option("--input", o.inputs, "Input images or directories of <id>.input.png")->required();
    infer->add_option("--seed", o.seed, "Experiment seed");

    CLI::App* eval = app.add_subcommand("eval", "Report FID, IS and SSIM for a checkpoint");
    add_config(eval);
    add_out(eval, "Report directory (default <output_dir>)");
    eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--seed", o.seed, "Experiment seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(o, out);
        if (train->parsed()) return cmd_train(o, out, err);
        if (infer->parsed()) return cmd_infer(o, out);
        if (eval->parsed()) return cmd_eval(o, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kExitFailure;
}

}  // namespace vitgan::cli
