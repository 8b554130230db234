#include "vitgan/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

#include "vitgan/error.hpp"

namespace vitgan {

namespace {

std::string join_key(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

// A YAML mapping whose keys are checked off as they are read; finish()
// rejects whatever is left.
class Section {
public:
    Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) {
            throw ConfigError("'" + (path_.empty() ? std::string("<root>") : path_) + "' must be a mapping");
        }
    }

    bool has(const std::string& key) {
        known_.insert(key);
        return node_ && node_.IsMap() && node_[key] && !node_[key].IsNull();
    }

    const std::string& path() const { return path_; }
    std::string key_path(const std::string& key) const { return join_key(path_, key); }

    Section child(const std::string& key) {
        known_.insert(key);
        if (!node_ || !node_.IsMap()) return Section(YAML::Node(), key_path(key));
        return Section(node_[key], key_path(key));
    }

    std::string scalar(const std::string& key) {
        const YAML::Node n = node_[key];
        if (!n.IsScalar()) throw ConfigError("'" + key_path(key) + "' must be a scalar");
        return n.Scalar();
    }

    template <typename U>
    bool read_unsigned(const std::string& key, U& out) {
        if (!has(key)) return false;
        const std::string text = scalar(key);
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
            throw ConfigError("'" + key_path(key) + "' must be a non-negative integer, got '" + text + "'");
        }
        out = static_cast<U>(v);
        return true;
    }

    bool read_float(const std::string& key, float& out) {
        if (!has(key)) return false;
        const std::string text = scalar(key);
        double v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
            throw ConfigError("'" + key_path(key) + "' must be a number, got '" + text + "'");
        }
        out = static_cast<float>(v);
        return true;
    }

    bool read_string(const std::string& key, std::string& out) {
        if (!has(key)) return false;
        out = scalar(key);
        return true;
    }

    template <typename E, typename Parse>
    bool read_enum(const std::string& key, E& out, Parse parse) {
        std::string text;
        if (!read_string(key, text)) return false;
        try {
            out = parse(text);
        } catch (const ConfigError& e) {
            throw ConfigError("'" + key_path(key) + "': " + e.what());
        }
        return true;
    }

    void finish() const {
        if (!node_ || !node_.IsMap()) return;
        for (const auto& kv : node_) {
            const std::string key = kv.first.as<std::string>();
            if (!known_.count(key)) throw ConfigError("unknown key '" + key_path(key) + "'");
        }
    }

private:
    YAML::Node node_;
    std::string path_;
    std::set<std::string> known_;
};

DiscriminatorVariant parse_variant(const std::string& name) {
    if (name == "conv_patchgan") return DiscriminatorVariant::conv_patchgan;
    if (name == "transformer_patchgan") return DiscriminatorVariant::transformer_patchgan;
    throw ConfigError("unknown discriminator variant '" + name + "'");
}

nn::Activation parse_activation(const std::string& name) {
    if (name == "gelu") return nn::Activation::gelu;
    if (name == "relu") return nn::Activation::relu;
    throw ConfigError("unknown activation '" + name + "'");
}

FeatureProviderKind parse_provider(const std::string& name) {
    if (name == "raw_pixels") return FeatureProviderKind::raw_pixels;
    if (name == "embedding_file") return FeatureProviderKind::embedding_file;
    throw ConfigError("unknown feature provider '" + name + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& text) {
    std::filesystem::path p(text);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
}

void read_generator(Section s, GeneratorConfig& g) {
    s.read_unsigned("image_size", g.image_size);
    s.read_unsigned("patch_size", g.patch_size);
    s.read_unsigned("in_channels", g.in_channels);
    s.read_unsigned("out_channels", g.out_channels);
    s.read_unsigned("embed_dim", g.embed_dim);
    s.read_unsigned("num_layers", g.num_layers);
    s.read_unsigned("num_heads", g.num_heads);
    s.read_unsigned("mlp_ratio", g.mlp_ratio);
    s.read_unsigned("residual_channels", g.residual_channels);
    s.read_unsigned("num_residual_blocks", g.num_residual_blocks);
    s.read_enum("activation", g.activation, parse_activation);
    s.finish();
}

void read_discriminator(Section s, DiscriminatorConfig& d) {
    s.read_enum("variant", d.variant, parse_variant);
    s.read_unsigned("base_channels", d.base_channels);
    s.read_unsigned("num_downsamples", d.num_downsamples);
    s.read_unsigned("patch_size", d.patch_size);
    s.read_unsigned("embed_dim", d.embed_dim);
    s.read_unsigned("num_layers", d.num_layers);
    s.read_unsigned("num_heads", d.num_heads);
    s.read_unsigned("mlp_ratio", d.mlp_ratio);
    s.finish();
}

void read_train(Section s, TrainConfig& t, std::string& metrics_file) {
    s.read_enum("mode", t.mode, parse_train_mode);
    s.read_float("lambda_l1", t.lambda_l1);
    s.read_float("lr_g", t.lr_g);
    s.read_float("lr_d", t.lr_d);
    s.read_float("beta1", t.beta1);
    s.read_float("beta2", t.beta2);
    s.read_float("eps", t.eps);
    s.read_unsigned("batch_size", t.batch_size);
    s.read_unsigned("total_steps", t.total_steps);
    s.read_unsigned("checkpoint_every", t.checkpoint_every);
    s.read_string("metrics_file", metrics_file);
    s.finish();
}

DataConfig read_data(Section s, const std::filesystem::path& base, std::size_t default_size) {
    DataConfig data;
    std::string dir;
    if (s.read_string("directory", dir)) data.directory = resolve(base, dir);
    if (s.has("synthetic")) {
        Section syn = s.child("synthetic");
        SyntheticDataConfig c;
        c.spec.image_size = default_size;
        syn.read_enum("task", c.spec.task, parse_synthetic_task);
        syn.read_unsigned("image_size", c.spec.image_size);
        syn.read_unsigned("min_shapes", c.spec.min_shapes);
        syn.read_unsigned("max_shapes", c.spec.max_shapes);
        c.explicit_seed = syn.read_unsigned("seed", c.spec.seed);
        syn.read_unsigned("count", c.count);
        syn.read_unsigned("index_offset", c.index_offset);
        syn.finish();
        data.synthetic = c;
    }
    s.finish();
    if (data.directory.has_value() == data.synthetic.has_value()) {
        throw ConfigError("'" + s.path() + "' needs exactly one of 'directory' or 'synthetic'");
    }
    return data;
}

template <typename F>
void prefixed(const std::string& key, F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        throw ConfigError("'" + key + "': " + e.what());
    }
}

void check_data(const DataConfig& data, const std::string& key, const GeneratorConfig& g) {
    if (!data.synthetic) return;
    const SyntheticDataConfig& s = *data.synthetic;
    const std::string syn = key + ".synthetic";
    prefixed(syn, [&] { s.spec.validate(); });
    if (s.count == 0) throw ConfigError("'" + syn + ".count' must be at least 1");
    if (s.spec.image_size != g.image_size) {
        throw ConfigError("'" + syn + ".image_size' (" + std::to_string(s.spec.image_size) +
                          ") does not match 'generator.image_size' (" + std::to_string(g.image_size) + ")");
    }
    if (s.spec.input_channels() != g.in_channels) {
        throw ConfigError("'generator.in_channels' (" + std::to_string(g.in_channels) + ") does not match task " +
                          to_string(s.spec.task) + " input channels (" + std::to_string(s.spec.input_channels()) +
                          ")");
    }
    if (s.spec.target_channels() != g.out_channels) {
        throw ConfigError("'generator.out_channels' (" + std::to_string(g.out_channels) + ") does not match task " +
                          to_string(s.spec.task) + " target channels (" + std::to_string(s.spec.target_channels()) +
                          ")");
    }
}

DataConfig default_data() {
    DataConfig d;
    d.synthetic = SyntheticDataConfig{};
    return d;
}

}  // namespace

const char* to_string(FeatureProviderKind kind) {
    return kind == FeatureProviderKind::raw_pixels ? "raw_pixels" : "embedding_file";
}

const char* to_string(DiscriminatorVariant variant) {
    return variant == DiscriminatorVariant::conv_patchgan ? "conv_patchgan" : "transformer_patchgan";
}

const char* to_string(nn::Activation activation) { return activation == nn::Activation::gelu ? "gelu" : "relu"; }

void ExperimentConfig::set_seed(std::uint64_t s) {
    seed = s;
    sync();
}

void ExperimentConfig::sync() {
    train.seed = seed;
    auto follow = [&](DataConfig& d) {
        if (d.synthetic && !d.synthetic->explicit_seed) d.synthetic->spec.seed = seed;
    };
    follow(data);
    if (eval.data) follow(*eval.data);
    discriminator.image_size = generator.image_size;
    discriminator.condition_channels = generator.in_channels;
    discriminator.image_channels = generator.out_channels;
}

void ExperimentConfig::validate() const {
    prefixed("generator", [&] { generator.validate(); });
    prefixed("discriminator", [&] { discriminator.validate(); });
    prefixed("train", [&] { train.validate(); });
    if (metrics_file.empty()) throw ConfigError("'train.metrics_file' must not be empty");
    if (output_dir.empty()) throw ConfigError("'output_dir' must not be empty");
    check_data(data, "data", generator);
    if (eval.data) check_data(*eval.data, "eval.data", generator);
    if (eval.raw_grid == 0 || eval.raw_grid > generator.image_size) {
        throw ConfigError("'eval.raw_grid' must be in [1, " + std::to_string(generator.image_size) + "], got " +
                          std::to_string(eval.raw_grid));
    }
    if (eval.histogram_bins < 2) throw ConfigError("'eval.histogram_bins' must be at least 2");
    if (eval.is_splits == 0) throw ConfigError("'eval.is_splits' must be at least 1");
    if (eval.provider == FeatureProviderKind::embedding_file) {
        if (eval.embedding_file.empty()) throw ConfigError("'eval.embedding_file' is required by provider embedding_file");
        if (eval.embedding_dim == 0) throw ConfigError("'eval.embedding_dim' must be at least 1");
    }
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    c.data = default_data();
    c.sync();
    return c;
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config is not valid YAML: ") + e.what());
    }

    ExperimentConfig c;
    Section top(root, "");
    top.read_unsigned("seed", c.seed);
    std::string out;
    c.output_dir = top.read_string("output_dir", out) ? resolve(base_dir, out) : resolve(base_dir, "run");
    read_generator(top.child("generator"), c.generator);
    read_discriminator(top.child("discriminator"), c.discriminator);
    read_train(top.child("train"), c.train, c.metrics_file);
    if (top.has("data")) {
        c.data = read_data(top.child("data"), base_dir, c.generator.image_size);
    } else {
        c.data = default_data();
        c.data.synthetic->spec.image_size = c.generator.image_size;
    }

    if (top.has("eval")) {
        Section ev = top.child("eval");
        ev.read_enum("provider", c.eval.provider, parse_provider);
        ev.read_unsigned("raw_grid", c.eval.raw_grid);
        std::string emb;
        if (ev.read_string("embedding_file", emb)) c.eval.embedding_file = resolve(base_dir, emb);
        ev.read_unsigned("embedding_dim", c.eval.embedding_dim);
        ev.read_unsigned("histogram_bins", c.eval.histogram_bins);
        ev.read_unsigned("is_splits", c.eval.is_splits);
        if (ev.has("data")) c.eval.data = read_data(ev.child("data"), base_dir, c.generator.image_size);
        ev.finish();
    }
    top.finish();

    c.sync();
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_experiment_config(ss.str(), path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::unique_ptr<PairedDataset> make_dataset(const DataConfig& data) {
    if (data.directory) return std::make_unique<DirectoryDataset>(*data.directory);
    if (!data.synthetic) throw ConfigError("data section has no source");
    const SyntheticDataConfig& s = *data.synthetic;
    return std::make_unique<SyntheticDataset>(s.spec, s.count, s.index_offset);
}

std::unique_ptr<FeatureProvider> make_feature_provider(const EvalConfig& eval) {
    if (eval.provider == FeatureProviderKind::embedding_file) {
        return std::make_unique<EmbeddingFileProvider>(eval.embedding_file, eval.embedding_dim);
    }
    return std::make_unique<RawPixelProvider>(eval.raw_grid);
}

}  // namespace vitgan
