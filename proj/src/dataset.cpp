#include "vitgan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "vitgan/error.hpp"
#include "vitgan/random.hpp"

namespace vitgan {

namespace {

// Rendering uses only +, *, / and sqrt, which IEEE 754 rounds exactly, so
// the pixels do not depend on the platform's libm.

struct Shape2D {
    std::size_t cls = 0;  // 0 ellipse, 1 rectangle, 2 diamond
    double cx = 0, cy = 0, rx = 1, ry = 1;
    std::array<double, 3> color{};
    double lx = 1, ly = 0;  // unit light direction
};

struct Layout {
    std::array<std::array<double, 3>, 2> background{};
    double gx = 1, gy = 0;  // unit gradient direction
    std::vector<Shape2D> shapes;
};

void unit_vector(Rng& rng, double& x, double& y) {
    for (;;) {
        x = rng.uniform(-1, 1);
        y = rng.uniform(-1, 1);
        const double n = std::sqrt(x * x + y * y);
        if (n > 0.1 && n <= 1.0) {
            x /= n;
            y /= n;
            return;
        }
    }
}

Layout make_layout(const SyntheticTaskSpec& spec, std::uint64_t index) {
    Rng rng(mix_seed(spec.seed, index));
    const double s = static_cast<double>(spec.image_size);
    Layout layout;
    for (auto& colour : layout.background)
        for (auto& c : colour) c = rng.uniform(40, 200);
    unit_vector(rng, layout.gx, layout.gy);
    const std::size_t n = spec.min_shapes + rng.below(spec.max_shapes - spec.min_shapes + 1);
    for (std::size_t i = 0; i < n; ++i) {
        Shape2D shape;
        shape.cls = rng.below(kNumShapeClasses);
        shape.cx = rng.uniform(0.15, 0.85) * s;
        shape.cy = rng.uniform(0.15, 0.85) * s;
        shape.rx = rng.uniform(0.1, 0.25) * s;
        shape.ry = rng.uniform(0.1, 0.25) * s;
        for (auto& c : shape.color) c = rng.uniform(30, 255);
        unit_vector(rng, shape.lx, shape.ly);
        layout.shapes.push_back(shape);
    }
    return layout;
}

/// Normalised squared radius inside the shape's own metric, or < 0 outside.
double shape_radius2(const Shape2D& shape, double x, double y) {
    const double u = (x - shape.cx) / shape.rx, v = (y - shape.cy) / shape.ry;
    const double e = u * u + v * v;
    switch (shape.cls) {
        case 0: return e <= 1 ? e : -1;
        case 1: return std::max(std::abs(u), std::abs(v)) <= 1 ? std::min(e, 1.0) : -1;
        default: {
            const double d = std::abs(u) + std::abs(v);
            return d <= 1 ? d * d : -1;
        }
    }
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

struct Rendered {
    Image8 shaded;
    Image8 labels;
    Image8 depth;
};

Rendered render(const SyntheticTaskSpec& spec, const Layout& layout) {
    const std::size_t s = spec.image_size;
    Rendered out{Image8(s, s, 3), Image8(s, s, 3), Image8(s, s, 1)};
    const double half = static_cast<double>(s) / 2;
    const std::size_t n = layout.shapes.size();
    for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
            const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
            long top = -1;
            double top_r2 = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const double r2 = shape_radius2(layout.shapes[k], px, py);
                if (r2 >= 0) {
                    top = static_cast<long>(k);
                    top_r2 = r2;
                }
            }
            if (top < 0) {
                const double t = std::clamp(((px - half) * layout.gx + (py - half) * layout.gy) / static_cast<double>(s) + 0.5, 0.0, 1.0);
                for (std::size_t c = 0; c < 3; ++c) {
                    out.shaded.at(x, y, c) = to_byte(layout.background[0][c] * (1 - t) + layout.background[1][c] * t);
                    out.labels.at(x, y, c) = kLabelPalette[0][c];
                }
                out.depth.at(x, y, 0) = to_byte(20 + 40 * static_cast<double>(y) / static_cast<double>(s - 1));
                continue;
            }
            const Shape2D& shape = layout.shapes[static_cast<std::size_t>(top)];
            const double along = ((px - shape.cx) * shape.lx + (py - shape.cy) * shape.ly) / std::max(shape.rx, shape.ry);
            const double shade = std::clamp(0.65 + 0.35 * along, 0.3, 1.0);
            for (std::size_t c = 0; c < 3; ++c) {
                out.shaded.at(x, y, c) = to_byte(shape.color[c] * shade);
                out.labels.at(x, y, c) = kLabelPalette[shape.cls + 1][c];
            }
            const double layer = 90 + 130 * static_cast<double>(top + 1) / static_cast<double>(n);
            out.depth.at(x, y, 0) = to_byte(layer + 30 * (1 - std::min(1.0, top_r2)));
        }
    return out;
}

}  // namespace

const char* to_string(SyntheticTask task) {
    switch (task) {
        case SyntheticTask::seg_maps: return "seg_maps";
        case SyntheticTask::inverse_seg: return "inverse_seg";
        case SyntheticTask::depth: return "depth";
    }
    return "?";
}

SyntheticTask parse_synthetic_task(const std::string& name) {
    if (name == "seg_maps") return SyntheticTask::seg_maps;
    if (name == "inverse_seg") return SyntheticTask::inverse_seg;
    if (name == "depth") return SyntheticTask::depth;
    throw ConfigError("unknown synthetic task '" + name + "' (expected seg_maps, inverse_seg or depth)");
}

void SyntheticTaskSpec::validate() const {
    if (image_size < 8) throw ConfigError("synthetic image_size must be at least 8, got " + std::to_string(image_size));
    if (min_shapes == 0 || max_shapes < min_shapes) {
        throw ConfigError("synthetic shape range [" + std::to_string(min_shapes) + ", " + std::to_string(max_shapes) +
                          "] is invalid");
    }
}

SyntheticImages render_synthetic(const SyntheticTaskSpec& spec, std::uint64_t index) {
    spec.validate();
    Rendered r = render(spec, make_layout(spec, index));
    switch (spec.task) {
        case SyntheticTask::seg_maps: return {std::move(r.shaded), std::move(r.labels)};
        case SyntheticTask::inverse_seg: return {std::move(r.labels), std::move(r.shaded)};
        case SyntheticTask::depth: return {std::move(r.shaded), std::move(r.depth)};
    }
    return {};
}

std::string canonical_spec(const SyntheticTaskSpec& spec) {
    return std::string("task=") + to_string(spec.task) + ";image_size=" + std::to_string(spec.image_size) +
           ";min_shapes=" + std::to_string(spec.min_shapes) + ";max_shapes=" + std::to_string(spec.max_shapes) +
           ";seed=" + std::to_string(spec.seed) + ";";
}

std::uint64_t spec_hash(const SyntheticTaskSpec& spec) { return fnv1a64(canonical_spec(spec)); }

std::string synthetic_id(std::uint64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(index));
    return buf;
}

PairedSample synth_pair(const SyntheticTaskSpec& spec, std::uint64_t index) {
    SyntheticImages images = render_synthetic(spec, index);
    return {image_to_tensor(images.input), image_to_tensor(images.target), synthetic_id(index)};
}

SyntheticDataset::SyntheticDataset(SyntheticTaskSpec spec, std::size_t count, std::uint64_t index_offset)
    : spec_(spec), count_(count), offset_(index_offset) {
    spec_.validate();
}

PairedSample SyntheticDataset::get(std::size_t i) const {
    if (i >= count_) throw BoundsError("sample " + std::to_string(i) + " of " + std::to_string(count_));
    return synth_pair(spec_, offset_ + i);
}

DirectoryDataset::DirectoryDataset(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw IoError("dataset directory not found: " + dir.string());
    const std::string in_suffix = kInputSuffix, tgt_suffix = kTargetSuffix;
    std::map<std::string, std::filesystem::path> inputs;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > in_suffix.size() && name.ends_with(in_suffix)) {
            inputs.emplace(name.substr(0, name.size() - in_suffix.size()), entry.path());
        }
    }
    for (const auto& [id, input_path] : inputs) {
        const auto target_path = dir / (id + tgt_suffix);
        if (!std::filesystem::exists(target_path)) throw IoError("missing target for pair '" + id + "': " + target_path.string());
        PairedSample sample{load_image(input_path), load_image(target_path), id};
        if (sample.input.size(1) != sample.target.size(1) || sample.input.size(2) != sample.target.size(2)) {
            throw IoError("pair '" + id + "' has input " + shape_str(sample.input.shape()) + " but target " +
                          shape_str(sample.target.shape()));
        }
        samples_.push_back(std::move(sample));
    }
}

PairedSample DirectoryDataset::get(std::size_t i) const {
    if (i >= samples_.size()) throw BoundsError("sample " + std::to_string(i) + " of " + std::to_string(samples_.size()));
    return samples_[i];
}

Batch collate(const std::vector<PairedSample>& samples) {
    if (samples.empty()) throw ContractError("cannot collate an empty batch");
    const Shape in_shape = samples[0].input.shape(), tgt_shape = samples[0].target.shape();
    std::vector<float> in, tgt;
    Batch batch;
    for (const auto& s : samples) {
        if (s.input.shape() != in_shape || s.target.shape() != tgt_shape) {
            throw ContractError("sample '" + s.id + "' does not match the batch shapes " + shape_str(in_shape) + " / " +
                                shape_str(tgt_shape));
        }
        in.insert(in.end(), s.input.data().begin(), s.input.data().end());
        tgt.insert(tgt.end(), s.target.data().begin(), s.target.data().end());
        batch.ids.push_back(s.id);
    }
    Shape bi{samples.size()}, bt{samples.size()};
    bi.insert(bi.end(), in_shape.begin(), in_shape.end());
    bt.insert(bt.end(), tgt_shape.begin(), tgt_shape.end());
    batch.input = Tensor<float>(std::move(bi), std::move(in));
    batch.target = Tensor<float>(std::move(bt), std::move(tgt));
    return batch;
}

Batcher::Batcher(const PairedDataset& dataset, std::size_t batch_size, std::uint64_t seed)
    : dataset_(dataset), batch_size_(batch_size), seed_(seed) {
    if (batch_size == 0) throw ContractError("batch_size must be at least 1");
    if (dataset.size() == 0) throw ContractError("cannot batch an empty dataset");
    if (dataset.size() < batch_size) {
        throw ContractError("dataset of " + std::to_string(dataset.size()) + " samples cannot fill a batch of " +
                            std::to_string(batch_size));
    }
    batches_per_epoch_ = dataset.size() / batch_size;
}

std::vector<std::size_t> Batcher::epoch_order(std::uint64_t epoch) const {
    std::vector<std::size_t> order(dataset_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(seed_, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

std::vector<std::size_t> Batcher::indices_at(std::uint64_t k) const {
    const auto order = epoch_order(k / batches_per_epoch_);
    const std::size_t start = (k % batches_per_epoch_) * batch_size_;
    return {order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(start + batch_size_)};
}

Batch Batcher::batch_at(std::uint64_t k) const {
    std::vector<PairedSample> samples;
    for (std::size_t i : indices_at(k)) samples.push_back(dataset_.get(i));
    return collate(samples);
}

}  // namespace vitgan
