#include "vitgan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "vitgan/error.hpp"
#include "vitgan/image_io.hpp"
#include "vitgan/training.hpp"

namespace vitgan {

namespace {

constexpr std::uint8_t kMagic[4] = {'V', 'I', 'T', 'G'};
constexpr std::uint32_t kMaxRank = 8;

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename U>
    U le() {
        need(sizeof(U), "integer");
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (n > remaining()) {
            throw LoadError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos_));
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

template <typename V>
std::vector<V> read_values(Reader& r, std::size_t n) {
    constexpr std::size_t w = sizeof(V);
    if (n > r.remaining() / w) throw LoadError("checkpoint truncated inside a payload");
    std::vector<V> out(n);
    for (auto& v : out) {
        if constexpr (std::is_same_v<V, float>) v = std::bit_cast<float>(r.le<std::uint32_t>());
        else if constexpr (std::is_same_v<V, double>) v = std::bit_cast<double>(r.le<std::uint64_t>());
        else v = r.le<std::uint64_t>();
    }
    return out;
}

CheckpointEntry tensor_entry(const std::string& name, const Tensor<float>& t) {
    return {name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())};
}

CheckpointEntry counter_entry(const std::string& name, std::uint64_t v) { return {name, Shape{1}, std::vector<std::uint64_t>{v}}; }

// Every entry a state expects, with where to put it.
struct Slot {
    Tensor<float> tensor;            // defined for f32 entries
    std::uint64_t* counter = nullptr;  // set for u64 entries
};

void add_tensors(std::map<std::string, Slot>& slots, const std::string& prefix, const nn::NamedTensors<float>& named) {
    for (const auto& [name, t] : named) slots[prefix + name].tensor = t;
}

std::string list_names(const std::vector<std::string>& names) {
    constexpr std::size_t kShown = 6;
    std::string out;
    for (std::size_t i = 0; i < names.size() && i < kShown; ++i) out += (i ? ", " : "") + names[i];
    if (names.size() > kShown) out += ", ... (" + std::to_string(names.size()) + " total)";
    return out;
}

void fill(std::map<std::string, Slot>& slots, const std::vector<CheckpointEntry>& entries, bool ignore_unknown) {
    // Validate everything before touching any tensor.
    std::vector<const CheckpointEntry*> matched;
    for (const auto& e : entries) {
        auto it = slots.find(e.name);
        if (it == slots.end()) {
            if (ignore_unknown) continue;
            throw LoadError("checkpoint has unknown parameter name '" + e.name + "'");
        }
        const Slot& slot = it->second;
        if (slot.counter) {
            const auto* v = std::get_if<std::vector<std::uint64_t>>(&e.values);
            if (!v || v->size() != 1) throw LoadError("checkpoint entry '" + e.name + "' must be a single u64");
        } else {
            const auto* v = std::get_if<std::vector<float>>(&e.values);
            if (!v) throw LoadError("checkpoint entry '" + e.name + "' must be f32");
            if (e.shape != slot.tensor.shape()) {
                throw LoadError("checkpoint entry '" + e.name + "' has shape " + shape_str(e.shape) + " but the model expects " +
                                shape_str(slot.tensor.shape()));
            }
        }
        matched.push_back(&e);
    }
    std::map<std::string, bool> seen;
    for (const auto* e : matched) seen[e->name] = true;
    std::vector<std::string> missing;
    for (const auto& [name, slot] : slots)
        if (!seen.count(name)) missing.push_back(name);
    if (!missing.empty()) throw LoadError("checkpoint is missing " + std::to_string(missing.size()) + " entries: " + list_names(missing));

    for (const auto* e : matched) {
        Slot& slot = slots.at(e->name);
        if (slot.counter) {
            *slot.counter = std::get<std::vector<std::uint64_t>>(e->values)[0];
        } else {
            const auto& v = std::get<std::vector<float>>(e->values);
            std::copy(v.begin(), v.end(), slot.tensor.mutable_data().begin());
        }
    }
}

}  // namespace

DType CheckpointEntry::dtype() const {
    switch (values.index()) {
        case 0: return DType::f32;
        case 1: return DType::f64;
        default: return DType::u64;
    }
}

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        const std::size_t count = std::visit([](const auto& v) { return v.size(); }, e.values);
        if (count != shape_numel(e.shape)) {
            throw ContractError("checkpoint entry '" + e.name + "' holds " + std::to_string(count) + " values for shape " +
                                shape_str(e.shape));
        }
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(static_cast<std::uint8_t>(e.dtype()));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
        for (auto d : e.shape) put_le<std::uint64_t>(out, d);
        std::visit(
            [&out](const auto& values) {
                using V = typename std::decay_t<decltype(values)>::value_type;
                for (V v : values) {
                    if constexpr (std::is_same_v<V, float>) put_le(out, std::bit_cast<std::uint32_t>(v));
                    else if constexpr (std::is_same_v<V, double>) put_le(out, std::bit_cast<std::uint64_t>(v));
                    else put_le(out, v);
                }
            },
            e.values);
    }
    return out;
}

std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const auto magic = r.take(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0) throw LoadError("not a checkpoint (bad magic bytes)");
    const auto version = r.le<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw LoadError("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    const auto count = r.le<std::uint32_t>();
    std::vector<CheckpointEntry> entries;
    for (std::uint32_t k = 0; k < count; ++k) {
        CheckpointEntry e;
        const auto name_len = r.le<std::uint32_t>();
        const auto name = r.take(name_len, "entry name");
        e.name.assign(name.begin(), name.end());
        const auto dtype = r.take(1, "dtype")[0];
        const auto ndim = r.le<std::uint32_t>();
        if (ndim > kMaxRank) throw LoadError("checkpoint entry '" + e.name + "' has rank " + std::to_string(ndim));
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < ndim; ++i) {
            const auto d = r.le<std::uint64_t>();
            if (d != 0 && numel > bytes.size() / d) throw LoadError("checkpoint entry '" + e.name + "' is larger than the file");
            numel *= d;
            e.shape.push_back(d);
        }
        switch (static_cast<DType>(dtype)) {
            case DType::f32: e.values = read_values<float>(r, numel); break;
            case DType::f64: e.values = read_values<double>(r, numel); break;
            case DType::u64: e.values = read_values<std::uint64_t>(r, numel); break;
            default: throw LoadError("checkpoint entry '" + e.name + "' has unknown dtype " + std::to_string(dtype));
        }
        entries.push_back(std::move(e));
    }
    if (r.remaining() != 0) throw LoadError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
    return entries;
}

void write_checkpoint_file(const std::vector<CheckpointEntry>& entries, const std::filesystem::path& path) {
    write_file(path, encode_checkpoint(entries));
}

std::vector<CheckpointEntry> read_checkpoint_file(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file(path);
    } catch (const IoError& e) {
        throw LoadError(e.what());
    }
    try {
        return decode_checkpoint(bytes);
    } catch (const LoadError& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

std::vector<CheckpointEntry> checkpoint_entries(const TrainState& state) {
    std::vector<CheckpointEntry> out;
    for (const auto& [n, t] : state.generator.parameters()) out.push_back(tensor_entry("gen." + n, t));
    for (const auto& [n, t] : state.generator.buffers()) out.push_back(tensor_entry("gen." + n, t));
    if (state.discriminator) {
        for (const auto& [n, t] : state.discriminator->parameters()) out.push_back(tensor_entry("disc." + n, t));
        for (const auto& [n, t] : state.discriminator->buffers()) out.push_back(tensor_entry("disc." + n, t));
    }
    auto add_opt = [&out](const std::string& prefix, const Adam<float>& opt) {
        for (const auto& [n, t] : opt.first_moments()) out.push_back(tensor_entry(prefix + "m." + n, t));
        for (const auto& [n, t] : opt.second_moments()) out.push_back(tensor_entry(prefix + "v." + n, t));
        out.push_back(counter_entry(prefix + "t", opt.steps_taken()));
    };
    add_opt("opt.gen.", state.opt_g);
    if (state.opt_d) add_opt("opt.disc.", *state.opt_d);
    out.push_back(counter_entry("state.step", state.step));
    out.push_back(counter_entry("state.seed", state.config.seed));
    return out;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    write_checkpoint_file(checkpoint_entries(state), path);
}

void restore_entries(const std::vector<CheckpointEntry>& entries, TrainState& state) {
    if (is_identity_stub(entries)) throw LoadError("identity-stub checkpoint cannot seed a training state");
    std::map<std::string, Slot> slots;
    add_tensors(slots, "gen.", state.generator.parameters());
    add_tensors(slots, "gen.", state.generator.buffers());
    if (state.discriminator) {
        add_tensors(slots, "disc.", state.discriminator->parameters());
        add_tensors(slots, "disc.", state.discriminator->buffers());
    }
    std::uint64_t t_g = 0, t_d = 0, step = 0, seed = 0;
    add_tensors(slots, "opt.gen.m.", state.opt_g.first_moments());
    add_tensors(slots, "opt.gen.v.", state.opt_g.second_moments());
    slots["opt.gen.t"].counter = &t_g;
    if (state.opt_d) {
        add_tensors(slots, "opt.disc.m.", state.opt_d->first_moments());
        add_tensors(slots, "opt.disc.v.", state.opt_d->second_moments());
        slots["opt.disc.t"].counter = &t_d;
    }
    slots["state.step"].counter = &step;
    slots["state.seed"].counter = &seed;
    fill(slots, entries, false);
    state.opt_g.set_steps_taken(t_g);
    if (state.opt_d) state.opt_d->set_steps_taken(t_d);
    state.step = step;
    state.config.seed = seed;
}

void load_checkpoint(const std::filesystem::path& path, TrainState& state) {
    const auto entries = read_checkpoint_file(path);
    try {
        restore_entries(entries, state);
    } catch (const LoadError& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

void load_generator(const std::filesystem::path& path, Generator<float>& generator) {
    const auto entries = read_checkpoint_file(path);
    if (is_identity_stub(entries)) throw LoadError(path.string() + ": identity-stub checkpoint has no generator weights");
    std::map<std::string, Slot> slots;
    add_tensors(slots, "gen.", generator.parameters());
    add_tensors(slots, "gen.", generator.buffers());
    try {
        fill(slots, entries, true);
    } catch (const LoadError& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

void write_identity_stub(const std::filesystem::path& path) {
    write_checkpoint_file({counter_entry(kIdentityStubEntry, 1)}, path);
}

bool is_identity_stub(const std::vector<CheckpointEntry>& entries) {
    return entries.size() == 1 && entries[0].name == kIdentityStubEntry;
}

}  // namespace vitgan
