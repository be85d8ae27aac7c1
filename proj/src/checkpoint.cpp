#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "fogflow/errors.hpp"
#include "fogflow/trainloop.hpp"

namespace fogflow::train {

namespace {

constexpr char kMagic[8] = {'F', 'O', 'G', 'F', 'L', 'O', 'W', 'K'};

enum class DType : std::uint8_t { Float32 = 1, Float64 = 2, Int64 = 3 };

DType dtype_code(const torch::Tensor& t) {
    switch (t.scalar_type()) {
        case torch::kFloat32: return DType::Float32;
        case torch::kFloat64: return DType::Float64;
        case torch::kInt64: return DType::Int64;
        default: throw CheckpointError("unsupported tensor dtype in checkpoint");
    }
}

torch::ScalarType scalar_type(DType d) {
    switch (d) {
        case DType::Float32: return torch::kFloat32;
        case DType::Float64: return torch::kFloat64;
        case DType::Int64: return torch::kInt64;
    }
    throw CheckpointError("unknown tensor dtype code");
}

class Writer {
public:
    void bytes(const void* p, size_t n) {
        const auto* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    template <typename T>
    void le(T v) {
        static_assert(std::is_integral_v<T>);
        for (size_t i = 0; i < sizeof(T); ++i)
            buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
    void str(const std::string& s) {
        le<std::uint64_t>(s.size());
        bytes(s.data(), s.size());
    }
    void tensor(const std::string& name, const torch::Tensor& t) {
        auto c = t.detach().contiguous();
        str(name);
        le<std::uint8_t>(static_cast<std::uint8_t>(dtype_code(c)));
        le<std::uint32_t>(static_cast<std::uint32_t>(c.dim()));
        for (auto d : c.sizes()) le<std::int64_t>(d);
        const auto nbytes = static_cast<std::uint64_t>(c.numel() * c.element_size());
        le<std::uint64_t>(nbytes);
        bytes(c.data_ptr(), nbytes);  // host is little-endian (checked below)
    }
    std::vector<char>& buffer() { return buf_; }

private:
    std::vector<char> buf_;
};

class Reader {
public:
    Reader(const std::vector<char>& buf, size_t end) : buf_(buf), end_(end) {}

    void need(size_t n) const {
        if (pos_ + n > end_ || pos_ + n < pos_) throw CheckpointError("checkpoint is truncated");
    }
    template <typename T>
    T le() {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }
    std::string str() {
        const auto n = le<std::uint64_t>();
        need(n);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    std::pair<std::string, torch::Tensor> tensor() {
        auto name = str();
        const auto type = scalar_type(static_cast<DType>(le<std::uint8_t>()));
        const auto dim = le<std::uint32_t>();
        if (dim > 8) throw CheckpointError("implausible tensor rank in checkpoint");
        std::vector<int64_t> sizes;
        for (std::uint32_t i = 0; i < dim; ++i) {
            sizes.push_back(le<std::int64_t>());
            if (sizes.back() < 0) throw CheckpointError("negative tensor extent in checkpoint");
        }
        const auto nbytes = le<std::uint64_t>();
        auto t = torch::empty(sizes, torch::TensorOptions().dtype(type));
        if (nbytes != static_cast<std::uint64_t>(t.numel() * t.element_size()))
            throw CheckpointError("tensor payload size mismatch for " + name);
        need(nbytes);
        std::memcpy(t.data_ptr(), buf_.data() + pos_, nbytes);
        pos_ += nbytes;
        return {std::move(name), t};
    }
    void bytes(void* out, size_t n) {
        need(n);
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }
    size_t position() const { return pos_; }

private:
    const std::vector<char>& buf_;
    size_t end_;
    size_t pos_ = 0;
};

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written in host order");

std::uint32_t crc_of(const char* data, size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<size_t>(n, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Archive {
    nlohmann::json meta;
    std::map<std::string, torch::Tensor> tensors;
};

Archive parse(const std::filesystem::path& path) {
    const auto buf = read_file(path);
    if (buf.size() < sizeof kMagic + 4 + 4) throw CheckpointError(path.string() + ": not a checkpoint (too short)");
    if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
        throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
    const size_t body = buf.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[body + i])) << (8 * i);
    if (crc_of(buf.data(), body) != stored) throw CheckpointError(path.string() + ": checksum mismatch");

    Reader r(buf, body);
    char magic[sizeof kMagic];
    r.bytes(magic, sizeof magic);
    const auto version = r.le<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    Archive a;
    try {
        a.meta = nlohmann::json::parse(r.str());
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": corrupt metadata: " + e.what());
    }
    const auto count = r.le<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [name, t] = r.tensor();
        if (!a.tensors.emplace(std::move(name), std::move(t)).second)
            throw CheckpointError(path.string() + ": duplicate tensor entry");
    }
    if (r.position() != body) throw CheckpointError(path.string() + ": trailing bytes after tensor table");
    return a;
}

void restore_weights(nets::ParameterStore& store, const Archive& a) {
    torch::NoGradGuard no_grad;
    for (auto& [name, p] : store.named_parameters()) {
        auto it = a.tensors.find(name);
        if (it == a.tensors.end()) throw CheckpointError("checkpoint lacks parameter " + name);
        if (!it->second.sizes().equals(p.sizes()) || it->second.scalar_type() != p.scalar_type())
            throw CheckpointError("checkpoint parameter " + name + " has the wrong shape or type");
        p.copy_(it->second);
    }
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    nlohmann::json meta;
    meta["config"] = state.config.to_json();
    meta["step"] = state.step;
    meta["scheduler"] = state.scheduler_state;
    meta["fog_reference_real"] = state.fog_reference_real;
    meta["clean_reference_real"] = state.clean_reference_real;

    std::vector<std::pair<std::string, torch::Tensor>> tensors;
    nlohmann::json adam_steps = nlohmann::json::object();
    for (auto c : nets::kAllComponents) {
        const auto& opt_state = state.optimizers.at(static_cast<size_t>(c))->state();
        for (const auto& [name, p] : state.params.named_parameters(c)) {
            tensors.emplace_back(name, p);
            auto it = opt_state.find(p.unsafeGetTensorImpl());
            if (it == opt_state.end()) continue;
            const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
            adam_steps[name] = s.step();
            tensors.emplace_back("adam/" + name + "/exp_avg", s.exp_avg());
            tensors.emplace_back("adam/" + name + "/exp_avg_sq", s.exp_avg_sq());
        }
    }
    meta["adam_steps"] = adam_steps;
    if (state.fog_reference.defined()) tensors.emplace_back("reference/fog", state.fog_reference);
    if (state.clean_reference.defined()) tensors.emplace_back("reference/clean", state.clean_reference);

    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.le<std::uint32_t>(kCheckpointVersion);
    w.str(meta.dump());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) w.tensor(name, t);
    auto& buf = w.buffer();
    const auto crc = crc_of(buf.data(), buf.size());
    w.le<std::uint32_t>(crc);

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write checkpoint " + tmp);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw CheckpointError("failed writing checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    const auto a = parse(path);
    Config cfg;
    try {
        cfg = Config::from_json(a.meta.at("config"));
    } catch (const std::exception& e) {
        throw CheckpointError(path.string() + ": bad config block: " + e.what());
    }
    TrainState state(cfg, nets::ParameterStore(cfg.net));
    restore_weights(state.params, a);
    try {
        state.step = a.meta.at("step").get<int64_t>();
        state.scheduler_state = a.meta.at("scheduler").get<std::string>();
        state.fog_reference_real = a.meta.at("fog_reference_real").get<bool>();
        state.clean_reference_real = a.meta.at("clean_reference_real").get<bool>();
        const auto& steps = a.meta.at("adam_steps");
        for (auto c : nets::kAllComponents) {
            auto& opt_state = state.optimizer(c).state();
            for (const auto& [name, p] : state.params.named_parameters(c)) {
                if (!steps.contains(name)) continue;
                auto m = a.tensors.find("adam/" + name + "/exp_avg");
                auto v = a.tensors.find("adam/" + name + "/exp_avg_sq");
                if (m == a.tensors.end() || v == a.tensors.end())
                    throw CheckpointError("checkpoint lacks optimizer moments for " + name);
                auto s = std::make_unique<torch::optim::AdamParamState>();
                s->step(steps.at(name).get<int64_t>());
                s->exp_avg(m->second.clone());
                s->exp_avg_sq(v->second.clone());
                opt_state[p.unsafeGetTensorImpl()] = std::move(s);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": bad metadata: " + e.what());
    }
    if (auto it = a.tensors.find("reference/fog"); it != a.tensors.end()) state.fog_reference = it->second;
    if (auto it = a.tensors.find("reference/clean"); it != a.tensors.end()) state.clean_reference = it->second;
    return state;
}

nets::ParameterStore load_weights(const std::filesystem::path& path) {
    const auto a = parse(path);
    NetConfig net;
    try {
        net = Config::from_json(a.meta.at("config")).net;
    } catch (const std::exception& e) {
        throw CheckpointError(path.string() + ": bad config block: " + e.what());
    }
    nets::ParameterStore store(net);
    restore_weights(store, a);
    return store;
}

}  // namespace fogflow::train
