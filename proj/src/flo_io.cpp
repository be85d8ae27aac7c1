#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "fogflow/errors.hpp"
#include "fogflow/io.hpp"

namespace fogflow::io {

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::vector<char>& in, size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return v;
}

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

torch::Tensor read_flo(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 12) throw FormatError(path.string() + ": truncated .flo header", bytes.size());
    const float magic = std::bit_cast<float>(get_u32(bytes, 0));
    if (magic != kFloMagic) throw FormatError(path.string() + ": bad .flo magic", 0);
    const auto width = static_cast<std::int32_t>(get_u32(bytes, 4));
    const auto height = static_cast<std::int32_t>(get_u32(bytes, 8));
    if (width <= 0 || height <= 0) throw FormatError(path.string() + ": invalid .flo dimensions", 4);
    const std::uint64_t expected = 12 + std::uint64_t{8} * static_cast<std::uint64_t>(width) * height;
    if (bytes.size() < expected) throw FormatError(path.string() + ": truncated .flo payload", bytes.size());

    auto flow = torch::empty({2, height, width}, torch::kFloat32);
    auto acc = flow.accessor<float, 3>();
    size_t off = 12;
    for (int32_t r = 0; r < height; ++r)
        for (int32_t c = 0; c < width; ++c) {
            acc[0][r][c] = std::bit_cast<float>(get_u32(bytes, off));
            acc[1][r][c] = std::bit_cast<float>(get_u32(bytes, off + 4));
            off += 8;
        }
    return flow;
}

void write_flo(const std::filesystem::path& path, const torch::Tensor& flow) {
    auto f = flow.dim() == 4 && flow.size(0) == 1 ? flow.squeeze(0) : flow;
    if (f.dim() != 3 || f.size(0) != 2) throw InputError("write_flo: expected a [2,H,W] flow");
    f = f.detach().to(torch::kFloat32).contiguous();
    const auto height = static_cast<std::int32_t>(f.size(1));
    const auto width = static_cast<std::int32_t>(f.size(2));
    auto acc = f.accessor<float, 3>();

    std::vector<char> bytes;
    bytes.reserve(12 + size_t{8} * width * height);
    put_u32(bytes, std::bit_cast<std::uint32_t>(kFloMagic));
    put_u32(bytes, static_cast<std::uint32_t>(width));
    put_u32(bytes, static_cast<std::uint32_t>(height));
    for (int32_t r = 0; r < height; ++r)
        for (int32_t c = 0; c < width; ++c) {
            put_u32(bytes, std::bit_cast<std::uint32_t>(acc[0][r][c]));
            put_u32(bytes, std::bit_cast<std::uint32_t>(acc[1][r][c]));
        }
    spill(path, bytes);
}

void write_depth_raw(const std::filesystem::path& path, const torch::Tensor& depth) {
    auto d = depth.detach().to(torch::kFloat32).contiguous();
    if (d.dim() == 3 && d.size(0) == 1) d = d.squeeze(0);
    if (d.dim() != 2) throw InputError("write_depth_raw: expected an [H,W] depth map");
    std::vector<char> bytes;
    put_u32(bytes, static_cast<std::uint32_t>(d.size(1)));
    put_u32(bytes, static_cast<std::uint32_t>(d.size(0)));
    const float* p = d.data_ptr<float>();
    for (int64_t i = 0; i < d.numel(); ++i) put_u32(bytes, std::bit_cast<std::uint32_t>(p[i]));
    spill(path, bytes);
}

torch::Tensor read_depth_raw(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 8) throw FormatError(path.string() + ": truncated depth header", bytes.size());
    const auto width = static_cast<std::int32_t>(get_u32(bytes, 0));
    const auto height = static_cast<std::int32_t>(get_u32(bytes, 4));
    if (width <= 0 || height <= 0) throw FormatError(path.string() + ": invalid depth dimensions", 0);
    const std::uint64_t expected = 8 + std::uint64_t{4} * static_cast<std::uint64_t>(width) * height;
    if (bytes.size() < expected) throw FormatError(path.string() + ": truncated depth payload", bytes.size());
    auto d = torch::empty({height, width}, torch::kFloat32);
    float* p = d.data_ptr<float>();
    for (int64_t i = 0; i < d.numel(); ++i) p[i] = std::bit_cast<float>(get_u32(bytes, 8 + 4 * static_cast<size_t>(i)));
    return d;
}

}  // namespace fogflow::io
