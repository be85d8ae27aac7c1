#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "fogflow/errors.hpp"
#include "fogflow/io.hpp"

namespace fogflow::io {

namespace {

cv::Mat load(const std::filesystem::path& path, int flags) {
    cv::Mat m = cv::imread(path.string(), flags);
    if (m.empty()) throw std::runtime_error("cannot read image " + path.string());
    return m;
}

}  // namespace

torch::Tensor read_image(const std::filesystem::path& path) {
    cv::Mat bgr = load(path, cv::IMREAD_COLOR);
    const int h = bgr.rows, w = bgr.cols;
    auto img = torch::empty({3, h, w}, torch::kFloat32);
    auto acc = img.accessor<float, 3>();
    for (int r = 0; r < h; ++r) {
        const auto* row = bgr.ptr<cv::Vec3b>(r);
        for (int c = 0; c < w; ++c) {
            acc[0][r][c] = row[c][2] / 255.0f;
            acc[1][r][c] = row[c][1] / 255.0f;
            acc[2][r][c] = row[c][0] / 255.0f;
        }
    }
    return img;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& img) {
    auto x = img.dim() == 4 && img.size(0) == 1 ? img.squeeze(0) : img;
    if (x.dim() != 3 || x.size(0) != 3) throw InputError("write_png: expected a [3,H,W] image");
    x = x.detach().to(torch::kFloat64).clamp(0.0, 1.0).contiguous();
    const int h = static_cast<int>(x.size(1)), w = static_cast<int>(x.size(2));
    auto acc = x.accessor<double, 3>();
    cv::Mat bgr(h, w, CV_8UC3);
    for (int r = 0; r < h; ++r) {
        auto* row = bgr.ptr<cv::Vec3b>(r);
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                row[c][2 - ch] = static_cast<unsigned char>(std::lround(acc[ch][r][c] * 255.0));
    }
    if (!cv::imwrite(path.string(), bgr)) throw std::runtime_error("cannot write " + path.string());
}

torch::Tensor read_depth(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".bin" || ext == ".raw" || ext == ".depth") return read_depth_raw(path);
    cv::Mat m = load(path, cv::IMREAD_UNCHANGED);
    if (m.channels() != 1 || m.depth() != CV_16U)
        throw FormatError(path.string() + ": depth PNG must be single-channel 16-bit", 0);
    cv::Mat metres;
    m.convertTo(metres, CV_32F, 1.0 / 256.0);
    return torch::from_blob(metres.data, {metres.rows, metres.cols}, torch::kFloat32).clone();
}

torch::Tensor read_mask(const std::filesystem::path& path) {
    cv::Mat m = load(path, cv::IMREAD_GRAYSCALE);
    cv::Mat valid = m != 0;
    return torch::from_blob(valid.data, {valid.rows, valid.cols}, torch::kUInt8).ne(0).to(torch::kFloat32);
}

}  // namespace fogflow::io
