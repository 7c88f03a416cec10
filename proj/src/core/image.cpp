#include "image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace greenleaf {

ImageU8 decode_image(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) fail(ErrorKind::decode, "cannot decode image ", path);
    ImageU8 img;
    img.height = bgr.rows;
    img.width = bgr.cols;
    img.rgb.resize(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * bgr.cols + x) * 3;
            img.rgb[base + 0] = row[x][2];
            img.rgb[base + 1] = row[x][1];
            img.rgb[base + 2] = row[x][0];
        }
    }
    return img;
}

void encode_png(const std::string& path, const ImageU8& img) {
    cv::Mat bgr(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * img.width + x) * 3;
            row[x][0] = img.rgb[base + 2];
            row[x][1] = img.rgb[base + 1];
            row[x][2] = img.rgb[base + 0];
        }
    }
    if (!cv::imwrite(path, bgr)) fail(ErrorKind::io, "cannot write image ", path);
}

Tensor image_to_tensor(const ImageU8& img) {
    Tensor t(Shape{1, 3, img.height, img.width});
    const std::int64_t plane = static_cast<std::int64_t>(img.height) * img.width;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * img.width + x) * 3;
            for (int c = 0; c < 3; ++c)
                t.data()[c * plane + static_cast<std::int64_t>(y) * img.width + x] =
                    img.rgb[base + static_cast<std::size_t>(c)] / 255.0;
        }
    return t;
}

ImageU8 tensor_to_image(const Tensor& t) {
    const Shape s = t.shape();
    if (s.n != 1 || s.c != 3)
        fail(ErrorKind::dimension, "tensor_to_image: expected (1,3,H,W), got ", s.str());
    ImageU8 img;
    img.height = s.h;
    img.width = s.w;
    img.rgb.resize(static_cast<std::size_t>(s.h) * s.w * 3);
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v =
                    std::clamp(t.data()[c * plane + static_cast<std::int64_t>(y) * s.w + x], 0.0, 1.0);
                img.rgb[(static_cast<std::size_t>(y) * s.w + x) * 3 + static_cast<std::size_t>(c)] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    return img;
}

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
    const Shape s = x.shape();
    if (out_h < 1 || out_w < 1)
        fail(ErrorKind::parameter, "bilinear_resize: output extent must be positive");
    if (s.h < 1 || s.w < 1)
        fail(ErrorKind::dimension, "bilinear_resize: empty input of shape ", s.str());
    if (s.h == out_h && s.w == out_w) return x.clone();

    Tensor y(Shape{s.n, s.c, out_h, out_w});
    const double sy = static_cast<double>(s.h) / out_h;
    const double sx = static_cast<double>(s.w) / out_w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int oy = 0; oy < out_h; ++oy) {
                double fy = (oy + 0.5) * sy - 0.5;
                fy = std::clamp(fy, 0.0, static_cast<double>(s.h - 1));
                const int y0 = static_cast<int>(fy);
                const int y1 = std::min(y0 + 1, s.h - 1);
                const double wy = fy - y0;
                for (int ox = 0; ox < out_w; ++ox) {
                    double fx = (ox + 0.5) * sx - 0.5;
                    fx = std::clamp(fx, 0.0, static_cast<double>(s.w - 1));
                    const int x0 = static_cast<int>(fx);
                    const int x1 = std::min(x0 + 1, s.w - 1);
                    const double wx = fx - x0;
                    const double v00 = x.at(n, c, y0, x0), v01 = x.at(n, c, y0, x1);
                    const double v10 = x.at(n, c, y1, x0), v11 = x.at(n, c, y1, x1);
                    y.at(n, c, oy, ox) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                         wy * ((1 - wx) * v10 + wx * v11);
                }
            }
    return y;
}

Tensor load_and_resize(const std::string& path, int resolution) {
    return bilinear_resize(image_to_tensor(decode_image(path)), resolution, resolution);
}

} // namespace greenleaf
