#include "augment.hpp"

#include <algorithm>
#include <cmath>

namespace greenleaf {

void validate_augmentation_config(const AugmentationConfig& cfg) {
    if (cfg.rotation_deg < 0 || cfg.zoom < 0 || cfg.width_shift < 0 || cfg.height_shift < 0 ||
        cfg.shear < 0)
        fail(ErrorKind::parameter, "augmentation: ranges must be >= 0");
    if (cfg.zoom >= 1.0)
        fail(ErrorKind::parameter, "augmentation: zoom range must be < 1, got ", cfg.zoom);
}

AugmentParams sample_augment_params(const AugmentationConfig& cfg, const Rng& rng) {
    validate_augmentation_config(cfg);
    AugmentParams p;
    Rng rot = rng.derive("rotation");
    Rng zoom = rng.derive("zoom");
    Rng wshift = rng.derive("width_shift");
    Rng hshift = rng.derive("height_shift");
    Rng shear = rng.derive("shear");
    Rng flip = rng.derive("flip");
    p.rotation_deg = rot.uniform(-cfg.rotation_deg, cfg.rotation_deg);
    p.zoom = zoom.uniform(1.0 - cfg.zoom, 1.0 + cfg.zoom);
    p.shift_x = wshift.uniform(-cfg.width_shift, cfg.width_shift);
    p.shift_y = hshift.uniform(-cfg.height_shift, cfg.height_shift);
    p.shear = shear.uniform(-cfg.shear, cfg.shear);
    p.flipped = cfg.horizontal_flip && flip.uniform() < 0.5;
    return p;
}

namespace {

struct Affine {
    // dst = A * src + b, in centered coordinates
    double a00 = 1, a01 = 0, a10 = 0, a11 = 1;
    double b0 = 0, b1 = 0;
};

Affine compose(const AugmentParams& p, int width, int height) {
    // shift first, then rotation, zoom, shear, and finally the flip
    const double theta = p.rotation_deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    // A = F * Sh * (z I) * R
    double a00 = c * p.zoom, a01 = -s * p.zoom;
    double a10 = s * p.zoom, a11 = c * p.zoom;
    // shear along x: x += shear * y
    a00 += p.shear * a10;
    a01 += p.shear * a11;
    if (p.flipped) {
        a00 = -a00;
        a01 = -a01;
    }
    Affine m;
    m.a00 = a00;
    m.a01 = a01;
    m.a10 = a10;
    m.a11 = a11;
    const double tx = p.shift_x * width;
    const double ty = p.shift_y * height;
    m.b0 = a00 * tx + a01 * ty;
    m.b1 = a10 * tx + a11 * ty;
    return m;
}

bool is_identity(const AugmentParams& p) {
    return p.rotation_deg == 0.0 && p.zoom == 1.0 && p.shift_x == 0.0 && p.shift_y == 0.0 &&
           p.shear == 0.0 && !p.flipped;
}

} // namespace

Tensor apply_affine(const Tensor& img, const AugmentParams& params) {
    const Shape s = img.shape();
    if (s.h < 1 || s.w < 1)
        fail(ErrorKind::dimension, "apply_affine: empty image of shape ", s.str());
    if (is_identity(params)) return img.clone();

    const Affine m = compose(params, s.w, s.h);
    const double det = m.a00 * m.a11 - m.a01 * m.a10;
    if (det == 0.0) fail(ErrorKind::parameter, "apply_affine: sampled transform is singular");
    const double i00 = m.a11 / det, i01 = -m.a01 / det;
    const double i10 = -m.a10 / det, i11 = m.a00 / det;
    const double cx = (s.w - 1) / 2.0, cy = (s.h - 1) / 2.0;

    Tensor out(s);
    for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
            const double dx = x - cx - m.b0;
            const double dy = y - cy - m.b1;
            double sx = i00 * dx + i01 * dy + cx;
            double sy = i10 * dx + i11 * dy + cy;
            // nearest-edge fill
            sx = std::clamp(sx, 0.0, static_cast<double>(s.w - 1));
            sy = std::clamp(sy, 0.0, static_cast<double>(s.h - 1));
            const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, s.w - 1), y1 = std::min(y0 + 1, s.h - 1);
            const double fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < s.c; ++c) {
                const double v = (1 - fy) * ((1 - fx) * img.at(0, c, y0, x0) +
                                             fx * img.at(0, c, y0, x1)) +
                                 fy * ((1 - fx) * img.at(0, c, y1, x0) + fx * img.at(0, c, y1, x1));
                out.at(0, c, y, x) = std::clamp(v, 0.0, 1.0);
            }
        }
    return out;
}

Tensor augment(const Tensor& img, const AugmentationConfig& cfg, const Rng& rng,
               AugmentParams* sampled) {
    const AugmentParams p = sample_augment_params(cfg, rng);
    if (sampled) *sampled = p;
    return apply_affine(img, p);
}

} // namespace greenleaf
