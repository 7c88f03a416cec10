#pragma once

#include "image.hpp"

namespace greenleaf {

// The six training-time augmentations: rotation, zoom, width shift, height
// shift, shear, horizontal flip. Ranges are half-widths of the sampling
// interval; shifts are fractions of the image extent.
struct AugmentationConfig {
    double rotation_deg = 30.0;
    double zoom = 0.15;
    double width_shift = 0.2;
    double height_shift = 0.2;
    double shear = 0.15;
    bool horizontal_flip = true;
};

void validate_augmentation_config(const AugmentationConfig& cfg);

struct AugmentParams {
    double rotation_deg = 0.0;
    double zoom = 1.0;
    double shift_x = 0.0;  // fraction of width
    double shift_y = 0.0;  // fraction of height
    double shear = 0.0;
    bool flipped = false;
};

// Each transform draws from its own RNG sub-stream derived from `rng`, so
// changing one range never perturbs the other transforms' draws.
AugmentParams sample_augment_params(const AugmentationConfig& cfg, const Rng& rng);

// One affine resample about the image center, composed as
// flip o shear o zoom o rotation o shift, bilinear with nearest-edge fill.
Tensor apply_affine(const Tensor& img, const AugmentParams& params);

Tensor augment(const Tensor& img, const AugmentationConfig& cfg, const Rng& rng,
               AugmentParams* sampled = nullptr);

} // namespace greenleaf
