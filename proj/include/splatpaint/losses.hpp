#pragma once

#include "splatpaint/confidence.hpp"
#include "splatpaint/image.hpp"
#include "splatpaint/render.hpp"

namespace splat {

// Loss terms return their unweighted value; when `grads` is given, each
// accumulates upstream * d(value)/d(rendered buffers) into it. Color losses
// are two-term: (1-lambda)*L1 + lambda*(1-SSIM), with the per-pixel L1
// contribution averaged over channels and SSIM computed channelwise over
// windows whose support stays inside the evaluation set.

// Masked color loss: evaluation set is the mask complement M^c.
double loss_color_masked(const ImageBuffer& target, const ImageBuffer& rendered, const MaskImage& mask,
                         double lambda_ssim, PixelGrads* grads = nullptr, double upstream = 1.0);

// Color loss over an arbitrary pixel set (e.g. M^c ∪ P'), with `target`
// acting as pseudo ground truth.
double loss_color_set(const ImageBuffer& target, const ImageBuffer& rendered, const MaskImage& eval_set,
                      double lambda_ssim, PixelGrads* grads = nullptr, double upstream = 1.0);

// Mean |d_target - d_rendered| over pixels of M^c valid in both maps.
double loss_depth_initial(const DepthMap& d_target, const DepthMap& d_rendered, const MaskImage& mask,
                          PixelGrads* grads = nullptr, double upstream = 1.0);

// (1/|D|) [ sum_{M^c} |gap| + w_inp * sum_M |gap| ] with |D| the count of
// pixels valid in both maps.
double loss_depth_inpaint(const DepthMap& d_target, const DepthMap& d_rendered, const MaskImage& mask,
                          double w_inp, PixelGrads* grads = nullptr, double upstream = 1.0);

// w_inp * (1 - mean cosine similarity) over patch pixels where both normal
// maps are valid. Gradients flow through the rendered-normal derivation into
// the rendered depth.
double loss_normal(const NormalMap& n_target, const NormalMap& n_rendered, const PatchRect& patch,
                   double w_inp, const DepthMap& d_rendered, const CameraView& cam,
                   PixelGrads* grads = nullptr, double upstream = 1.0);

// w_inp * perceptual_distance restricted to the patch. Returns 0 without
// evaluating when w_inp == 0.
double loss_perceptual_patch(const ImageBuffer& pseudo_gt, const ImageBuffer& rendered,
                             const PatchRect& patch, double w_inp, PixelGrads* grads = nullptr,
                             double upstream = 1.0);

} // namespace splat
