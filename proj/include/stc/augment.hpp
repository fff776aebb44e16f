#pragma once

// View construction for contrastive pre-training. One parameter draw covers
// all three parts of a view (hands and trunk transform in lockstep); the two
// views of a pair draw independently. Motion is recomputed after augmentation
// so it always differences the frames the encoder actually sees.

#include <array>

#include "stc/pose.hpp"

namespace stc {

struct AugmentRanges {
    double rotation_max_rad = 13.0 * M_PI / 180.0;
    double scale_delta = 0.2;   // scale ~ U(1-delta, 1+delta)
    double mask_rho = 0.1;      // per joint Bernoulli
    double flip_prob = 0.5;
    double crop_alpha = 0.5;    // crop length ~ U{ceil(alpha*T) .. T}
    int t_prime = 64;           // output temporal length
};

inline void validate_ranges(const AugmentRanges& r) {
    check(r.rotation_max_rad >= 0.0, "augment: rotation range must be non-negative");
    check(r.scale_delta >= 0.0 && r.scale_delta < 1.0,
          "augment: scale delta must lie in [0,1)");
    check(r.mask_rho >= 0.0 && r.mask_rho <= 1.0,
          "augment: mask probability must lie in [0,1]");
    check(r.flip_prob >= 0.0 && r.flip_prob <= 1.0,
          "augment: flip probability must lie in [0,1]");
    check(r.crop_alpha > 0.0 && r.crop_alpha <= 1.0,
          "augment: crop fraction must lie in (0,1]");
    check(r.t_prime >= 2, "augment: output length must be at least 2");
}

struct AugmentParams {
    double rotation = 0.0;
    double scale = 1.0;
    bool flip = false;
    std::array<bool, kJoints> mask{};  // global joint indices
    int crop_start = 0;
    int crop_len = 0;
};

inline AugmentParams sample_params(int T, Rng& rng, const AugmentRanges& r) {
    validate_ranges(r);
    check(T >= 2, "augment: need at least 2 frames");
    AugmentParams p;
    p.rotation = rng.uniform(-r.rotation_max_rad, r.rotation_max_rad);
    p.scale = rng.uniform(1.0 - r.scale_delta, 1.0 + r.scale_delta);
    p.flip = rng.bernoulli(r.flip_prob);
    for (int j = 0; j < kJoints; ++j) p.mask[static_cast<size_t>(j)] = rng.bernoulli(r.mask_rho);
    int min_len = static_cast<int>(std::ceil(r.crop_alpha * T));
    min_len = std::max(1, std::min(min_len, T));
    p.crop_len = rng.uniform_int(min_len, T);
    p.crop_start = rng.uniform_int(0, T - p.crop_len);
    return p;
}

namespace detail {

inline PartClip transform_clip(const PartClip& in, const AugmentParams& p,
                               const bool* mask) {
    PartClip out = in;
    float c = static_cast<float>(std::cos(p.rotation) * p.scale);
    float s = static_cast<float>(std::sin(p.rotation) * p.scale);
    float fx = p.flip ? -1.0f : 1.0f;
    for (int t = 0; t < in.T; ++t)
        for (int j = 0; j < in.J; ++j) {
            if (mask[j]) {
                out.at(t, j, 0) = 0.0f;
                out.at(t, j, 1) = 0.0f;
                continue;
            }
            float x = in.at(t, j, 0), y = in.at(t, j, 1);
            out.at(t, j, 0) = fx * (c * x - s * y);
            out.at(t, j, 1) = s * x + c * y;
        }
    return out;
}

}  // namespace detail

// Rotation and scale about the origin of the normalized frame, joint masking
// by global index, then the mirror: x negated everywhere and the hand clips
// swapped so the mirrored left hand becomes the right-hand stream.
inline PartSet apply_spatial(const PartSet& in, const AugmentParams& p) {
    check(in.right.modality == Modality::Joint && in.left.modality == Modality::Joint &&
              in.trunk.modality == Modality::Joint,
          "apply_spatial: expected joint clips");
    PartSet out;
    out.right = detail::transform_clip(in.right, p, p.mask.data() + kRightHandStart);
    out.left = detail::transform_clip(in.left, p, p.mask.data() + kLeftHandStart);
    out.trunk = detail::transform_clip(in.trunk, p, p.mask.data() + kTrunkStart);
    if (p.flip) std::swap(out.right.data, out.left.data);
    return out;
}

// crop [crop_start, crop_start+crop_len) then endpoint-aligned linear
// resampling to t_prime frames
inline PartClip resample_clip(const PartClip& in, int crop_start, int crop_len,
                              int t_prime) {
    check(crop_len >= 1 && crop_start >= 0 && crop_start + crop_len <= in.T,
          "resample: crop [" + std::to_string(crop_start) + "," +
              std::to_string(crop_start + crop_len) + ") out of bounds for T=" +
              std::to_string(in.T));
    check(t_prime >= 2, "resample: output length must be at least 2");
    PartClip out = make_clip(in.part, in.modality, t_prime, in.J);
    double step = crop_len > 1 ? static_cast<double>(crop_len - 1) / (t_prime - 1) : 0.0;
    for (int i = 0; i < t_prime; ++i) {
        double pos = step * i;
        int t0 = static_cast<int>(pos);
        int t1 = std::min(t0 + 1, crop_len - 1);
        float w = static_cast<float>(pos - t0);
        for (int j = 0; j < in.J; ++j)
            for (int c = 0; c < 2; ++c)
                out.at(i, j, c) = (1.0f - w) * in.at(crop_start + t0, j, c) +
                                  w * in.at(crop_start + t1, j, c);
    }
    return out;
}

inline PartSet apply_temporal(const PartSet& in, const AugmentParams& p, int t_prime) {
    PartSet out;
    out.right = resample_clip(in.right, p.crop_start, p.crop_len, t_prime);
    out.left = resample_clip(in.left, p.crop_start, p.crop_len, t_prime);
    out.trunk = resample_clip(in.trunk, p.crop_start, p.crop_len, t_prime);
    return out;
}

// one encoder input: the augmented joint streams and their motion streams
struct View {
    PartSet joint;
    PartSet motion;
};

inline View finish_view(const PartSet& joint_parts) {
    View v;
    v.joint = joint_parts;
    v.motion.right = extract_motion(joint_parts.right);
    v.motion.left = extract_motion(joint_parts.left);
    v.motion.trunk = extract_motion(joint_parts.trunk);
    return v;
}

inline View augment_view(const PoseSequence& seq, uint64_t seed,
                         const AugmentRanges& ranges, int out_res = 256) {
    Rng rng(seed);
    AugmentParams p = sample_params(seq.T, rng, ranges);
    PartSet parts = preprocess(seq, out_res);
    return finish_view(apply_temporal(apply_spatial(parts, p), p, ranges.t_prime));
}

// the two independently augmented views of one sample
inline std::pair<View, View> make_views(const PoseSequence& seq, uint64_t seed_q,
                                        uint64_t seed_k, const AugmentRanges& ranges,
                                        int out_res = 256) {
    return {augment_view(seq, seed_q, ranges, out_res),
            augment_view(seq, seed_k, ranges, out_res)};
}

// deterministic evaluation input: no spatial transform, full-window resample
inline View eval_view(const PoseSequence& seq, int t_prime, int out_res = 256) {
    check(t_prime >= 2, "eval_view: output length must be at least 2");
    PartSet parts = preprocess(seq, out_res);
    AugmentParams p;
    p.crop_start = 0;
    p.crop_len = seq.T;
    return finish_view(apply_temporal(parts, p, t_prime));
}

}  // namespace stc
