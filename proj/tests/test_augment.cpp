#include <gtest/gtest.h>

#include "stc/augment.hpp"

namespace {

stc::PartSet random_parts(int T, uint64_t seed) {
    stc::Rng rng(seed);
    stc::PartSet s;
    s.right = stc::make_clip(stc::Part::RightHand, stc::Modality::Joint, T, stc::kHandJoints);
    s.left = stc::make_clip(stc::Part::LeftHand, stc::Modality::Joint, T, stc::kHandJoints);
    s.trunk = stc::make_clip(stc::Part::Trunk, stc::Modality::Joint, T, stc::kTrunkJoints);
    for (auto* c : {&s.right, &s.left, &s.trunk})
        for (auto& v : c->data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return s;
}

stc::PoseSequence random_sequence(int T, uint64_t seed) {
    stc::Rng rng(seed);
    stc::PoseSequence seq;
    seq.T = T;
    seq.res_w = 512;
    seq.res_h = 512;
    seq.frames.resize(static_cast<size_t>(T) * stc::kJoints * 2);
    seq.conf.assign(static_cast<size_t>(T) * stc::kJoints, 1.0f);
    for (auto& v : seq.frames) v = static_cast<float>(rng.uniform(100.0, 400.0));
    return seq;
}

}  // namespace

TEST(SampleParams, StaysInsideDeclaredRanges) {
    stc::AugmentRanges r;
    r.rotation_max_rad = 0.3;
    r.scale_delta = 0.2;
    r.mask_rho = 0.1;
    r.crop_alpha = 0.5;
    r.t_prime = 16;
    stc::Rng rng(123);
    int T = 40;
    int min_len = 20;
    int masked_total = 0;
    for (int i = 0; i < 500; ++i) {
        auto p = stc::sample_params(T, rng, r);
        EXPECT_GE(p.rotation, -0.3);
        EXPECT_LE(p.rotation, 0.3);
        EXPECT_GE(p.scale, 0.8);
        EXPECT_LE(p.scale, 1.2);
        EXPECT_GE(p.crop_len, min_len);
        EXPECT_LE(p.crop_len, T);
        EXPECT_GE(p.crop_start, 0);
        EXPECT_LE(p.crop_start + p.crop_len, T);
        for (bool m : p.mask) masked_total += m;
    }
    // Bernoulli(0.1) over 500*49 draws
    double rate = static_cast<double>(masked_total) / (500.0 * stc::kJoints);
    EXPECT_NEAR(rate, 0.1, 0.02);
}

TEST(SampleParams, RejectsBadRanges) {
    stc::Rng rng(1);
    stc::AugmentRanges r;
    r.crop_alpha = 0.0;
    EXPECT_THROW(stc::sample_params(10, rng, r), stc::Error);
    r = {};
    r.mask_rho = 1.5;
    EXPECT_THROW(stc::sample_params(10, rng, r), stc::Error);
    r = {};
    r.t_prime = 1;
    EXPECT_THROW(stc::sample_params(10, rng, r), stc::Error);
    r = {};
    r.scale_delta = 1.0;
    EXPECT_THROW(stc::sample_params(10, rng, r), stc::Error);
    EXPECT_THROW(stc::sample_params(1, rng, stc::AugmentRanges{}), stc::Error);
}

TEST(ApplySpatial, IdentityParamsChangeNothing) {
    auto parts = random_parts(6, 7);
    stc::AugmentParams p;
    p.crop_len = 6;
    auto out = stc::apply_spatial(parts, p);
    EXPECT_EQ(out.right.data, parts.right.data);
    EXPECT_EQ(out.left.data, parts.left.data);
    EXPECT_EQ(out.trunk.data, parts.trunk.data);
}

TEST(ApplySpatial, QuarterTurnRotation) {
    auto parts = random_parts(3, 8);
    stc::AugmentParams p;
    p.rotation = M_PI / 2;
    auto out = stc::apply_spatial(parts, p);
    for (int t = 0; t < 3; ++t)
        for (int j = 0; j < stc::kTrunkJoints; ++j) {
            EXPECT_NEAR(out.trunk.at(t, j, 0), -parts.trunk.at(t, j, 1), 1e-6);
            EXPECT_NEAR(out.trunk.at(t, j, 1), parts.trunk.at(t, j, 0), 1e-6);
        }
}

TEST(ApplySpatial, ScaleMultipliesCoordinates) {
    auto parts = random_parts(3, 9);
    stc::AugmentParams p;
    p.scale = 1.15;
    auto out = stc::apply_spatial(parts, p);
    for (size_t i = 0; i < parts.right.data.size(); ++i)
        EXPECT_NEAR(out.right.data[i], 1.15f * parts.right.data[i], 1e-6);
}

TEST(ApplySpatial, FlipNegatesXAndSwapsHands) {
    auto parts = random_parts(4, 10);
    stc::AugmentParams p;
    p.flip = true;
    auto out = stc::apply_spatial(parts, p);
    // right-hand output is the x-negated left-hand input, and vice versa
    for (int t = 0; t < 4; ++t)
        for (int j = 0; j < stc::kHandJoints; ++j) {
            EXPECT_EQ(out.right.at(t, j, 0), -parts.left.at(t, j, 0));
            EXPECT_EQ(out.right.at(t, j, 1), parts.left.at(t, j, 1));
            EXPECT_EQ(out.left.at(t, j, 0), -parts.right.at(t, j, 0));
            EXPECT_EQ(out.left.at(t, j, 1), parts.right.at(t, j, 1));
        }
    for (int t = 0; t < 4; ++t)
        for (int j = 0; j < stc::kTrunkJoints; ++j)
            EXPECT_EQ(out.trunk.at(t, j, 0), -parts.trunk.at(t, j, 0));
    // part labels keep their stream positions
    EXPECT_EQ(out.right.part, stc::Part::RightHand);
    EXPECT_EQ(out.left.part, stc::Part::LeftHand);
}

TEST(ApplySpatial, MaskZeroesGlobalJointIndices) {
    auto parts = random_parts(5, 11);
    stc::AugmentParams p;
    p.mask[2] = true;                          // trunk joint 2
    p.mask[stc::kRightHandStart + 4] = true;   // right-hand joint 4
    p.mask[stc::kLeftHandStart + 20] = true;   // left-hand joint 20
    auto out = stc::apply_spatial(parts, p);
    for (int t = 0; t < 5; ++t) {
        EXPECT_EQ(out.trunk.at(t, 2, 0), 0.0f);
        EXPECT_EQ(out.trunk.at(t, 2, 1), 0.0f);
        EXPECT_EQ(out.right.at(t, 4, 0), 0.0f);
        EXPECT_EQ(out.left.at(t, 20, 1), 0.0f);
        EXPECT_NE(out.trunk.at(t, 0, 0), 0.0f);
    }
}

TEST(Resample, EndpointAlignedAndLinear) {
    auto clip = stc::make_clip(stc::Part::Trunk, stc::Modality::Joint, 10, stc::kTrunkJoints);
    // linear ramp in t so resampling must reproduce a ramp
    for (int t = 0; t < 10; ++t)
        for (int j = 0; j < clip.J; ++j) {
            clip.at(t, j, 0) = static_cast<float>(t);
            clip.at(t, j, 1) = static_cast<float>(2 * t);
        }
    auto out = stc::resample_clip(clip, 2, 6, 4);  // frames 2..7 onto 4 samples
    EXPECT_EQ(out.T, 4);
    for (int j = 0; j < out.J; ++j) {
        EXPECT_NEAR(out.at(0, j, 0), 2.0f, 1e-6);
        EXPECT_NEAR(out.at(3, j, 0), 7.0f, 1e-6);
        EXPECT_NEAR(out.at(1, j, 0), 2.0f + 5.0f / 3.0f, 1e-6);
        EXPECT_NEAR(out.at(2, j, 1), 2.0f * (2.0f + 10.0f / 3.0f), 1e-5);
    }
    // identity when the crop covers everything and lengths match
    auto same = stc::resample_clip(clip, 0, 10, 10);
    EXPECT_EQ(same.data, clip.data);
    EXPECT_THROW(stc::resample_clip(clip, 5, 6, 4), stc::Error);
}

TEST(Views, DeterministicPerSeedAndIndependentAcrossSeeds) {
    auto seq = random_sequence(20, 33);
    stc::AugmentRanges r;
    r.t_prime = 8;
    auto [q1, k1] = stc::make_views(seq, 100, 200, r);
    auto [q2, k2] = stc::make_views(seq, 100, 200, r);
    EXPECT_EQ(q1.joint.right.data, q2.joint.right.data);
    EXPECT_EQ(k1.joint.trunk.data, k2.joint.trunk.data);
    EXPECT_EQ(q1.motion.left.data, q2.motion.left.data);
    EXPECT_NE(q1.joint.right.data, k1.joint.right.data);  // distinct seeds, distinct views
}

TEST(Views, MotionMatchesJointDifferences) {
    auto seq = random_sequence(18, 44);
    stc::AugmentRanges r;
    r.t_prime = 10;
    auto [q, k] = stc::make_views(seq, 5, 6, r);
    for (const auto* v : {&q, &k}) {
        auto m = stc::extract_motion(v->joint.right);
        EXPECT_EQ(v->motion.right.data, m.data);
        EXPECT_EQ(v->motion.right.modality, stc::Modality::Motion);
        for (int j = 0; j < stc::kHandJoints; ++j) {
            EXPECT_EQ(v->motion.right.at(0, j, 0), 0.0f);
            EXPECT_EQ(v->motion.right.at(0, j, 1), 0.0f);
        }
    }
}

TEST(Views, EvalViewIsPlainResample) {
    auto seq = random_sequence(12, 55);
    auto v = stc::eval_view(seq, 12);
    auto parts = stc::preprocess(seq);
    EXPECT_EQ(v.joint.right.data, parts.right.data);  // same T, full window
    EXPECT_EQ(v.joint.trunk.data, parts.trunk.data);
    auto v2 = stc::eval_view(seq, 12);
    EXPECT_EQ(v.joint.left.data, v2.joint.left.data);
    auto shorter = stc::eval_view(seq, 6);
    EXPECT_EQ(shorter.joint.right.T, 6);
    EXPECT_EQ(shorter.motion.trunk.T, 6);
}
