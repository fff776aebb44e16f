#pragma once

// Pose sequences and their preparation: the 49-joint layout (7 trunk joints,
// 21 per hand), part separation, hand-crop normalization, frame differencing
// for the motion stream, dataset manifests, the STSQ1 sample format, and a
// synthetic sign generator used by the smoke-training tests.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stc/common.hpp"
#include "stc/tensor.hpp"

namespace stc {

constexpr int kJoints = 49;
constexpr int kTrunkJoints = 7;  // nose, shoulders, elbows, wrists
constexpr int kHandJoints = 21;  // wrist plus four joints per finger
constexpr int kTrunkStart = 0;
constexpr int kRightHandStart = 7;
constexpr int kLeftHandStart = 28;

// trunk-local indices
constexpr int kNose = 0, kLeftShoulder = 1, kRightShoulder = 2, kLeftElbow = 3,
              kRightElbow = 4, kLeftWrist = 5, kRightWrist = 6;

struct PoseSequence {
    int T = 0;
    std::vector<float> frames;  // T x 49 x 2, source pixel coordinates
    std::vector<float> conf;    // T x 49
    int label = -1;
    int signer = -1;
    int res_w = 0, res_h = 0;

    float x(int t, int j) const { return frames[(static_cast<size_t>(t) * kJoints + static_cast<size_t>(j)) * 2]; }
    float y(int t, int j) const { return frames[(static_cast<size_t>(t) * kJoints + static_cast<size_t>(j)) * 2 + 1]; }
};

enum class Part { RightHand, LeftHand, Trunk };
enum class Modality { Joint, Motion };

inline const char* part_name(Part p) {
    switch (p) {
        case Part::RightHand: return "right_hand";
        case Part::LeftHand: return "left_hand";
        default: return "trunk";
    }
}

struct PartClip {
    Part part = Part::Trunk;
    Modality modality = Modality::Joint;
    int T = 0;
    int J = 0;
    std::vector<float> data;  // T x J x 2

    float& at(int t, int j, int c) {
        return data[(static_cast<size_t>(t) * static_cast<size_t>(J) + static_cast<size_t>(j)) * 2 + static_cast<size_t>(c)];
    }
    float at(int t, int j, int c) const {
        return data[(static_cast<size_t>(t) * static_cast<size_t>(J) + static_cast<size_t>(j)) * 2 + static_cast<size_t>(c)];
    }
};

inline PartClip make_clip(Part part, Modality modality, int T, int J) {
    PartClip c;
    c.part = part;
    c.modality = modality;
    c.T = T;
    c.J = J;
    c.data.assign(static_cast<size_t>(T) * static_cast<size_t>(J) * 2, 0.0f);
    return c;
}

// the three part streams of one sample, same modality throughout
struct PartSet {
    PartClip right, left, trunk;
};

// ---- part separation and normalization --------------------------------------

inline PartSet separate_parts(const PoseSequence& seq) {
    check(seq.T >= 2, "separate_parts: need at least 2 frames, got " +
                          std::to_string(seq.T));
    check(static_cast<int>(seq.frames.size()) == seq.T * kJoints * 2,
          "separate_parts: frame buffer does not match T=" + std::to_string(seq.T));
    PartSet s;
    s.right = make_clip(Part::RightHand, Modality::Joint, seq.T, kHandJoints);
    s.left = make_clip(Part::LeftHand, Modality::Joint, seq.T, kHandJoints);
    s.trunk = make_clip(Part::Trunk, Modality::Joint, seq.T, kTrunkJoints);
    for (int t = 0; t < seq.T; ++t) {
        for (int j = 0; j < kHandJoints; ++j) {
            s.right.at(t, j, 0) = seq.x(t, kRightHandStart + j);
            s.right.at(t, j, 1) = seq.y(t, kRightHandStart + j);
            s.left.at(t, j, 0) = seq.x(t, kLeftHandStart + j);
            s.left.at(t, j, 1) = seq.y(t, kLeftHandStart + j);
        }
        for (int j = 0; j < kTrunkJoints; ++j) {
            s.trunk.at(t, j, 0) = seq.x(t, kTrunkStart + j);
            s.trunk.at(t, j, 1) = seq.y(t, kTrunkStart + j);
        }
    }
    return s;
}

// Tight bounding box over the whole clip, expanded by `margin` about its
// centre; coordinates map into [-1,1] with aspect preserved via the longest
// side. A degenerate box (all joints coincident) falls back to a unit box, so
// the output is all zeros rather than a division blow-up.
inline PartClip crop_resize_hand(const PartClip& hand, int out_res = 256,
                                 double margin = 1.2) {
    check(hand.part != Part::Trunk, "crop_resize_hand: expected a hand clip");
    check(hand.modality == Modality::Joint,
          "crop_resize_hand: expected joint coordinates, not motion");
    check(out_res > 0, "crop_resize_hand: output resolution must be positive");
    check(margin >= 1.0, "crop_resize_hand: margin must be >= 1");
    float lo_x = hand.data[0], hi_x = hand.data[0];
    float lo_y = hand.data[1], hi_y = hand.data[1];
    for (int t = 0; t < hand.T; ++t)
        for (int j = 0; j < hand.J; ++j) {
            float px = hand.at(t, j, 0), py = hand.at(t, j, 1);
            check(std::isfinite(px) && std::isfinite(py),
                  "crop_resize_hand: non-finite coordinate");
            lo_x = std::min(lo_x, px);
            hi_x = std::max(hi_x, px);
            lo_y = std::min(lo_y, py);
            hi_y = std::max(hi_y, py);
        }
    float cx = 0.5f * (lo_x + hi_x), cy = 0.5f * (lo_y + hi_y);
    float extent = std::max(hi_x - lo_x, hi_y - lo_y);
    float side = extent > 0 ? static_cast<float>(margin) * extent : 1.0f;
    PartClip out = hand;
    for (int t = 0; t < hand.T; ++t)
        for (int j = 0; j < hand.J; ++j) {
            out.at(t, j, 0) = 2.0f * (hand.at(t, j, 0) - cx) / side;
            out.at(t, j, 1) = 2.0f * (hand.at(t, j, 1) - cy) / side;
        }
    return out;
}

inline PartClip normalize_trunk(const PartClip& trunk, int res_w, int res_h) {
    check(trunk.part == Part::Trunk, "normalize_trunk: expected the trunk clip");
    check(trunk.modality == Modality::Joint,
          "normalize_trunk: expected joint coordinates, not motion");
    check(res_w > 0 && res_h > 0, "normalize_trunk: source resolution must be positive");
    PartClip out = trunk;
    for (int t = 0; t < trunk.T; ++t)
        for (int j = 0; j < trunk.J; ++j) {
            out.at(t, j, 0) = 2.0f * trunk.at(t, j, 0) / static_cast<float>(res_w) - 1.0f;
            out.at(t, j, 1) = 2.0f * trunk.at(t, j, 1) / static_cast<float>(res_h) - 1.0f;
        }
    return out;
}

// first-order temporal difference; frame 0 is exactly zero
inline PartClip extract_motion(const PartClip& clip) {
    check(clip.modality == Modality::Joint,
          "extract_motion: input is already a motion clip");
    check(clip.T >= 2, "extract_motion: need at least 2 frames");
    PartClip out = make_clip(clip.part, Modality::Motion, clip.T, clip.J);
    for (int t = 1; t < clip.T; ++t)
        for (int j = 0; j < clip.J; ++j)
            for (int c = 0; c < 2; ++c)
                out.at(t, j, c) = clip.at(t, j, c) - clip.at(t - 1, j, c);
    return out;
}

// full preparation of one sample: split parts, normalize hands by their crop
// box and the trunk by image size
inline PartSet preprocess(const PoseSequence& seq, int out_res = 256) {
    PartSet s = separate_parts(seq);
    PartSet out;
    out.right = crop_resize_hand(s.right, out_res);
    out.left = crop_resize_hand(s.left, out_res);
    out.trunk = normalize_trunk(s.trunk, seq.res_w, seq.res_h);
    return out;
}

// ---- STSQ1 sample files -------------------------------------------------------
//
// Little-endian layout:
//   magic "STSQ1" | u32 T | u32 joint count (49) |
//   T*49 (f32 x, f32 y) | T*49 f32 confidence

inline void write_sample(const std::string& path, const PoseSequence& seq) {
    check(seq.T >= 2, "write_sample: need at least 2 frames");
    check(static_cast<int>(seq.frames.size()) == seq.T * kJoints * 2,
          "write_sample: frame buffer does not match T");
    check(static_cast<int>(seq.conf.size()) == seq.T * kJoints,
          "write_sample: confidence buffer does not match T");
    std::string buf;
    buf += "STSQ1";
    detail::put_u32(buf, static_cast<uint32_t>(seq.T));
    detail::put_u32(buf, static_cast<uint32_t>(kJoints));
    for (float v : seq.frames) detail::put_f32(buf, v);
    for (float v : seq.conf) detail::put_f32(buf, v);
    detail::write_file(path, buf);
}

inline PoseSequence read_sample(const std::string& path) {
    detail::ByteReader r(detail::read_file(path), path);
    check(r.bytes(5) == "STSQ1", path + ": bad magic, not a pose sample file");
    PoseSequence seq;
    uint32_t T = r.u32();
    check(T >= 2 && T < (1u << 20), path + ": implausible frame count " + std::to_string(T));
    uint32_t joints = r.u32();
    check(joints == static_cast<uint32_t>(kJoints),
          path + ": expected " + std::to_string(kJoints) + " joints, file has " +
              std::to_string(joints));
    seq.T = static_cast<int>(T);
    seq.frames.resize(static_cast<size_t>(T) * kJoints * 2);
    for (auto& v : seq.frames) {
        v = r.f32();
        check(std::isfinite(v), path + ": non-finite coordinate near byte " +
                                    std::to_string(r.pos()));
    }
    seq.conf.resize(static_cast<size_t>(T) * kJoints);
    for (auto& v : seq.conf) {
        v = r.f32();
        check(v >= 0.0f && v <= 1.0f, path + ": confidence out of [0,1] near byte " +
                                          std::to_string(r.pos()));
    }
    check(r.done(), path + ": trailing bytes after confidences");
    return seq;
}

// ---- dataset manifests ----------------------------------------------------------

enum class Split { Train, Test };

struct SampleRef {
    std::string path;  // relative to the manifest directory
    int label = -1;
    int signer = -1;
    Split split = Split::Train;
};

struct Dataset {
    std::string root;
    std::vector<SampleRef> samples;
    std::vector<std::string> vocabulary;  // index = class id
    int res_w = 512, res_h = 512;

    int num_classes() const { return static_cast<int>(vocabulary.size()); }

    std::vector<int> indices(Split split) const {
        std::vector<int> out;
        for (size_t i = 0; i < samples.size(); ++i)
            if (samples[i].split == split) out.push_back(static_cast<int>(i));
        return out;
    }

    PoseSequence load(int idx) const {
        check(idx >= 0 && idx < static_cast<int>(samples.size()),
              "dataset: sample index " + std::to_string(idx) + " out of range");
        const SampleRef& ref = samples[static_cast<size_t>(idx)];
        auto full = std::filesystem::path(root) / ref.path;
        PoseSequence seq = read_sample(full.string());
        seq.label = ref.label;
        seq.signer = ref.signer;
        seq.res_w = res_w;
        seq.res_h = res_h;
        return seq;
    }
};

inline Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    check(f.good(), manifest_path + ": cannot open manifest");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(manifest_path + ": invalid JSON: " + e.what());
    }
    Dataset d;
    d.root = std::filesystem::path(manifest_path).parent_path().string();
    check(j.is_object(), manifest_path + ": manifest root must be an object");
    check(j.contains("samples") && j["samples"].is_array(),
          manifest_path + ": missing samples array");
    check(j.contains("vocabulary") && j["vocabulary"].is_object(),
          manifest_path + ": missing vocabulary object");
    int C = static_cast<int>(j["vocabulary"].size());
    check(C >= 1, manifest_path + ": vocabulary is empty");
    d.vocabulary.resize(static_cast<size_t>(C));
    for (auto& [key, val] : j["vocabulary"].items()) {
        int id = -1;
        try {
            size_t used = 0;
            id = std::stoi(key, &used);
            check(used == key.size(), "");
        } catch (...) {
            fail(manifest_path + ": vocabulary key '" + key + "' is not an integer");
        }
        check(id >= 0 && id < C, manifest_path + ": vocabulary ids must be dense 0.." +
                                     std::to_string(C - 1) + ", got " + key);
        check(val.is_string(), manifest_path + ": gloss for id " + key +
                                   " must be a string");
        d.vocabulary[static_cast<size_t>(id)] = val.get<std::string>();
    }
    if (j.contains("source_resolution")) {
        auto& r = j["source_resolution"];
        check(r.is_array() && r.size() == 2 && r[0].is_number_integer() &&
                  r[1].is_number_integer(),
              manifest_path + ": source_resolution must be [width, height]");
        d.res_w = r[0].get<int>();
        d.res_h = r[1].get<int>();
        check(d.res_w > 0 && d.res_h > 0,
              manifest_path + ": source_resolution must be positive");
    }
    check(!j["samples"].empty(), manifest_path + ": no samples listed");
    for (auto& s : j["samples"]) {
        check(s.is_object() && s.contains("path") && s.contains("label") &&
                  s.contains("signer") && s.contains("split"),
              manifest_path + ": each sample needs path, label, signer, split");
        SampleRef ref;
        ref.path = s["path"].get<std::string>();
        ref.label = s["label"].get<int>();
        ref.signer = s["signer"].get<int>();
        std::string split = s["split"].get<std::string>();
        check(split == "train" || split == "test",
              manifest_path + ": split must be 'train' or 'test', got '" + split + "'");
        ref.split = split == "train" ? Split::Train : Split::Test;
        check(ref.label >= 0 && ref.label < C,
              manifest_path + ": label " + std::to_string(ref.label) +
                  " outside vocabulary of size " + std::to_string(C));
        d.samples.push_back(std::move(ref));
    }
    return d;
}

inline void save_manifest(const Dataset& d, const std::string& manifest_path) {
    nlohmann::json j;
    j["samples"] = nlohmann::json::array();
    for (auto& s : d.samples) {
        j["samples"].push_back({{"path", s.path},
                                {"label", s.label},
                                {"signer", s.signer},
                                {"split", s.split == Split::Train ? "train" : "test"}});
    }
    j["vocabulary"] = nlohmann::json::object();
    for (size_t i = 0; i < d.vocabulary.size(); ++i)
        j["vocabulary"][std::to_string(i)] = d.vocabulary[i];
    j["source_resolution"] = {d.res_w, d.res_h};
    std::ofstream f(manifest_path);
    check(f.good(), manifest_path + ": cannot open for writing");
    f << j.dump(2) << "\n";
    check(f.good(), manifest_path + ": write failed");
}

// ---- synthetic signs ------------------------------------------------------------
//
// Analytic 49-joint "signs": per class, the wrists trace class-specific
// Lissajous paths while the fingers curl and spread at class-specific rates.
// Samples perturb the prototype with a per-signer offset and scale, a timing
// warp, and Gaussian coordinate noise, all multiplied by noise_scale.

struct SynthSpec {
    int classes = 8;
    int per_class = 40;
    int frames = 64;
    uint64_t seed = 1;
    double noise_scale = 1.0;
    int signers = 5;
    double train_fraction = 0.75;
};

namespace detail {

constexpr double kSynthRes = 512.0;

struct Pt {
    double x = 0, y = 0;
};

inline void synth_hand(bool right_side, int class_id, double u, Pt wrist,
                       double phase_extra, float* out /*21*2*/) {
    double fh = 1.0 + class_id % 4;
    double f2 = 1.0 + (class_id / 3) % 3;
    double phh = 1.1 * class_id + 0.5 + phase_extra;
    double sh = 0.062 * kSynthRes;
    double theta0 = -M_PI / 2 + 0.35 * std::sin(2 * M_PI * fh * u + phh);
    double curl = 0.55 + 0.35 * std::sin(2 * M_PI * fh * u + phh + 0.6);
    double spread = 0.22 + 0.05 * std::sin(2 * M_PI * f2 * u + 0.7 * phh);
    double mirror = right_side ? 1.0 : -1.0;
    out[0] = static_cast<float>(wrist.x);
    out[1] = static_cast<float>(wrist.y);
    for (int f = 0; f < 5; ++f) {
        double theta = theta0 + (f - 2) * spread + (f == 0 ? -0.45 : 0.0);
        for (int k = 1; k <= 4; ++k) {
            double r = sh * (0.30 + 0.21 * k) * (1.0 - 0.55 * curl * k / 4.0);
            int j = 1 + f * 4 + (k - 1);
            out[j * 2] = static_cast<float>(wrist.x + mirror * r * std::cos(theta));
            out[j * 2 + 1] = static_cast<float>(wrist.y + r * std::sin(theta));
        }
    }
}

// all 49 joints of class `class_id` at phase u, into out[49*2]
inline void synth_pose(int class_id, double u, float* out) {
    double W = kSynthRes;
    double f1 = 1.0 + class_id % 3;
    double f2 = 1.0 + (class_id / 3) % 3;
    double ph = 0.8 * class_id;
    Pt nose{W * (0.50 + 0.004 * std::sin(2 * M_PI * u)),
            W * (0.20 + 0.004 * std::sin(4 * M_PI * u))};
    Pt lsh{W * 0.40, W * 0.32}, rsh{W * 0.60, W * 0.32};
    double ax = 0.13 * (0.85 + 0.05 * (class_id % 2)), ay = 0.10;
    Pt rwr{W * (0.66 + ax * std::sin(2 * M_PI * f1 * u + ph)),
           W * (0.55 + ay * std::sin(2 * M_PI * f2 * u + 0.4 + 0.5 * ph))};
    Pt lwr{W * (0.34 + 0.07 * std::sin(2 * M_PI * f2 * u + ph + 1.0)),
           W * (0.58 + 0.055 * std::sin(2 * M_PI * f1 * u + 0.9))};
    Pt lel{0.5 * (lsh.x + lwr.x) - 0.02 * W, 0.5 * (lsh.y + lwr.y) + 0.08 * W};
    Pt rel{0.5 * (rsh.x + rwr.x) + 0.02 * W, 0.5 * (rsh.y + rwr.y) + 0.08 * W};
    const Pt trunk[kTrunkJoints] = {nose, lsh, rsh, lel, rel, lwr, rwr};
    for (int j = 0; j < kTrunkJoints; ++j) {
        out[(kTrunkStart + j) * 2] = static_cast<float>(trunk[j].x);
        out[(kTrunkStart + j) * 2 + 1] = static_cast<float>(trunk[j].y);
    }
    synth_hand(true, class_id, u, rwr, 0.0, out + kRightHandStart * 2);
    synth_hand(false, class_id, u, lwr, 0.9, out + kLeftHandStart * 2);
}

}  // namespace detail

inline std::vector<float> synth_prototype(int class_id, int frames) {
    check(class_id >= 0, "synth_prototype: negative class id");
    check(frames >= 2, "synth_prototype: need at least 2 frames");
    std::vector<float> out(static_cast<size_t>(frames) * kJoints * 2);
    for (int t = 0; t < frames; ++t) {
        double u = static_cast<double>(t) / (frames - 1);
        detail::synth_pose(class_id, u, out.data() + static_cast<size_t>(t) * kJoints * 2);
    }
    return out;
}

inline Dataset synth_generate(const SynthSpec& spec, const std::string& out_dir) {
    check(spec.classes >= 2, "synth_generate: need at least 2 classes");
    check(spec.per_class >= 2, "synth_generate: need at least 2 samples per class");
    check(spec.frames >= 2, "synth_generate: need at least 2 frames");
    check(spec.signers >= 1, "synth_generate: need at least 1 signer");
    check(spec.noise_scale >= 0.0, "synth_generate: negative noise scale");
    check(spec.train_fraction > 0.0 && spec.train_fraction < 1.0,
          "synth_generate: train fraction must lie in (0,1)");
    std::filesystem::create_directories(out_dir);

    Dataset d;
    d.root = out_dir;
    d.res_w = static_cast<int>(detail::kSynthRes);
    d.res_h = static_cast<int>(detail::kSynthRes);
    for (int c = 0; c < spec.classes; ++c) {
        char gloss[32];
        std::snprintf(gloss, sizeof gloss, "sign_%03d", c);
        d.vocabulary.push_back(gloss);
    }

    int train_per_class = static_cast<int>(
        std::round(spec.train_fraction * spec.per_class));
    train_per_class = std::min(std::max(train_per_class, 1), spec.per_class - 1);
    double nu = spec.noise_scale;
    double W = detail::kSynthRes;

    for (int c = 0; c < spec.classes; ++c) {
        for (int i = 0; i < spec.per_class; ++i) {
            int signer = (c * spec.per_class + i) % spec.signers;
            Rng srng(derive_seed(spec.seed, 0x516e, static_cast<uint64_t>(signer)));
            double off_x = srng.uniform(-0.03, 0.03) * W * nu;
            double off_y = srng.uniform(-0.03, 0.03) * W * nu;
            double scl = 1.0 + srng.uniform(-0.06, 0.06) * nu;
            Rng rng(derive_seed(spec.seed, 0xa11, static_cast<uint64_t>(c),
                                static_cast<uint64_t>(i)));
            double rate = 1.0 + rng.uniform(-0.12, 0.18) * nu;
            double shift = rng.uniform(0.0, 1.0) * nu;
            double sigma = 0.02 * W * nu;

            PoseSequence seq;
            seq.T = spec.frames;
            seq.frames.resize(static_cast<size_t>(spec.frames) * kJoints * 2);
            seq.conf.resize(static_cast<size_t>(spec.frames) * kJoints);
            std::vector<float> pose(kJoints * 2);
            for (int t = 0; t < spec.frames; ++t) {
                double u = shift + rate * static_cast<double>(t) / (spec.frames - 1);
                detail::synth_pose(c, u, pose.data());
                for (int j = 0; j < kJoints; ++j) {
                    double px = pose[static_cast<size_t>(j) * 2];
                    double py = pose[static_cast<size_t>(j) * 2 + 1];
                    if (nu > 0.0) {
                        px = (px - 0.5 * W) * scl + 0.5 * W + off_x + rng.normal() * sigma;
                        py = (py - 0.5 * W) * scl + 0.5 * W + off_y + rng.normal() * sigma;
                    }
                    size_t base = (static_cast<size_t>(t) * kJoints + static_cast<size_t>(j)) * 2;
                    seq.frames[base] = static_cast<float>(px);
                    seq.frames[base + 1] = static_cast<float>(py);
                    seq.conf[static_cast<size_t>(t) * kJoints + static_cast<size_t>(j)] =
                        static_cast<float>(rng.uniform(0.6, 1.0));
                }
            }
            char name[48];
            std::snprintf(name, sizeof name, "c%03d_s%03d.stsq", c, i);
            write_sample((std::filesystem::path(out_dir) / name).string(), seq);
            SampleRef ref;
            ref.path = name;
            ref.label = c;
            ref.signer = signer;
            ref.split = i < train_per_class ? Split::Train : Split::Test;
            d.samples.push_back(std::move(ref));
        }
    }
    save_manifest(d, (std::filesystem::path(out_dir) / "manifest.json").string());
    return d;
}

}  // namespace stc
