#pragma once

// Training orchestration: flat-file run configuration, the pre-training loop
// with four lockstep memory banks, supervised fine-tuning on percent subsets,
// linear probing over frozen features, evaluation metrics, score files, and
// late score fusion.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "stc/augment.hpp"
#include "stc/transfer.hpp"

namespace stc {

using MemoryBank = MemoryBankT<float>;
using Encoder = EncoderT<float>;
using Branches = BranchesT<float>;
using Head = HeadT<float>;
using Sgd = SgdT<float>;

// ---- run configuration ----------------------------------------------------------

struct RunConfig {
    // encoder
    int t_prime = 64;
    int gcn_hidden = 64;
    int model_dim = 128;
    int heads = 4;
    int layers = 2;
    int ff_dim = 256;
    int embed_dim = 512;
    int proj_dim = 128;
    int out_res = 256;
    // objectives
    double key_momentum = 0.99;
    double tau_c = 0.07;
    double tau_1 = 0.1;
    double tau_t = 0.05;
    double tau_s = 0.1;
    int top_k = 8192;
    int bank_size = 16384;
    double lambda_joint = 0.5;
    double lambda_motion = 0.5;
    bool kt_enabled = true;
    bool consistency_enabled = true;
    // optimization
    double lr = 0.01;
    double sgd_momentum = 0.9;
    int lr_decay_every = 50;
    double lr_decay_factor = 0.1;
    int batch = 16;
    int pretrain_epochs = 150;
    int finetune_epochs = 60;
    int probe_epochs = 70;
    double probe_lr = 0.01;
    // augmentation
    double rotation_max_deg = 13.0;
    double scale_delta = 0.2;
    double mask_rho = 0.1;
    double flip_prob = 0.5;
    double crop_alpha = 0.5;
    bool stratify = true;
    uint64_t seed = 1;

    bool joint_enabled() const { return lambda_joint > 0.0; }
    bool motion_enabled() const { return lambda_motion > 0.0; }

    EncoderDims dims() const {
        EncoderDims d;
        d.t_prime = t_prime;
        d.gcn_hidden = gcn_hidden;
        d.model_dim = model_dim;
        d.heads = heads;
        d.layers = layers;
        d.ff_dim = ff_dim;
        d.embed_dim = embed_dim;
        d.proj_dim = proj_dim;
        return d;
    }

    AugmentRanges ranges() const {
        AugmentRanges r;
        r.rotation_max_rad = rotation_max_deg * M_PI / 180.0;
        r.scale_delta = scale_delta;
        r.mask_rho = mask_rho;
        r.flip_prob = flip_prob;
        r.crop_alpha = crop_alpha;
        r.t_prime = t_prime;
        return r;
    }
};

namespace detail {

// rng stream tags, one per independent random decision family
namespace salt {
constexpr uint64_t kInit = 0xA1;
constexpr uint64_t kHead = 0xA2;
constexpr uint64_t kProbe = 0xA3;
constexpr uint64_t kOrder = 0xA4;
constexpr uint64_t kAugment = 0xA5;
constexpr uint64_t kSubset = 0xA6;
}  // namespace salt

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    fail("config: " + key + " expects a boolean (0/1/true/false), got '" + v + "'");
}

inline int parse_int(const std::string& v, const std::string& key) {
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    check(ec == std::errc() && p == v.data() + v.size(),
          "config: " + key + " expects an integer, got '" + v + "'");
    return out;
}

inline uint64_t parse_u64(const std::string& v, const std::string& key) {
    uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    check(ec == std::errc() && p == v.data() + v.size(),
          "config: " + key + " expects an unsigned integer, got '" + v + "'");
    return out;
}

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        check(pos == v.size() && std::isfinite(out),
              "config: " + key + " expects a finite number, got '" + v + "'");
        return out;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail("config: " + key + " expects a number, got '" + v + "'");
    }
}

}  // namespace detail

inline void apply_config_entry(RunConfig& c, const std::string& key,
                               const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;
    using detail::parse_u64;
    if (key == "t_prime") c.t_prime = parse_int(value, key);
    else if (key == "gcn_hidden") c.gcn_hidden = parse_int(value, key);
    else if (key == "model_dim") c.model_dim = parse_int(value, key);
    else if (key == "heads") c.heads = parse_int(value, key);
    else if (key == "layers") c.layers = parse_int(value, key);
    else if (key == "ff_dim") c.ff_dim = parse_int(value, key);
    else if (key == "embed_dim") c.embed_dim = parse_int(value, key);
    else if (key == "proj_dim") c.proj_dim = parse_int(value, key);
    else if (key == "out_res") c.out_res = parse_int(value, key);
    else if (key == "key_momentum") c.key_momentum = parse_double(value, key);
    else if (key == "tau_c") c.tau_c = parse_double(value, key);
    else if (key == "tau_1") c.tau_1 = parse_double(value, key);
    else if (key == "tau_t") c.tau_t = parse_double(value, key);
    else if (key == "tau_s") c.tau_s = parse_double(value, key);
    else if (key == "top_k") c.top_k = parse_int(value, key);
    else if (key == "bank_size") c.bank_size = parse_int(value, key);
    else if (key == "lambda_joint") c.lambda_joint = parse_double(value, key);
    else if (key == "lambda_motion") c.lambda_motion = parse_double(value, key);
    else if (key == "kt_enabled") c.kt_enabled = parse_bool(value, key);
    else if (key == "consistency_enabled") c.consistency_enabled = parse_bool(value, key);
    else if (key == "lr") c.lr = parse_double(value, key);
    else if (key == "sgd_momentum") c.sgd_momentum = parse_double(value, key);
    else if (key == "lr_decay_every") c.lr_decay_every = parse_int(value, key);
    else if (key == "lr_decay_factor") c.lr_decay_factor = parse_double(value, key);
    else if (key == "batch") c.batch = parse_int(value, key);
    else if (key == "pretrain_epochs") c.pretrain_epochs = parse_int(value, key);
    else if (key == "finetune_epochs") c.finetune_epochs = parse_int(value, key);
    else if (key == "probe_epochs") c.probe_epochs = parse_int(value, key);
    else if (key == "probe_lr") c.probe_lr = parse_double(value, key);
    else if (key == "rotation_max_deg") c.rotation_max_deg = parse_double(value, key);
    else if (key == "scale_delta") c.scale_delta = parse_double(value, key);
    else if (key == "mask_rho") c.mask_rho = parse_double(value, key);
    else if (key == "flip_prob") c.flip_prob = parse_double(value, key);
    else if (key == "crop_alpha") c.crop_alpha = parse_double(value, key);
    else if (key == "stratify") c.stratify = parse_bool(value, key);
    else if (key == "seed") c.seed = parse_u64(value, key);
    else fail("config: unknown key '" + key + "'");
}

// flat key = value lines; '#' starts a comment; unknown keys are errors
inline void parse_config(const std::string& text, RunConfig& c) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        check(eq != std::string::npos,
              "config line " + std::to_string(lineno) + ": expected key = value");
        auto key = detail::trim(line.substr(0, eq));
        auto value = detail::trim(line.substr(eq + 1));
        check(!key.empty() && !value.empty(),
              "config line " + std::to_string(lineno) + ": empty key or value");
        apply_config_entry(c, key, value);
    }
}

inline void validate_config(const RunConfig& c) {
    check(c.tau_c > 0 && c.tau_1 > 0 && c.tau_t > 0 && c.tau_s > 0,
          "config: all temperatures must be positive");
    check(c.lambda_joint >= 0 && c.lambda_motion >= 0,
          "config: loss weights must be non-negative");
    check(c.joint_enabled() || c.motion_enabled(),
          "config: at least one of lambda_joint, lambda_motion must be positive");
    check(!c.kt_enabled || (c.joint_enabled() && c.motion_enabled()),
          "config: kt_enabled requires both modality branches (set kt_enabled = 0)");
    check(c.key_momentum >= 0 && c.key_momentum <= 1,
          "config: key_momentum must lie in [0,1]");
    check(c.lr > 0 && c.probe_lr > 0, "config: learning rates must be positive");
    check(c.sgd_momentum >= 0 && c.sgd_momentum < 1,
          "config: sgd_momentum must lie in [0,1)");
    check(c.lr_decay_every > 0 && c.lr_decay_factor > 0,
          "config: lr decay schedule must be positive");
    check(c.batch >= 1, "config: batch must be at least 1");
    check(c.pretrain_epochs >= 0 && c.finetune_epochs >= 0 && c.probe_epochs >= 1,
          "config: epoch counts out of range");
    check(c.top_k >= 1, "config: top_k must be at least 1");
    check(c.bank_size >= c.batch,
          "config: bank_size must be at least the batch size");
    check(c.out_res >= 2, "config: out_res must be at least 2");
    check(c.rotation_max_deg >= 0, "config: rotation_max_deg must be non-negative");
    validate_dims(c.dims());
    validate_ranges(c.ranges());
}

inline RunConfig load_config(const std::string& path) {
    RunConfig c;
    parse_config(detail::read_file(path), c);
    validate_config(c);
    return c;
}

// ---- evaluation metrics ----------------------------------------------------------

struct EvalReport {
    int total = 0;
    int classes = 0;
    double pi_top1 = 0, pi_top5 = 0;  // percent over all instances
    double pc_top1 = 0, pc_top5 = 0;  // percent, unweighted over present classes
    std::vector<int> class_total, class_top1, class_top5;
    std::vector<std::vector<int>> confusion;  // [label][argmax]
};

// ranks classes by score, higher first, ties toward the lower class index
inline std::vector<int> score_ranking(const std::vector<float>& scores) {
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;
    });
    return order;
}

inline EvalReport evaluate_scores(const std::vector<std::vector<float>>& scores,
                                  const std::vector<int>& labels, int classes) {
    check(!scores.empty(), "evaluate: no samples");
    check(scores.size() == labels.size(), "evaluate: scores/labels size mismatch");
    check(classes >= 2, "evaluate: need at least 2 classes");
    EvalReport r;
    r.total = static_cast<int>(scores.size());
    r.classes = classes;
    r.class_total.assign(static_cast<size_t>(classes), 0);
    r.class_top1.assign(static_cast<size_t>(classes), 0);
    r.class_top5.assign(static_cast<size_t>(classes), 0);
    r.confusion.assign(static_cast<size_t>(classes),
                       std::vector<int>(static_cast<size_t>(classes), 0));
    int k5 = std::min(5, classes);
    int hit1 = 0, hit5 = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        check(static_cast<int>(scores[i].size()) == classes,
              "evaluate: score row has wrong class count");
        int y = labels[i];
        check(y >= 0 && y < classes, "evaluate: label out of range");
        auto order = score_ranking(scores[i]);
        bool in1 = order[0] == y;
        bool in5 = std::find(order.begin(), order.begin() + k5, y) != order.begin() + k5;
        r.class_total[static_cast<size_t>(y)]++;
        r.confusion[static_cast<size_t>(y)][static_cast<size_t>(order[0])]++;
        if (in1) {
            hit1++;
            r.class_top1[static_cast<size_t>(y)]++;
        }
        if (in5) {
            hit5++;
            r.class_top5[static_cast<size_t>(y)]++;
        }
    }
    r.pi_top1 = 100.0 * hit1 / r.total;
    r.pi_top5 = 100.0 * hit5 / r.total;
    int present = 0;
    double acc1 = 0, acc5 = 0;
    for (int cl = 0; cl < classes; ++cl) {
        if (r.class_total[static_cast<size_t>(cl)] == 0) continue;
        ++present;
        acc1 += static_cast<double>(r.class_top1[static_cast<size_t>(cl)]) /
                r.class_total[static_cast<size_t>(cl)];
        acc5 += static_cast<double>(r.class_top5[static_cast<size_t>(cl)]) /
                r.class_total[static_cast<size_t>(cl)];
    }
    check(present > 0, "evaluate: no class present in the data");
    r.pc_top1 = 100.0 * acc1 / present;
    r.pc_top5 = 100.0 * acc5 / present;
    return r;
}

// ---- score files ------------------------------------------------------------------

struct ScoreFile {
    std::vector<std::string> ids;
    std::vector<std::vector<float>> scores;
    int classes = 0;
};

inline std::string format_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline void write_scores(const std::string& path, const std::vector<std::string>& ids,
                         const std::vector<std::vector<float>>& scores) {
    check(ids.size() == scores.size(), "scores: ids/scores size mismatch");
    check(!ids.empty(), "scores: nothing to write");
    std::string out = "id";
    for (size_t c = 0; c < scores[0].size(); ++c) out += ",score_" + std::to_string(c);
    out += "\n";
    for (size_t i = 0; i < ids.size(); ++i) {
        check(scores[i].size() == scores[0].size(), "scores: ragged rows");
        out += ids[i];
        for (float v : scores[i]) out += "," + format_float(v);
        out += "\n";
    }
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "scores: cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    check(f.good(), "scores: short write to " + path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline ScoreFile read_scores(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "scores: cannot open " + path);
    std::string line;
    check(static_cast<bool>(std::getline(f, line)), path + ": empty score file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto head = split_csv_line(line);
    check(head.size() >= 3 && head[0] == "id", path + ": header must be id,score_0,...");
    ScoreFile sf;
    sf.classes = static_cast<int>(head.size()) - 1;
    for (int c = 0; c < sf.classes; ++c)
        check(head[static_cast<size_t>(c) + 1] == "score_" + std::to_string(c),
              path + ": unexpected header column '" + head[static_cast<size_t>(c) + 1] + "'");
    std::unordered_set<std::string> seen;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        check(static_cast<int>(cells.size()) == sf.classes + 1,
              path + " line " + std::to_string(lineno) + ": expected " +
                  std::to_string(sf.classes + 1) + " cells");
        check(!cells[0].empty(), path + " line " + std::to_string(lineno) + ": empty id");
        check(seen.insert(cells[0]).second,
              path + " line " + std::to_string(lineno) + ": duplicate id " + cells[0]);
        std::vector<float> row(static_cast<size_t>(sf.classes));
        for (int c = 0; c < sf.classes; ++c) {
            const auto& cell = cells[static_cast<size_t>(c) + 1];
            try {
                size_t pos = 0;
                double v = std::stod(cell, &pos);
                check(pos == cell.size() && std::isfinite(v),
                      path + " line " + std::to_string(lineno) + ": bad score '" + cell + "'");
                row[static_cast<size_t>(c)] = static_cast<float>(v);
            } catch (const Error&) {
                throw;
            } catch (const std::exception&) {
                fail(path + " line " + std::to_string(lineno) + ": bad score '" + cell + "'");
            }
        }
        sf.ids.push_back(cells[0]);
        sf.scores.push_back(std::move(row));
    }
    check(!sf.ids.empty(), path + ": no score rows");
    return sf;
}

// elementwise sum of two score files joined by id; the id sets must coincide
inline ScoreFile fuse_score_files(const ScoreFile& a, const ScoreFile& b) {
    check(a.classes == b.classes,
          "fuse: class counts differ (" + std::to_string(a.classes) + " vs " +
              std::to_string(b.classes) + ")");
    std::unordered_map<std::string, size_t> b_index;
    for (size_t i = 0; i < b.ids.size(); ++i) b_index.emplace(b.ids[i], i);
    std::vector<std::string> divergent;
    for (const auto& id : a.ids)
        if (!b_index.count(id)) divergent.push_back(id);
    for (const auto& id : b.ids)
        if (std::find(a.ids.begin(), a.ids.end(), id) == a.ids.end())
            divergent.push_back(id);
    if (!divergent.empty()) {
        std::string msg = "fuse: id sets differ:";
        for (size_t i = 0; i < divergent.size() && i < 8; ++i) msg += " " + divergent[i];
        if (divergent.size() > 8) msg += " ...";
        fail(msg);
    }
    check(a.ids.size() == b.ids.size(), "fuse: duplicate ids between files");
    ScoreFile out;
    out.classes = a.classes;
    out.ids = a.ids;
    out.scores.resize(a.scores.size());
    for (size_t i = 0; i < a.ids.size(); ++i) {
        const auto& bs = b.scores[b_index.at(a.ids[i])];
        out.scores[i].resize(static_cast<size_t>(a.classes));
        for (int c = 0; c < a.classes; ++c)
            out.scores[i][static_cast<size_t>(c)] =
                a.scores[i][static_cast<size_t>(c)] + bs[static_cast<size_t>(c)];
    }
    return out;
}

inline std::string sample_id(const SampleRef& ref) {
    return std::filesystem::path(ref.path).stem().string();
}

// labels for score rows, looked up by sample id in the manifest
inline std::vector<int> labels_for_ids(const Dataset& data,
                                       const std::vector<std::string>& ids) {
    std::unordered_map<std::string, int> by_id;
    for (const auto& s : data.samples) {
        auto [it, fresh] = by_id.emplace(sample_id(s), s.label);
        check(fresh, "dataset: duplicate sample id " + sample_id(s));
    }
    std::vector<int> labels;
    labels.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        check(it != by_id.end(), "scores: id '" + id + "' not present in the dataset");
        labels.push_back(it->second);
    }
    return labels;
}

// ---- training records ----------------------------------------------------------

struct PretrainStep {
    int epoch = 0, step = 0;
    double lr = 0;
    double total = 0, cl_joint = 0, con_joint = 0, cl_motion = 0, con_motion = 0, kt = 0;
};

struct SupervisedStep {
    int epoch = 0, step = 0;
    double lr = 0;
    double loss = 0;
};

struct PretrainResult {
    std::vector<PretrainStep> steps;
    int steps_per_epoch = 0;
};

struct EvalOutputs {
    EvalReport report;
    std::vector<std::string> ids;
    std::vector<std::vector<float>> scores;
};

struct SupervisedResult {
    std::vector<SupervisedStep> steps;
    EvalOutputs eval;
};

inline void write_pretrain_losses(const std::string& path,
                                  const std::vector<PretrainStep>& steps) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "losses: cannot open " + path);
    f << "epoch,step,lr,total,cl_joint,con_joint,cl_motion,con_motion,kt\n";
    for (const auto& s : steps)
        f << s.epoch << ',' << s.step << ',' << format_float(s.lr) << ','
          << format_float(s.total) << ',' << format_float(s.cl_joint) << ','
          << format_float(s.con_joint) << ',' << format_float(s.cl_motion) << ','
          << format_float(s.con_motion) << ',' << format_float(s.kt) << '\n';
    check(f.good(), "losses: short write to " + path);
}

inline void write_supervised_losses(const std::string& path,
                                    const std::vector<SupervisedStep>& steps) {
    std::ofstream f(path, std::ios::binary);
    check(f.good(), "losses: cannot open " + path);
    f << "epoch,step,lr,loss\n";
    for (const auto& s : steps)
        f << s.epoch << ',' << s.step << ',' << format_float(s.lr) << ','
          << format_float(s.loss) << '\n';
    check(f.good(), "losses: short write to " + path);
}

// ---- shared training helpers ------------------------------------------------------

namespace detail {

inline void shuffle_indices(std::vector<int>& v, Rng& rng) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
        std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(rng.uniform_int(0, i))]);
}

struct ModalityNet {
    bool active = false;
    Encoder query, key;
    MemoryBank bank_hand{1, 1}, bank_trunk{1, 1};
    Head head;
};

// query-encoder parameter names carry the modality prefix
inline std::string modality_prefix(Modality m) {
    return m == Modality::Joint ? "joint." : "motion.";
}

inline std::vector<const PartSet*> view_parts(const std::vector<View>& views,
                                              const std::vector<int>& order, int begin,
                                              int count, Modality m) {
    std::vector<const PartSet*> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = begin; i < begin + count; ++i) {
        const View& v = views[static_cast<size_t>(order[static_cast<size_t>(i)])];
        out.push_back(m == Modality::Joint ? &v.joint : &v.motion);
    }
    return out;
}

// plain (B, dim) copy of a projection batch, detached for bank storage
inline Tensor plain_copy(const Tensor& t) {
    return Tensor::from(t.shape(), std::vector<float>(t.data()), false);
}

inline std::vector<Modality> checkpoint_modalities(
    const std::map<std::string, CheckpointEntry>& entries) {
    bool joint = false, motion = false;
    for (const auto& [name, e] : entries) {
        if (name.rfind("joint.", 0) == 0) joint = true;
        if (name.rfind("motion.", 0) == 0) motion = true;
    }
    std::vector<Modality> out;
    if (joint) out.push_back(Modality::Joint);
    if (motion) out.push_back(Modality::Motion);
    check(!out.empty(), "checkpoint: no modality parameters found");
    return out;
}

}  // namespace detail

// deterministic per-class subset with nested prefixes across percents; falls
// back to an unstratified draw when some class would round to zero samples
inline std::vector<int> percent_subset(const Dataset& data, double percent,
                                       uint64_t seed, bool stratify,
                                       std::string* warning = nullptr) {
    check(percent > 0.0 && percent <= 1.0, "subset: percent must lie in (0, 1]");
    auto train = data.indices(Split::Train);
    check(!train.empty(), "subset: empty train split");
    if (percent == 1.0) return train;
    if (stratify) {
        std::map<int, std::vector<int>> by_class;
        for (int idx : train) by_class[data.samples[static_cast<size_t>(idx)].label].push_back(idx);
        bool ok = true;
        for (auto& [label, members] : by_class)
            if (std::llround(percent * static_cast<double>(members.size())) < 1) ok = false;
        if (ok) {
            std::vector<int> subset;
            for (auto& [label, members] : by_class) {
                Rng rng(derive_seed(seed, detail::salt::kSubset,
                                    static_cast<uint64_t>(label)));
                detail::shuffle_indices(members, rng);
                auto take = static_cast<size_t>(
                    std::llround(percent * static_cast<double>(members.size())));
                subset.insert(subset.end(), members.begin(),
                              members.begin() + static_cast<long>(take));
            }
            std::sort(subset.begin(), subset.end());
            return subset;
        }
        if (warning)
            *warning = "subset: a class would receive zero samples at " +
                       format_float(100.0 * percent) + "%, drawing unstratified";
    }
    Rng rng(derive_seed(seed, detail::salt::kSubset));
    detail::shuffle_indices(train, rng);
    auto take = std::max<long long>(
        1, std::llround(percent * static_cast<double>(train.size())));
    train.resize(static_cast<size_t>(std::min<long long>(
        take, static_cast<long long>(train.size()))));
    std::sort(train.begin(), train.end());
    return train;
}

// ---- pre-training -------------------------------------------------------------------

inline PretrainResult pretrain(const RunConfig& cfg, const Dataset& data,
                               const std::string& ckpt_path) {
    validate_config(cfg);
    auto train = data.indices(Split::Train);
    check(static_cast<int>(train.size()) >= cfg.batch,
          "pretrain: train split smaller than one batch");
    auto dims = cfg.dims();
    auto ranges = cfg.ranges();

    detail::ModalityNet nets[2];
    const Modality kinds[2] = {Modality::Joint, Modality::Motion};
    std::vector<Tensor> params;
    for (int m = 0; m < 2; ++m) {
        bool on = m == 0 ? cfg.joint_enabled() : cfg.motion_enabled();
        if (!on) continue;
        auto& net = nets[m];
        net.active = true;
        Rng rng(derive_seed(cfg.seed, detail::salt::kInit, static_cast<uint64_t>(m)));
        net.query.init(rng, dims);
        net.key.init(rng, dims);
        net.key.copy_from(net.query);
        net.key.set_trainable(false);
        net.bank_hand = MemoryBank(cfg.bank_size, cfg.proj_dim);
        net.bank_trunk = MemoryBank(cfg.bank_size, cfg.proj_dim);
        for (auto& [name, t] : net.query.named_params("")) params.push_back(t);
    }

    auto save = [&] {
        NamedParams out;
        for (int m = 0; m < 2; ++m) {
            if (!nets[m].active) continue;
            auto prefix = detail::modality_prefix(kinds[m]);
            for (auto& [name, t] : nets[m].query.named_params(prefix))
                out.emplace_back(name, t);
            append_buffer_entries(nets[m].query.named_buffers(prefix), out);
        }
        save_checkpoint(ckpt_path, out);
    };

    Sgd opt(params, cfg.lr, cfg.sgd_momentum);
    PretrainResult result;
    result.steps_per_epoch = static_cast<int>(train.size()) / cfg.batch;
    double lam[2] = {cfg.lambda_joint, cfg.lambda_motion};

    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        double lr = lr_schedule(epoch, cfg.lr, cfg.lr_decay_every, cfg.lr_decay_factor);
        opt.set_lr(lr);
        auto order = train;
        Rng order_rng(derive_seed(cfg.seed, detail::salt::kOrder, 0,
                                  static_cast<uint64_t>(epoch)));
        detail::shuffle_indices(order, order_rng);

        for (int step = 0; step < result.steps_per_epoch; ++step) {
            // two augmented views per sample, params shared across parts
            std::vector<View> q_views, k_views;
            q_views.reserve(static_cast<size_t>(cfg.batch));
            k_views.reserve(static_cast<size_t>(cfg.batch));
            for (int b = 0; b < cfg.batch; ++b) {
                int idx = order[static_cast<size_t>(step * cfg.batch + b)];
                auto seq = data.load(idx);
                uint64_t sq = derive_seed(cfg.seed, detail::salt::kAugment,
                                          static_cast<uint64_t>(epoch),
                                          static_cast<uint64_t>(idx), 0);
                uint64_t sk = derive_seed(cfg.seed, detail::salt::kAugment,
                                          static_cast<uint64_t>(epoch),
                                          static_cast<uint64_t>(idx), 1);
                auto [qv, kv] = make_views(seq, sq, sk, ranges, cfg.out_res);
                q_views.push_back(std::move(qv));
                k_views.push_back(std::move(kv));
            }
            std::vector<int> all(static_cast<size_t>(cfg.batch));
            std::iota(all.begin(), all.end(), 0);

            Branches q_out[2], k_out[2];
            for (int m = 0; m < 2; ++m) {
                if (!nets[m].active) continue;
                auto qi = pack_parts<float>(
                    detail::view_parts(q_views, all, 0, cfg.batch, kinds[m]), cfg.t_prime);
                auto ki = pack_parts<float>(
                    detail::view_parts(k_views, all, 0, cfg.batch, kinds[m]), cfg.t_prime);
                q_out[m] = nets[m].query.forward(qi, true);
                k_out[m] = nets[m].key.forward(ki, true);
            }

            // losses are computed against banks only once a full batch has
            // been stored; the first step trains on consistency alone
            bool banks_ready = false;
            for (int m = 0; m < 2; ++m)
                if (nets[m].active) banks_ready = nets[m].bank_hand.size() >= cfg.batch;

            PretrainStep rec;
            rec.epoch = epoch;
            rec.step = step;
            rec.lr = lr;
            Tensor total;
            auto add_term = [&](const Tensor& t, double w) {
                Tensor scaled = w == 1.0 ? t : scale(t, w);
                total = total.defined() ? add(total, scaled) : scaled;
            };
            for (int m = 0; m < 2; ++m) {
                if (!nets[m].active) continue;
                Tensor branch;
                if (banks_ready) {
                    auto cl = branch_contrastive_loss(q_out[m], k_out[m],
                                                      nets[m].bank_hand,
                                                      nets[m].bank_trunk, cfg.tau_c);
                    (m == 0 ? rec.cl_joint : rec.cl_motion) = cl.item();
                    branch = cl;
                }
                if (cfg.consistency_enabled) {
                    auto con = consistency_loss(q_out[m], k_out[m], cfg.tau_1);
                    (m == 0 ? rec.con_joint : rec.con_motion) = con.item();
                    branch = branch.defined() ? add(branch, con) : con;
                }
                if (branch.defined()) add_term(branch, lam[m]);
            }
            if (cfg.kt_enabled && banks_ready) {
                auto anchors_j = build_anchors(nets[0].bank_hand, nets[0].bank_trunk);
                auto anchors_m = build_anchors(nets[1].bank_hand, nets[1].bank_trunk);
                auto kt = kt_loss(modal_summary(q_out[0]), modal_summary(k_out[0]),
                                  modal_summary(q_out[1]), modal_summary(k_out[1]),
                                  anchors_j, anchors_m, cfg.top_k, cfg.tau_t, cfg.tau_s);
                rec.kt = kt.item();
                add_term(kt, 1.0);
            }
            // with consistency disabled the very first step has no loss yet;
            // it only fills the banks with key projections
            if (total.defined()) {
                rec.total = total.item();
                if (!std::isfinite(rec.total))
                    fail("pretrain: non-finite loss at epoch " + std::to_string(epoch) +
                         " step " + std::to_string(step) + " (cl_j=" +
                         format_float(rec.cl_joint) + ", con_j=" +
                         format_float(rec.con_joint) + ", cl_m=" +
                         format_float(rec.cl_motion) + ", con_m=" +
                         format_float(rec.con_motion) + ", kt=" +
                         format_float(rec.kt) + ")");
                opt.zero_grad();
                backward(total);
                opt.step();
            } else {
                check(!banks_ready, "pretrain: no loss term enabled");
            }
            for (int m = 0; m < 2; ++m) {
                if (!nets[m].active) continue;
                momentum_update(nets[m].key, nets[m].query, cfg.key_momentum);
                nets[m].bank_hand.push(detail::plain_copy(k_out[m].z_hand));
                nets[m].bank_trunk.push(detail::plain_copy(k_out[m].z_trunk));
            }
            result.steps.push_back(rec);
        }
        save();
    }
    if (cfg.pretrain_epochs == 0) save();
    return result;
}

// ---- shared evaluation forward ------------------------------------------------------

namespace detail {

// un-augmented views for a fixed index list, loaded once and reused
inline std::vector<View> load_eval_views(const Dataset& data, const std::vector<int>& idx,
                                         int t_prime, int out_res) {
    std::vector<View> views;
    views.reserve(idx.size());
    for (int i : idx) views.push_back(eval_view(data.load(i), t_prime, out_res));
    return views;
}

// softmax scores of summed modality logits over a cached view list
inline std::vector<std::vector<float>> score_views(
    const std::vector<View>& views, detail::ModalityNet* nets, const RunConfig& cfg) {
    std::vector<std::vector<float>> scores;
    scores.reserve(views.size());
    int n = static_cast<int>(views.size());
    std::vector<int> all(static_cast<size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    for (int begin = 0; begin < n; begin += cfg.batch) {
        int count = std::min(cfg.batch, n - begin);
        std::vector<std::pair<const Branches*, const Head*>> active;
        Branches outs[2];
        const Modality kinds[2] = {Modality::Joint, Modality::Motion};
        for (int m = 0; m < 2; ++m) {
            if (!nets[m].active) continue;
            auto in = pack_parts<float>(view_parts(views, all, begin, count, kinds[m]),
                                        cfg.t_prime);
            outs[m] = nets[m].query.forward(in, false);
            active.emplace_back(&outs[m], &nets[m].head);
        }
        auto logits = classify(active);
        int classes = logits.dim(1);
        auto probs = plain_softmax(logits.data().data(), count, classes, 1.0);
        for (int b = 0; b < count; ++b)
            scores.emplace_back(probs.begin() + static_cast<long>(b) * classes,
                                probs.begin() + static_cast<long>(b + 1) * classes);
    }
    return scores;
}

}  // namespace detail

// ---- fine-tuning --------------------------------------------------------------------

enum class ModalityFilter { All, JointOnly, MotionOnly };

// pretrained (or seeded random) encoders plus fresh heads, trained with cross
// entropy on a stratified percent subset; returns the test-split evaluation
inline SupervisedResult finetune(const RunConfig& cfg, const Dataset& data,
                                 const std::string& ckpt_path, double percent,
                                 ModalityFilter filter = ModalityFilter::All,
                                 const std::string& model_out = "",
                                 std::string* subset_warning = nullptr) {
    validate_config(cfg);
    check(data.num_classes() >= 2, "finetune: need at least 2 classes");
    auto dims = cfg.dims();

    std::map<std::string, CheckpointEntry> entries;
    std::vector<Modality> wanted;
    if (!ckpt_path.empty()) {
        entries = checkpoint_map(load_checkpoint(ckpt_path));
        wanted = detail::checkpoint_modalities(entries);
    } else {
        if (cfg.joint_enabled()) wanted.push_back(Modality::Joint);
        if (cfg.motion_enabled()) wanted.push_back(Modality::Motion);
    }
    if (filter != ModalityFilter::All) {
        Modality keep = filter == ModalityFilter::JointOnly ? Modality::Joint
                                                            : Modality::Motion;
        std::erase_if(wanted, [&](Modality m) { return m != keep; });
    }
    check(!wanted.empty(), "finetune: no modality available after filtering");

    detail::ModalityNet nets[2];
    std::vector<Tensor> params;
    for (Modality m : wanted) {
        int mi = m == Modality::Joint ? 0 : 1;
        auto& net = nets[mi];
        net.active = true;
        Rng rng(derive_seed(cfg.seed, detail::salt::kInit, static_cast<uint64_t>(mi)));
        net.query.init(rng, dims);
        if (!ckpt_path.empty()) {
            auto np = net.query.named_params(detail::modality_prefix(m));
            load_into(entries, np, ckpt_path);
            load_buffer_entries(entries, net.query.named_buffers(detail::modality_prefix(m)),
                                ckpt_path);
        }
        Rng hr(derive_seed(cfg.seed, detail::salt::kHead, static_cast<uint64_t>(mi)));
        net.head.init(hr, dims.embed_dim, data.num_classes());
        // the classifier reads embeddings; the contrastive projection stays
        // out of the supervised graph and would never receive a gradient
        for (auto& [name, t] : net.query.named_params(""))
            if (name.rfind("proj.", 0) != 0) params.push_back(t);
        for (auto& [name, t] : net.head.named_params("")) params.push_back(t);
    }

    auto subset = percent_subset(data, percent, cfg.seed, cfg.stratify, subset_warning);
    auto views = detail::load_eval_views(data, subset, cfg.t_prime, cfg.out_res);
    std::vector<int> labels(subset.size());
    for (size_t i = 0; i < subset.size(); ++i)
        labels[i] = data.samples[static_cast<size_t>(subset[i])].label;

    Sgd opt(params, cfg.lr, cfg.sgd_momentum);
    SupervisedResult result;
    int n = static_cast<int>(subset.size());
    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        double lr = lr_schedule(epoch, cfg.lr, cfg.lr_decay_every, cfg.lr_decay_factor);
        opt.set_lr(lr);
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng order_rng(derive_seed(cfg.seed, detail::salt::kOrder, 1,
                                  static_cast<uint64_t>(epoch)));
        detail::shuffle_indices(order, order_rng);
        int step = 0;
        for (int begin = 0; begin < n; begin += cfg.batch, ++step) {
            int count = std::min(cfg.batch, n - begin);
            std::vector<std::pair<const Branches*, const Head*>> active;
            Branches outs[2];
            const Modality kinds[2] = {Modality::Joint, Modality::Motion};
            for (int m = 0; m < 2; ++m) {
                if (!nets[m].active) continue;
                auto in = pack_parts<float>(
                    detail::view_parts(views, order, begin, count, kinds[m]), cfg.t_prime);
                outs[m] = nets[m].query.forward(in, true);
                active.emplace_back(&outs[m], &nets[m].head);
            }
            std::vector<int> batch_labels(static_cast<size_t>(count));
            for (int b = 0; b < count; ++b)
                batch_labels[static_cast<size_t>(b)] =
                    labels[static_cast<size_t>(order[static_cast<size_t>(begin + b)])];
            auto loss = cross_entropy(classify(active), batch_labels);
            double lv = loss.item();
            if (!std::isfinite(lv))
                fail("finetune: non-finite loss at epoch " + std::to_string(epoch) +
                     " step " + std::to_string(step));
            opt.zero_grad();
            backward(loss);
            opt.step();
            result.steps.push_back({epoch, step, lr, lv});
        }
    }

    auto test_idx = data.indices(Split::Test);
    check(!test_idx.empty(), "finetune: empty test split");
    auto test_views = detail::load_eval_views(data, test_idx, cfg.t_prime, cfg.out_res);
    result.eval.scores = detail::score_views(test_views, nets, cfg);
    std::vector<int> test_labels(test_idx.size());
    result.eval.ids.resize(test_idx.size());
    for (size_t i = 0; i < test_idx.size(); ++i) {
        test_labels[i] = data.samples[static_cast<size_t>(test_idx[i])].label;
        result.eval.ids[i] = sample_id(data.samples[static_cast<size_t>(test_idx[i])]);
    }
    result.eval.report = evaluate_scores(result.eval.scores, test_labels,
                                         data.num_classes());

    if (!model_out.empty()) {
        NamedParams out;
        for (int m = 0; m < 2; ++m) {
            if (!nets[m].active) continue;
            auto prefix = detail::modality_prefix(m == 0 ? Modality::Joint
                                                         : Modality::Motion);
            for (auto& [name, t] : nets[m].query.named_params(prefix))
                out.emplace_back(name, t);
            append_buffer_entries(nets[m].query.named_buffers(prefix), out);
            for (auto& [name, t] : nets[m].head.named_params(prefix + "head."))
                out.emplace_back(name, t);
        }
        save_checkpoint(model_out, out);
    }
    return result;
}

// ---- linear probe -------------------------------------------------------------------

// freezes the encoders, caches hand+trunk embeddings for every sample, and
// trains a single linear layer: lr drops tenfold at epoch 50
inline SupervisedResult linear_probe(const RunConfig& cfg, const Dataset& data,
                                     const std::string& ckpt_path) {
    validate_config(cfg);
    check(data.num_classes() >= 2, "probe: need at least 2 classes");
    auto dims = cfg.dims();

    std::map<std::string, CheckpointEntry> entries;
    std::vector<Modality> wanted;
    if (!ckpt_path.empty()) {
        entries = checkpoint_map(load_checkpoint(ckpt_path));
        wanted = detail::checkpoint_modalities(entries);
    } else {
        if (cfg.joint_enabled()) wanted.push_back(Modality::Joint);
        if (cfg.motion_enabled()) wanted.push_back(Modality::Motion);
    }
    detail::ModalityNet nets[2];
    for (Modality m : wanted) {
        int mi = m == Modality::Joint ? 0 : 1;
        auto& net = nets[mi];
        net.active = true;
        Rng rng(derive_seed(cfg.seed, detail::salt::kInit, static_cast<uint64_t>(mi)));
        net.query.init(rng, dims);
        if (!ckpt_path.empty()) {
            auto np = net.query.named_params(detail::modality_prefix(m));
            load_into(entries, np, ckpt_path);
            load_buffer_entries(entries, net.query.named_buffers(detail::modality_prefix(m)),
                                ckpt_path);
        }
        net.query.set_trainable(false);
    }

    // cache concatenated per-modality features for train and test splits
    auto extract = [&](const std::vector<int>& idx) {
        auto views = detail::load_eval_views(data, idx, cfg.t_prime, cfg.out_res);
        int n = static_cast<int>(views.size());
        int width = static_cast<int>(wanted.size()) * dims.embed_dim;
        std::vector<float> feats(static_cast<size_t>(n) * static_cast<size_t>(width));
        std::vector<int> all(static_cast<size_t>(n));
        std::iota(all.begin(), all.end(), 0);
        for (int begin = 0; begin < n; begin += cfg.batch) {
            int count = std::min(cfg.batch, n - begin);
            int offset = 0;
            for (Modality m : wanted) {
                int mi = m == Modality::Joint ? 0 : 1;
                auto in = pack_parts<float>(
                    detail::view_parts(views, all, begin, count, m), cfg.t_prime);
                auto out = nets[mi].query.forward(in, false);
                auto f = add(out.f_hand, out.f_trunk);
                for (int b = 0; b < count; ++b)
                    std::copy(f.data().begin() + static_cast<long>(b) * dims.embed_dim,
                              f.data().begin() + static_cast<long>(b + 1) * dims.embed_dim,
                              feats.begin() +
                                  static_cast<size_t>(begin + b) * static_cast<size_t>(width) +
                                  static_cast<size_t>(offset));
                offset += dims.embed_dim;
            }
        }
        return std::pair{feats, width};
    };

    auto train_idx = data.indices(Split::Train);
    auto test_idx = data.indices(Split::Test);
    check(!train_idx.empty() && !test_idx.empty(), "probe: need train and test samples");
    auto [train_feats, width] = extract(train_idx);
    auto [test_feats, width2] = extract(test_idx);
    std::vector<int> train_labels(train_idx.size()), test_labels(test_idx.size());
    for (size_t i = 0; i < train_idx.size(); ++i)
        train_labels[i] = data.samples[static_cast<size_t>(train_idx[i])].label;
    for (size_t i = 0; i < test_idx.size(); ++i)
        test_labels[i] = data.samples[static_cast<size_t>(test_idx[i])].label;

    int classes = data.num_classes();
    Rng pr(derive_seed(cfg.seed, detail::salt::kProbe));
    Tensor w = detail::linear_init<float>(pr, width, classes);
    Tensor b = detail::bias_init<float>(pr, width, classes);
    Sgd opt({w, b}, cfg.probe_lr, cfg.sgd_momentum);

    SupervisedResult result;
    int n = static_cast<int>(train_idx.size());
    for (int epoch = 0; epoch < cfg.probe_epochs; ++epoch) {
        double lr = lr_schedule(epoch, cfg.probe_lr, 50, 0.1);
        opt.set_lr(lr);
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng order_rng(derive_seed(cfg.seed, detail::salt::kOrder, 2,
                                  static_cast<uint64_t>(epoch)));
        detail::shuffle_indices(order, order_rng);
        int step = 0;
        for (int begin = 0; begin < n; begin += cfg.batch, ++step) {
            int count = std::min(cfg.batch, n - begin);
            std::vector<float> xb(static_cast<size_t>(count) * static_cast<size_t>(width));
            std::vector<int> yb(static_cast<size_t>(count));
            for (int i = 0; i < count; ++i) {
                int src = order[static_cast<size_t>(begin + i)];
                std::copy(train_feats.begin() + static_cast<size_t>(src) * width,
                          train_feats.begin() + static_cast<size_t>(src + 1) * width,
                          xb.begin() + static_cast<size_t>(i) * width);
                yb[static_cast<size_t>(i)] = train_labels[static_cast<size_t>(src)];
            }
            auto x = Tensor::from({count, width}, std::move(xb), false);
            auto loss = cross_entropy(add(matmul(x, w), b), yb);
            double lv = loss.item();
            if (!std::isfinite(lv))
                fail("probe: non-finite loss at epoch " + std::to_string(epoch) +
                     " step " + std::to_string(step));
            opt.zero_grad();
            backward(loss);
            opt.step();
            result.steps.push_back({epoch, step, lr, lv});
        }
    }

    int tn = static_cast<int>(test_idx.size());
    auto xt = Tensor::from({tn, width2},
                           std::vector<float>(test_feats.begin(), test_feats.end()), false);
    auto logits = add(matmul(xt, w), b);
    auto probs = detail::plain_softmax(logits.data().data(), tn, classes, 1.0);
    result.eval.scores.reserve(static_cast<size_t>(tn));
    result.eval.ids.resize(static_cast<size_t>(tn));
    for (int i = 0; i < tn; ++i) {
        result.eval.scores.emplace_back(probs.begin() + static_cast<long>(i) * classes,
                                        probs.begin() + static_cast<long>(i + 1) * classes);
        result.eval.ids[static_cast<size_t>(i)] =
            sample_id(data.samples[static_cast<size_t>(test_idx[static_cast<size_t>(i)])]);
    }
    result.eval.report = evaluate_scores(result.eval.scores, test_labels, classes);
    return result;
}

// ---- evaluation of a saved fine-tuned model ------------------------------------------

inline EvalOutputs eval_checkpoint(const RunConfig& cfg, const Dataset& data,
                                   const std::string& model_path) {
    validate_config(cfg);
    auto dims = cfg.dims();
    auto entries = checkpoint_map(load_checkpoint(model_path));
    auto wanted = detail::checkpoint_modalities(entries);
    detail::ModalityNet nets[2];
    for (Modality m : wanted) {
        int mi = m == Modality::Joint ? 0 : 1;
        auto& net = nets[mi];
        net.active = true;
        Rng rng(derive_seed(cfg.seed, detail::salt::kInit, static_cast<uint64_t>(mi)));
        net.query.init(rng, dims);
        auto prefix = detail::modality_prefix(m);
        auto np = net.query.named_params(prefix);
        load_into(entries, np, model_path);
        load_buffer_entries(entries, net.query.named_buffers(prefix), model_path);
        auto it = entries.find(prefix + "head.w");
        check(it != entries.end(),
              model_path + ": missing " + prefix + "head.w (not a fine-tuned model)");
        check(it->second.shape.size() == 2 &&
                  it->second.shape[0] == dims.embed_dim,
              model_path + ": head input dim does not match embed_dim");
        int classes = it->second.shape[1];
        check(classes == data.num_classes(),
              model_path + ": head classes (" + std::to_string(classes) +
                  ") do not match the dataset (" + std::to_string(data.num_classes()) + ")");
        Rng hr(derive_seed(cfg.seed, detail::salt::kHead, static_cast<uint64_t>(mi)));
        net.head.init(hr, dims.embed_dim, classes);
        auto hp = net.head.named_params(prefix + "head.");
        load_into(entries, hp, model_path);
    }
    auto test_idx = data.indices(Split::Test);
    check(!test_idx.empty(), "eval: empty test split");
    auto views = detail::load_eval_views(data, test_idx, cfg.t_prime, cfg.out_res);
    EvalOutputs out;
    out.scores = detail::score_views(views, nets, cfg);
    std::vector<int> labels(test_idx.size());
    out.ids.resize(test_idx.size());
    for (size_t i = 0; i < test_idx.size(); ++i) {
        labels[i] = data.samples[static_cast<size_t>(test_idx[i])].label;
        out.ids[i] = sample_id(data.samples[static_cast<size_t>(test_idx[i])]);
    }
    out.report = evaluate_scores(out.scores, labels, data.num_classes());
    return out;
}

// ---- embedding export ---------------------------------------------------------------

// one CSV row per sample: id, label, joint feature, motion feature; a
// modality absent from the checkpoint exports zeros
inline void export_embeddings(const RunConfig& cfg, const Dataset& data,
                              const std::string& ckpt_path, const std::string& out_csv) {
    validate_config(cfg);
    auto dims = cfg.dims();
    auto entries = checkpoint_map(load_checkpoint(ckpt_path));
    auto wanted = detail::checkpoint_modalities(entries);
    detail::ModalityNet nets[2];
    for (Modality m : wanted) {
        int mi = m == Modality::Joint ? 0 : 1;
        auto& net = nets[mi];
        net.active = true;
        Rng rng(derive_seed(cfg.seed, detail::salt::kInit, static_cast<uint64_t>(mi)));
        net.query.init(rng, dims);
        auto np = net.query.named_params(detail::modality_prefix(m));
        load_into(entries, np, ckpt_path);
        load_buffer_entries(entries, net.query.named_buffers(detail::modality_prefix(m)),
                            ckpt_path);
        net.query.set_trainable(false);
    }

    std::vector<int> all_idx(data.samples.size());
    std::iota(all_idx.begin(), all_idx.end(), 0);
    check(!all_idx.empty(), "export: empty dataset");
    auto views = detail::load_eval_views(data, all_idx, cfg.t_prime, cfg.out_res);

    std::ofstream f(out_csv, std::ios::binary);
    check(f.good(), "export: cannot open " + out_csv);
    f << "id,label";
    for (int i = 0; i < dims.embed_dim; ++i) f << ",joint_" << i;
    for (int i = 0; i < dims.embed_dim; ++i) f << ",motion_" << i;
    f << '\n';

    int n = static_cast<int>(views.size());
    std::vector<int> all(static_cast<size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    for (int begin = 0; begin < n; begin += cfg.batch) {
        int count = std::min(cfg.batch, n - begin);
        std::vector<float> rows[2];
        const Modality kinds[2] = {Modality::Joint, Modality::Motion};
        for (int m = 0; m < 2; ++m) {
            if (!nets[m].active) {
                rows[m].assign(static_cast<size_t>(count) *
                                   static_cast<size_t>(dims.embed_dim), 0.0f);
                continue;
            }
            auto in = pack_parts<float>(detail::view_parts(views, all, begin, count,
                                                           kinds[m]), cfg.t_prime);
            auto out = nets[m].query.forward(in, false);
            rows[m] = add(out.f_hand, out.f_trunk).data();
        }
        for (int b = 0; b < count; ++b) {
            const auto& ref = data.samples[static_cast<size_t>(all_idx[static_cast<size_t>(begin + b)])];
            f << sample_id(ref) << ',' << ref.label;
            for (int m = 0; m < 2; ++m)
                for (int i = 0; i < dims.embed_dim; ++i)
                    f << ',' << format_float(rows[m][static_cast<size_t>(b) * dims.embed_dim +
                                                     static_cast<size_t>(i)]);
            f << '\n';
        }
    }
    check(f.good(), "export: short write to " + out_csv);
}

}  // namespace stc
