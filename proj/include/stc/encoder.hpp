#pragma once

// Part-stream encoders: a two-layer graph convolution over the skeleton, a
// pre-norm transformer over per-frame tokens, temporal mean pooling, and a
// projection MLP onto the unit sphere. The two hands share one stream's
// weights; their embeddings sum. A momentum copy of the whole encoder
// produces the keys for the contrastive losses.

#include "stc/augment.hpp"
#include "stc/tensor.hpp"

namespace stc {

struct SkeletonGraph {
    int joints = 0;
    std::vector<std::pair<int, int>> edges;

    // wrist at 0, then four joints per finger, thumb through pinky
    static const SkeletonGraph& hand() {
        static const SkeletonGraph g = [] {
            SkeletonGraph h;
            h.joints = kHandJoints;
            for (int f = 0; f < 5; ++f) {
                int base = 1 + f * 4;
                h.edges.emplace_back(0, base);
                for (int k = 0; k < 3; ++k) h.edges.emplace_back(base + k, base + k + 1);
            }
            return h;
        }();
        return g;
    }

    // nose bridges the shoulders; each arm chains shoulder, elbow, wrist
    static const SkeletonGraph& trunk() {
        static const SkeletonGraph g = [] {
            SkeletonGraph t;
            t.joints = kTrunkJoints;
            t.edges = {{kNose, kLeftShoulder},    {kNose, kRightShoulder},
                       {kLeftShoulder, kLeftElbow},  {kLeftElbow, kLeftWrist},
                       {kRightShoulder, kRightElbow}, {kRightElbow, kRightWrist}};
            return t;
        }();
        return g;
    }

    // symmetric normalized propagation matrix D^-1/2 (A + I) D^-1/2
    template <class S>
    TensorT<S> propagation() const {
        int J = joints;
        std::vector<double> a(static_cast<size_t>(J) * static_cast<size_t>(J), 0.0);
        for (int i = 0; i < J; ++i) a[static_cast<size_t>(i) * J + static_cast<size_t>(i)] = 1.0;
        for (auto [u, v] : edges) {
            check(u >= 0 && u < J && v >= 0 && v < J && u != v,
                  "skeleton graph: invalid edge");
            a[static_cast<size_t>(u) * J + static_cast<size_t>(v)] = 1.0;
            a[static_cast<size_t>(v) * J + static_cast<size_t>(u)] = 1.0;
        }
        std::vector<double> deg(static_cast<size_t>(J), 0.0);
        for (int i = 0; i < J; ++i)
            for (int j = 0; j < J; ++j) deg[static_cast<size_t>(i)] += a[static_cast<size_t>(i) * J + static_cast<size_t>(j)];
        std::vector<S> out(a.size());
        for (int i = 0; i < J; ++i)
            for (int j = 0; j < J; ++j)
                out[static_cast<size_t>(i) * J + static_cast<size_t>(j)] = static_cast<S>(
                    a[static_cast<size_t>(i) * J + static_cast<size_t>(j)] /
                    std::sqrt(deg[static_cast<size_t>(i)] * deg[static_cast<size_t>(j)]));
        return TensorT<S>::from({J, J}, std::move(out), false);
    }
};

struct EncoderDims {
    int t_prime = 64;
    int gcn_hidden = 64;
    int model_dim = 128;
    int heads = 4;
    int layers = 2;
    int ff_dim = 256;
    int embed_dim = 512;
    int proj_dim = 128;
};

inline void validate_dims(const EncoderDims& d) {
    check(d.t_prime >= 2, "encoder: t_prime must be at least 2");
    check(d.gcn_hidden > 0 && d.model_dim > 0 && d.ff_dim > 0 && d.embed_dim > 0 &&
              d.proj_dim > 0 && d.heads > 0 && d.layers > 0,
          "encoder: all dimensions must be positive");
    check(d.model_dim % d.heads == 0,
          "encoder: model_dim " + std::to_string(d.model_dim) +
              " not divisible by heads " + std::to_string(d.heads));
}

namespace detail {

template <class S>
TensorT<S> linear_init(Rng& rng, int fan_in, int fan_out) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return TensorT<S>::uniform({fan_in, fan_out}, rng, -bound, bound, true);
}

template <class S>
TensorT<S> bias_init(Rng& rng, int fan_in, int fan_out) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return TensorT<S>::uniform({fan_out}, rng, -bound, bound, true);
}

}  // namespace detail

template <class S>
using NamedParamsT = std::vector<std::pair<std::string, TensorT<S>>>;

// running-statistics buffers: name -> pointer into the owning module
template <class S>
using NamedBuffersT = std::vector<std::pair<std::string, std::vector<S>*>>;

// running-average weight and epsilon for the graph-layer batch statistics
constexpr double kBnMomentum = 0.1;
constexpr double kBnEps = 1e-5;

template <class S>
struct StreamT {
    struct Block {
        // no key bias: softmax cancels a constant shift per query row
        TensorT<S> ln1g, ln1b, wq, bq, wk, wv, bv, wo, bo;
        TensorT<S> ln2g, ln2b, fw1, fb1, fw2, fb2;
    };

    // graph layers carry no bias: the batch norm right after each one owns
    // the per-channel shift
    TensorT<S> gw1, gw2;
    TensorT<S> bn1g, bn1b, bn2g, bn2b;
    std::vector<S> bn1_mean, bn1_var, bn2_mean, bn2_var;
    TensorT<S> pos;
    std::vector<Block> blocks;
    TensorT<S> lnfg, lnfb, ow, ob;

    void init(Rng& rng, const EncoderDims& d) {
        gw1 = detail::linear_init<S>(rng, 2, d.gcn_hidden);
        gw2 = detail::linear_init<S>(rng, d.gcn_hidden, d.model_dim);
        bn1g = TensorT<S>::full({d.gcn_hidden}, S(1), true);
        bn1b = TensorT<S>::zeros({d.gcn_hidden}, true);
        bn2g = TensorT<S>::full({d.model_dim}, S(1), true);
        bn2b = TensorT<S>::zeros({d.model_dim}, true);
        bn1_mean.assign(static_cast<size_t>(d.gcn_hidden), S(0));
        bn1_var.assign(static_cast<size_t>(d.gcn_hidden), S(1));
        bn2_mean.assign(static_cast<size_t>(d.model_dim), S(0));
        bn2_var.assign(static_cast<size_t>(d.model_dim), S(1));
        pos = TensorT<S>::normal({d.t_prime, d.model_dim}, rng, 0.0, 0.02, true);
        blocks.clear();
        for (int l = 0; l < d.layers; ++l) {
            Block b;
            b.ln1g = TensorT<S>::full({d.model_dim}, S(1), true);
            b.ln1b = TensorT<S>::zeros({d.model_dim}, true);
            b.wq = detail::linear_init<S>(rng, d.model_dim, d.model_dim);
            b.bq = detail::bias_init<S>(rng, d.model_dim, d.model_dim);
            b.wk = detail::linear_init<S>(rng, d.model_dim, d.model_dim);
            b.wv = detail::linear_init<S>(rng, d.model_dim, d.model_dim);
            b.bv = detail::bias_init<S>(rng, d.model_dim, d.model_dim);
            b.wo = detail::linear_init<S>(rng, d.model_dim, d.model_dim);
            b.bo = detail::bias_init<S>(rng, d.model_dim, d.model_dim);
            b.ln2g = TensorT<S>::full({d.model_dim}, S(1), true);
            b.ln2b = TensorT<S>::zeros({d.model_dim}, true);
            b.fw1 = detail::linear_init<S>(rng, d.model_dim, d.ff_dim);
            b.fb1 = detail::bias_init<S>(rng, d.model_dim, d.ff_dim);
            b.fw2 = detail::linear_init<S>(rng, d.ff_dim, d.model_dim);
            b.fb2 = detail::bias_init<S>(rng, d.ff_dim, d.model_dim);
            blocks.push_back(std::move(b));
        }
        lnfg = TensorT<S>::full({d.model_dim}, S(1), true);
        lnfb = TensorT<S>::zeros({d.model_dim}, true);
        ow = detail::linear_init<S>(rng, d.model_dim, d.embed_dim);
        ob = detail::bias_init<S>(rng, d.model_dim, d.embed_dim);
    }

    void collect(const std::string& prefix, NamedParamsT<S>& out) const {
        out.emplace_back(prefix + ".gw1", gw1);
        out.emplace_back(prefix + ".bn1g", bn1g);
        out.emplace_back(prefix + ".bn1b", bn1b);
        out.emplace_back(prefix + ".gw2", gw2);
        out.emplace_back(prefix + ".bn2g", bn2g);
        out.emplace_back(prefix + ".bn2b", bn2b);
        out.emplace_back(prefix + ".pos", pos);
        for (size_t l = 0; l < blocks.size(); ++l) {
            const Block& b = blocks[l];
            std::string bp = prefix + ".blk" + std::to_string(l);
            out.emplace_back(bp + ".ln1g", b.ln1g);
            out.emplace_back(bp + ".ln1b", b.ln1b);
            out.emplace_back(bp + ".wq", b.wq);
            out.emplace_back(bp + ".bq", b.bq);
            out.emplace_back(bp + ".wk", b.wk);
            out.emplace_back(bp + ".wv", b.wv);
            out.emplace_back(bp + ".bv", b.bv);
            out.emplace_back(bp + ".wo", b.wo);
            out.emplace_back(bp + ".bo", b.bo);
            out.emplace_back(bp + ".ln2g", b.ln2g);
            out.emplace_back(bp + ".ln2b", b.ln2b);
            out.emplace_back(bp + ".fw1", b.fw1);
            out.emplace_back(bp + ".fb1", b.fb1);
            out.emplace_back(bp + ".fw2", b.fw2);
            out.emplace_back(bp + ".fb2", b.fb2);
        }
        out.emplace_back(prefix + ".lnfg", lnfg);
        out.emplace_back(prefix + ".lnfb", lnfb);
        out.emplace_back(prefix + ".ow", ow);
        out.emplace_back(prefix + ".ob", ob);
    }

    void collect_buffers(const std::string& prefix, NamedBuffersT<S>& out) {
        out.emplace_back(prefix + ".bn1.rm", &bn1_mean);
        out.emplace_back(prefix + ".bn1.rv", &bn1_var);
        out.emplace_back(prefix + ".bn2.rm", &bn2_mean);
        out.emplace_back(prefix + ".bn2.rv", &bn2_var);
    }

    // train mode normalizes by the batch and folds the stats into the running
    // buffers; eval mode reads the buffers
    TensorT<S> norm(const TensorT<S>& h, const TensorT<S>& g, const TensorT<S>& b,
                    std::vector<S>& rm, std::vector<S>& rv, bool training) {
        if (!training) return batch_norm_eval(h, g, b, rm, rv, kBnEps);
        std::vector<S> mu, var;
        auto out = batch_norm_train(h, g, b, kBnEps, &mu, &var);
        int64_t rows = h.size() / static_cast<int64_t>(mu.size());
        S corr = rows > 1 ? static_cast<S>(rows) / static_cast<S>(rows - 1) : S(1);
        S a = static_cast<S>(kBnMomentum);
        for (size_t i = 0; i < mu.size(); ++i) {
            rm[i] = (S(1) - a) * rm[i] + a * mu[i];
            rv[i] = (S(1) - a) * rv[i] + a * var[i] * corr;
        }
        return out;
    }

    // x: (B*T', J, 2) part coordinates; prop: (J, J) propagation matrix
    TensorT<S> forward(const TensorT<S>& x, const TensorT<S>& prop, int B,
                       const EncoderDims& d, bool training) {
        check(x.rank() == 3 && x.dim(0) == B * d.t_prime && x.dim(2) == 2,
              "stream: input must be (B*T', J, 2), got " + shape_str(x.shape()));
        auto h = relu(norm(matmul(prop, matmul(x, gw1)), bn1g, bn1b,
                           bn1_mean, bn1_var, training));
        h = relu(norm(matmul(prop, matmul(h, gw2)), bn2g, bn2b,
                      bn2_mean, bn2_var, training));
        auto tok = mean_axis(h, 1);  // per-frame token
        auto z = add(reshape(tok, {B, d.t_prime, d.model_dim}), pos);
        int dh = d.model_dim / d.heads;
        double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (const Block& b : blocks) {
            auto a = layer_norm(z, b.ln1g, b.ln1b);
            auto q = add(matmul(a, b.wq), b.bq);
            auto k = matmul(a, b.wk);
            auto v = add(matmul(a, b.wv), b.bv);
            std::vector<TensorT<S>> heads;
            heads.reserve(static_cast<size_t>(d.heads));
            for (int hd = 0; hd < d.heads; ++hd) {
                auto qs = slice(q, 2, hd * dh, dh);
                auto ks = slice(k, 2, hd * dh, dh);
                auto vs = slice(v, 2, hd * dh, dh);
                auto att = softmax_t(scale(matmul(qs, ks, false, true), att_scale), 1.0);
                heads.push_back(matmul(att, vs));
            }
            auto o = add(matmul(concat(heads, 2), b.wo), b.bo);
            z = add(z, o);
            auto f = layer_norm(z, b.ln2g, b.ln2b);
            f = add(matmul(relu(add(matmul(f, b.fw1), b.fb1)), b.fw2), b.fb2);
            z = add(z, f);
        }
        z = layer_norm(z, lnfg, lnfb);
        return add(matmul(mean_axis(z, 1), ow), ob);  // (B, embed_dim)
    }
};

// packed coordinates of one modality for a batch, ready for the encoder
template <class S>
struct EncoderInputT {
    TensorT<S> right, left, trunk;  // (B*T', J, 2)
    int batch = 0;
};

template <class S>
EncoderInputT<S> pack_parts(const std::vector<const PartSet*>& sets, int t_prime) {
    check(!sets.empty(), "pack_parts: empty batch");
    int B = static_cast<int>(sets.size());
    Modality modality = sets[0]->right.modality;
    auto fill = [&](const PartClip PartSet::*member, Part part, int J) {
        std::vector<S> buf(static_cast<size_t>(B) * static_cast<size_t>(t_prime) *
                           static_cast<size_t>(J) * 2);
        for (int b = 0; b < B; ++b) {
            const PartClip& c = sets[static_cast<size_t>(b)]->*member;
            check(c.T == t_prime, "pack_parts: clip has T=" + std::to_string(c.T) +
                                      ", expected " + std::to_string(t_prime));
            check(c.J == J && c.part == part, "pack_parts: clip part mismatch");
            check(c.modality == modality, "pack_parts: mixed modalities in one batch");
            for (size_t i = 0; i < c.data.size(); ++i)
                buf[static_cast<size_t>(b) * c.data.size() + i] = static_cast<S>(c.data[i]);
        }
        return TensorT<S>::from({B * t_prime, J, 2}, std::move(buf), false);
    };
    EncoderInputT<S> in;
    in.batch = B;
    in.right = fill(&PartSet::right, Part::RightHand, kHandJoints);
    in.left = fill(&PartSet::left, Part::LeftHand, kHandJoints);
    in.trunk = fill(&PartSet::trunk, Part::Trunk, kTrunkJoints);
    return in;
}

// encoder outputs for one batch: part embeddings and unit projections
template <class S>
struct BranchesT {
    TensorT<S> f_hand, f_trunk;  // (B, embed_dim)
    TensorT<S> z_hand, z_trunk;  // (B, proj_dim), unit rows
};

template <class S>
struct EncoderT {
    EncoderDims dims;
    StreamT<S> hand_stream, trunk_stream;
    TensorT<S> pw1, pb1, pw2, pb2;  // projection MLP, shared by both parts
    TensorT<S> hand_prop, trunk_prop;

    void init(Rng& rng, const EncoderDims& d) {
        validate_dims(d);
        dims = d;
        hand_stream.init(rng, d);
        trunk_stream.init(rng, d);
        pw1 = detail::linear_init<S>(rng, d.embed_dim, d.embed_dim);
        pb1 = detail::bias_init<S>(rng, d.embed_dim, d.embed_dim);
        pw2 = detail::linear_init<S>(rng, d.embed_dim, d.proj_dim);
        pb2 = detail::bias_init<S>(rng, d.embed_dim, d.proj_dim);
        hand_prop = SkeletonGraph::hand().propagation<S>();
        trunk_prop = SkeletonGraph::trunk().propagation<S>();
    }

    NamedParamsT<S> named_params(const std::string& prefix) const {
        NamedParamsT<S> out;
        hand_stream.collect(prefix + "hand", out);
        trunk_stream.collect(prefix + "trunk", out);
        out.emplace_back(prefix + "proj.w1", pw1);
        out.emplace_back(prefix + "proj.b1", pb1);
        out.emplace_back(prefix + "proj.w2", pw2);
        out.emplace_back(prefix + "proj.b2", pb2);
        return out;
    }

    NamedBuffersT<S> named_buffers(const std::string& prefix) {
        NamedBuffersT<S> out;
        hand_stream.collect_buffers(prefix + "hand", out);
        trunk_stream.collect_buffers(prefix + "trunk", out);
        return out;
    }

    void set_trainable(bool trainable) {
        for (auto& [name, t] : named_params("")) t.set_requires_grad(trainable);
    }

    void copy_from(EncoderT& other) {
        auto dst = named_params("");
        auto src = other.named_params("");
        check(dst.size() == src.size(), "encoder copy: parameter count mismatch");
        for (size_t i = 0; i < dst.size(); ++i) {
            check(dst[i].second.shape() == src[i].second.shape(),
                  "encoder copy: shape mismatch at " + dst[i].first);
            dst[i].second.data() = src[i].second.data();
        }
        auto db = named_buffers("");
        auto sb = other.named_buffers("");
        for (size_t i = 0; i < db.size(); ++i) *db[i].second = *sb[i].second;
    }

    TensorT<S> project(const TensorT<S>& f) const {
        return l2_normalize(add(matmul(relu(add(matmul(f, pw1), pb1)), pw2), pb2));
    }

    BranchesT<S> forward(const EncoderInputT<S>& in, bool training) {
        BranchesT<S> out;
        auto f_right = hand_stream.forward(in.right, hand_prop, in.batch, dims, training);
        auto f_left = hand_stream.forward(in.left, hand_prop, in.batch, dims, training);
        out.f_hand = add(f_right, f_left);
        out.f_trunk = trunk_stream.forward(in.trunk, trunk_prop, in.batch, dims, training);
        out.z_hand = project(out.f_hand);
        out.z_trunk = project(out.f_trunk);
        return out;
    }
};

// running statistics ride along in checkpoints as plain tensors
template <class S>
void append_buffer_entries(NamedBuffersT<S> bufs, NamedParamsT<float>& out) {
    for (auto& [name, b] : bufs) {
        std::vector<float> v(b->size());
        for (size_t i = 0; i < b->size(); ++i) v[i] = static_cast<float>((*b)[i]);
        out.emplace_back(name, TensorT<float>::from({static_cast<int>(b->size())},
                                                    std::move(v), false));
    }
}

template <class S>
void load_buffer_entries(const std::map<std::string, CheckpointEntry>& ckpt,
                         NamedBuffersT<S> bufs, const std::string& path) {
    for (auto& [name, b] : bufs) {
        auto it = ckpt.find(name);
        check(it != ckpt.end(), path + ": missing buffer " + name);
        check(it->second.shape == Shape{static_cast<int>(b->size())},
              path + ": shape mismatch for " + name);
        b->assign(it->second.data.begin(), it->second.data.end());
    }
}

// key <- m * key + (1 - m) * query, elementwise over aligned parameters
template <class S>
void momentum_update(EncoderT<S>& key, const EncoderT<S>& query, double m) {
    check(m >= 0.0 && m <= 1.0, "momentum_update: m must lie in [0,1]");
    auto kp = key.named_params("");
    auto qp = query.named_params("");
    check(kp.size() == qp.size(), "momentum_update: parameter count mismatch");
    S ms = static_cast<S>(m);
    S one_minus = static_cast<S>(1.0 - m);
    for (size_t i = 0; i < kp.size(); ++i) {
        auto& kt = kp[i].second;
        auto& qt = qp[i].second;
        check(kt.shape() == qt.shape(),
              "momentum_update: shape mismatch at " + kp[i].first);
        auto& kd = kt.data();
        const auto& qd = qt.data();
        for (size_t j = 0; j < kd.size(); ++j) kd[j] = ms * kd[j] + one_minus * qd[j];
    }
}

// linear classification head over the summed part embeddings
template <class S>
struct HeadT {
    TensorT<S> w, b;

    void init(Rng& rng, int in_dim, int classes) {
        check(classes >= 2, "head: need at least 2 classes");
        w = detail::linear_init<S>(rng, in_dim, classes);
        b = detail::bias_init<S>(rng, in_dim, classes);
    }

    NamedParamsT<S> named_params(const std::string& prefix) const {
        return {{prefix + "w", w}, {prefix + "b", b}};
    }

    TensorT<S> logits(const BranchesT<S>& br) const {
        return add(matmul(add(br.f_hand, br.f_trunk), w), b);
    }
};

// sums logits over however many modality branches are active
template <class S>
TensorT<S> classify(
    const std::vector<std::pair<const BranchesT<S>*, const HeadT<S>*>>& branches) {
    check(!branches.empty(), "classify: no active branches");
    TensorT<S> total;
    for (auto& [br, head] : branches) {
        auto lg = head->logits(*br);
        total = total.defined() ? add(total, lg) : lg;
    }
    return total;
}

template <class S>
TensorT<S> cross_entropy(const TensorT<S>& logits, const std::vector<int>& labels) {
    check(logits.rank() == 2, "cross_entropy: logits must be (B, C)");
    return neg(mean_all(gather(log_softmax_t(logits, 1.0), labels)));
}

}  // namespace stc
