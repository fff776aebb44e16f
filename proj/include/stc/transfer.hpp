#pragma once

// Bidirectional knowledge transfer between the joint and motion embedding
// spaces: anchors built by summing lockstep bank entries, top-K tempered
// neighbour distributions, and the two directional KL terms. The teacher
// (key) side never carries gradient; anchors are plain detached storage.

#include <algorithm>
#include <numeric>

#include "stc/contrastive.hpp"

namespace stc {

// detached anchor vectors, one per aligned bank index
template <class S>
struct AnchorSetT {
    std::vector<S> vecs;  // count x dim, row major
    int count = 0;
    int dim = 0;

    const S* row(int i) const { return vecs.data() + static_cast<size_t>(i) * dim; }
};

// s_i = x_i + y_i over aligned hand/trunk bank rows, oldest to newest
template <class S>
AnchorSetT<S> build_anchors(const MemoryBankT<S>& bank_hand,
                            const MemoryBankT<S>& bank_trunk) {
    check(bank_hand.size() > 0 && bank_trunk.size() > 0,
          "anchors: banks must be non-empty");
    check(bank_hand.size() == bank_trunk.size(),
          "anchors: bank sizes differ (" + std::to_string(bank_hand.size()) + " vs " +
              std::to_string(bank_trunk.size()) + ")");
    check(bank_hand.dim() == bank_trunk.dim(),
          "anchors: bank dims differ");
    AnchorSetT<S> out;
    out.count = bank_hand.size();
    out.dim = bank_hand.dim();
    out.vecs = bank_hand.ordered();
    auto trunk = bank_trunk.ordered();
    for (size_t i = 0; i < out.vecs.size(); ++i) out.vecs[i] += trunk[i];
    return out;
}

// indices of the K largest z . s_i, ties broken toward the lower index;
// returned in descending-similarity order
template <class S>
std::vector<int> topk_neighbors(const AnchorSetT<S>& anchors, const S* z, int K) {
    check(anchors.count > 0, "topk: empty anchor set");
    check(K >= 1 && K <= anchors.count,
          "topk: K = " + std::to_string(K) + " outside [1, " +
              std::to_string(anchors.count) + "]");
    std::vector<S> sims(static_cast<size_t>(anchors.count));
    for (int i = 0; i < anchors.count; ++i) {
        const S* s = anchors.row(i);
        double dot = 0;
        for (int d = 0; d < anchors.dim; ++d) dot += static_cast<double>(z[d]) * s[d];
        check(std::isfinite(dot), "topk: non-finite similarity");
        sims[static_cast<size_t>(i)] = static_cast<S>(dot);
    }
    std::vector<int> idx(static_cast<size_t>(anchors.count));
    std::iota(idx.begin(), idx.end(), 0);
    auto better = [&](int a, int b) {
        if (sims[static_cast<size_t>(a)] != sims[static_cast<size_t>(b)])
            return sims[static_cast<size_t>(a)] > sims[static_cast<size_t>(b)];
        return a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + K, idx.end(), better);
    idx.resize(static_cast<size_t>(K));
    return idx;
}

// p_i = exp(z . s_i / tau) / sum over the index set, stable under shift
template <class S>
std::vector<S> anchor_distribution(const S* z, double tau, const AnchorSetT<S>& anchors,
                                   const std::vector<int>& idx) {
    check(tau > 0.0, "anchor distribution: temperature must be positive");
    check(!idx.empty(), "anchor distribution: empty index set");
    std::vector<double> logits(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
        check(idx[i] >= 0 && idx[i] < anchors.count,
              "anchor distribution: index out of range");
        const S* s = anchors.row(idx[i]);
        double dot = 0;
        for (int d = 0; d < anchors.dim; ++d) dot += static_cast<double>(z[d]) * s[d];
        logits[i] = dot / tau;
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0;
    std::vector<S> p(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) {
        double e = std::exp(logits[i] - mx);
        p[i] = static_cast<S>(e);
        sum += e;
    }
    for (auto& v : p) v = static_cast<S>(static_cast<double>(v) / sum);
    return p;
}

// whole-sequence summary of one modality/side: hand plus trunk projection
template <class S>
TensorT<S> modal_summary(const BranchesT<S>& br) {
    return add(br.z_hand, br.z_trunk);
}

// KL from the teacher's top-K distribution in its own space to the student's
// distribution over the SAME indices in the other space, batch mean. The
// teacher key is read as plain data, so no gradient reaches it.
template <class S>
TensorT<S> kt_loss_one_way(const TensorT<S>& teacher_key, const TensorT<S>& student_query,
                           const AnchorSetT<S>& anchors_teacher,
                           const AnchorSetT<S>& anchors_student, int K, double tau_t,
                           double tau_s) {
    check(teacher_key.rank() == 2 && student_query.rank() == 2 &&
              teacher_key.shape() == student_query.shape(),
          "kt: teacher/student must share shape (B, D)");
    check(anchors_teacher.count == anchors_student.count,
          "kt: anchor sets must be aligned, got " +
              std::to_string(anchors_teacher.count) + " vs " +
              std::to_string(anchors_student.count));
    check(anchors_teacher.dim == teacher_key.dim(1) &&
              anchors_student.dim == student_query.dim(1),
          "kt: anchor dim does not match embedding dim");
    check(tau_t > 0.0 && tau_s > 0.0, "kt: temperatures must be positive");
    int B = teacher_key.dim(0);
    int D = teacher_key.dim(1);
    const S* tk = teacher_key.data().data();
    TensorT<S> total = TensorT<S>::scalar(S(0));
    for (int b = 0; b < B; ++b) {
        auto idx = topk_neighbors(anchors_teacher, tk + static_cast<size_t>(b) * D, K);
        auto p = anchor_distribution(tk + static_cast<size_t>(b) * D, tau_t,
                                     anchors_teacher, idx);
        std::vector<S> sel(idx.size() * static_cast<size_t>(D));
        for (size_t i = 0; i < idx.size(); ++i)
            std::copy(anchors_student.row(idx[i]), anchors_student.row(idx[i]) + D,
                      sel.begin() + i * static_cast<size_t>(D));
        auto sel_t = TensorT<S>::from({K, D}, std::move(sel), false);
        auto logits = matmul(slice(student_query, 0, b, 1), sel_t, false, true);
        total = add(total, kl_from_teacher(p, 1, K, logits, tau_s));
    }
    return scale(total, 1.0 / B);
}

// bidirectional transfer: key joint teaches query motion and key motion
// teaches query joint; K is clamped to the anchor count while banks warm up
template <class S>
TensorT<S> kt_loss(const TensorT<S>& query_joint, const TensorT<S>& key_joint,
                   const TensorT<S>& query_motion, const TensorT<S>& key_motion,
                   const AnchorSetT<S>& anchors_joint, const AnchorSetT<S>& anchors_motion,
                   int K, double tau_t, double tau_s) {
    check(K >= 1, "kt: K must be positive");
    check(anchors_joint.count == anchors_motion.count,
          "kt: joint/motion anchor counts differ");
    int k_eff = std::min(K, anchors_joint.count);
    return add(kt_loss_one_way(key_joint, query_motion, anchors_joint, anchors_motion,
                               k_eff, tau_t, tau_s),
               kt_loss_one_way(key_motion, query_joint, anchors_motion, anchors_joint,
                               k_eff, tau_t, tau_s));
}

}  // namespace stc
