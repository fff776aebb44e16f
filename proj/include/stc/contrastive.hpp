#pragma once

// Instance-discrimination machinery: FIFO memory banks of unit key
// embeddings, the InfoNCE loss against bank negatives, and the cross-part
// consistency loss that distills hand and trunk distributions into each
// other. Key-side inputs are always treated as constants; gradients flow
// through the query side only.

#include "stc/encoder.hpp"
#include "stc/tensor.hpp"

namespace stc {

namespace detail {

// stable row-wise softmax(x / tau) on plain storage, for teacher sides
template <class S>
std::vector<S> plain_softmax(const S* x, int64_t rows, int64_t dim, double tau) {
    check(tau > 0.0, "softmax: temperature must be positive");
    std::vector<S> out(static_cast<size_t>(rows * dim));
    for (int64_t r = 0; r < rows; ++r) {
        const S* xr = x + r * dim;
        S* yr = out.data() + r * dim;
        S mx = xr[0];
        for (int64_t i = 1; i < dim; ++i) mx = std::max(mx, xr[i]);
        S sum = 0;
        for (int64_t i = 0; i < dim; ++i) {
            yr[i] = std::exp(static_cast<S>((xr[i] - mx) / static_cast<S>(tau)));
            sum += yr[i];
        }
        for (int64_t i = 0; i < dim; ++i) yr[i] /= sum;
    }
    return out;
}

}  // namespace detail

// Fixed-capacity FIFO over unit embeddings. Once full, each push overwrites
// the oldest rows; snapshots list rows oldest to newest.
template <class S>
class MemoryBankT {
public:
    MemoryBankT(int capacity, int dim) : capacity_(capacity), dim_(dim) {
        check(capacity > 0, "memory bank: capacity must be positive");
        check(dim > 0, "memory bank: dimension must be positive");
        buf_.resize(static_cast<size_t>(capacity) * static_cast<size_t>(dim));
    }

    int capacity() const { return capacity_; }
    int dim() const { return dim_; }
    int size() const { return size_; }
    bool empty() const { return size_ == 0; }

    // batch (B, dim) of unit rows, B <= capacity; rows enter in batch order
    void push(const TensorT<S>& batch) {
        check(batch.rank() == 2 && batch.dim(1) == dim_,
              "bank push: expected (B," + std::to_string(dim_) + "), got " +
                  shape_str(batch.shape()));
        int B = batch.dim(0);
        check(B >= 1 && B <= capacity_,
              "bank push: batch of " + std::to_string(B) +
                  " exceeds capacity " + std::to_string(capacity_));
        const S* d = batch.data().data();
        for (int b = 0; b < B; ++b) {
            double n = 0;
            for (int i = 0; i < dim_; ++i) {
                double v = static_cast<double>(d[static_cast<size_t>(b) * dim_ + static_cast<size_t>(i)]);
                check(std::isfinite(v), "bank push: non-finite embedding");
                n += v * v;
            }
            check(std::abs(std::sqrt(n) - 1.0) <= 1e-5,
                  "bank push: row " + std::to_string(b) + " is not unit length");
        }
        for (int b = 0; b < B; ++b) {
            std::copy(d + static_cast<size_t>(b) * dim_, d + static_cast<size_t>(b + 1) * dim_,
                      buf_.begin() + static_cast<size_t>(cursor_) * dim_);
            cursor_ = (cursor_ + 1) % capacity_;
            size_ = std::min(size_ + 1, capacity_);
        }
    }

    // rows oldest to newest, as plain storage
    std::vector<S> ordered() const {
        std::vector<S> out;
        out.reserve(static_cast<size_t>(size_) * static_cast<size_t>(dim_));
        int start = size_ == capacity_ ? cursor_ : 0;
        for (int i = 0; i < size_; ++i) {
            int row = (start + i) % capacity_;
            out.insert(out.end(), buf_.begin() + static_cast<size_t>(row) * dim_,
                       buf_.begin() + static_cast<size_t>(row + 1) * dim_);
        }
        return out;
    }

    TensorT<S> snapshot() const {
        check(size_ > 0, "memory bank: snapshot of an empty bank");
        return TensorT<S>::from({size_, dim_}, ordered(), false);
    }

private:
    int capacity_, dim_;
    std::vector<S> buf_;
    int size_ = 0, cursor_ = 0;
};

// InfoNCE with one positive and bank negatives:
//   -log exp(z.zk/tau) / (exp(z.zk/tau) + sum_i exp(z.n_i/tau)),
// averaged over the batch. z_key enters detached.
template <class S>
TensorT<S> info_nce(const TensorT<S>& z, const TensorT<S>& z_key,
                    const TensorT<S>& negatives, double tau) {
    check(tau > 0.0, "info_nce: temperature must be positive");
    check(z.rank() == 2, "info_nce: query must be (B, D)");
    check(z_key.rank() == 2 && z_key.shape() == z.shape(),
          "info_nce: key shape " + shape_str(z_key.shape()) +
              " does not match query " + shape_str(z.shape()));
    check(negatives.defined() && negatives.rank() == 2 && negatives.dim(0) >= 1,
          "info_nce: need at least one negative");
    check(negatives.dim(1) == z.dim(1),
          "info_nce: negative dim " + std::to_string(negatives.dim(1)) +
              " does not match embedding dim " + std::to_string(z.dim(1)));
    int B = z.dim(0);
    auto zk = z_key.detach();
    auto l_pos = reshape(sum_axis(mul(z, zk), 1), {B, 1});
    auto l_neg = matmul(z, negatives.detach(), false, true);
    auto lp = log_softmax_t(concat<S>({l_pos, l_neg}, 1), tau);
    return neg(mean_all(gather(lp, std::vector<int>(static_cast<size_t>(B), 0))));
}

// the contrastive term of one modality: InfoNCE on the hand and trunk
// projections, each against its own bank, summed
template <class S>
TensorT<S> branch_contrastive_loss(const BranchesT<S>& query,
                                   const BranchesT<S>& key,
                                   const MemoryBankT<S>& bank_hand,
                                   const MemoryBankT<S>& bank_trunk, double tau) {
    return add(info_nce(query.z_hand, key.z_hand, bank_hand.snapshot(), tau),
               info_nce(query.z_trunk, key.z_trunk, bank_trunk.snapshot(), tau));
}

// mean over rows of KL(p || softmax(logits/tau)) with a constant teacher p;
// only the student cross-entropy term carries gradient
template <class S>
TensorT<S> kl_from_teacher(const std::vector<S>& teacher_probs, int rows, int dim,
                           const TensorT<S>& student_logits, double tau_s) {
    check(rows > 0 && dim > 0, "kl: empty distribution");
    check(static_cast<int64_t>(teacher_probs.size()) ==
              static_cast<int64_t>(rows) * dim,
          "kl: teacher size does not match rows x dim");
    check(student_logits.rank() == 2 && student_logits.dim(0) == rows &&
              student_logits.dim(1) == dim,
          "kl: student logits must be (" + std::to_string(rows) + "," +
              std::to_string(dim) + "), got " + shape_str(student_logits.shape()));
    double entropy = 0.0;  // sum p log p, with 0 log 0 = 0
    for (S p : teacher_probs) {
        check(std::isfinite(static_cast<double>(p)) && p >= S(0),
              "kl: teacher probabilities must be finite and non-negative");
        if (p > S(0)) entropy += static_cast<double>(p) * std::log(static_cast<double>(p));
    }
    auto p_const = TensorT<S>::from({rows, dim}, std::vector<S>(teacher_probs), false);
    auto ce = neg(scale(sum_all(mul(p_const, log_softmax_t(student_logits, tau_s))),
                        1.0 / rows));
    return add(ce, TensorT<S>::scalar(static_cast<S>(entropy / rows)));
}

// cross-part consistency: the key hand distribution teaches the query trunk
// and the key trunk distribution teaches the query hand
template <class S>
TensorT<S> consistency_loss(const BranchesT<S>& query, const BranchesT<S>& key,
                            double tau1) {
    check(tau1 > 0.0, "consistency: temperature must be positive");
    check(query.z_hand.shape() == key.z_hand.shape() &&
              query.z_trunk.shape() == key.z_trunk.shape(),
          "consistency: query/key shape mismatch");
    int rows = query.z_hand.dim(0);
    int dim = query.z_hand.dim(1);
    auto p_hand = detail::plain_softmax(key.z_hand.data().data(), rows, dim, tau1);
    auto p_trunk = detail::plain_softmax(key.z_trunk.data().data(), rows, dim, tau1);
    return add(kl_from_teacher(p_hand, rows, dim, query.z_trunk, tau1),
               kl_from_teacher(p_trunk, rows, dim, query.z_hand, tau1));
}

}  // namespace stc
