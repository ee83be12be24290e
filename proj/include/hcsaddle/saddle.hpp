#pragma once

#include "hcsaddle/assembly.hpp"

#include <Eigen/Dense>

namespace hcsaddle {

class SaddleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Stacked unknown (u, lambda); lambda is meant to live in Im B_D
// (mean zero on each inclusion block).
struct StackedVector {
    Eigen::VectorXd u;
    Eigen::VectorXd lambda;

    double dot(const StackedVector& o) const { return u.dot(o.u) + lambda.dot(o.lambda); }
    double norm() const { return std::sqrt(dot(*this)); }
    StackedVector& operator-=(const StackedVector& o) {
        u -= o.u;
        lambda -= o.lambda;
        return *this;
    }
    StackedVector& axpy(double a, const StackedVector& x) {
        u += a * x.u;
        lambda += a * x.lambda;
        return *this;
    }
    static StackedVector zero(int N, int n) {
        return {Eigen::VectorXd::Zero(N), Eigen::VectorXd::Zero(n)};
    }
};

// Removes the per-inclusion mean from a multiplier vector, i.e. projects onto
// Im B_D along the kernel of per-inclusion constants.
inline void project_to_im_bd(const FemBlocks& fb, Eigen::VectorXd& lambda) {
    for (int i = 0; i < fb.m; ++i) {
        auto seg = lambda.segment(fb.block_offset[i], fb.block_size(i));
        seg.array() -= seg.mean();
    }
}

// Matrix-free action of the saddle operator
//   [ A    B^T       ] [u]
//   [ B   -Sigma_eps ] [lambda]
// over assembled blocks. eps all zero gives the limit operator.
class SaddleOperator {
public:
    SaddleOperator(const FemBlocks& blocks, std::vector<double> eps)
        : blocks_(&blocks), eps_(std::move(eps)) {
        if (static_cast<int>(eps_.size()) != blocks_->m)
            throw SaddleError("eps list length != number of inclusions");
        for (double e : eps_)
            if (e < 0.0) throw SaddleError("negative eps");
    }

    const FemBlocks& blocks() const { return *blocks_; }
    const std::vector<double>& eps() const { return eps_; }
    int dim_u() const { return blocks_->N; }
    int dim_lambda() const { return blocks_->n; }
    int dim() const { return blocks_->N + blocks_->n; }
    bool is_limit() const {
        for (double e : eps_)
            if (e != 0.0) return false;
        return true;
    }

    // y_u = A u + B^T lambda ; y_lambda = B u - Sigma_eps lambda.
    // B^T lambda hits only the first n entries of y_u, and the lambda row is
    // one SpMV per block: B_i (u_i - eps_i lambda_i).
    StackedVector apply(const StackedVector& x) const {
        const FemBlocks& fb = *blocks_;
        if (x.u.size() != fb.N || x.lambda.size() != fb.n)
            throw SaddleError("apply: dimension mismatch");
        StackedVector y;
        y.u = fb.stiff.A * x.u;
        y.lambda.resize(fb.n);
        for (int i = 0; i < fb.m; ++i) {
            int off = fb.block_offset[i], ni = fb.block_size(i);
            y.u.segment(off, ni) += fb.B[i] * x.lambda.segment(off, ni);
            y.lambda.segment(off, ni) =
                fb.B[i] * (x.u.segment(off, ni) - eps_[i] * x.lambda.segment(off, ni));
        }
        return y;
    }

    // F = (F_load, 0)
    StackedVector rhs() const {
        return {blocks_->F, Eigen::VectorXd::Zero(blocks_->n)};
    }

    double relative_residual(const StackedVector& x, const StackedVector& f) const {
        double nf = f.norm();
        if (nf == 0.0) throw SaddleError("relative residual undefined for zero right-hand side");
        StackedVector r = apply(x);
        r -= f;
        return r.norm() / nf;
    }

    // Dense materialization for the verification oracles.
    Eigen::MatrixXd dense(int cap = 3000) const {
        const FemBlocks& fb = *blocks_;
        int d = dim();
        if (d > cap)
            throw SaddleError("dense materialization capped at dimension " + std::to_string(cap) +
                              ", got " + std::to_string(d));
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
        M.topLeftCorner(fb.N, fb.N) = fb.stiff.A;
        for (int i = 0; i < fb.m; ++i) {
            int off = fb.block_offset[i], ni = fb.block_size(i);
            Eigen::MatrixXd Bi = fb.B[i];
            M.block(off, fb.N + off, ni, ni) = Bi;
            M.block(fb.N + off, off, ni, ni) = Bi;
            M.block(fb.N + off, fb.N + off, ni, ni) = -eps_[i] * Bi;
        }
        return M;
    }

private:
    const FemBlocks* blocks_;
    std::vector<double> eps_;
};

inline SaddleOperator build_saddle(const FemBlocks& blocks, std::vector<double> eps) {
    return SaddleOperator(blocks, std::move(eps));
}

inline SaddleOperator build_saddle_limit(const FemBlocks& blocks) {
    return SaddleOperator(blocks, std::vector<double>(blocks.m, 0.0));
}

}  // namespace hcsaddle
