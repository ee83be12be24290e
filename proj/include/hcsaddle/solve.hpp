#pragma once

#include "hcsaddle/saddle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <chrono>
#include <random>

#include "json.hpp"

namespace hcsaddle {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Sparse SPD Cholesky (fill-reducing AMD ordering) behind a solve contract.
class SpdCholesky {
public:
    SpdCholesky() = default;

    explicit SpdCholesky(const SpMat& a) { factorize(a); }

    void factorize(const SpMat& a) {
        if (a.rows() != a.cols()) throw SolverError("cholesky: matrix not square");
        Eigen::SparseMatrix<double> ac = a;  // column-major copy for the solver
        llt_.compute(ac);
        if (llt_.info() != Eigen::Success)
            throw SolverError("cholesky: factorization failed, first non-positive pivot at index " +
                              std::to_string(find_bad_pivot(a)));
        dim_ = static_cast<int>(a.rows());
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        if (b.size() != dim_) throw SolverError("cholesky solve: dimension mismatch");
        return llt_.solve(b);
    }

    int dim() const { return dim_; }

private:
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
    int dim_ = 0;

    // Desk-scale diagnostic: locate the pivot that breaks positive
    // definiteness with a plain dense factorization.
    static int find_bad_pivot(const SpMat& a) {
        const int scan_cap = 2000;
        int d = static_cast<int>(std::min<Eigen::Index>(a.rows(), scan_cap));
        Eigen::MatrixXd m = Eigen::MatrixXd(a).topLeftCorner(d, d);
        for (int k = 0; k < d; ++k) {
            if (m(k, k) <= 0.0) return k;
            double piv = std::sqrt(m(k, k));
            m.col(k).tail(d - k) /= piv;
            for (int j = k + 1; j < d; ++j)
                m.col(j).tail(d - j).noalias() -= m(j, k) * m.col(k).tail(d - j);
        }
        return -1;
    }
};

// Action of B_D^dagger realized per block by one SPD factorization of
// B_i + (1/n_i) 1 1^T, which agrees with B_i on mean-zero vectors; input and
// output are projected onto the mean-zero complement of the kernel.
class BdPinv {
public:
    BdPinv() = default;

    explicit BdPinv(const FemBlocks& fb) : offsets_(fb.block_offset) {
        factors_.reserve(fb.m);
        for (int i = 0; i < fb.m; ++i) {
            int ni = fb.block_size(i);
            if (ni > 4000)
                throw SolverError("bd_pinv: inclusion block " + std::to_string(i) +
                                  " too large for the dense per-block factorization");
            Eigen::MatrixXd bhat = Eigen::MatrixXd(fb.B[i]);
            bhat.array() += 1.0 / ni;
            factors_.emplace_back(bhat);
            if (factors_.back().info() != Eigen::Success)
                throw SolverError("bd_pinv: factorization of block " + std::to_string(i) +
                                  " failed (disconnected inclusion submesh?)");
        }
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& r) const {
        Eigen::VectorXd y(r.size());
        for (std::size_t i = 0; i < factors_.size(); ++i) {
            int off = offsets_[i], ni = offsets_[i + 1] - offsets_[i];
            Eigen::VectorXd ri = r.segment(off, ni);
            ri.array() -= ri.mean();
            Eigen::VectorXd yi = factors_[i].solve(ri);
            yi.array() -= yi.mean();
            y.segment(off, ni) = yi;
        }
        return y;
    }

private:
    std::vector<int> offsets_;
    std::vector<Eigen::LLT<Eigen::MatrixXd>> factors_;
};

inline Eigen::VectorXd bd_pinv_apply(const FemBlocks& fb, const Eigen::VectorXd& r) {
    return BdPinv(fb).apply(r);
}

// H = P^dagger for the block-diagonal preconditioner P = diag(P_A, B_D);
// P_A = A by default, any SPD surrogate may be factored in instead.
struct PrecondAction {
    SpdCholesky pa_solve;
    BdPinv bd_pinv;

    PrecondAction() = default;
    explicit PrecondAction(const FemBlocks& fb) : pa_solve(fb.stiff.A), bd_pinv(fb) {}
    PrecondAction(const SpMat& pa, const FemBlocks& fb) : pa_solve(pa), bd_pinv(fb) {}

    StackedVector apply(const StackedVector& r) const {
        return {pa_solve.solve(r.u), bd_pinv.apply(r.lambda)};
    }
};

struct SolveReport {
    std::string method;            // "PL" | "PCG" | "direct"
    int iterations = 0;
    std::vector<double> residual_history;  // length iterations + 1
    bool converged = false;
    double tol = 0.0;
    double wall_ms = 0.0;
    std::uint64_t seed = 0;
    int N = 0, n = 0;
    std::vector<double> eps;
    std::vector<double> beta_history;   // PL update coefficients
    std::vector<double> gamma_history;  // PL three-term coefficients
};

inline nlohmann::json to_json(const SolveReport& r) {
    return nlohmann::json{{"method", r.method},
                          {"eps", r.eps},
                          {"N", r.N},
                          {"n", r.n},
                          {"iterations", r.iterations},
                          {"converged", r.converged},
                          {"tol", r.tol},
                          {"seed", r.seed},
                          {"residual_history", r.residual_history},
                          {"wall_ms", r.wall_ms}};
}

// Portable uniform draw in [-1, 1]: mt19937_64 is bit-specified by the
// standard, the mapping avoids the unspecified std distributions.
inline double uniform_pm1(std::mt19937_64& rng) {
    return 2.0 * ((rng() >> 11) * 0x1.0p-53) - 1.0;
}

inline StackedVector make_z0(const FemBlocks& fb, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    StackedVector z;
    z.u.resize(fb.N);
    for (int i = 0; i < fb.N; ++i) z.u[i] = uniform_pm1(rng);
    z.lambda.resize(fb.n);
    for (int i = 0; i < fb.n; ++i) z.lambda[i] = uniform_pm1(rng);
    project_to_im_bd(fb, z.lambda);
    return z;
}

enum class GammaForm { Standard, Paper };

struct LanczosOptions {
    double tol = 1e-6;
    int maxit = 2000;
    GammaForm gamma_form = GammaForm::Standard;
    double breakdown_eps = 1e-28;  // relative to the first denominator
    std::uint64_t seed = 0;        // recorded in the report only
};

// Preconditioned Lanczos method of minimized iterations on the saddle system.
// Three-term recurrence in the H scalar product (x,y)_H = (Hx, y):
//   y_1 = H r_0,   y_{k+1} = H A y_k - alpha_{k+1} y_k - gamma_{k+1} y_{k-1},
//   z_k = z_{k-1} - beta_k y_k.
// One operator apply and one H apply per iteration; A y_{k+1} follows from
// linearity of the recurrence. The multiplier iterate is re-projected onto
// Im B_D every step.
//
// gamma_form selects the denominator pairing of the three-term coefficient.
// Standard is the Lanczos-consistent reading gamma_{k+1} = d_k / d_{k-1} with
// d_k = (A y_k, A y_k)_H; Paper keeps the literal published numerator
// (A H A y_k, A y_k)_H over d_{k-1}, which is not self-adjoint-consistent and
// stalls in practice. Both are kept for comparison.
inline std::pair<StackedVector, SolveReport> lanczos_solve(const SaddleOperator& op,
                                                           const StackedVector& rhs,
                                                           const PrecondAction& H, StackedVector z0,
                                                           const LanczosOptions& opts = {}) {
    auto t_start = std::chrono::steady_clock::now();
    const FemBlocks& fb = op.blocks();
    SolveReport rep;
    rep.method = "PL";
    rep.tol = opts.tol;
    rep.seed = opts.seed;
    rep.N = fb.N;
    rep.n = fb.n;
    rep.eps = op.eps();

    double norm_rhs = rhs.norm();
    if (norm_rhs == 0.0) throw SolverError("lanczos_solve: zero right-hand side");

    StackedVector z = std::move(z0);
    project_to_im_bd(fb, z.lambda);
    StackedVector r = op.apply(z);
    r -= rhs;
    rep.residual_history.push_back(r.norm() / norm_rhs);
    if (rep.residual_history.back() <= opts.tol) {
        rep.converged = true;
        rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                t_start)
                          .count();
        return {std::move(z), std::move(rep)};
    }

    StackedVector y = H.apply(r);
    StackedVector Ay = op.apply(y);
    StackedVector HAy = H.apply(Ay);
    double d = Ay.dot(HAy);
    const double d0 = d;
    StackedVector y_prev = StackedVector::zero(fb.N, fb.n);
    StackedVector Ay_prev = StackedVector::zero(fb.N, fb.n);
    double d_prev = 1.0;

    for (int k = 1; k <= opts.maxit; ++k) {
        if (!(d > opts.breakdown_eps * d0))
            throw SolverError("lanczos_solve: breakdown at iteration " + std::to_string(k) +
                              " (denominator " + std::to_string(d) + ", last beta " +
                              (rep.beta_history.empty() ? std::string("n/a")
                                                        : std::to_string(rep.beta_history.back())) +
                              ", last gamma " +
                              (rep.gamma_history.empty() ? std::string("n/a")
                                                         : std::to_string(rep.gamma_history.back())) +
                              ")");
        double beta = r.dot(HAy) / d;
        rep.beta_history.push_back(beta);
        z.axpy(-beta, y);
        project_to_im_bd(fb, z.lambda);
        r.axpy(-beta, Ay);
        rep.iterations = k;
        rep.residual_history.push_back(r.norm() / norm_rhs);
        if (rep.residual_history.back() <= opts.tol) {
            rep.converged = true;
            break;
        }
        if (k == opts.maxit) break;

        StackedVector w = HAy;  // H A y_k
        StackedVector Aw = op.apply(w);
        double num = Aw.dot(w);  // (A H A y_k, A y_k)_H
        double alpha = num / d;
        double gamma = 0.0;
        if (k > 1) gamma = (opts.gamma_form == GammaForm::Standard) ? d / d_prev : num / d_prev;
        rep.gamma_history.push_back(gamma);

        StackedVector y_next = std::move(w);
        y_next.axpy(-alpha, y);
        y_next.axpy(-gamma, y_prev);
        StackedVector Ay_next = std::move(Aw);
        Ay_next.axpy(-alpha, Ay);
        Ay_next.axpy(-gamma, Ay_prev);

        y_prev = std::move(y);
        Ay_prev = std::move(Ay);
        d_prev = d;
        y = std::move(y_next);
        Ay = std::move(Ay_next);
        HAy = H.apply(Ay);
        d = Ay.dot(HAy);
    }
    rep.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(z), std::move(rep)};
}

// Preconditioned conjugate gradients on the SPD primal system, with the
// explicit-residual safeguard: when the recursive residual passes the
// tolerance the true residual is recomputed, and iteration continues from it
// if the recursion had drifted (matters at extreme contrast, where the
// attainable accuracy u*cond(K) approaches the tolerance).
inline std::pair<Eigen::VectorXd, SolveReport> pcg_solve(const SpMat& K, const Eigen::VectorXd& F,
                                                         const SpdCholesky& precond, double tol,
                                                         int maxit) {
    auto t_start = std::chrono::steady_clock::now();
    SolveReport rep;
    rep.method = "PCG";
    rep.tol = tol;
    rep.N = static_cast<int>(K.rows());

    double norm_f = F.norm();
    if (norm_f == 0.0) throw SolverError("pcg_solve: zero right-hand side");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(K.rows());
    Eigen::VectorXd r = F;
    rep.residual_history.push_back(1.0);
    Eigen::VectorXd z = precond.solve(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    for (int k = 1; k <= maxit; ++k) {
        Eigen::VectorXd q = K * p;
        double pq = p.dot(q);
        if (!(pq > 0.0))
            throw SolverError("pcg_solve: non-positive curvature, matrix is not SPD");
        double alpha = rz / pq;
        x += alpha * p;
        r -= alpha * q;
        double rel = r.norm() / norm_f;
        rep.iterations = k;
        if (rel <= tol) {
            Eigen::VectorXd r_true = F - K * x;
            double rel_true = r_true.norm() / norm_f;
            rep.residual_history.push_back(rel_true);
            if (rel_true <= tol) {
                rep.converged = true;
                break;
            }
            r = std::move(r_true);  // restart from the honest residual
            z = precond.solve(r);
            p = z;
            rz = r.dot(z);
            continue;
        }
        rep.residual_history.push_back(rel);
        z = precond.solve(r);
        double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    rep.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(x), std::move(rep)};
}

// Dense direct solve through a symmetric eigendecomposition pseudo-inverse:
// exact for SPD systems and for singular-but-consistent saddle systems, where
// it selects the Im B_D representative of the multiplier.
inline Eigen::VectorXd direct_solve_dense(const Eigen::MatrixXd& M, const Eigen::VectorXd& b,
                                          int cap = 3000) {
    if (M.rows() > cap)
        throw SolverError("direct_solve_dense capped at dimension " + std::to_string(cap));
    if (M.rows() != M.cols() || M.rows() != b.size())
        throw SolverError("direct_solve_dense: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success) throw SolverError("direct_solve_dense: eigensolver failed");
    const auto& w = es.eigenvalues();
    double wmax = w.cwiseAbs().maxCoeff();
    Eigen::VectorXd c = es.eigenvectors().transpose() * b;
    for (Eigen::Index i = 0; i < w.size(); ++i)
        c[i] = (std::abs(w[i]) > 1e-12 * wmax) ? c[i] / w[i] : 0.0;
    return es.eigenvectors() * c;
}

inline std::pair<StackedVector, SolveReport> direct_solve_dense(const SaddleOperator& op,
                                                                const StackedVector& rhs,
                                                                int cap = 3000) {
    auto t_start = std::chrono::steady_clock::now();
    Eigen::VectorXd b(op.dim());
    b << rhs.u, rhs.lambda;
    Eigen::VectorXd x = direct_solve_dense(op.dense(cap), b, cap);
    StackedVector out{x.head(op.dim_u()), x.tail(op.dim_lambda())};
    project_to_im_bd(op.blocks(), out.lambda);
    SolveReport rep;
    rep.method = "direct";
    rep.N = op.dim_u();
    rep.n = op.dim_lambda();
    rep.eps = op.eps();
    rep.converged = true;
    rep.iterations = 0;
    rep.residual_history.push_back(op.relative_residual(out, rhs));
    rep.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(out), std::move(rep)};
}

}  // namespace hcsaddle
