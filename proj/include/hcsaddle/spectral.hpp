#pragma once

#include "hcsaddle/solve.hpp"

#include <iostream>

namespace hcsaddle {

class SpectralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace spectral {

inline constexpr int kDenseCap = 3000;

inline void require_desk(int dim, const char* who) {
    if (dim > kDenseCap)
        throw SpectralError(std::string(who) + ": dense verification capped at dimension " +
                            std::to_string(kDenseCap) + ", got " + std::to_string(dim));
}

// Orthonormal basis of the per-inclusion mean-zero subspace Im B_D, block
// diagonal: column j of a block of size k is the Helmert vector
// (1,...,1,-j,0,...)/sqrt(j(j+1)).
inline Eigen::MatrixXd im_bd_basis(const FemBlocks& fb) {
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(fb.n, fb.n - fb.m);
    int col = 0;
    for (int i = 0; i < fb.m; ++i) {
        int off = fb.block_offset[i], ni = fb.block_size(i);
        for (int j = 1; j < ni; ++j) {
            double s = 1.0 / std::sqrt(static_cast<double>(j) * (j + 1));
            for (int r = 0; r < j; ++r) Q(off + r, col) = s;
            Q(off + j, col) = -j * s;
            ++col;
        }
    }
    return Q;
}

inline Eigen::MatrixXd dense_bd(const FemBlocks& fb) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(fb.n, fb.n);
    for (int i = 0; i < fb.m; ++i)
        B.block(fb.block_offset[i], fb.block_offset[i], fb.block_size(i), fb.block_size(i)) =
            Eigen::MatrixXd(fb.B[i]);
    return B;
}

// L = B A^-1 B^T = B_D (A^-1)_DD B_D, computed by dense solves against A.
inline Eigen::MatrixXd dense_bainvbt(const FemBlocks& fb) {
    require_desk(fb.N, "dense_bainvbt");
    Eigen::MatrixXd A = Eigen::MatrixXd(fb.stiff.A);
    Eigen::MatrixXd Bt = Eigen::MatrixXd::Zero(fb.N, fb.n);
    Bt.topRows(fb.n) = dense_bd(fb);
    Eigen::MatrixXd X = Eigen::LLT<Eigen::MatrixXd>(A).solve(Bt);
    return Bt.transpose() * X;
}

}  // namespace spectral

// Schur complement of the exterior block: S00 = A_DD - A_D0 A_00^-1 A_0D.
inline Eigen::MatrixXd schur_S00(const FemBlocks& fb) {
    spectral::require_desk(fb.n0, "schur_S00");
    Eigen::MatrixXd A00 = Eigen::MatrixXd(fb.stiff.A_00);
    Eigen::MatrixXd A0D = Eigen::MatrixXd(fb.stiff.A_0D);
    Eigen::MatrixXd ADD = Eigen::MatrixXd(fb.stiff.A_DD);
    if (fb.n0 == 0) return ADD;
    Eigen::MatrixXd X = Eigen::LLT<Eigen::MatrixXd>(A00).solve(A0D);
    return ADD - Eigen::MatrixXd(fb.stiff.A_D0) * X;
}

// Relative Frobenius discrepancy of B A^-1 B^T = B_D S00^-1 B_D, both sides
// computed independently.
inline double verify_lemma1(const FemBlocks& fb) {
    Eigen::MatrixXd lhs = spectral::dense_bainvbt(fb);
    Eigen::MatrixXd Bd = spectral::dense_bd(fb);
    Eigen::MatrixXd rhs = Bd * Eigen::LLT<Eigen::MatrixXd>(schur_S00(fb)).solve(Bd);
    return (lhs - rhs).norm() / lhs.norm();
}

struct MuSpectrum {
    double mu_min = 0.0;
    double mu_max = 0.0;
    Eigen::VectorXd values;   // ascending, the n - m nonzero eigenvalues
    Eigen::MatrixXd vectors;  // psi eigenvectors, columns, in R^n (Im B_D)
};

enum class MuRoute {
    BAinvBt,   // B A^-1 B^T psi = mu B_D psi  (restricted to Im B_D)
    Schur,     // B_D u = mu S00 u             (restricted to Im S00^-1 B_D)
    SqrtBd     // B^1/2 S00^-1 B^1/2 phi = mu phi (restricted to Im B_D)
};

// Nonzero spectrum of the inclusion-to-Schur pencil; the three routes agree
// on eigenvalues and differ only in the subspace parametrization.
inline MuSpectrum mu_spectrum(const FemBlocks& fb, MuRoute route = MuRoute::BAinvBt) {
    spectral::require_desk(fb.N, "mu_spectrum");
    Eigen::MatrixXd Q = spectral::im_bd_basis(fb);
    Eigen::MatrixXd Bd = spectral::dense_bd(fb);
    MuSpectrum out;
    if (route == MuRoute::BAinvBt) {
        Eigen::MatrixXd L = spectral::dense_bainvbt(fb);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Q.transpose() * L * Q,
                                                                     Q.transpose() * Bd * Q);
        if (es.info() != Eigen::Success) throw SpectralError("mu_spectrum: eigensolver failed");
        out.values = es.eigenvalues();
        out.vectors = Q * es.eigenvectors();
    } else if (route == MuRoute::Schur) {
        Eigen::MatrixXd S = schur_S00(fb);
        Eigen::MatrixXd V = Eigen::LLT<Eigen::MatrixXd>(S).solve(Q);  // basis of Im S00^-1 B_D
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(V.transpose() * Bd * V,
                                                                     V.transpose() * S * V);
        if (es.info() != Eigen::Success) throw SpectralError("mu_spectrum: eigensolver failed");
        out.values = es.eigenvalues();
        out.vectors = V * es.eigenvectors();
    } else {
        Eigen::MatrixXd S = schur_S00(fb);
        // per-block symmetric square root of B_D (verification only)
        Eigen::MatrixXd Bh = Eigen::MatrixXd::Zero(fb.n, fb.n);
        for (int i = 0; i < fb.m; ++i) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(fb.B[i])};
            Eigen::VectorXd w = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
            Bh.block(fb.block_offset[i], fb.block_offset[i], fb.block_size(i), fb.block_size(i)) =
                es.eigenvectors() * w.asDiagonal() * es.eigenvectors().transpose();
        }
        Eigen::MatrixXd T = Bh * Eigen::LLT<Eigen::MatrixXd>(S).solve(Bh);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q.transpose() * T * Q);
        if (es.info() != Eigen::Success) throw SpectralError("mu_spectrum: eigensolver failed");
        out.values = es.eigenvalues();
        out.vectors = Q * es.eigenvectors();
    }
    out.mu_min = out.values.minCoeff();
    out.mu_max = out.values.maxCoeff();
    return out;
}

enum class PrecondChoice { Exact, Practical };

// Eigenvalues of A_eps x = nu P x restricted to u in R^N, lambda in Im B_D.
// Exact P = diag(A, B A^-1 B^T); practical P = diag(P_A, B_D) with P_A = A.
inline Eigen::VectorXd preconditioned_spectrum(const SaddleOperator& op, PrecondChoice choice) {
    const FemBlocks& fb = op.blocks();
    spectral::require_desk(op.dim(), "preconditioned_spectrum");
    Eigen::MatrixXd Q = spectral::im_bd_basis(fb);
    int d = fb.N + fb.n - fb.m;
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(op.dim(), d);
    Z.topLeftCorner(fb.N, fb.N).setIdentity();
    Z.bottomRightCorner(fb.n, fb.n - fb.m) = Q;
    Eigen::MatrixXd M = Z.transpose() * op.dense() * Z;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(d, d);
    P.topLeftCorner(fb.N, fb.N) = Eigen::MatrixXd(fb.stiff.A);
    Eigen::MatrixXd lam_block = (choice == PrecondChoice::Exact) ? spectral::dense_bainvbt(fb)
                                                                 : spectral::dense_bd(fb);
    P.bottomRightCorner(fb.n - fb.m, fb.n - fb.m) = Q.transpose() * lam_block * Q;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(M, P);
    if (es.info() != Eigen::Success)
        throw SpectralError("preconditioned_spectrum: eigensolver failed");
    return es.eigenvalues();
}

// Roots of nu - 1/(nu - 1) = -eps*mu:
//   nu_pm = (1 - eps*mu +- sqrt(5 + 2 eps mu + eps^2 mu^2)) / 2,
// with nu_minus < 0 < 1 < nu_plus for eps*mu >= 0.
inline std::pair<double, double> nu_from_mu(double mu, double eps) {
    double w = eps * mu;
    double s = std::sqrt(5.0 + 2.0 * w + w * w);
    return {(1.0 - w - s) / 2.0, (1.0 - w + s) / 2.0};
}

// Composes the mu spectrum with the nu equation and compares against the
// densely computed exact-P spectrum of A_eps. The equation's right-hand side
// is the Rayleigh quotient (B_D psi, psi)/(B A^-1 B^T psi, psi), which at a
// mu-eigenvector equals 1/mu.
inline double verify_nu_prediction(const FemBlocks& fb, double eps) {
    MuSpectrum mu = mu_spectrum(fb);
    Eigen::MatrixXd L = spectral::dense_bainvbt(fb);
    Eigen::MatrixXd Bd = spectral::dense_bd(fb);
    std::vector<double> eps_list(fb.m, eps);
    SaddleOperator op(fb, eps_list);
    Eigen::VectorXd computed = preconditioned_spectrum(op, PrecondChoice::Exact);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < mu.values.size(); ++j) {
        Eigen::VectorXd psi = mu.vectors.col(j);
        double fraction = psi.dot(Bd * psi) / psi.dot(L * psi);
        auto [nm, np] = nu_from_mu(fraction, eps);
        for (double nu : {nm, np}) {
            double best = (computed.array() - nu).abs().minCoeff();
            worst = std::max(worst, best);
        }
    }
    return worst;
}

struct Lemma5Result {
    std::vector<double> eps;
    std::vector<double> errors;  // ||u_eps - u_o||
    double slope = 0.0;          // log-log fit over the nonzero eps entries
};

// Convergence of the eps system to the limit system, via dense direct solves.
inline Lemma5Result verify_lemma5(const FemBlocks& fb, const std::vector<double>& eps_sequence) {
    spectral::require_desk(fb.N + fb.n, "verify_lemma5");
    SaddleOperator op_o = build_saddle_limit(fb);
    auto [xo, rep_o] = direct_solve_dense(op_o, op_o.rhs());
    Lemma5Result out;
    out.eps = eps_sequence;
    for (double e : eps_sequence) {
        SaddleOperator op(fb, std::vector<double>(fb.m, e));
        auto [xe, rep] = direct_solve_dense(op, op.rhs());
        out.errors.push_back((xe.u - xo.u).norm());
    }
    // least squares slope of log(err) vs log(eps)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (std::size_t i = 0; i < out.eps.size(); ++i) {
        if (out.eps[i] <= 0.0 || out.errors[i] <= 0.0) continue;
        double lx = std::log(out.eps[i]), ly = std::log(out.errors[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++cnt;
    }
    if (cnt >= 2) out.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    return out;
}

// ---------------------------------------------------------------------------

struct SpectralReport {
    double mu_min = 0.0, mu_max = 0.0;
    std::pair<double, double> nu_neg_range{0.0, 0.0};
    std::pair<double, double> nu_pos_range{0.0, 0.0};
    double lemma1_discrepancy = 0.0;
    struct RefinementRecord {
        double h;
        int N, n;
        double mu_min, mu_max;
    };
    std::vector<RefinementRecord> refinement_series;
    struct EpsRecord {
        double eps;
        double error;
    };
    std::vector<EpsRecord> eps_series;
    double lemma5_slope = 0.0;
    std::vector<std::string> failures;

    bool ok() const { return failures.empty(); }
};

inline nlohmann::json to_json(const SpectralReport& r) {
    nlohmann::json refine = nlohmann::json::array();
    for (const auto& rec : r.refinement_series)
        refine.push_back({{"h", rec.h}, {"N", rec.N}, {"n", rec.n}, {"mu_min", rec.mu_min},
                          {"mu_max", rec.mu_max}});
    nlohmann::json epsj = nlohmann::json::array();
    for (const auto& rec : r.eps_series) epsj.push_back({{"eps", rec.eps}, {"error", rec.error}});
    return nlohmann::json{{"mu_min", r.mu_min},
                          {"mu_max", r.mu_max},
                          {"nu_neg_range", {r.nu_neg_range.first, r.nu_neg_range.second}},
                          {"nu_pos_range", {r.nu_pos_range.first, r.nu_pos_range.second}},
                          {"lemma1_discrepancy", r.lemma1_discrepancy},
                          {"lemma5_slope", r.lemma5_slope},
                          {"refinement_series", refine},
                          {"eps_series", epsj},
                          {"failures", r.failures}};
}

}  // namespace hcsaddle
