#pragma once

#include "hcsaddle/mesh.hpp"

#include <Eigen/SparseCore>

#include <functional>

namespace hcsaddle {

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

class AssemblyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// P1 stiffness on one triangle: grad phi_i constant, entries
// (grad phi_i . grad phi_j) * area. Scale invariant in 2D.
inline Eigen::Matrix3d local_stiffness(const Vec2& p0, const Vec2& p1, const Vec2& p2) {
    double two_a = (p1 - p0).x() * (p2 - p0).y() - (p2 - p0).x() * (p1 - p0).y();
    double scale = std::max({(p1 - p0).squaredNorm(), (p2 - p0).squaredNorm(),
                             (p2 - p1).squaredNorm()});
    if (std::abs(two_a) <= 2e-14 * scale)
        throw AssemblyError("degenerate triangle in local_stiffness");
    Eigen::Vector3d b(p1.y() - p2.y(), p2.y() - p0.y(), p0.y() - p1.y());
    Eigen::Vector3d c(p2.x() - p1.x(), p0.x() - p2.x(), p1.x() - p0.x());
    return (b * b.transpose() + c * c.transpose()) / (2.0 * two_a);
}

// P1 mass on one triangle: area/12 * [[2,1,1],[1,2,1],[1,1,2]].
inline Eigen::Matrix3d local_mass(const Vec2& p0, const Vec2& p1, const Vec2& p2) {
    double two_a = (p1 - p0).x() * (p2 - p0).y() - (p2 - p0).x() * (p1 - p0).y();
    double scale = std::max({(p1 - p0).squaredNorm(), (p2 - p0).squaredNorm(),
                             (p2 - p1).squaredNorm()});
    if (std::abs(two_a) <= 2e-14 * scale)
        throw AssemblyError("degenerate triangle in local_mass");
    Eigen::Matrix3d m;
    m << 2, 1, 1, 1, 2, 1, 1, 1, 2;
    return m * (std::abs(two_a) / 24.0);
}

struct StiffnessPartition {
    SpMat A;     // N x N
    SpMat A_DD;  // n x n
    SpMat A_D0;  // n x n0
    SpMat A_0D;  // n0 x n
    SpMat A_00;  // n0 x n0
};

namespace detail {

inline void require_ordered(const TriMesh& mesh, const char* who) {
    if (!mesh.ordered)
        throw AssemblyError(std::string(who) + ": mesh has no node ordering; run classify_and_order");
}

inline SpMat from_triplets(int rows, int cols, std::vector<Triplet>& trips) {
    SpMat m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

}  // namespace detail

// Stiffness of the Laplacian over the whole mesh with homogeneous Dirichlet
// rows/columns eliminated, partitioned by the block ordering.
inline StiffnessPartition assemble_A(const TriMesh& mesh) {
    detail::require_ordered(mesh, "assemble_A");
    const int N = mesh.N, n = mesh.n, n0 = mesh.n0;
    std::vector<Triplet> ta, tdd, td0, t0d, t00;
    for (std::size_t t = 0; t < mesh.tris.size(); ++t) {
        const auto& tri = mesh.tris[t];
        Eigen::Matrix3d k;
        try {
            k = local_stiffness(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]);
        } catch (const AssemblyError&) {
            throw AssemblyError("degenerate triangle " + std::to_string(t));
        }
        for (int a = 0; a < 3; ++a) {
            int ia = mesh.free_index[tri[a]];
            if (ia < 0) continue;
            for (int b = 0; b < 3; ++b) {
                int ib = mesh.free_index[tri[b]];
                if (ib < 0) continue;
                ta.emplace_back(ia, ib, k(a, b));
                if (ia < n && ib < n)
                    tdd.emplace_back(ia, ib, k(a, b));
                else if (ia < n)
                    td0.emplace_back(ia, ib - n, k(a, b));
                else if (ib < n)
                    t0d.emplace_back(ia - n, ib, k(a, b));
                else
                    t00.emplace_back(ia - n, ib - n, k(a, b));
            }
        }
    }
    StiffnessPartition p;
    p.A = detail::from_triplets(N, N, ta);
    p.A_DD = detail::from_triplets(n, n, tdd);
    p.A_D0 = detail::from_triplets(n, n0, td0);
    p.A_0D = detail::from_triplets(n0, n, t0d);
    p.A_00 = detail::from_triplets(n0, n0, t00);
    return p;
}

// Per-inclusion Neumann stiffness blocks B_i (n_i x n_i), assembled from the
// triangles of inclusion i only. ker B_i = constants.
inline std::vector<SpMat> assemble_B(const TriMesh& mesh) {
    detail::require_ordered(mesh, "assemble_B");
    const int m = mesh.num_inclusions;
    if (m < 1) throw AssemblyError("assemble_B: mesh has no inclusions");
    std::vector<std::vector<Triplet>> trips(m);
    for (std::size_t t = 0; t < mesh.tris.size(); ++t) {
        int r = mesh.tri_region[t];
        if (r < 0) continue;
        const auto& tri = mesh.tris[t];
        Eigen::Matrix3d k = local_stiffness(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]);
        int off = mesh.block_offset[r];
        for (int a = 0; a < 3; ++a) {
            int ia = mesh.free_index[tri[a]];
            if (ia < 0 || ia < mesh.block_offset[r] || ia >= mesh.block_offset[r + 1])
                throw AssemblyError("inclusion triangle " + std::to_string(t) +
                                    " touches a node outside its block");
            for (int b = 0; b < 3; ++b) trips[r].emplace_back(ia - off, mesh.free_index[tri[b]] - off, k(a, b));
        }
    }
    std::vector<SpMat> B;
    B.reserve(m);
    for (int i = 0; i < m; ++i) {
        int ni = mesh.inclusion_size(i);
        if (ni == 0) throw AssemblyError("inclusion " + std::to_string(i) + " has no nodes");
        B.push_back(detail::from_triplets(ni, ni, trips[i]));
    }
    return B;
}

// Block-diagonal inclusion mass matrix M_D (n x n).
inline SpMat assemble_mass_D(const TriMesh& mesh) {
    detail::require_ordered(mesh, "assemble_mass_D");
    std::vector<Triplet> trips;
    for (std::size_t t = 0; t < mesh.tris.size(); ++t) {
        if (mesh.tri_region[t] < 0) continue;
        const auto& tri = mesh.tris[t];
        Eigen::Matrix3d mloc = local_mass(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                trips.emplace_back(mesh.free_index[tri[a]], mesh.free_index[tri[b]], mloc(a, b));
    }
    return detail::from_triplets(mesh.n, mesh.n, trips);
}

using LoadFn = std::function<double(const Vec2&)>;

enum class Quadrature { Barycentric1, Midpoint3 };

// Load vector over all mesh nodes (Dirichlet included), for the
// partition-of-unity checks.
inline Eigen::VectorXd assemble_load_all(const TriMesh& mesh, const LoadFn& f,
                                         Quadrature rule = Quadrature::Barycentric1) {
    Eigen::VectorXd F = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.nodes.size()));
    for (std::size_t t = 0; t < mesh.tris.size(); ++t) {
        const auto& tri = mesh.tris[t];
        const Vec2 &p0 = mesh.nodes[tri[0]], &p1 = mesh.nodes[tri[1]], &p2 = mesh.nodes[tri[2]];
        double area = std::abs(detail::tri_signed_area(p0, p1, p2));
        if (rule == Quadrature::Barycentric1) {
            double fv = f((p0 + p1 + p2) / 3.0);
            for (int a = 0; a < 3; ++a) F[tri[a]] += fv * area / 3.0;
        } else {
            // edge-midpoint rule, exact for quadratics
            Vec2 m01 = 0.5 * (p0 + p1), m12 = 0.5 * (p1 + p2), m20 = 0.5 * (p2 + p0);
            double f01 = f(m01), f12 = f(m12), f20 = f(m20);
            F[tri[0]] += area / 3.0 * 0.5 * (f01 + f20);
            F[tri[1]] += area / 3.0 * 0.5 * (f01 + f12);
            F[tri[2]] += area / 3.0 * 0.5 * (f12 + f20);
        }
    }
    return F;
}

inline Eigen::VectorXd assemble_load(const TriMesh& mesh, const LoadFn& f,
                                     Quadrature rule = Quadrature::Barycentric1) {
    detail::require_ordered(mesh, "assemble_load");
    Eigen::VectorXd full = assemble_load_all(mesh, f, rule);
    Eigen::VectorXd F(mesh.N);
    for (std::size_t k = 0; k < mesh.nodes.size(); ++k)
        if (mesh.free_index[k] >= 0) F[mesh.free_index[k]] = full[static_cast<Eigen::Index>(k)];
    return F;
}

inline Eigen::VectorXd assemble_load(const TriMesh& mesh, double f_const,
                                     Quadrature rule = Quadrature::Barycentric1) {
    return assemble_load(mesh, [f_const](const Vec2&) { return f_const; }, rule);
}

// Everything the saddle formulation needs, in the block ordering.
struct FemBlocks {
    int N = 0, n = 0, n0 = 0, m = 0;
    std::vector<int> block_offset;  // m+1 offsets into [0, n)
    StiffnessPartition stiff;
    std::vector<SpMat> B;
    std::vector<double> eps;
    SpMat M_D;
    Eigen::VectorXd F;

    int block_size(int i) const { return block_offset[i + 1] - block_offset[i]; }
    const SpMat& A() const { return stiff.A; }
};

inline FemBlocks assemble_blocks(const TriMesh& mesh, std::vector<double> eps, double f_const = 50.0,
                                 Quadrature rule = Quadrature::Barycentric1) {
    detail::require_ordered(mesh, "assemble_blocks");
    if (static_cast<int>(eps.size()) != mesh.num_inclusions)
        throw AssemblyError("assemble_blocks: eps list length != number of inclusions");
    FemBlocks fb;
    fb.N = mesh.N;
    fb.n = mesh.n;
    fb.n0 = mesh.n0;
    fb.m = mesh.num_inclusions;
    fb.block_offset = mesh.block_offset;
    fb.stiff = assemble_A(mesh);
    if (fb.m > 0) {
        fb.B = assemble_B(mesh);
        fb.M_D = assemble_mass_D(mesh);
    } else {
        fb.M_D = SpMat(0, 0);
    }
    fb.eps = std::move(eps);
    fb.F = assemble_load(mesh, f_const, rule);
    return fb;
}

// y = Sigma_eps x, blockwise eps_i * (B_i x_i). eps all zero gives the zero
// operator of the limit problem.
inline Eigen::VectorXd apply_sigma(const FemBlocks& fb, const std::vector<double>& eps,
                                   const Eigen::VectorXd& x) {
    if (static_cast<int>(eps.size()) != fb.m) throw AssemblyError("apply_sigma: eps length mismatch");
    Eigen::VectorXd y(fb.n);
    for (int i = 0; i < fb.m; ++i) {
        if (eps[i] < 0.0) throw AssemblyError("apply_sigma: negative eps");
        y.segment(fb.block_offset[i], fb.block_size(i)) =
            eps[i] * (fb.B[i] * x.segment(fb.block_offset[i], fb.block_size(i)));
    }
    return y;
}

// y = B_D x (blockwise B_i x_i), x of length n.
inline Eigen::VectorXd apply_bd(const FemBlocks& fb, const Eigen::VectorXd& x) {
    Eigen::VectorXd y(fb.n);
    for (int i = 0; i < fb.m; ++i)
        y.segment(fb.block_offset[i], fb.block_size(i)) =
            fb.B[i] * x.segment(fb.block_offset[i], fb.block_size(i));
    return y;
}

// Classical primal matrix for sigma = 1 + 1/eps_i: K = A + sum (1/eps_i) B_i.
inline SpMat assemble_primal(const FemBlocks& fb, const std::vector<double>& eps) {
    if (static_cast<int>(eps.size()) != fb.m) throw AssemblyError("assemble_primal: eps length mismatch");
    std::vector<Triplet> trips;
    for (int r = 0; r < fb.stiff.A.outerSize(); ++r)
        for (SpMat::InnerIterator it(fb.stiff.A, r); it; ++it)
            trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < fb.m; ++i) {
        if (!(eps[i] > 0.0))
            throw AssemblyError("assemble_primal: eps must be positive (use the limit system for eps=0)");
        int off = fb.block_offset[i];
        for (int r = 0; r < fb.B[i].outerSize(); ++r)
            for (SpMat::InnerIterator it(fb.B[i], r); it; ++it)
                trips.emplace_back(off + static_cast<int>(it.row()), off + static_cast<int>(it.col()),
                                   it.value() / eps[i]);
    }
    return detail::from_triplets(fb.N, fb.N, trips);
}

inline SpMat assemble_primal(const TriMesh& mesh, const std::vector<double>& eps) {
    return assemble_primal(assemble_blocks(mesh, eps, 0.0), eps);
}

// MatrixMarket coordinate export (general symmetric pattern written in full).
inline void write_matrix_market(const SpMat& a, std::ostream& os) {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
    for (int r = 0; r < a.outerSize(); ++r)
        for (SpMat::InnerIterator it(a, r); it; ++it)
            os << (it.row() + 1) << ' ' << (it.col() + 1) << ' ' << detail::format_double(it.value())
               << '\n';
}

inline void write_matrix_market(const Eigen::MatrixXd& a, std::ostream& os) {
    os << "%%MatrixMarket matrix array real general\n";
    os << a.rows() << ' ' << a.cols() << '\n';
    for (Eigen::Index c = 0; c < a.cols(); ++c)
        for (Eigen::Index r = 0; r < a.rows(); ++r) os << detail::format_double(a(r, c)) << '\n';
}

}  // namespace hcsaddle
