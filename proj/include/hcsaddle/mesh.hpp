#pragma once

#include "hcsaddle/geometry.hpp"

#include <array>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>
#include <utility>

namespace hcsaddle {

class MeshError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Region codes shared by nodes and triangles:
//   >= 0 : inclusion index
//   kBackground : exterior of all inclusions
//   kDirichlet  : node on the outer boundary Gamma (nodes only)
inline constexpr int kBackground = -1;
inline constexpr int kDirichlet = -2;

struct MeshQuality {
    double h_max = 0.0;        // longest edge in the mesh
    double h_min = 0.0;        // shortest edge in the mesh
    double q_ratio = 0.0;      // h_max / h_min
    double min_angle_deg = 0.0;
    double diam_ratio = 0.0;   // max/min element diameter (quasi-uniformity)
};

// Conforming triangulation with region labels and the block node ordering:
// free node indices enumerate inclusion 1..m closures first (each block
// contiguous), background interior nodes last; Dirichlet nodes carry no
// free index.
struct TriMesh {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> tris;  // counterclockwise
    std::vector<int> node_region;          // kDirichlet / kBackground / inclusion id
    std::vector<int> tri_region;           // kBackground / inclusion id
    int num_inclusions = 0;

    // Filled by classify_and_order:
    bool ordered = false;
    std::vector<int> free_index;    // node -> free id in paper order, -1 for Dirichlet
    std::vector<int> free_to_node;  // free id -> node
    std::vector<int> block_offset;  // size m+1: free-id offset of each inclusion block
    int N = 0;                      // free nodes
    int n = 0;                      // inclusion-closure nodes
    int n0 = 0;                     // background free nodes

    std::vector<std::string> warnings;

    int inclusion_size(int i) const { return block_offset[i + 1] - block_offset[i]; }

    double triangle_area(int t) const {
        const Vec2& a = nodes[tris[t][0]];
        const Vec2& b = nodes[tris[t][1]];
        const Vec2& c = nodes[tris[t][2]];
        return 0.5 * ((b - a).x() * (c - a).y() - (c - a).x() * (b - a).y());
    }
};

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct EdgeKey {
    int a, b;  // a < b
    bool operator<(const EdgeKey& o) const { return a != o.a ? a < o.a : b < o.b; }
    bool operator==(const EdgeKey& o) const { return a == o.a && b == o.b; }
};

inline EdgeKey make_edge(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

// edge -> adjacent triangle indices (at most two in a conforming mesh)
inline std::map<EdgeKey, std::vector<int>> edge_adjacency(const std::vector<std::array<int, 3>>& tris) {
    std::map<EdgeKey, std::vector<int>> adj;
    for (std::size_t t = 0; t < tris.size(); ++t)
        for (int e = 0; e < 3; ++e)
            adj[make_edge(tris[t][e], tris[t][(e + 1) % 3])].push_back(static_cast<int>(t));
    return adj;
}

inline double tri_signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * ((b - a).x() * (c - a).y() - (c - a).x() * (b - a).y());
}

inline double tri_min_angle(const Vec2& a, const Vec2& b, const Vec2& c) {
    double la = (b - c).norm(), lb = (a - c).norm(), lc = (a - b).norm();
    auto ang = [](double opp, double s1, double s2) {
        double v = (s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2);
        return std::acos(std::clamp(v, -1.0, 1.0));
    };
    return std::min({ang(la, lb, lc), ang(lb, la, lc), ang(lc, la, lb)});
}

// Intersection of segment [p,q] with the boundary of a shape, as a parameter
// t in (0,1) along the segment. Assumes p and q are strictly on opposite sides.
inline std::optional<double> segment_boundary_crossing(const Shape& s, const Vec2& p, const Vec2& q) {
    if (const Disk* d = std::get_if<Disk>(&s)) {
        Vec2 u = q - p, w = p - d->center;
        double A = u.squaredNorm();
        double B = 2.0 * w.dot(u);
        double C = w.squaredNorm() - d->radius * d->radius;
        double disc = B * B - 4.0 * A * C;
        if (disc < 0.0) return std::nullopt;
        double sq = std::sqrt(disc);
        for (double t : {(-B - sq) / (2.0 * A), (-B + sq) / (2.0 * A)})
            if (t > 1e-12 && t < 1.0 - 1e-12) return t;
        return std::nullopt;
    }
    const auto& v = std::get<Polygon>(s).vertices;
    std::optional<double> best;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec2& a = v[i];
        const Vec2& b = v[(i + 1) % v.size()];
        Vec2 r = q - p, e = b - a;
        double den = r.x() * e.y() - r.y() * e.x();
        if (std::abs(den) < 1e-30) continue;
        Vec2 ap = a - p;
        double t = (ap.x() * e.y() - ap.y() * e.x()) / den;
        double s2 = (ap.x() * r.y() - ap.y() * r.x()) / -den;
        if (t > 1e-12 && t < 1.0 - 1e-12 && s2 >= -1e-12 && s2 <= 1.0 + 1e-12)
            if (!best || t < *best) best = t;
    }
    return best;
}

struct GridBuild {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> tris;
    int nx = 0, ny = 0;
    double h = 0.0;
    Vec2 origin;
    bool rect_aligned = false;  // outer boundary coincides with the grid frame
};

inline bool axis_aligned_rectangle(const Shape& s, Vec2& lo, Vec2& hi) {
    const Polygon* poly = std::get_if<Polygon>(&s);
    if (!poly || poly->vertices.size() != 4) return false;
    BBox box = shape::bounding_box(s);
    for (const Vec2& v : poly->vertices) {
        bool on_x = std::abs(v.x() - box.lo.x()) < 1e-14 || std::abs(v.x() - box.hi.x()) < 1e-14;
        bool on_y = std::abs(v.y() - box.lo.y()) < 1e-14 || std::abs(v.y() - box.hi.y()) < 1e-14;
        if (!(on_x && on_y)) return false;
    }
    lo = box.lo;
    hi = box.hi;
    return true;
}

inline GridBuild structured_grid(const DomainSpec& spec) {
    GridBuild g;
    Vec2 lo, hi;
    double hx, hy;
    if (axis_aligned_rectangle(spec.outer, lo, hi)) {
        g.rect_aligned = true;
        g.origin = lo;
        double w = hi.x() - lo.x(), ht = hi.y() - lo.y();
        g.nx = std::max(1, static_cast<int>(std::lround(w / spec.target_h)));
        g.ny = std::max(1, static_cast<int>(std::lround(ht / spec.target_h)));
        hx = w / g.nx;
        hy = ht / g.ny;
        g.h = std::max(hx, hy);
    } else {
        BBox box = shape::bounding_box(spec.outer);
        g.h = hx = hy = spec.target_h;
        g.origin = box.lo - Vec2(g.h, g.h);
        g.nx = static_cast<int>(std::ceil((box.hi.x() - box.lo.x() + 2.0 * g.h) / g.h));
        g.ny = static_cast<int>(std::ceil((box.hi.y() - box.lo.y() + 2.0 * g.h) / g.h));
        hi = box.hi;  // unused beyond this point for free grids
    }
    auto nid = [&](int i, int j) { return j * (g.nx + 1) + i; };
    g.nodes.reserve(static_cast<std::size_t>(g.nx + 1) * (g.ny + 1));
    for (int j = 0; j <= g.ny; ++j)
        for (int i = 0; i <= g.nx; ++i) {
            double x = (g.rect_aligned && i == g.nx) ? hi.x() : g.origin.x() + i * hx;
            double y = (g.rect_aligned && j == g.ny) ? hi.y() : g.origin.y() + j * hy;
            g.nodes.emplace_back(x, y);
        }
    g.tris.reserve(static_cast<std::size_t>(g.nx) * g.ny * 2);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            int a = nid(i, j), b = nid(i + 1, j), c = nid(i + 1, j + 1), d = nid(i, j + 1);
            if ((i + j) % 2 == 0) {
                g.tris.push_back({a, b, c});
                g.tris.push_back({a, c, d});
            } else {
                g.tris.push_back({a, b, d});
                g.tris.push_back({b, c, d});
            }
        }
    return g;
}

}  // namespace detail

TriMesh classify_and_order(TriMesh mesh);

namespace detail {

// Working state of the generator: curves[0] is the outer boundary,
// curves[1+i] the boundary of inclusion i.
class Generator {
public:
    explicit Generator(const DomainSpec& spec) : spec_(spec) {
        warnings_ = validate(spec);
        curves_.push_back(&spec_.outer);
        for (const auto& inc : spec_.inclusions) curves_.push_back(&inc.shape);
    }

    TriMesh run() {
        GridBuild g = structured_grid(spec_);
        nodes_ = std::move(g.nodes);
        tris_ = std::move(g.tris);
        h_ = g.h;
        rect_aligned_ = g.rect_aligned;
        on_curve_.assign(nodes_.size(), -1);
        frozen_.assign(nodes_.size(), false);

        snap_corners();
        snap_vertices();
        eliminate_crossings();
        drop_outside();
        compute_labels();
        collapse_short_edges();
        repair_quality();
        fix_orientation();

        TriMesh mesh;
        mesh.nodes = std::move(nodes_);
        mesh.tris = std::move(tris_);
        mesh.tri_region = std::move(tri_label_);
        mesh.num_inclusions = static_cast<int>(spec_.inclusions.size());
        label_nodes(mesh);
        check_resolution(mesh);
        mesh.warnings = std::move(warnings_);
        TriMesh ordered = classify_and_order(std::move(mesh));
        quality_warnings(ordered);
        return ordered;
    }

private:
    const DomainSpec& spec_;
    std::vector<const Shape*> curves_;
    std::vector<Vec2> nodes_;
    std::vector<std::array<int, 3>> tris_;
    std::vector<int> tri_label_;  // valid after compute_labels, kept aligned with tris_
    std::vector<int> on_curve_;   // curve id the node lies on, -1 otherwise
    std::vector<char> frozen_;    // polygon corners: never move again
    std::vector<std::string> warnings_;
    double h_ = 0.0;
    bool rect_aligned_ = false;

    std::vector<std::vector<int>> node_tris() const {
        std::vector<std::vector<int>> nt(nodes_.size());
        for (std::size_t t = 0; t < tris_.size(); ++t)
            for (int v : tris_[t]) nt[v].push_back(static_cast<int>(t));
        return nt;
    }

    bool move_inverts(const std::vector<int>& incident, int node, const Vec2& target) const {
        for (int t : incident) {
            std::array<Vec2, 3> p;
            for (int k = 0; k < 3; ++k)
                p[k] = (tris_[t][k] == node) ? target : nodes_[tris_[t][k]];
            if (tri_signed_area(p[0], p[1], p[2]) <= 1e-14 * h_ * h_) return true;
        }
        return false;
    }

    void snap_corners() {
        auto nt = node_tris();
        for (std::size_t c = 0; c < curves_.size(); ++c) {
            if (c == 0 && rect_aligned_) continue;  // frame already conforms
            for (const Vec2& corner : shape::corners(*curves_[c])) {
                int best = -1;
                double bd = 0.75 * h_;
                for (std::size_t k = 0; k < nodes_.size(); ++k) {
                    if (on_curve_[k] >= 0 && on_curve_[k] != static_cast<int>(c)) continue;
                    double d = (nodes_[k] - corner).norm();
                    if (d < bd) {
                        bd = d;
                        best = static_cast<int>(k);
                    }
                }
                if (best < 0)
                    throw MeshError("mesh too coarse to place a corner of curve " + std::to_string(c));
                if (!move_inverts(nt[best], best, corner)) {
                    nodes_[best] = corner;
                    on_curve_[best] = static_cast<int>(c);
                    frozen_[best] = true;
                }
            }
        }
    }

    void snap_vertices() {
        auto nt = node_tris();
        const double tol = 0.3 * h_;
        for (std::size_t k = 0; k < nodes_.size(); ++k) {
            if (frozen_[k] || on_curve_[k] >= 0) continue;
            int best = -1;
            double bd = tol;
            for (std::size_t c = 0; c < curves_.size(); ++c) {
                if (c == 0 && rect_aligned_) continue;
                double d = std::abs(shape::signed_distance(*curves_[c], nodes_[k]));
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(c);
                }
            }
            if (best < 0) continue;
            Vec2 target = shape::project(*curves_[best], nodes_[k]);
            if (!move_inverts(nt[k], k, target)) {
                nodes_[k] = target;
                on_curve_[k] = best;
            }
        }
    }

    int node_side(int k, int c) const {
        if (on_curve_[k] == c) return 0;
        double d = shape::signed_distance(*curves_[c], nodes_[k]);
        if (std::abs(d) < 1e-12 * std::max(1.0, h_)) return 0;
        return d < 0.0 ? -1 : 1;
    }

    void eliminate_crossings() {
        for (int round = 0; round < 32; ++round) {
            auto adj = edge_adjacency(tris_);
            auto nt = node_tris();
            std::vector<EdgeKey> edges;
            edges.reserve(adj.size());
            for (const auto& [e, ts] : adj) edges.push_back(e);

            // phase A: snap endpoints onto the curve where the crossing sits
            // close to them; every decision recomputes geometry, since an
            // earlier snap can move this edge
            bool any = false;
            for (const EdgeKey& e : edges) {
                for (std::size_t c = 0; c < curves_.size(); ++c) {
                    if (c == 0 && rect_aligned_) continue;
                    int sa = node_side(e.a, static_cast<int>(c));
                    int sb = node_side(e.b, static_cast<int>(c));
                    if (sa * sb >= 0) continue;
                    any = true;
                    auto t = segment_boundary_crossing(*curves_[c], nodes_[e.a], nodes_[e.b]);
                    if (!t) continue;
                    Vec2 q = nodes_[e.a] + *t * (nodes_[e.b] - nodes_[e.a]);
                    if (*t < 0.3 && !frozen_[e.a] && on_curve_[e.a] < 0 &&
                        !move_inverts(nt[e.a], e.a, q)) {
                        nodes_[e.a] = q;
                        on_curve_[e.a] = static_cast<int>(c);
                    } else if (*t > 0.7 && !frozen_[e.b] && on_curve_[e.b] < 0 &&
                               !move_inverts(nt[e.b], e.b, q)) {
                        nodes_[e.b] = q;
                        on_curve_[e.b] = static_cast<int>(c);
                    }
                }
            }

            // phase B: geometry is frozen now; split whatever still crosses
            std::map<EdgeKey, std::pair<int, Vec2>> splits;
            for (const EdgeKey& e : edges) {
                for (std::size_t c = 0; c < curves_.size(); ++c) {
                    if (c == 0 && rect_aligned_) continue;
                    if (splits.count(e)) break;
                    int sa = node_side(e.a, static_cast<int>(c));
                    int sb = node_side(e.b, static_cast<int>(c));
                    if (sa * sb >= 0) continue;
                    any = true;
                    auto t = segment_boundary_crossing(*curves_[c], nodes_[e.a], nodes_[e.b]);
                    if (!t) continue;  // grazing: the side tolerance absorbs it next round
                    Vec2 q = nodes_[e.a] + *t * (nodes_[e.b] - nodes_[e.a]);
                    int id = static_cast<int>(nodes_.size());
                    nodes_.push_back(q);
                    on_curve_.push_back(static_cast<int>(c));
                    frozen_.push_back(false);
                    splits.emplace(e, std::make_pair(id, q));
                }
            }
            if (!any) return;
            if (!splits.empty()) apply_splits(splits);
        }
        throw MeshError("boundary recovery did not converge; refine target_h");
    }

    // Splits edges in batch; when labels already exist the children inherit
    // the parent's label.
    void apply_splits(const std::map<EdgeKey, std::pair<int, Vec2>>& splits) {
        std::vector<std::array<int, 3>> out;
        std::vector<int> out_label;
        const bool labeled = !tri_label_.empty();
        out.reserve(tris_.size() + 2 * splits.size());
        std::size_t parent = static_cast<std::size_t>(-1);
        auto emit = [&](const std::array<int, 3>& t) {
            out.push_back(t);
            if (labeled) out_label.push_back(tri_label_[parent]);
        };
        for (std::size_t ti = 0; ti < tris_.size(); ++ti) {
            const auto& tri = tris_[ti];
            parent = ti;
            std::array<int, 3> sp{-1, -1, -1};  // split node on edge (v[e], v[e+1])
            int cnt = 0;
            for (int e = 0; e < 3; ++e) {
                auto it = splits.find(make_edge(tri[e], tri[(e + 1) % 3]));
                if (it != splits.end()) {
                    sp[e] = it->second.first;
                    ++cnt;
                }
            }
            if (cnt == 0) {
                emit(tri);
                continue;
            }
            int v0 = tri[0], v1 = tri[1], v2 = tri[2];
            if (cnt == 3) {
                emit({v0, sp[0], sp[2]});
                emit({v1, sp[1], sp[0]});
                emit({v2, sp[2], sp[1]});
                emit({sp[0], sp[1], sp[2]});
                continue;
            }
            // cyclic rotation keeps CCW: (v0,v1,v2)->(v1,v2,v0)
            auto rot = [&] {
                int tv = v0;
                v0 = v1;
                v1 = v2;
                v2 = tv;
                int ts = sp[0];
                sp[0] = sp[1];
                sp[1] = sp[2];
                sp[2] = ts;
            };
            if (cnt == 1) {
                while (sp[0] < 0) rot();
                emit({v0, sp[0], v2});
                emit({sp[0], v1, v2});
                continue;
            }
            while (sp[2] >= 0) rot();  // split edges become 0 and 1
            int p01 = sp[0], p12 = sp[1];
            emit({p01, v1, p12});
            // quad v0, p01, p12, v2: split along the shorter diagonal
            if ((nodes_[p01] - nodes_[v2]).squaredNorm() <= (nodes_[v0] - nodes_[p12]).squaredNorm()) {
                emit({v0, p01, v2});
                emit({p01, p12, v2});
            } else {
                emit({v0, p01, p12});
                emit({v0, p12, v2});
            }
        }
        tris_ = std::move(out);
        if (labeled) tri_label_ = std::move(out_label);
    }

    // Refinement of over-long edges (a by-product of boundary snapping):
    // midpoints, nudged onto a curve when an endpoint pair hugs one, so the
    // inherited labels stay one-sided.
    int bisect_long_edges() {
        auto adj = edge_adjacency(tris_);
        const double tol_on = 1e-12 * std::max(1.0, h_);
        std::map<EdgeKey, std::pair<int, Vec2>> splits;
        for (const auto& [e, ts] : adj) {
            if ((nodes_[e.a] - nodes_[e.b]).norm() <= 1.45 * h_) continue;
            if (ts.size() == 2 && tri_label_[ts[0]] != tri_label_[ts[1]]) continue;  // interface
            Vec2 mid = 0.5 * (nodes_[e.a] + nodes_[e.b]);
            int on = -1;
            if (on_curve_[e.a] >= 0 && on_curve_[e.a] == on_curve_[e.b]) {
                // long chord: keep the refinement on the curve itself
                on = on_curve_[e.a];
                mid = shape::project(*curves_[on], mid);
            } else {
                // keep the midpoint strictly on the side its triangles live on
                for (std::size_t c = 1; c < curves_.size(); ++c) {
                    double sd = shape::signed_distance(*curves_[c], mid);
                    if (std::abs(sd) < tol_on) {
                        on = static_cast<int>(c);
                        mid = shape::project(*curves_[c], mid);
                        break;
                    }
                    int label = tri_label_[ts[0]];
                    bool inside_lab = (label == static_cast<int>(c) - 1);
                    if (inside_lab != (sd < 0.0)) {
                        on = static_cast<int>(c);
                        mid = shape::project(*curves_[c], mid);
                        break;
                    }
                }
            }
            int id = static_cast<int>(nodes_.size());
            nodes_.push_back(mid);
            on_curve_.push_back(on);
            frozen_.push_back(false);
            splits.emplace(e, std::make_pair(id, mid));
        }
        if (!splits.empty()) apply_splits(splits);
        return static_cast<int>(splits.size());
    }

    void drop_outside() {
        std::vector<std::array<int, 3>> kept;
        kept.reserve(tris_.size());
        for (const auto& tri : tris_) {
            Vec2 bc = (nodes_[tri[0]] + nodes_[tri[1]] + nodes_[tri[2]]) / 3.0;
            if (rect_aligned_ || shape::signed_distance(spec_.outer, bc) < 0.0) kept.push_back(tri);
        }
        tris_ = std::move(kept);
        compact_nodes();
    }

    void compact_nodes() {
        std::vector<int> remap(nodes_.size(), -1);
        int next = 0;
        for (const auto& tri : tris_)
            for (int v : tri)
                if (remap[v] < 0) remap[v] = next++;
        std::vector<Vec2> nn(next);
        std::vector<int> noc(next, -1);
        std::vector<char> nf(next, 0);
        for (std::size_t k = 0; k < nodes_.size(); ++k) {
            if (remap[k] < 0) continue;
            nn[remap[k]] = nodes_[k];
            noc[remap[k]] = on_curve_[k];
            nf[remap[k]] = frozen_[k];
        }
        nodes_ = std::move(nn);
        on_curve_ = std::move(noc);
        frozen_ = std::move(nf);
        for (auto& tri : tris_)
            for (int& v : tri) v = remap[v];
    }

    // Element labels, fixed right after boundary recovery: with no crossing
    // edges left, each triangle's strictly-inside/outside vertices are
    // one-sided per curve. A triangle is an inclusion element if it has a
    // strictly interior vertex; all-on-curve slivers fall back to the
    // barycenter side. Repair passes below preserve these labels.
    void compute_labels() {
        tri_label_.assign(tris_.size(), kBackground);
        for (std::size_t t = 0; t < tris_.size(); ++t) {
            for (std::size_t i = 0; i < spec_.inclusions.size(); ++i) {
                const Shape& s = spec_.inclusions[i].shape;
                int c = static_cast<int>(i) + 1;
                int strict_in = 0, on = 0;
                for (int v : tris_[t]) {
                    if (on_curve_[v] == c) {
                        ++on;
                        continue;
                    }
                    double sd = shape::signed_distance(s, nodes_[v]);
                    if (std::abs(sd) < 1e-12 * std::max(1.0, h_))
                        ++on;
                    else if (sd < 0.0)
                        ++strict_in;
                }
                if (strict_in > 0 || (on == 3 && shape::signed_distance(s, barycenter(t)) < 0.0)) {
                    tri_label_[t] = static_cast<int>(i);
                    break;
                }
            }
        }
    }

    Vec2 barycenter(std::size_t t) const {
        return (nodes_[tris_[t][0]] + nodes_[tris_[t][1]] + nodes_[tris_[t][2]]) / 3.0;
    }

    // Short edges come from boundary splits near snapped nodes; fold them
    // away so the edge-length ratio stays quasi-uniform. The constrained
    // endpoint survives; two same-curve endpoints merge at the projected
    // midpoint; a mesh-boundary or corner node is never removed. Labels ride
    // along on the surviving triangles.
    void collapse_short_edges() {
        const double threshold = 0.45 * h_;
        std::set<EdgeKey> rejected;
        for (int pass = 0; pass < 10000; ++pass) {
            auto adj = edge_adjacency(tris_);
            std::vector<char> hull(nodes_.size(), 0);
            for (const auto& [e, ts] : adj)
                if (ts.size() == 1) hull[e.a] = hull[e.b] = 1;
            auto movable = [&](int k) { return !frozen_[k] && !hull[k]; };
            int victim = -1, keeper = -1;
            Vec2 target;
            for (const auto& [e, ts] : adj) {
                if (rejected.count(e)) continue;
                if ((nodes_[e.a] - nodes_[e.b]).norm() >= threshold) continue;
                int a = e.a, b = e.b;
                // same-curve chords may merge even on the mesh hull: the
                // merged node is reprojected onto that curve
                if (on_curve_[a] >= 0 && on_curve_[a] == on_curve_[b] && !frozen_[a] && !frozen_[b]) {
                    keeper = a;
                    victim = b;
                    target = shape::project(*curves_[on_curve_[a]], 0.5 * (nodes_[a] + nodes_[b]));
                } else if (on_curve_[b] < 0 && movable(b)) {
                    keeper = a;  // keep the constrained end in place
                    victim = b;
                    target = nodes_[a];
                } else if (on_curve_[a] < 0 && movable(a)) {
                    keeper = b;
                    victim = a;
                    target = nodes_[b];
                } else {
                    continue;
                }
                break;
            }
            if (victim < 0) return;
            std::vector<std::array<int, 3>> out;
            std::vector<int> out_label;
            out.reserve(tris_.size());
            out_label.reserve(tris_.size());
            bool ok = true;
            Vec2 keep_old = nodes_[keeper];
            nodes_[keeper] = target;
            for (std::size_t ti = 0; ti < tris_.size(); ++ti) {
                std::array<int, 3> t = tris_[ti];
                bool touched = false;
                for (int& v : t) {
                    if (v == victim) {
                        v = keeper;
                        touched = true;
                    }
                    if (v == keeper) touched = true;
                }
                if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;  // collapsed pair
                if (touched) {
                    if (tri_signed_area(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]]) <=
                        1e-14 * h_ * h_) {
                        ok = false;
                        break;
                    }
                    // re-attached edges must not stretch past the grid diagonal
                    for (int ei = 0; ei < 3 && ok; ++ei)
                        if ((t[ei] == keeper || t[(ei + 1) % 3] == keeper) &&
                            (nodes_[t[ei]] - nodes_[t[(ei + 1) % 3]]).norm() > 1.45 * h_)
                            ok = false;
                    if (!ok) break;
                }
                out.push_back(t);
                out_label.push_back(tri_label_[ti]);
            }
            if (!ok) {
                nodes_[keeper] = keep_old;
                rejected.insert(make_edge(keeper, victim));
                continue;
            }
            tris_ = std::move(out);
            tri_label_ = std::move(out_label);
            compact_nodes();
            rejected.clear();  // indices shifted
        }
    }

    void repair_quality() {
        for (int round = 0; round < 8; ++round) {
            int cuts = bisect_long_edges();
            collapse_short_edges();
            int flips = flip_pass();
            int moves = smooth_pass();
            if (cuts == 0 && flips == 0 && moves == 0) break;
        }
    }

    int flip_pass() {
        int flips = 0;
        for (int sweep = 0; sweep < 8; ++sweep) {
            auto adj = edge_adjacency(tris_);
            int done = 0;
            for (const auto& [e, ts] : adj) {
                if (ts.size() != 2) continue;
                int t0 = ts[0], t1 = ts[1];
                auto opposite = [&](int t) {
                    for (int v : tris_[t])
                        if (v != e.a && v != e.b) return v;
                    return -1;
                };
                int c = opposite(t0), d = opposite(t1);
                if (c < 0 || d < 0 || c == d) continue;
                const Vec2 &pa = nodes_[e.a], &pb = nodes_[e.b], &pc = nodes_[c], &pd = nodes_[d];
                // flip is valid only if both replacement triangles come out
                // strictly CCW, i.e. the quad is strictly convex at a and b
                double tol_area = 1e-12 * h_ * h_;
                double s1 = tri_signed_area(pa, pd, pc);
                double s2 = tri_signed_area(pb, pc, pd);
                std::array<int, 3> n0{e.a, d, c}, n1{e.b, c, d};
                if (s1 <= tol_area || s2 <= tol_area) {
                    // mirrored configuration (c right of the edge, d left)
                    s1 = tri_signed_area(pa, pc, pd);
                    s2 = tri_signed_area(pb, pd, pc);
                    if (s1 <= tol_area || s2 <= tol_area) continue;
                    n0 = {e.a, c, d};
                    n1 = {e.b, d, c};
                }
                double before = std::min(tri_min_angle(pa, pb, pc), tri_min_angle(pa, pb, pd));
                double after = std::min(tri_min_angle(pa, pd, pc), tri_min_angle(pb, pc, pd));
                if (after <= before + 1e-12) continue;
                if ((pc - pd).norm() > 1.45 * h_) continue;  // keep edges near the grid scale
                if (tri_label_[t0] != tri_label_[t1]) continue;  // interface edges stay
                tris_[t0] = n0;
                tris_[t1] = n1;
                ++flips;
                ++done;
            }
            if (done == 0) break;
        }
        return flips;
    }

    // A node move is accepted when it strictly improves the worst incident
    // angle, inverts nothing, and leaves every strict inside/outside
    // relation unchanged (labels were fixed before repair). On-curve nodes
    // move tangentially: the averaged position is projected back.
    int smooth_pass() {
        int moved = 0;
        auto nt = node_tris();
        auto adj = edge_adjacency(tris_);
        std::vector<std::vector<int>> nbr(nodes_.size());
        for (const auto& [e, ts] : adj) {
            nbr[e.a].push_back(e.b);
            nbr[e.b].push_back(e.a);
        }
        std::vector<char> boundary(nodes_.size(), 0);
        for (const auto& [e, ts] : adj)
            if (ts.size() == 1) boundary[e.a] = boundary[e.b] = 1;
        const double tol_on = 1e-12 * std::max(1.0, h_);
        for (int sweep = 0; sweep < 5; ++sweep) {
            int done = 0;
            for (std::size_t k = 0; k < nodes_.size(); ++k) {
                if (frozen_[k] || boundary[k] || nbr[k].empty()) continue;
                Vec2 target = Vec2::Zero();
                for (int j : nbr[k]) target += nodes_[j];
                target /= static_cast<double>(nbr[k].size());
                if (on_curve_[k] >= 0) target = shape::project(*curves_[on_curve_[k]], target);
                if ((target - nodes_[k]).norm() < 1e-12 * h_) continue;
                double angle_before = 1e30, angle_after = 1e30;
                for (int t : nt[k]) {
                    std::array<Vec2, 3> p, q;
                    for (int e = 0; e < 3; ++e) {
                        p[e] = nodes_[tris_[t][e]];
                        q[e] = (tris_[t][e] == static_cast<int>(k)) ? target : p[e];
                    }
                    angle_before = std::min(angle_before, tri_min_angle(p[0], p[1], p[2]));
                    if (tri_signed_area(q[0], q[1], q[2]) <= 1e-14 * h_ * h_) {
                        angle_after = -1.0;
                        break;
                    }
                    angle_after = std::min(angle_after, tri_min_angle(q[0], q[1], q[2]));
                }
                if (angle_after < 0.0) continue;
                double edge_before = 0.0, edge_after = 0.0;
                for (int j : nbr[k]) {
                    edge_before = std::max(edge_before, (nodes_[k] - nodes_[j]).norm());
                    edge_after = std::max(edge_after, (target - nodes_[j]).norm());
                }
                // better angles without stretching, or shorter edges without
                // dropping below a usable angle
                const double angle_floor = 25.0 * M_PI / 180.0;
                bool improves_angle = angle_after > angle_before + 1e-12 &&
                                      edge_after <= std::max(edge_before, 1.45 * h_);
                bool shortens = edge_after < edge_before - 1e-12 * h_ &&
                                angle_after >= std::min(angle_before, angle_floor);
                if (!improves_angle && !shortens) continue;
                if (on_curve_[k] < 0 && !sides_preserved(nodes_[k], target, tol_on)) continue;
                nodes_[k] = target;
                ++done;
                ++moved;
            }
            if (done == 0) break;
        }
        return moved;
    }

    // Strict side relations of a moved interior node must survive, including
    // not drifting onto a curve.
    bool sides_preserved(const Vec2& from, const Vec2& to, double tol_on) const {
        for (std::size_t c = 1; c < curves_.size(); ++c) {
            double sd_from = shape::signed_distance(*curves_[c], from);
            if (std::abs(sd_from) > 2.0 * h_) continue;  // far from this curve either way
            double sd_to = shape::signed_distance(*curves_[c], to);
            if (std::abs(sd_to) < tol_on) return false;
            if ((sd_from < 0.0) != (sd_to < 0.0)) return false;
        }
        if (!rect_aligned_) {
            double sd_to = shape::signed_distance(*curves_[0], to);
            if (sd_to > -tol_on) return false;  // interior nodes stay inside the domain
        }
        return true;
    }

    // The grid starts CCW and every repair step preserves orientation, so a
    // flipped or collapsed-to-zero triangle here means an internal bug, not
    // something to silently reorder.
    void fix_orientation() const {
        for (const auto& tri : tris_) {
            if (tri_signed_area(nodes_[tri[0]], nodes_[tri[1]], nodes_[tri[2]]) <= 1e-14 * h_ * h_)
                throw MeshError("internal: inverted or degenerate triangle after repair");
        }
    }

    void label_nodes(TriMesh& mesh) const {
        mesh.node_region.assign(mesh.nodes.size(), kBackground);
        for (std::size_t t = 0; t < mesh.tris.size(); ++t) {
            if (mesh.tri_region[t] < 0) continue;
            for (int v : mesh.tris[t]) {
                if (mesh.node_region[v] >= 0 && mesh.node_region[v] != mesh.tri_region[t])
                    throw MeshError("node " + std::to_string(v) +
                                    " is adjacent to two different inclusions; inclusions are not "
                                    "disjoint at mesh scale");
                mesh.node_region[v] = mesh.tri_region[t];
            }
        }
        // Dirichlet nodes: on the outer curve, or on the frame for aligned grids.
        if (rect_aligned_) {
            Vec2 lo, hi;
            axis_aligned_rectangle(spec_.outer, lo, hi);
            for (std::size_t k = 0; k < mesh.nodes.size(); ++k) {
                const Vec2& p = mesh.nodes[k];
                if (std::abs(p.x() - lo.x()) < 1e-12 || std::abs(p.x() - hi.x()) < 1e-12 ||
                    std::abs(p.y() - lo.y()) < 1e-12 || std::abs(p.y() - hi.y()) < 1e-12)
                    mesh.node_region[k] = kDirichlet;
            }
        } else {
            for (std::size_t k = 0; k < mesh.nodes.size(); ++k)
                if (on_curve_[k] == 0) mesh.node_region[k] = kDirichlet;
        }
    }

    void check_resolution(const TriMesh& mesh) const {
        int m = static_cast<int>(spec_.inclusions.size());
        std::vector<int> tri_count(m, 0), iface_edges(m, 0);
        for (int r : mesh.tri_region)
            if (r >= 0) ++tri_count[r];
        auto adj = edge_adjacency(mesh.tris);
        for (const auto& [e, ts] : adj) {
            if (ts.size() != 2) continue;
            int r0 = mesh.tri_region[ts[0]], r1 = mesh.tri_region[ts[1]];
            if (r0 != r1) {
                if (r0 >= 0) ++iface_edges[r0];
                if (r1 >= 0) ++iface_edges[r1];
            }
        }
        for (int i = 0; i < m; ++i) {
            if (tri_count[i] == 0 || iface_edges[i] < 3)
                throw MeshError("target_h too coarse to resolve inclusion " + std::to_string(i) +
                                " (fewer than 3 boundary edges)");
        }
    }

    void quality_warnings(TriMesh& mesh) const {
        MeshQuality q = mesh_quality_of(mesh);
        if (q.diam_ratio > spec_.q_max)
            mesh.warnings.push_back("quasi-uniformity ratio " + std::to_string(q.diam_ratio) +
                                    " exceeds q_max " + std::to_string(spec_.q_max));
        if (q.min_angle_deg < spec_.min_angle_deg)
            mesh.warnings.push_back("min angle " + std::to_string(q.min_angle_deg) +
                                    " below target " + std::to_string(spec_.min_angle_deg));
    }

public:
    static MeshQuality mesh_quality_of(const TriMesh& mesh);
};

}  // namespace detail

inline MeshQuality mesh_quality(const TriMesh& mesh) {
    if (mesh.tris.empty()) throw MeshError("mesh_quality: empty mesh");
    MeshQuality q;
    q.h_max = 0.0;
    q.h_min = std::numeric_limits<double>::max();
    q.min_angle_deg = 180.0;
    double diam_max = 0.0, diam_min = std::numeric_limits<double>::max();
    for (const auto& tri : mesh.tris) {
        double diam = 0.0;
        for (int e = 0; e < 3; ++e) {
            double len = (mesh.nodes[tri[e]] - mesh.nodes[tri[(e + 1) % 3]]).norm();
            q.h_max = std::max(q.h_max, len);
            q.h_min = std::min(q.h_min, len);
            diam = std::max(diam, len);
        }
        diam_max = std::max(diam_max, diam);
        diam_min = std::min(diam_min, diam);
        double ang = detail::tri_min_angle(mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]) *
                     180.0 / M_PI;
        q.min_angle_deg = std::min(q.min_angle_deg, ang);
    }
    q.q_ratio = q.h_max / q.h_min;
    q.diam_ratio = diam_max / diam_min;
    return q;
}

inline MeshQuality detail::Generator::mesh_quality_of(const TriMesh& mesh) {
    return mesh_quality(mesh);
}

// Assigns the block node ordering: inclusion closures first (block i
// contiguous), background free nodes after, Dirichlet nodes excluded.
// Idempotent; labels must be present.
inline TriMesh classify_and_order(TriMesh mesh) {
    if (mesh.node_region.size() != mesh.nodes.size())
        throw MeshError("classify_and_order: node labels missing");
    int m = mesh.num_inclusions;
    // guard against merged inclusions (a node incident to two inclusion labels
    // is impossible once labels are consistent, but labels may come from a file)
    {
        std::vector<int> seen(mesh.nodes.size(), kBackground);
        for (std::size_t t = 0; t < mesh.tris.size(); ++t) {
            int r = mesh.tri_region[t];
            if (r < 0) continue;
            for (int v : mesh.tris[t]) {
                if (seen[v] >= 0 && seen[v] != r)
                    throw MeshError("node " + std::to_string(v) +
                                    " is adjacent to two different inclusions; inclusions are not "
                                    "disjoint at mesh scale");
                seen[v] = r;
            }
        }
    }
    mesh.free_index.assign(mesh.nodes.size(), -1);
    mesh.block_offset.assign(m + 1, 0);
    mesh.free_to_node.clear();
    // stable by (region rank, node index); Dirichlet dropped
    for (int want = 0; want < m; ++want) {
        mesh.block_offset[want] = static_cast<int>(mesh.free_to_node.size());
        for (std::size_t k = 0; k < mesh.nodes.size(); ++k)
            if (mesh.node_region[k] == want) {
                mesh.free_index[k] = static_cast<int>(mesh.free_to_node.size());
                mesh.free_to_node.push_back(static_cast<int>(k));
            }
    }
    mesh.block_offset[m] = static_cast<int>(mesh.free_to_node.size());
    mesh.n = mesh.block_offset[m];
    for (std::size_t k = 0; k < mesh.nodes.size(); ++k)
        if (mesh.node_region[k] == kBackground) {
            mesh.free_index[k] = static_cast<int>(mesh.free_to_node.size());
            mesh.free_to_node.push_back(static_cast<int>(k));
        }
    mesh.N = static_cast<int>(mesh.free_to_node.size());
    mesh.n0 = mesh.N - mesh.n;
    mesh.ordered = true;
    return mesh;
}

// Structured background grid, boundary snapping to the inclusion polygons /
// disks, crossing-edge splits, then local quality repair. Deterministic for a
// fixed spec.
inline TriMesh generate_mesh(const DomainSpec& spec) {
    detail::Generator gen(spec);
    return gen.run();
}

// Sum of triangle areas per inclusion label (for convergence checks).
inline std::vector<double> inclusion_areas(const TriMesh& mesh) {
    std::vector<double> areas(mesh.num_inclusions, 0.0);
    for (std::size_t t = 0; t < mesh.tris.size(); ++t)
        if (mesh.tri_region[t] >= 0) areas[mesh.tri_region[t]] += std::abs(mesh.triangle_area(t));
    return areas;
}

}  // namespace hcsaddle
