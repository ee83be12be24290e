#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace hcsaddle {

using Vec2 = Eigen::Vector2d;

struct BBox {
    Vec2 lo{0.0, 0.0};
    Vec2 hi{0.0, 0.0};

    void expand(const Vec2& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    bool contains(const Vec2& p, double pad = 0.0) const {
        return p.x() >= lo.x() - pad && p.x() <= hi.x() + pad &&
               p.y() >= lo.y() - pad && p.y() <= hi.y() + pad;
    }
};

struct Disk {
    Vec2 center{0.0, 0.0};
    double radius = 1.0;
};

// Vertices in counterclockwise order, closed implicitly (last connects to first).
struct Polygon {
    std::vector<Vec2> vertices;
};

using Shape = std::variant<Disk, Polygon>;

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace shape {

inline double polygon_signed_area(const Polygon& poly) {
    double s = 0.0;
    const auto& v = poly.vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec2& a = v[i];
        const Vec2& b = v[(i + 1) % v.size()];
        s += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * s;
}

inline bool point_in_polygon(const Polygon& poly, const Vec2& p) {
    // Crossing number; points exactly on an edge count as inside.
    const auto& v = poly.vertices;
    bool in = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        const Vec2& a = v[j];
        const Vec2& b = v[i];
        if ((b.y() > p.y()) != (a.y() > p.y())) {
            double xc = b.x() + (p.y() - b.y()) * (a.x() - b.x()) / (a.y() - b.y());
            if (p.x() < xc) in = !in;
        }
    }
    return in;
}

inline Vec2 closest_point_on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
    Vec2 ab = b - a;
    double t = ab.squaredNorm() > 0 ? (p - a).dot(ab) / ab.squaredNorm() : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return a + t * ab;
}

inline Vec2 project_to_boundary(const Polygon& poly, const Vec2& p) {
    const auto& v = poly.vertices;
    Vec2 best = v[0];
    double bd = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < v.size(); ++i) {
        Vec2 q = closest_point_on_segment(v[i], v[(i + 1) % v.size()], p);
        double d = (q - p).squaredNorm();
        if (d < bd) {
            bd = d;
            best = q;
        }
    }
    return best;
}

inline bool inside(const Shape& s, const Vec2& p) {
    if (const Disk* d = std::get_if<Disk>(&s))
        return (p - d->center).norm() <= d->radius;
    return point_in_polygon(std::get<Polygon>(s), p);
}

// Negative inside, positive outside.
inline double signed_distance(const Shape& s, const Vec2& p) {
    if (const Disk* d = std::get_if<Disk>(&s))
        return (p - d->center).norm() - d->radius;
    const Polygon& poly = std::get<Polygon>(s);
    double dist = (project_to_boundary(poly, p) - p).norm();
    return point_in_polygon(poly, p) ? -dist : dist;
}

inline Vec2 project(const Shape& s, const Vec2& p) {
    if (const Disk* d = std::get_if<Disk>(&s)) {
        Vec2 r = p - d->center;
        double len = r.norm();
        if (len < 1e-14 * d->radius) return d->center + Vec2(d->radius, 0.0);
        return d->center + r * (d->radius / len);
    }
    return project_to_boundary(std::get<Polygon>(s), p);
}

inline BBox bounding_box(const Shape& s) {
    if (const Disk* d = std::get_if<Disk>(&s)) {
        return {d->center - Vec2(d->radius, d->radius), d->center + Vec2(d->radius, d->radius)};
    }
    const Polygon& poly = std::get<Polygon>(s);
    BBox box{poly.vertices[0], poly.vertices[0]};
    for (const Vec2& v : poly.vertices) box.expand(v);
    return box;
}

inline double diameter(const Shape& s) {
    if (const Disk* d = std::get_if<Disk>(&s)) return 2.0 * d->radius;
    const auto& v = std::get<Polygon>(s).vertices;
    double dmax = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j)
            dmax = std::max(dmax, (v[i] - v[j]).norm());
    return dmax;
}

inline double area(const Shape& s) {
    if (const Disk* d = std::get_if<Disk>(&s)) return M_PI * d->radius * d->radius;
    return std::abs(polygon_signed_area(std::get<Polygon>(s)));
}

inline std::vector<Vec2> corners(const Shape& s) {
    if (std::holds_alternative<Disk>(s)) return {};
    return std::get<Polygon>(s).vertices;
}

// Distance between the boundaries of two shapes, zero if they intersect or nest.
inline double boundary_gap(const Shape& a, const Shape& b) {
    if (const Disk* da = std::get_if<Disk>(&a)) {
        if (const Disk* db = std::get_if<Disk>(&b)) {
            double d = (da->center - db->center).norm() - da->radius - db->radius;
            return std::max(0.0, d);
        }
    }
    // Polygon involved: sample boundary points of a, project onto b.
    auto samples = [](const Shape& s) {
        std::vector<Vec2> pts;
        if (const Disk* d = std::get_if<Disk>(&s)) {
            for (int k = 0; k < 64; ++k) {
                double t = 2.0 * M_PI * k / 64;
                pts.push_back(d->center + d->radius * Vec2(std::cos(t), std::sin(t)));
            }
        } else {
            const auto& v = std::get<Polygon>(s).vertices;
            for (std::size_t i = 0; i < v.size(); ++i) {
                for (int k = 0; k < 8; ++k)
                    pts.push_back(v[i] + (v[(i + 1) % v.size()] - v[i]) * (k / 8.0));
            }
        }
        return pts;
    };
    double gap = std::numeric_limits<double>::max();
    for (const Vec2& p : samples(a)) {
        if (inside(b, p)) return 0.0;
        gap = std::min(gap, std::abs(signed_distance(b, p)));
    }
    for (const Vec2& p : samples(b))
        if (inside(a, p)) return 0.0;
    return gap;
}

}  // namespace shape

// Geometric description of the computational domain: an outer boundary with
// homogeneous Dirichlet condition and m disjoint inclusions carrying contrast
// parameters eps_i >= 0 (0 selects the limit problem of perfectly conducting
// inclusions).
struct InclusionSpec {
    Shape shape;
    double eps = 1e-6;
};

struct DomainSpec {
    Shape outer;
    std::vector<InclusionSpec> inclusions;
    double target_h = 0.1;
    double gap_factor = 0.5;   // warn when gaps fall below gap_factor * max diameter
    double q_max = 4.0;        // quasi-uniformity target, warn beyond
    double min_angle_deg = 20.0;
};

// Hard violations throw GeometryError; soft ones (gap regime) come back as warnings.
inline std::vector<std::string> validate(const DomainSpec& spec) {
    std::vector<std::string> warnings;
    if (!(spec.target_h > 0.0)) throw GeometryError("target_h must be positive");
    double max_diam = 0.0;
    for (std::size_t i = 0; i < spec.inclusions.size(); ++i) {
        const auto& inc = spec.inclusions[i];
        if (inc.eps < 0.0)
            throw GeometryError("inclusion " + std::to_string(i) + " has negative eps");
        max_diam = std::max(max_diam, shape::diameter(inc.shape));
        // strictly inside the outer boundary
        BBox box = shape::bounding_box(inc.shape);
        for (const Vec2& c : {box.lo, box.hi, Vec2(box.lo.x(), box.hi.y()), Vec2(box.hi.x(), box.lo.y())}) {
            if (shape::signed_distance(spec.outer, c) >= 0.0)
                throw GeometryError("inclusion " + std::to_string(i) +
                                    " is not strictly inside the outer boundary");
        }
    }
    for (std::size_t i = 0; i < spec.inclusions.size(); ++i) {
        for (std::size_t j = i + 1; j < spec.inclusions.size(); ++j) {
            double gap = shape::boundary_gap(spec.inclusions[i].shape, spec.inclusions[j].shape);
            if (gap <= 0.0)
                throw GeometryError("inclusions " + std::to_string(i) + " and " + std::to_string(j) +
                                    " are not disjoint");
            if (gap < spec.gap_factor * max_diam)
                warnings.push_back("gap between inclusions " + std::to_string(i) + " and " +
                                   std::to_string(j) + " (" + std::to_string(gap) +
                                   ") is below gap_factor * max diameter; iteration counts may degrade");
        }
    }
    return warnings;
}

}  // namespace hcsaddle
