#pragma once

#include "hcsaddle/mesh.hpp"
#include "hcsaddle/solve.hpp"

#include <iomanip>
#include <set>

namespace hcsaddle {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inclusion layouts used in the experiments: concentric rings (1, 6, 12, 18,
// ... inclusions per ring) inside a disk, or a square lattice.
struct GeometryConfig {
    double outer_radius = 5.0;
    int m = 37;
    double inclusion_radius = 0.45;
    std::string layout = "concentric-rings";  // or "grid"
};

inline std::vector<Vec2> layout_centers(const GeometryConfig& g) {
    std::vector<Vec2> centers;
    double spacing = 1.35 * g.outer_radius / 5.0;
    if (g.layout == "concentric-rings") {
        centers.emplace_back(0.0, 0.0);
        for (int ring = 1; static_cast<int>(centers.size()) < g.m; ++ring) {
            int cnt = 6 * ring;
            for (int k = 0; k < cnt && static_cast<int>(centers.size()) < g.m; ++k) {
                double a = 2.0 * M_PI * k / cnt;
                centers.emplace_back(ring * spacing * std::cos(a), ring * spacing * std::sin(a));
            }
        }
    } else if (g.layout == "grid") {
        int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(g.m))));
        double half = 0.5 * (side - 1) * spacing;
        for (int j = 0; j < side && static_cast<int>(centers.size()) < g.m; ++j)
            for (int i = 0; i < side && static_cast<int>(centers.size()) < g.m; ++i)
                centers.emplace_back(i * spacing - half, j * spacing - half);
    } else {
        throw ConfigError("unknown layout '" + g.layout + "'");
    }
    return centers;
}

// Ring index of each inclusion (0 for the central one), for group-wise eps.
inline std::vector<int> layout_rings(const GeometryConfig& g) {
    std::vector<int> rings;
    if (g.layout == "concentric-rings") {
        rings.push_back(0);
        for (int ring = 1; static_cast<int>(rings.size()) < g.m; ++ring)
            for (int k = 0; k < 6 * ring && static_cast<int>(rings.size()) < g.m; ++k)
                rings.push_back(ring);
    } else {
        std::vector<Vec2> centers = layout_centers(g);
        double spacing = 1.35 * g.outer_radius / 5.0;
        for (const Vec2& c : centers)
            rings.push_back(static_cast<int>(std::lround(c.norm() / spacing)));
    }
    return rings;
}

inline int layout_ring_count(const GeometryConfig& g) {
    std::vector<int> rings = layout_rings(g);
    return *std::max_element(rings.begin(), rings.end()) + 1;
}

struct EpsMode {
    std::string mode = "uniform";          // uniform | groups | random
    std::vector<double> values;            // uniform: one table row per value
    std::vector<std::vector<double>> groups;  // groups: per-ring eps, one row per entry
    std::array<double, 2> range{1e-8, 1e-1};  // random
    std::vector<std::uint64_t> seeds;         // random: one row per seed
};

struct ExperimentConfig {
    GeometryConfig geometry;
    EpsMode eps_mode;
    int mesh_target_N = 5000;
    double tol = 1e-4;
    int maxit = 2000;
    std::vector<std::string> methods{"PL", "PCG"};
    double f_value = 50.0;
    std::uint64_t z0_seed = 7;

    void validate() const {
        if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("tol must lie in (0, 1)");
        if (mesh_target_N < 100) throw ConfigError("mesh_target_N must be at least 100");
        if (geometry.m < 1) throw ConfigError("geometry.m must be positive");
        if (eps_mode.mode == "groups") {
            int rings = layout_ring_count(geometry);
            for (const auto& g : eps_mode.groups)
                if (static_cast<int>(g.size()) != rings)
                    throw ConfigError("groups entries must have one eps per ring (" +
                                      std::to_string(rings) + ")");
            if (eps_mode.groups.empty()) throw ConfigError("groups mode needs at least one entry");
        } else if (eps_mode.mode == "uniform") {
            if (eps_mode.values.empty()) throw ConfigError("uniform mode needs at least one value");
        } else if (eps_mode.mode == "random") {
            if (eps_mode.seeds.empty()) throw ConfigError("random mode needs at least one seed");
            if (!(eps_mode.range[0] > 0.0 && eps_mode.range[1] >= eps_mode.range[0]))
                throw ConfigError("random range must satisfy 0 < lo <= hi");
        } else {
            throw ConfigError("unknown eps mode '" + eps_mode.mode + "'");
        }
        for (const auto& m : methods)
            if (m != "PL" && m != "PCG") throw ConfigError("unknown method '" + m + "'");
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    detail::reject_unknown_keys(j,
                                {"schema", "geometry", "eps_mode", "mesh_target_N", "tol", "maxit",
                                 "methods", "f_value", "z0_seed"},
                                "config");
    if (!j.contains("schema") || j["schema"] != "hcsaddle-config v1")
        throw ConfigError("config schema must be 'hcsaddle-config v1'");
    ExperimentConfig c;
    if (j.contains("geometry")) {
        const auto& g = j["geometry"];
        detail::reject_unknown_keys(g, {"outer_radius", "m", "inclusion_radius", "layout"},
                                    "geometry");
        c.geometry.outer_radius = g.value("outer_radius", c.geometry.outer_radius);
        c.geometry.m = g.value("m", c.geometry.m);
        c.geometry.inclusion_radius = g.value("inclusion_radius", c.geometry.inclusion_radius);
        c.geometry.layout = g.value("layout", c.geometry.layout);
    }
    if (j.contains("eps_mode")) {
        const auto& e = j["eps_mode"];
        detail::reject_unknown_keys(e, {"mode", "values", "groups", "range", "seeds"}, "eps_mode");
        c.eps_mode.mode = e.value("mode", c.eps_mode.mode);
        if (e.contains("values")) c.eps_mode.values = e["values"].get<std::vector<double>>();
        if (e.contains("groups"))
            c.eps_mode.groups = e["groups"].get<std::vector<std::vector<double>>>();
        if (e.contains("range")) {
            auto r = e["range"].get<std::vector<double>>();
            if (r.size() != 2) throw ConfigError("range must have two entries");
            c.eps_mode.range = {r[0], r[1]};
        }
        if (e.contains("seeds")) c.eps_mode.seeds = e["seeds"].get<std::vector<std::uint64_t>>();
    }
    c.mesh_target_N = j.value("mesh_target_N", c.mesh_target_N);
    c.tol = j.value("tol", c.tol);
    c.maxit = j.value("maxit", c.maxit);
    if (j.contains("methods")) c.methods = j["methods"].get<std::vector<std::string>>();
    c.f_value = j.value("f_value", c.f_value);
    c.z0_seed = j.value("z0_seed", c.z0_seed);
    c.validate();
    return c;
}

inline DomainSpec domain_from_geometry(const GeometryConfig& g, int mesh_target_N,
                                       const std::vector<double>& eps) {
    DomainSpec spec;
    spec.outer = Disk{{0.0, 0.0}, g.outer_radius};
    std::vector<Vec2> centers = layout_centers(g);
    for (std::size_t i = 0; i < centers.size(); ++i)
        spec.inclusions.push_back({Disk{centers[i], g.inclusion_radius},
                                   eps.empty() ? 1e-4 : eps[i % eps.size()]});
    spec.target_h = std::sqrt(M_PI * g.outer_radius * g.outer_radius / mesh_target_N);
    return spec;
}

struct ResultRow {
    std::string eps_spec;
    int N = 0, n = 0;
    std::string method;
    int iterations = 0;
    bool converged = false;
    double wall_ms = 0.0;
    std::uint64_t seed = 0;
};

// One eps assignment expanded from the mode, with its table label.
struct EpsAssignment {
    std::string label;
    std::vector<double> eps;
    std::uint64_t seed = 0;
};

inline std::vector<EpsAssignment> expand_eps(const ExperimentConfig& c) {
    std::vector<EpsAssignment> rows;
    auto fmt = [](double v) {
        std::ostringstream ss;
        ss << std::scientific << std::setprecision(0) << v;
        return ss.str();
    };
    if (c.eps_mode.mode == "uniform") {
        for (double v : c.eps_mode.values)
            rows.push_back({"uniform:" + fmt(v), std::vector<double>(c.geometry.m, v), 0});
    } else if (c.eps_mode.mode == "groups") {
        std::vector<int> rings = layout_rings(c.geometry);
        for (const auto& g : c.eps_mode.groups) {
            std::vector<double> eps(c.geometry.m);
            for (int i = 0; i < c.geometry.m; ++i) eps[i] = g[rings[i]];
            std::string label = "groups:";
            for (std::size_t k = 0; k < g.size(); ++k) label += (k ? "," : "") + fmt(g[k]);
            rows.push_back({label, std::move(eps), 0});
        }
    } else {
        for (std::uint64_t seed : c.eps_mode.seeds) {
            std::mt19937_64 rng(seed);
            double llo = std::log10(c.eps_mode.range[0]), lhi = std::log10(c.eps_mode.range[1]);
            std::vector<double> eps(c.geometry.m);
            for (int i = 0; i < c.geometry.m; ++i) {
                double u = (rng() >> 11) * 0x1.0p-53;
                eps[i] = std::pow(10.0, llo + u * (lhi - llo));
            }
            rows.push_back({"random:" + fmt(c.eps_mode.range[0]) + ".." + fmt(c.eps_mode.range[1]) +
                                ":seed=" + std::to_string(seed),
                            std::move(eps), seed});
        }
    }
    return rows;
}

// Full pipeline: mesh once, assemble once, factor A and the B blocks once,
// then run the requested methods per eps assignment. PCG runs on the primal
// system, PL on the saddle system, same tolerance. Non-convergence (including
// a Lanczos breakdown) lands in the row, never as an exception.
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& config,
                                             std::ostream* log = nullptr) {
    config.validate();
    std::vector<EpsAssignment> assignments = expand_eps(config);
    DomainSpec spec = domain_from_geometry(config.geometry, config.mesh_target_N,
                                           assignments.front().eps);
    TriMesh mesh = generate_mesh(spec);
    if (log) {
        *log << "mesh: N=" << mesh.N << " n=" << mesh.n << " m=" << mesh.num_inclusions << "\n";
        for (const auto& w : mesh.warnings) *log << "warning: " << w << "\n";
    }
    FemBlocks blocks = assemble_blocks(mesh, assignments.front().eps, config.f_value);
    PrecondAction H(blocks);

    std::vector<ResultRow> rows;
    for (const auto& asg : assignments) {
        for (const std::string& method : config.methods) {
            ResultRow row;
            row.eps_spec = asg.label;
            row.N = mesh.N;
            row.n = mesh.n;
            row.method = method;
            row.seed = (asg.seed != 0) ? asg.seed : config.z0_seed;
            if (method == "PL") {
                SaddleOperator op(blocks, asg.eps);
                LanczosOptions opts;
                opts.tol = config.tol;
                opts.maxit = config.maxit;
                opts.seed = config.z0_seed;
                try {
                    auto [x, rep] = lanczos_solve(op, op.rhs(), H, make_z0(blocks, config.z0_seed),
                                                  opts);
                    row.iterations = rep.iterations;
                    row.converged = rep.converged;
                    row.wall_ms = rep.wall_ms;
                } catch (const SolverError& err) {
                    if (log) *log << "PL " << asg.label << ": " << err.what() << "\n";
                    row.iterations = config.maxit;
                    row.converged = false;
                }
            } else {
                SpMat K = assemble_primal(blocks, asg.eps);
                auto [x, rep] = pcg_solve(K, blocks.F, H.pa_solve, config.tol, config.maxit);
                row.iterations = rep.iterations;
                row.converged = rep.converged;
                row.wall_ms = rep.wall_ms;
            }
            if (log)
                *log << row.method << " " << row.eps_spec << ": " << row.iterations
                     << (row.converged ? "" : " (not converged)") << "\n";
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

enum class TableFormat { Csv, Json, Markdown };

inline TableFormat table_format_from_string(const std::string& s) {
    if (s == "csv") return TableFormat::Csv;
    if (s == "json") return TableFormat::Json;
    if (s == "markdown") return TableFormat::Markdown;
    throw ConfigError("unknown table format '" + s + "'");
}

// Stable column order; timings can be suppressed for byte-identical output
// across runs.
inline void emit_table(const std::vector<ResultRow>& rows, std::ostream& os, TableFormat format,
                       bool include_timings = true) {
    auto wall = [&](const ResultRow& r) { return include_timings ? r.wall_ms : 0.0; };
    if (format == TableFormat::Csv) {
        os << "eps_spec,N,n,method,iterations,converged,wall_ms,seed\n";
        for (const auto& r : rows)
            os << r.eps_spec << ',' << r.N << ',' << r.n << ',' << r.method << ',' << r.iterations
               << ',' << (r.converged ? "true" : "false") << ',' << wall(r) << ',' << r.seed << '\n';
    } else if (format == TableFormat::Json) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : rows)
            arr.push_back({{"eps_spec", r.eps_spec},
                           {"N", r.N},
                           {"n", r.n},
                           {"method", r.method},
                           {"iterations", r.iterations},
                           {"converged", r.converged},
                           {"wall_ms", wall(r)},
                           {"seed", r.seed}});
        os << arr.dump(2) << '\n';
    } else {
        os << "| eps_spec | N | n | method | iterations | converged | wall_ms | seed |\n";
        os << "|---|---|---|---|---|---|---|---|\n";
        for (const auto& r : rows)
            os << "| " << r.eps_spec << " | " << r.N << " | " << r.n << " | " << r.method << " | "
               << r.iterations << " | " << (r.converged ? "true" : "false") << " | " << wall(r)
               << " | " << r.seed << " |\n";
    }
}

inline std::vector<ResultRow> parse_table_json(const nlohmann::json& arr) {
    std::vector<ResultRow> rows;
    for (const auto& j : arr) {
        ResultRow r;
        r.eps_spec = j.at("eps_spec").get<std::string>();
        r.N = j.at("N").get<int>();
        r.n = j.at("n").get<int>();
        r.method = j.at("method").get<std::string>();
        r.iterations = j.at("iterations").get<int>();
        r.converged = j.at("converged").get<bool>();
        r.wall_ms = j.at("wall_ms").get<double>();
        r.seed = j.at("seed").get<std::uint64_t>();
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace hcsaddle
