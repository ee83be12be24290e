// Command-line front end: mesh generation, single solves, the experiment
// pipeline, and the spectral verification suite.

#include "hcsaddle/experiments.hpp"
#include "hcsaddle/mesh_io.hpp"
#include "hcsaddle/verify.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

namespace {

using namespace hcsaddle;

nlohmann::json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad JSON in '") + path + "': " + e.what());
    }
    return j;
}

Shape parse_shape(const nlohmann::json& j, const std::string& where) {
    detail::reject_unknown_keys(j, {"type", "center", "radius", "vertices", "eps"}, where);
    std::string type = j.at("type").get<std::string>();
    if (type == "disk") {
        auto c = j.at("center").get<std::vector<double>>();
        if (c.size() != 2) throw ConfigError(where + ": center must have two coordinates");
        return Disk{{c[0], c[1]}, j.at("radius").get<double>()};
    }
    if (type == "polygon") {
        Polygon poly;
        for (const auto& v : j.at("vertices")) {
            auto p = v.get<std::vector<double>>();
            if (p.size() != 2) throw ConfigError(where + ": vertex must have two coordinates");
            poly.vertices.emplace_back(p[0], p[1]);
        }
        if (poly.vertices.size() < 3) throw ConfigError(where + ": polygon needs >= 3 vertices");
        return poly;
    }
    throw ConfigError(where + ": unknown shape type '" + type + "'");
}

DomainSpec parse_domain_spec(const nlohmann::json& j) {
    detail::reject_unknown_keys(
        j, {"schema", "outer", "inclusions", "target_h", "gap_factor"}, "domain spec");
    if (!j.contains("schema") || j["schema"] != "hcsaddle-domain v1")
        throw ConfigError("domain spec schema must be 'hcsaddle-domain v1'");
    DomainSpec spec;
    spec.outer = parse_shape(j.at("outer"), "outer");
    for (const auto& inc : j.at("inclusions")) {
        InclusionSpec is;
        is.shape = parse_shape(inc, "inclusion");
        is.eps = inc.value("eps", 1e-6);
        spec.inclusions.push_back(std::move(is));
    }
    spec.target_h = j.at("target_h").get<double>();
    spec.gap_factor = j.value("gap_factor", spec.gap_factor);
    return spec;
}

std::vector<double> parse_eps_list(const std::string& s, int m) {
    std::vector<double> eps;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        eps.push_back(std::stod(item));
    }
    if (eps.empty()) throw ConfigError("empty eps list");
    if (static_cast<int>(eps.size()) == 1) eps.assign(m, eps[0]);
    if (static_cast<int>(eps.size()) != m)
        throw ConfigError("eps list has " + std::to_string(eps.size()) + " entries, mesh has " +
                          std::to_string(m) + " inclusions");
    return eps;
}

int cmd_run(const std::string& config_path, const std::string& out_path, const std::string& format,
            bool no_timings) {
    ExperimentConfig config = parse_experiment_config(load_json(config_path));
    std::vector<ResultRow> rows = run_experiment(config, &std::cerr);
    std::ofstream os(out_path);
    if (!os) throw ConfigError("cannot open '" + out_path + "' for writing");
    emit_table(rows, os, table_format_from_string(format), !no_timings);
    std::cerr << "wrote " << rows.size() << " rows to " << out_path << "\n";
    return 0;
}

int cmd_mesh(const std::string& spec_path, const std::string& out_path, const std::string& format) {
    DomainSpec spec = parse_domain_spec(load_json(spec_path));
    TriMesh mesh = generate_mesh(spec);
    for (const auto& w : mesh.warnings) std::cerr << "warning: " << w << "\n";
    MeshQuality q = mesh_quality(mesh);
    std::cerr << "mesh: N=" << mesh.N << " n=" << mesh.n << " n0=" << mesh.n0
              << " tris=" << mesh.tris.size() << " h_max=" << q.h_max << " q=" << q.q_ratio
              << " min_angle=" << q.min_angle_deg << "\n";
    write_mesh(mesh, out_path,
               format == "msh2" ? MeshFormat::Msh2 : MeshFormat::NativeText);
    return 0;
}

int cmd_solve(const std::string& mesh_path, const std::string& eps_str, const std::string& method,
              double tol, int maxit, std::uint64_t seed, double f_value,
              const std::string& report_path) {
    TriMesh mesh = read_mesh(mesh_path);
    std::vector<double> eps = parse_eps_list(eps_str, mesh.num_inclusions);
    FemBlocks blocks = assemble_blocks(mesh, eps, f_value);
    SolveReport report;
    if (method == "PL") {
        SaddleOperator op(blocks, eps);
        PrecondAction H(blocks);
        LanczosOptions opts;
        opts.tol = tol;
        opts.maxit = maxit;
        opts.seed = seed;
        auto [x, rep] = lanczos_solve(op, op.rhs(), H, make_z0(blocks, seed), opts);
        report = rep;
    } else if (method == "PCG") {
        SpMat K = assemble_primal(blocks, eps);
        SpdCholesky pa(blocks.stiff.A);
        auto [x, rep] = pcg_solve(K, blocks.F, pa, tol, maxit);
        report = rep;
        report.eps = eps;
    } else {
        throw CLI::ValidationError("--method must be PL or PCG");
    }
    std::cout << report.method << ": " << report.iterations << " iterations, "
              << (report.converged ? "converged" : "NOT converged")
              << ", final residual " << report.residual_history.back() << "\n";
    if (!report_path.empty()) {
        std::ofstream os(report_path);
        if (!os) throw ConfigError("cannot open '" + report_path + "' for writing");
        os << to_json(report).dump(2) << "\n";
    }
    return report.converged ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"high-contrast saddle point solver"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment config");
    std::string run_config, run_out, run_format = "csv";
    bool run_no_timings = false;
    run->add_option("--config", run_config, "experiment config JSON")->required();
    run->add_option("--out", run_out, "output table path")->required();
    run->add_option("--format", run_format, "csv | json | markdown");
    run->add_flag("--no-timings", run_no_timings, "suppress wall_ms for byte-stable output");

    auto* verify = app.add_subcommand("verify", "run the spectral verification suite");
    int verify_mesh_n = 400;
    verify->add_option("--mesh-N", verify_mesh_n, "approximate desk mesh size");

    auto* meshc = app.add_subcommand("mesh", "generate a mesh from a domain spec");
    std::string mesh_spec, mesh_out, mesh_format = "native";
    meshc->add_option("--spec", mesh_spec, "domain spec JSON")->required();
    meshc->add_option("--out", mesh_out, "output mesh path")->required();
    meshc->add_option("--format", mesh_format, "native | msh2");

    auto* solve = app.add_subcommand("solve", "solve on an existing mesh");
    std::string solve_mesh, solve_eps, solve_method = "PL", solve_report;
    double solve_tol = 1e-6, solve_f = 50.0;
    int solve_maxit = 2000;
    std::uint64_t solve_seed = 7;
    solve->add_option("--mesh", solve_mesh, "mesh file (native or msh2)")->required();
    solve->add_option("--eps", solve_eps, "comma-separated eps list (or one value for all)")
        ->required();
    solve->add_option("--method", solve_method, "PL | PCG");
    solve->add_option("--tol", solve_tol, "relative residual tolerance");
    solve->add_option("--maxit", solve_maxit, "iteration cap");
    solve->add_option("--seed", solve_seed, "seed for the random initial guess");
    solve->add_option("--f", solve_f, "constant load value");
    solve->add_option("--report", solve_report, "write the solve report JSON here");

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(run_config, run_out, run_format, run_no_timings);
        if (verify->parsed()) {
            hcsaddle::SpectralReport rep = hcsaddle::run_verification_suite(verify_mesh_n);
            return rep.ok() ? 0 : 1;
        }
        if (meshc->parsed()) return cmd_mesh(mesh_spec, mesh_out, mesh_format);
        if (solve->parsed())
            return cmd_solve(solve_mesh, solve_eps, solve_method, solve_tol, solve_maxit, solve_seed,
                             solve_f, solve_report);
        return 2;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help exits clean, usage errors exit 2
    } catch (const hcsaddle::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
