// Exercises the installed CLI binary end to end (path arrives as argv[1]).
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace {

std::string g_cli_path;

int run_cli(const std::string& args) {
    std::string cmd = g_cli_path + " " + args + " > cli_stdout.txt 2> cli_stderr.txt";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path);
    os << content;
}

const char* kSmallConfig = R"({
  "schema": "hcsaddle-config v1",
  "geometry": {"outer_radius": 5.0, "m": 7, "inclusion_radius": 0.45, "layout": "concentric-rings"},
  "eps_mode": {"mode": "uniform", "values": [1e-4]},
  "mesh_target_N": 600,
  "tol": 1e-5,
  "maxit": 400,
  "methods": ["PL", "PCG"],
  "f_value": 50.0,
  "z0_seed": 7
})";

const char* kDomainSpec = R"({
  "schema": "hcsaddle-domain v1",
  "outer": {"type": "polygon", "vertices": [[0,0],[1,0],[1,1],[0,1]]},
  "inclusions": [{"type": "disk", "center": [0.5,0.5], "radius": 0.2, "eps": 1e-4}],
  "target_h": 0.0625
})";

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: test_cli <path-to-cli>\n");
        return 2;
    }
    g_cli_path = argv[1];
    Catch::Session session;
    return session.run(1, argv);
}

TEST_CASE("unknown flags exit with code 2") {
    REQUIRE(run_cli("--bogus") == 2);
    REQUIRE(run_cli("run --config x.json") == 2);  // missing required --out
}

TEST_CASE("bad config path exits with code 2") {
    REQUIRE(run_cli("run --config does_not_exist.json --out out.csv") == 2);
}

TEST_CASE("config with unknown keys exits with code 2") {
    write_file("bad_config.json", "{\"schema\": \"hcsaddle-config v1\", \"oops\": 1}");
    REQUIRE(run_cli("run --config bad_config.json --out out.csv") == 2);
}

TEST_CASE("mesh, solve and run cooperate on files") {
    write_file("cli_domain.json", kDomainSpec);
    REQUIRE(run_cli("mesh --spec cli_domain.json --out cli_mesh.txt") == 0);
    REQUIRE(slurp("cli_mesh.txt").rfind("hcsaddle-mesh v1", 0) == 0);

    REQUIRE(run_cli("mesh --spec cli_domain.json --out cli_mesh.msh --format msh2") == 0);
    REQUIRE(slurp("cli_mesh.msh").rfind("$MeshFormat", 0) == 0);

    REQUIRE(run_cli("solve --mesh cli_mesh.txt --eps 1e-6 --method PL --tol 1e-6 "
                    "--report cli_report.json") == 0);
    std::string report = slurp("cli_report.json");
    REQUIRE(report.find("\"method\": \"PL\"") != std::string::npos);
    REQUIRE(report.find("\"converged\": true") != std::string::npos);

    REQUIRE(run_cli("solve --mesh cli_mesh.msh --eps 1e-6 --method PCG --tol 1e-6") == 0);

    write_file("cli_config.json", kSmallConfig);
    REQUIRE(run_cli("run --config cli_config.json --out cli_table.csv --no-timings") == 0);
    std::string table = slurp("cli_table.csv");
    REQUIRE(table.rfind("eps_spec,N,n,method,iterations,converged,wall_ms,seed", 0) == 0);
    REQUIRE(table.find("PL") != std::string::npos);
    REQUIRE(table.find("PCG") != std::string::npos);
}

TEST_CASE("run is byte-identical across invocations without timings") {
    write_file("cli_config.json", kSmallConfig);
    REQUIRE(run_cli("run --config cli_config.json --out cli_a.csv --no-timings") == 0);
    REQUIRE(run_cli("run --config cli_config.json --out cli_b.csv --no-timings") == 0);
    REQUIRE(slurp("cli_a.csv") == slurp("cli_b.csv"));
}

TEST_CASE("markdown and json formats are accepted") {
    write_file("cli_config.json", kSmallConfig);
    REQUIRE(run_cli("run --config cli_config.json --out cli_t.md --format markdown") == 0);
    REQUIRE(slurp("cli_t.md").rfind("| eps_spec", 0) == 0);
    REQUIRE(run_cli("run --config cli_config.json --out cli_t.json --format json") == 0);
    REQUIRE(slurp("cli_t.json").rfind("[", 0) == 0);
}

TEST_CASE("verify subcommand passes on the default desk mesh") {
    REQUIRE(run_cli("verify --mesh-N 300") == 0);
    std::string out = slurp("cli_stdout.txt");
    REQUIRE(out.find("lemma1") != std::string::npos);
    REQUIRE(out.find("all checks passed") != std::string::npos);
}
