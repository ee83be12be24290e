#include "hcsaddle/mesh_io.hpp"
#include "hcsaddle/verify.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

using namespace hcsaddle;

namespace {

void require_same_mesh(const TriMesh& a, const TriMesh& b, double coord_tol) {
    REQUIRE(a.nodes.size() == b.nodes.size());
    REQUIRE(a.tris == b.tris);
    REQUIRE(a.node_region == b.node_region);
    REQUIRE(a.tri_region == b.tri_region);
    for (std::size_t k = 0; k < a.nodes.size(); ++k)
        REQUIRE((a.nodes[k] - b.nodes[k]).norm() <= coord_tol);
}

}  // namespace

TEST_CASE("native round trip on the 8-triangle unit square") {
    DomainSpec spec;
    spec.outer = Polygon{{{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}}};
    spec.target_h = 0.5;
    TriMesh mesh = generate_mesh(spec);
    std::stringstream ss;
    write_mesh_native(mesh, ss);
    TriMesh back = read_mesh_native(ss);
    require_same_mesh(mesh, back, 0.0);  // %.17g reproduces doubles bit-exactly
    REQUIRE(back.N == 1);
}

TEST_CASE("native and msh2 round trips preserve an inclusion mesh") {
    TriMesh mesh = generate_mesh(desk_spec_four_inclusions(1.0 / 16.0));
    SECTION("native") {
        std::stringstream ss;
        write_mesh_native(mesh, ss);
        TriMesh back = read_mesh_native(ss);
        require_same_mesh(mesh, back, 1e-15);
        REQUIRE(back.block_offset == mesh.block_offset);
    }
    SECTION("msh2") {
        std::stringstream ss;
        write_mesh_msh2(mesh, ss);
        TriMesh back = read_mesh_msh2(ss);
        require_same_mesh(mesh, back, 1e-15);
        REQUIRE(back.N == mesh.N);
        REQUIRE(back.n == mesh.n);
    }
}

TEST_CASE("msh2 with a quad element is rejected") {
    std::string text =
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
        "$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n"
        "$Elements\n1\n1 3 2 1 0 1 2 3 4\n$EndElements\n";
    std::stringstream ss(text);
    REQUIRE_THROWS_WITH(read_mesh_msh2(ss),
                        Catch::Matchers::ContainsSubstring("unsupported element type 3"));
}

TEST_CASE("msh2 with a tetrahedron reports unsupported dimension") {
    std::string text =
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n"
        "$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 0\n$EndNodes\n"
        "$Elements\n1\n1 4 2 1 0 1 2 3 4\n$EndElements\n";
    std::stringstream ss(text);
    REQUIRE_THROWS_WITH(read_mesh_msh2(ss),
                        Catch::Matchers::ContainsSubstring("unsupported dimension"));
}

TEST_CASE("native file with a duplicated node id names the id") {
    std::string text =
        "hcsaddle-mesh v1\n"
        "node 0 0 0 bg\n"
        "node 1 1 0 bg\n"
        "node 1 0 1 bg\n"
        "tri 0 0 1 1 bg\n";
    std::stringstream ss(text);
    REQUIRE_THROWS_WITH(read_mesh_native(ss),
                        Catch::Matchers::ContainsSubstring("duplicate node id 1"));
}

TEST_CASE("native parse errors carry the line number") {
    std::string text = "hcsaddle-mesh v1\nnode 0 0 0 bg\nnode 1 oops 0 bg\n";
    std::stringstream ss(text);
    try {
        read_mesh_native(ss, "mesh.txt");
        FAIL("expected a parse error");
    } catch (const MeshParseError& e) {
        REQUIRE(e.line() == 3);
        REQUIRE(std::string(e.what()).find("mesh.txt:3") != std::string::npos);
    }
}

TEST_CASE("unknown labels and bad headers are rejected") {
    {
        std::stringstream ss("hcsaddle-mesh v2\n");
        REQUIRE_THROWS_WITH(read_mesh_native(ss), Catch::Matchers::ContainsSubstring("bad header"));
    }
    {
        std::stringstream ss("hcsaddle-mesh v1\nnode 0 0 0 blue\n");
        REQUIRE_THROWS_WITH(read_mesh_native(ss),
                            Catch::Matchers::ContainsSubstring("unknown label"));
    }
}

TEST_CASE("format sniffing reads both formats through the front door") {
    TriMesh mesh = generate_mesh(desk_spec_one_inclusion(1.0 / 12.0));
    write_mesh(mesh, "io_test_native.txt", MeshFormat::NativeText);
    write_mesh(mesh, "io_test_gmsh.msh", MeshFormat::Msh2);
    TriMesh a = read_mesh("io_test_native.txt");
    TriMesh b = read_mesh("io_test_gmsh.msh");
    require_same_mesh(a, b, 1e-15);
    std::remove("io_test_native.txt");
    std::remove("io_test_gmsh.msh");
}
