#pragma once

#include "hcsaddle/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace hcsaddle {

class MeshParseError : public MeshError {
public:
    MeshParseError(const std::string& path, std::size_t line, const std::string& what)
        : MeshError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

enum class MeshFormat { NativeText, Msh2 };

namespace detail {

inline std::string label_to_string(int region) {
    if (region == kDirichlet) return "gamma";
    if (region == kBackground) return "bg";
    return "inc:" + std::to_string(region);
}

inline int label_from_string(const std::string& s, const std::string& path, std::size_t line) {
    if (s == "gamma") return kDirichlet;
    if (s == "bg") return kBackground;
    if (s.rfind("inc:", 0) == 0) {
        try {
            return std::stoi(s.substr(4));
        } catch (const std::exception&) {
        }
    }
    throw MeshParseError(path, line, "unknown label '" + s + "'");
}

// Gmsh physical tags: 1 = background surface, 2+i = inclusion i, 1000 = Gamma lines.
inline constexpr int kMshBackgroundTag = 1;
inline constexpr int kMshInclusionBase = 2;
inline constexpr int kMshGammaTag = 1000;

}  // namespace detail

// --- native text -----------------------------------------------------------
//
//   hcsaddle-mesh v1
//   node <id> <x> <y> <label>
//   tri <id> <a> <b> <c> <label>
//
// labels: bg, inc:<i>, gamma (nodes only)

inline void write_mesh_native(const TriMesh& mesh, std::ostream& os) {
    os << "hcsaddle-mesh v1\n";
    for (std::size_t k = 0; k < mesh.nodes.size(); ++k)
        os << "node " << k << ' ' << detail::format_double(mesh.nodes[k].x()) << ' '
           << detail::format_double(mesh.nodes[k].y()) << ' '
           << detail::label_to_string(mesh.node_region[k]) << '\n';
    for (std::size_t t = 0; t < mesh.tris.size(); ++t)
        os << "tri " << t << ' ' << mesh.tris[t][0] << ' ' << mesh.tris[t][1] << ' '
           << mesh.tris[t][2] << ' ' << detail::label_to_string(mesh.tri_region[t]) << '\n';
}

inline TriMesh read_mesh_native(std::istream& is, const std::string& path = "<stream>") {
    TriMesh mesh;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(is, line)) throw MeshParseError(path, 1, "empty file");
    ++lineno;
    if (line != "hcsaddle-mesh v1")
        throw MeshParseError(path, lineno, "bad header, expected 'hcsaddle-mesh v1'");
    std::vector<char> seen_node;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string kind;
        ss >> kind;
        if (kind == "node") {
            long id;
            double x, y;
            std::string lab;
            if (!(ss >> id >> x >> y >> lab))
                throw MeshParseError(path, lineno, "malformed node line");
            if (id < 0) throw MeshParseError(path, lineno, "negative node id");
            if (static_cast<std::size_t>(id) >= mesh.nodes.size()) {
                mesh.nodes.resize(id + 1, Vec2::Zero());
                mesh.node_region.resize(id + 1, kBackground);
                seen_node.resize(id + 1, 0);
            }
            if (seen_node[id])
                throw MeshParseError(path, lineno, "duplicate node id " + std::to_string(id));
            seen_node[id] = 1;
            mesh.nodes[id] = Vec2(x, y);
            mesh.node_region[id] = detail::label_from_string(lab, path, lineno);
        } else if (kind == "tri") {
            long id, a, b, c;
            std::string lab;
            if (!(ss >> id >> a >> b >> c >> lab))
                throw MeshParseError(path, lineno, "malformed tri line");
            int region = detail::label_from_string(lab, path, lineno);
            if (region == kDirichlet)
                throw MeshParseError(path, lineno, "triangles cannot carry label 'gamma'");
            mesh.tris.push_back({static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)});
            mesh.tri_region.push_back(region);
        } else {
            throw MeshParseError(path, lineno, "unknown record '" + kind + "'");
        }
    }
    for (std::size_t k = 0; k < seen_node.size(); ++k)
        if (!seen_node[k]) throw MeshParseError(path, lineno, "missing node id " + std::to_string(k));
    for (std::size_t t = 0; t < mesh.tris.size(); ++t)
        for (int v : mesh.tris[t])
            if (v < 0 || static_cast<std::size_t>(v) >= mesh.nodes.size())
                throw MeshParseError(path, lineno,
                                     "triangle " + std::to_string(t) + " references missing node " +
                                         std::to_string(v));
    for (int r : mesh.tri_region) mesh.num_inclusions = std::max(mesh.num_inclusions, r + 1);
    for (int r : mesh.node_region) mesh.num_inclusions = std::max(mesh.num_inclusions, r + 1);
    return classify_and_order(std::move(mesh));
}

// --- Gmsh v2.2 ASCII subset --------------------------------------------------
//
// Sections: $MeshFormat, optional $PhysicalNames, $Nodes, $Elements.
// Elements: type 1 (2-node line, Gamma boundary) and type 2 (3-node triangle).
// Region labels ride on physical tags.

inline void write_mesh_msh2(const TriMesh& mesh, std::ostream& os) {
    os << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
    os << "$PhysicalNames\n" << (mesh.num_inclusions + 2) << "\n";
    os << "1 " << detail::kMshGammaTag << " \"gamma\"\n";
    os << "2 " << detail::kMshBackgroundTag << " \"bg\"\n";
    for (int i = 0; i < mesh.num_inclusions; ++i)
        os << "2 " << (detail::kMshInclusionBase + i) << " \"inc:" << i << "\"\n";
    os << "$EndPhysicalNames\n";
    os << "$Nodes\n" << mesh.nodes.size() << "\n";
    for (std::size_t k = 0; k < mesh.nodes.size(); ++k)
        os << (k + 1) << ' ' << detail::format_double(mesh.nodes[k].x()) << ' '
           << detail::format_double(mesh.nodes[k].y()) << " 0\n";
    os << "$EndNodes\n";
    // boundary lines: edges whose both endpoints are Dirichlet and that belong
    // to exactly one triangle
    std::vector<std::pair<int, int>> gamma_edges;
    {
        auto adj = detail::edge_adjacency(mesh.tris);
        for (const auto& [e, ts] : adj)
            if (ts.size() == 1 && mesh.node_region[e.a] == kDirichlet &&
                mesh.node_region[e.b] == kDirichlet)
                gamma_edges.emplace_back(e.a, e.b);
    }
    os << "$Elements\n" << (gamma_edges.size() + mesh.tris.size()) << "\n";
    std::size_t eid = 1;
    for (const auto& [a, b] : gamma_edges)
        os << eid++ << " 1 2 " << detail::kMshGammaTag << " 0 " << (a + 1) << ' ' << (b + 1) << "\n";
    for (std::size_t t = 0; t < mesh.tris.size(); ++t) {
        int tag = mesh.tri_region[t] == kBackground ? detail::kMshBackgroundTag
                                                    : detail::kMshInclusionBase + mesh.tri_region[t];
        os << eid++ << " 2 2 " << tag << " 0 " << (mesh.tris[t][0] + 1) << ' '
           << (mesh.tris[t][1] + 1) << ' ' << (mesh.tris[t][2] + 1) << "\n";
    }
    os << "$EndElements\n";
}

inline TriMesh read_mesh_msh2(std::istream& is, const std::string& path = "<stream>") {
    TriMesh mesh;
    std::string line;
    std::size_t lineno = 0;
    auto next_line = [&]() -> std::string& {
        if (!std::getline(is, line)) throw MeshParseError(path, lineno, "unexpected end of file");
        ++lineno;
        return line;
    };
    auto expect_end = [&](const char* marker) {
        if (next_line() != marker)
            throw MeshParseError(path, lineno, std::string("expected ") + marker);
    };
    std::unordered_map<long, int> node_map;
    std::vector<std::pair<int, int>> gamma_edges;
    while (std::getline(is, line)) {
        ++lineno;
        if (line == "$MeshFormat") {
            std::istringstream ss(next_line());
            double version;
            int file_type;
            ss >> version >> file_type;
            if (!(version >= 2.0 && version < 3.0) || file_type != 0)
                throw MeshParseError(path, lineno, "unsupported msh version (need 2.x ASCII)");
            expect_end("$EndMeshFormat");
        } else if (line == "$PhysicalNames") {
            std::size_t count = std::stoul(next_line());
            for (std::size_t i = 0; i < count; ++i) next_line();
            expect_end("$EndPhysicalNames");
        } else if (line == "$Nodes") {
            std::size_t count = std::stoul(next_line());
            mesh.nodes.reserve(count);
            for (std::size_t i = 0; i < count; ++i) {
                std::istringstream ss(next_line());
                long id;
                double x, y, z;
                if (!(ss >> id >> x >> y >> z))
                    throw MeshParseError(path, lineno, "malformed node line");
                if (std::abs(z) > 1e-14)
                    throw MeshParseError(path, lineno, "unsupported dimension: node has z != 0");
                if (node_map.count(id))
                    throw MeshParseError(path, lineno, "duplicate node id " + std::to_string(id));
                node_map[id] = static_cast<int>(mesh.nodes.size());
                mesh.nodes.emplace_back(x, y);
            }
            expect_end("$EndNodes");
        } else if (line == "$Elements") {
            std::size_t count = std::stoul(next_line());
            for (std::size_t i = 0; i < count; ++i) {
                std::istringstream ss(next_line());
                long id;
                int type, ntags;
                if (!(ss >> id >> type >> ntags))
                    throw MeshParseError(path, lineno, "malformed element line");
                std::vector<int> tags(ntags);
                for (int& t : tags) ss >> t;
                int phys = ntags > 0 ? tags[0] : 0;
                auto read_node = [&]() {
                    long v;
                    if (!(ss >> v)) throw MeshParseError(path, lineno, "element is short of nodes");
                    auto it = node_map.find(v);
                    if (it == node_map.end())
                        throw MeshParseError(path, lineno,
                                             "element references missing node " + std::to_string(v));
                    return it->second;
                };
                if (type == 1) {
                    int a = read_node(), b = read_node();
                    if (phys == detail::kMshGammaTag) gamma_edges.emplace_back(a, b);
                } else if (type == 2) {
                    int a = read_node(), b = read_node(), c = read_node();
                    int region = phys == detail::kMshBackgroundTag
                                     ? kBackground
                                     : phys - detail::kMshInclusionBase;
                    if (phys != detail::kMshBackgroundTag && region < 0)
                        throw MeshParseError(path, lineno,
                                             "unknown physical tag " + std::to_string(phys));
                    mesh.tris.push_back({a, b, c});
                    mesh.tri_region.push_back(region);
                } else if (type == 15) {
                    read_node();  // stray point element: ignore
                } else if (type == 3) {
                    throw MeshParseError(path, lineno, "unsupported element type 3 (quad)");
                } else if (type >= 4 && type <= 7) {
                    throw MeshParseError(path, lineno,
                                         "unsupported dimension: 3D element type " +
                                             std::to_string(type));
                } else {
                    throw MeshParseError(path, lineno,
                                         "unsupported element type " + std::to_string(type));
                }
            }
            expect_end("$EndElements");
        }
        // other sections are skipped silently
    }
    if (mesh.nodes.empty() || mesh.tris.empty())
        throw MeshParseError(path, lineno, "missing $Nodes or $Elements section");
    // rebuild node labels: inclusion closure from triangle regions, Gamma from lines
    mesh.node_region.assign(mesh.nodes.size(), kBackground);
    for (std::size_t t = 0; t < mesh.tris.size(); ++t) {
        if (mesh.tri_region[t] < 0) continue;
        for (int v : mesh.tris[t]) mesh.node_region[v] = mesh.tri_region[t];
    }
    for (const auto& [a, b] : gamma_edges) {
        mesh.node_region[a] = kDirichlet;
        mesh.node_region[b] = kDirichlet;
    }
    for (int r : mesh.tri_region) mesh.num_inclusions = std::max(mesh.num_inclusions, r + 1);
    return classify_and_order(std::move(mesh));
}

// --- front door --------------------------------------------------------------

inline void write_mesh(const TriMesh& mesh, const std::string& path, MeshFormat format) {
    std::ofstream os(path);
    if (!os) throw MeshError("cannot open '" + path + "' for writing");
    if (format == MeshFormat::NativeText)
        write_mesh_native(mesh, os);
    else
        write_mesh_msh2(mesh, os);
}

inline TriMesh read_mesh(const std::string& path, MeshFormat format) {
    std::ifstream is(path);
    if (!is) throw MeshError("cannot open '" + path + "' for reading");
    return format == MeshFormat::NativeText ? read_mesh_native(is, path) : read_mesh_msh2(is, path);
}

// Sniffs the format from the first line.
inline TriMesh read_mesh(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw MeshError("cannot open '" + path + "' for reading");
    std::string first;
    std::getline(is, first);
    is.seekg(0);
    return first == "$MeshFormat" ? read_mesh_msh2(is, path) : read_mesh_native(is, path);
}

}  // namespace hcsaddle
