#include <fstream>

#include "vloc/binary_io.hpp"
#include "vloc/errors.hpp"
#include "vloc/header_file.hpp"
#include "vloc/labels.hpp"
#include "vloc/message_passing.hpp"
#include "vloc/text_util.hpp"

namespace vloc::mp {

// VLOCKERNELS 1
// alpha <a>
// iterations <T>
// nodes <label>...
// edge <from> <to> <nx> <ny> <nz> <ax> <ay> <az>     (one per kernel, payload order)
// dtype float32
// byte_order little_endian
// end_header
void write_kernel_bundle(const ChainGraph& graph, const std::filesystem::path& path) {
    graph.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoError::Kind::Open, "cannot write " + path.string());
    os << "VLOCKERNELS " << kKernelBundleVersion << '\n';
    os << "alpha " << format_double(graph.alpha) << '\n';
    os << "iterations " << graph.iterations << '\n';
    os << "nodes";
    for (const auto& n : graph.nodes) os << ' ' << n;
    os << '\n';
    for (const auto& [edge, k] : graph.kernels) {
        os << "edge " << graph.nodes[edge.first] << ' ' << graph.nodes[edge.second] << ' ' << k.dims.nx << ' '
           << k.dims.ny << ' ' << k.dims.nz << ' ' << k.anchor.x << ' ' << k.anchor.y << ' ' << k.anchor.z << '\n';
    }
    os << "dtype float32\nbyte_order little_endian\nend_header\n";
    for (const auto& [edge, k] : graph.kernels) detail::write_f32_le(os, k.weights);
    if (!os) throw IoError(IoError::Kind::UnreadablePayload, "write failed for " + path.string());
}

ChainGraph read_kernel_bundle(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoError::Kind::Open, "cannot open " + path.string());
    const auto h = detail::read_text_header(is, path, "VLOCKERNELS");
    auto bad = [&](const std::string& why) {
        throw IoError(IoError::Kind::MalformedHeader, path.string() + ": " + why);
    };
    if (h.version != kKernelBundleVersion) bad("unsupported version " + std::to_string(h.version));

    ChainGraph g;
    std::vector<std::pair<std::pair<int, int>, Kernel3D>> edges;
    for (const auto& l : h.lines) {
        const auto& key = l[0];
        if (key == "alpha") {
            if (l.size() != 2 || !parse_double(l[1], g.alpha)) bad("bad alpha");
        } else if (key == "iterations") {
            if (l.size() != 2 || !parse_int(l[1], g.iterations)) bad("bad iterations");
        } else if (key == "nodes") {
            g.nodes.assign(l.begin() + 1, l.end());
        } else if (key == "edge") {
            if (l.size() != 9) bad("edge lines need 8 fields");
            auto node = [&](const std::string& name) {
                for (std::size_t i = 0; i < g.nodes.size(); ++i)
                    if (g.nodes[i] == name) return static_cast<int>(i);
                bad("edge refers to unknown node " + name);
                return -1;
            };
            Kernel3D k;
            int v[6];
            for (int i = 0; i < 6; ++i)
                if (!parse_int(l[3 + i], v[i])) bad("bad edge geometry");
            k.dims = {v[0], v[1], v[2]};
            k.anchor = {v[3], v[4], v[5]};
            if (k.dims.nx <= 0 || k.dims.ny <= 0 || k.dims.nz <= 0 || k.dims.nx % 2 == 0 || k.dims.ny % 2 == 0 ||
                k.dims.nz % 2 == 0 || !k.dims.contains(k.anchor))
                bad("edge kernel dims must be odd with the anchor inside");
            edges.push_back({{node(l[1]), node(l[2])}, std::move(k)});
        } else if (key == "dtype") {
            if (l.size() != 2 || l[1] != "float32") bad("dtype must be float32");
        } else if (key == "byte_order") {
            if (l.size() != 2 || l[1] != "little_endian") bad("byte_order must be little_endian");
        } else {
            bad("unknown key " + key);
        }
    }
    try {
        validate_label_ordering(g.nodes);
    } catch (const InvalidArgument& e) {
        bad(e.what());
    }

    std::uintmax_t expected = 0;
    for (const auto& e : edges) expected += e.second.dims.count() * 4;
    if (expected != h.payload_bytes)
        throw IoError(IoError::Kind::SizeMismatch, path.string() + ": payload has " + std::to_string(h.payload_bytes) +
                                                       " bytes, manifest implies " + std::to_string(expected));
    for (auto& [edge, k] : edges) {
        k.weights.resize(k.dims.count());
        if (!detail::read_f32_le(is, k.weights))
            throw IoError(IoError::Kind::UnreadablePayload, path.string() + ": short read");
        if (!g.kernels.emplace(edge, std::move(k)).second) bad("duplicate edge");
    }
    try {
        g.validate(1e-5);
    } catch (const InvalidArgument& e) {
        bad(e.what());
    }
    return g;
}

} // namespace vloc::mp
