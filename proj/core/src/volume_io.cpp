#include "vloc/volume_io.hpp"

#include <fstream>
#include <map>
#include <string>

#include "vloc/binary_io.hpp"
#include "vloc/errors.hpp"
#include "vloc/text_util.hpp"

namespace vloc {
namespace {

// Header layout, one `key value...` per line:
//   SVH 1
//   dims <nx> <ny> <nz>
//   spacing <sx> <sy> <sz>
//   origin <ox> <oy> <oz>
//   dtype float32
//   byte_order little_endian
//   data_file <name>.raw

[[noreturn]] void malformed(const std::filesystem::path& p, const std::string& why) {
    throw IoError(IoError::Kind::MalformedHeader, p.string() + ": " + why);
}

Vec3 parse_vec3(const std::filesystem::path& p, const std::vector<std::string_view>& f, const char* key) {
    if (f.size() != 4) malformed(p, std::string(key) + " expects 3 values");
    Vec3 v;
    if (!parse_double(f[1], v.x) || !parse_double(f[2], v.y) || !parse_double(f[3], v.z))
        malformed(p, std::string("bad number in ") + key);
    return v;
}

} // namespace

void write_volume(const Volume3D& vol, const std::filesystem::path& header_path) {
    if (header_path.extension() != ".svh")
        throw InvalidArgument("write_volume: header path must end in .svh: " + header_path.string());
    auto raw_path = header_path;
    raw_path.replace_extension(".raw");

    std::ofstream hs(header_path);
    if (!hs) throw IoError(IoError::Kind::Open, "cannot write " + header_path.string());
    const auto& d = vol.dims();
    const auto& s = vol.spacing();
    const auto& o = vol.origin();
    hs << "SVH " << kVolumeFormatVersion << '\n'
       << "dims " << d.nx << ' ' << d.ny << ' ' << d.nz << '\n'
       << "spacing " << format_double(s.x) << ' ' << format_double(s.y) << ' ' << format_double(s.z) << '\n'
       << "origin " << format_double(o.x) << ' ' << format_double(o.y) << ' ' << format_double(o.z) << '\n'
       << "dtype float32\n"
       << "byte_order little_endian\n"
       << "data_file " << raw_path.filename().string() << '\n';
    if (!hs) throw IoError(IoError::Kind::Open, "write failed for " + header_path.string());

    std::ofstream rs(raw_path, std::ios::binary);
    if (!rs) throw IoError(IoError::Kind::Open, "cannot write " + raw_path.string());
    detail::write_f32_le(rs, vol.data());
    if (!rs) throw IoError(IoError::Kind::UnreadablePayload, "write failed for " + raw_path.string());
}

Volume3D read_volume(const std::filesystem::path& header_path) {
    std::ifstream hs(header_path);
    if (!hs) throw IoError(IoError::Kind::Open, "cannot open " + header_path.string());

    std::string line;
    if (!std::getline(hs, line)) malformed(header_path, "empty header");
    {
        const auto f = tokens(line);
        int version = 0;
        if (f.size() != 2 || f[0] != "SVH" || !parse_int(f[1], version)) malformed(header_path, "missing SVH magic");
        if (version != kVolumeFormatVersion) malformed(header_path, "unsupported version " + std::string(f[1]));
    }

    std::map<std::string, std::vector<std::string_view>, std::less<>> fields;
    std::vector<std::string> lines;
    while (std::getline(hs, line)) {
        if (trim(line).empty()) continue;
        lines.push_back(line);
    }
    for (const auto& l : lines) {
        auto f = tokens(l);
        const std::string key(f[0]);
        if (fields.count(key)) malformed(header_path, "duplicate key " + key);
        fields[key] = std::move(f);
    }
    for (const char* key : {"dims", "spacing", "origin", "dtype", "byte_order", "data_file"})
        if (!fields.count(key)) malformed(header_path, std::string("missing key ") + key);
    if (fields.size() != 6) malformed(header_path, "unexpected keys");

    const auto& fd = fields["dims"];
    Dims dims;
    if (fd.size() != 4 || !parse_int(fd[1], dims.nx) || !parse_int(fd[2], dims.ny) || !parse_int(fd[3], dims.nz))
        malformed(header_path, "bad dims");
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) malformed(header_path, "dims must be positive");
    const Vec3 spacing = parse_vec3(header_path, fields["spacing"], "spacing");
    if (!(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0)) malformed(header_path, "spacing must be positive");
    const Vec3 origin = parse_vec3(header_path, fields["origin"], "origin");
    if (fields["dtype"].size() != 2 || fields["dtype"][1] != "float32") malformed(header_path, "dtype must be float32");
    if (fields["byte_order"].size() != 2 || fields["byte_order"][1] != "little_endian")
        malformed(header_path, "byte_order must be little_endian");
    if (fields["data_file"].size() != 2) malformed(header_path, "bad data_file");

    const auto raw_path = header_path.parent_path() / std::string(fields["data_file"][1]);
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(raw_path, ec);
    if (ec) throw IoError(IoError::Kind::UnreadablePayload, "cannot stat payload " + raw_path.string());
    if (bytes != dims.count() * 4)
        throw IoError(IoError::Kind::SizeMismatch,
                      raw_path.string() + ": payload has " + std::to_string(bytes) + " bytes, header implies " +
                          std::to_string(dims.count() * 4));

    std::ifstream rs(raw_path, std::ios::binary);
    if (!rs) throw IoError(IoError::Kind::UnreadablePayload, "cannot open payload " + raw_path.string());
    Volume3D vol(dims, spacing, origin);
    if (!detail::read_f32_le(rs, vol.data()))
        throw IoError(IoError::Kind::UnreadablePayload, "short read from " + raw_path.string());
    return vol;
}

} // namespace vloc
