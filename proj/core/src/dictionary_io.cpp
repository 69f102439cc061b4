#include <fstream>

#include "vloc/errors.hpp"
#include "vloc/sparse_refine.hpp"
#include "vloc/text_util.hpp"

namespace vloc::sparse {
namespace {

void write_axis(const Matrix& m, const std::vector<std::string>& labels, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError(IoError::Kind::Open, "cannot write " + path.string());
    os << "# VLOCDICT " << kDictionaryFormatVersion << '\n';
    os << "label";
    for (std::size_t c = 0; c < m.cols(); ++c) os << ",s" << c;
    os << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        os << labels[r];
        for (std::size_t c = 0; c < m.cols(); ++c) os << ',' << format_double(m(r, c));
        os << '\n';
    }
    if (!os) throw IoError(IoError::Kind::UnreadablePayload, "write failed for " + path.string());
}

Matrix read_axis(const std::filesystem::path& path, std::vector<std::string>& labels) {
    std::ifstream is(path);
    if (!is) throw IoError(IoError::Kind::Open, "cannot open " + path.string());
    auto bad = [&](const std::string& why) {
        throw IoError(IoError::Kind::MalformedHeader, path.string() + ": " + why);
    };
    std::string line;
    if (!std::getline(is, line)) bad("empty file");
    const auto magic = tokens(line);
    int version = 0;
    if (magic.size() != 3 || magic[0] != "#" || magic[1] != "VLOCDICT" || !parse_int(magic[2], version))
        bad("expected '# VLOCDICT <version>'");
    if (version != kDictionaryFormatVersion) bad("unsupported dictionary version " + std::to_string(version));
    if (!std::getline(is, line)) bad("missing column header");
    const auto head = split(trim(line), ',');
    if (head.empty() || head[0] != "label" || head.size() < 2) bad("expected header 'label,s0,...'");
    const std::size_t cols = head.size() - 1;
    std::vector<std::vector<double>> rows;
    labels.clear();
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        const auto f = split(trim(line), ',');
        if (f.size() != cols + 1) bad("row '" + std::string(f[0]) + "' has the wrong number of columns");
        labels.emplace_back(trim(f[0]));
        std::vector<double> row(cols);
        for (std::size_t c = 0; c < cols; ++c)
            if (!parse_double(f[c + 1], row[c])) bad("bad number in row " + labels.back());
        rows.push_back(std::move(row));
    }
    Matrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c];
    return m;
}

} // namespace

void write_dictionary(const ShapeDictionary& dict, const std::filesystem::path& x_path,
                      const std::filesystem::path& y_path, const std::filesystem::path& z_path) {
    dict.validate();
    write_axis(dict.x, dict.labels, x_path);
    write_axis(dict.y, dict.labels, y_path);
    write_axis(dict.z, dict.labels, z_path);
}

ShapeDictionary read_dictionary(const std::filesystem::path& x_path, const std::filesystem::path& y_path,
                                const std::filesystem::path& z_path) {
    ShapeDictionary d;
    std::vector<std::string> ly, lz;
    d.x = read_axis(x_path, d.labels);
    d.y = read_axis(y_path, ly);
    d.z = read_axis(z_path, lz);
    if (ly != d.labels || lz != d.labels)
        throw IoError(IoError::Kind::SizeMismatch, "dictionary axis files disagree on landmark rows");
    if (!(d.x.rows() == d.y.rows() && d.y.rows() == d.z.rows() && d.x.cols() == d.y.cols() && d.y.cols() == d.z.cols()))
        throw IoError(IoError::Kind::SizeMismatch, "dictionary axis files have different dimensions");
    try {
        d.validate();
    } catch (const InvalidArgument& e) {
        throw IoError(IoError::Kind::SizeMismatch, e.what());
    }
    return d;
}

} // namespace vloc::sparse
