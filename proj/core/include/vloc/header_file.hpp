#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "vloc/errors.hpp"
#include "vloc/text_util.hpp"

namespace vloc::detail {

/// `key value...` lines between a magic line and `end_header`, followed by a
/// binary payload in the same file.
struct TextHeader {
    int version = 0;
    std::vector<std::vector<std::string>> lines;
    std::streamoff payload_offset = 0;
    std::uintmax_t payload_bytes = 0;

    /// All lines with the given key.
    std::vector<const std::vector<std::string>*> all(std::string_view key) const {
        std::vector<const std::vector<std::string>*> out;
        for (const auto& l : lines)
            if (!l.empty() && l[0] == key) out.push_back(&l);
        return out;
    }
};

inline TextHeader read_text_header(std::ifstream& is, const std::filesystem::path& path, std::string_view magic) {
    auto bad = [&](const std::string& why) {
        throw IoError(IoError::Kind::MalformedHeader, path.string() + ": " + why);
    };
    TextHeader h;
    std::string line;
    if (!std::getline(is, line)) bad("empty file");
    const auto first = tokens(line);
    if (first.size() != 2 || first[0] != magic || !parse_int(first[1], h.version))
        bad("expected '" + std::string(magic) + " <version>'");
    bool ended = false;
    while (std::getline(is, line)) {
        if (trim(line) == "end_header") {
            ended = true;
            break;
        }
        const auto t = tokens(line);
        if (t.empty()) continue;
        h.lines.emplace_back(t.begin(), t.end());
    }
    if (!ended) bad("missing end_header");
    h.payload_offset = is.tellg();
    std::error_code ec;
    const auto total = std::filesystem::file_size(path, ec);
    if (ec || h.payload_offset < 0) throw IoError(IoError::Kind::UnreadablePayload, path.string() + ": cannot stat");
    h.payload_bytes = total - static_cast<std::uintmax_t>(h.payload_offset);
    return h;
}

} // namespace vloc::detail
