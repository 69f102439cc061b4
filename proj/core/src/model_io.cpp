#include "vloc/model_io.hpp"

#include <fstream>

#include "vloc/binary_io.hpp"
#include "vloc/errors.hpp"
#include "vloc/header_file.hpp"
#include "vloc/labels.hpp"
#include "vloc/text_util.hpp"

namespace vloc::net {

void write_model(const Model& model, const std::filesystem::path& path) {
    model.spec.validate();
    check_params(model.spec, model.params);
    if (static_cast<int>(model.labels.size()) != model.spec.output_channels)
        throw InvalidArgument("write_model: label count differs from output channels");

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoError::Kind::Open, "cannot write " + path.string());
    os << "VLOCNET " << kModelFormatVersion << '\n';
    os << "input_channels " << model.spec.input_channels << '\n';
    os << "widths";
    for (int w : model.spec.widths) os << ' ' << w;
    os << '\n';
    os << "bottleneck_convs " << model.spec.bottleneck_convs << '\n';
    os << "output_channels " << model.spec.output_channels << '\n';
    os << "learning_rate " << format_double(model.spec.learning_rate) << '\n';
    os << "target_gain " << format_double(model.spec.target_gain) << '\n';
    os << "seed " << model.spec.seed << '\n';
    os << "labels";
    for (const auto& l : model.labels) os << ' ' << l;
    os << '\n';
    os << "dtype float32\nbyte_order little_endian\n";
    os << "param_count " << model.params.parameter_count() << '\n';
    os << "end_header\n";
    detail::write_f32_le(os, model.params.flatten());
    if (!os) throw IoError(IoError::Kind::UnreadablePayload, "write failed for " + path.string());
}

Model read_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoError::Kind::Open, "cannot open " + path.string());
    const auto h = detail::read_text_header(is, path, "VLOCNET");
    auto bad = [&](const std::string& why) {
        throw IoError(IoError::Kind::MalformedHeader, path.string() + ": " + why);
    };
    if (h.version != kModelFormatVersion) bad("unsupported model version " + std::to_string(h.version));

    auto single = [&](std::string_view key) -> const std::vector<std::string>& {
        const auto v = h.all(key);
        if (v.size() != 1) bad("expected exactly one '" + std::string(key) + "' line");
        return *v[0];
    };
    auto int_field = [&](std::string_view key) {
        const auto& l = single(key);
        long long v = 0;
        if (l.size() != 2 || !parse_int(l[1], v)) bad("bad " + std::string(key));
        return v;
    };

    Model m;
    m.spec.input_channels = static_cast<int>(int_field("input_channels"));
    m.spec.widths.clear();
    const auto& wl = single("widths");
    for (std::size_t i = 1; i < wl.size(); ++i) {
        int w = 0;
        if (!parse_int(wl[i], w)) bad("bad widths");
        m.spec.widths.push_back(w);
    }
    m.spec.bottleneck_convs = static_cast<int>(int_field("bottleneck_convs"));
    m.spec.output_channels = static_cast<int>(int_field("output_channels"));
    {
        const auto& l = single("learning_rate");
        if (l.size() != 2 || !parse_double(l[1], m.spec.learning_rate)) bad("bad learning_rate");
        const auto& g = single("target_gain");
        if (g.size() != 2 || !parse_double(g[1], m.spec.target_gain)) bad("bad target_gain");
        const auto& s = single("seed");
        if (s.size() != 2 || !parse_int(s[1], m.spec.seed)) bad("bad seed");
    }
    const auto& ll = single("labels");
    m.labels.assign(ll.begin() + 1, ll.end());
    if (single("dtype").size() != 2 || single("dtype")[1] != "float32") bad("dtype must be float32");
    if (single("byte_order").size() != 2 || single("byte_order")[1] != "little_endian")
        bad("byte_order must be little_endian");
    const auto count = static_cast<std::size_t>(int_field("param_count"));

    try {
        m.spec.validate();
        validate_label_ordering(m.labels);
        if (static_cast<int>(m.labels.size()) != m.spec.output_channels) bad("label count differs from output_channels");
        m.params = zero_params(m.spec);
    } catch (const InvalidArgument& e) {
        bad(e.what());
    }
    if (count != m.params.parameter_count()) bad("param_count does not match the declared architecture");
    if (h.payload_bytes != count * 4)
        throw IoError(IoError::Kind::SizeMismatch, path.string() + ": payload has " + std::to_string(h.payload_bytes) +
                                                       " bytes, expected " + std::to_string(count * 4));
    std::vector<double> flat(count);
    if (!detail::read_f32_le(is, flat)) throw IoError(IoError::Kind::UnreadablePayload, path.string() + ": short read");
    m.params.assign(flat);
    return m;
}

} // namespace vloc::net
