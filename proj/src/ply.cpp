#include "boltpipe/ply.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "boltpipe/log.hpp"

namespace boltpipe {
namespace {

static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");

enum class ScalarType { int8, uint8, int16, uint16, int32, uint32, float32, float64 };

std::size_t type_size(ScalarType t) {
    switch (t) {
    case ScalarType::int8:
    case ScalarType::uint8: return 1;
    case ScalarType::int16:
    case ScalarType::uint16: return 2;
    case ScalarType::int32:
    case ScalarType::uint32:
    case ScalarType::float32: return 4;
    case ScalarType::float64: return 8;
    }
    return 0;
}

bool is_floating(ScalarType t) { return t == ScalarType::float32 || t == ScalarType::float64; }

bool parse_type(const std::string& s, ScalarType& out) {
    if (s == "char" || s == "int8") out = ScalarType::int8;
    else if (s == "uchar" || s == "uint8") out = ScalarType::uint8;
    else if (s == "short" || s == "int16") out = ScalarType::int16;
    else if (s == "ushort" || s == "uint16") out = ScalarType::uint16;
    else if (s == "int" || s == "int32") out = ScalarType::int32;
    else if (s == "uint" || s == "uint32") out = ScalarType::uint32;
    else if (s == "float" || s == "float32") out = ScalarType::float32;
    else if (s == "double" || s == "float64") out = ScalarType::float64;
    else return false;
    return true;
}

struct Property {
    std::string name;
    ScalarType type = ScalarType::float32;
    bool is_list = false;
    ScalarType count_type = ScalarType::uint8;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> properties;
};

enum class Encoding { ascii, binary_le, binary_be };

struct Header {
    Encoding encoding = Encoding::ascii;
    std::vector<Element> elements;
    std::size_t lines = 0;
};

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

Header parse_header(std::istream& in) {
    Header h;
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next() || line != "ply") throw FormatError("missing 'ply' magic", lineno == 0 ? 1 : lineno);
    bool saw_format = false;
    while (true) {
        if (!next()) throw FormatError("unexpected end of file inside header", lineno + 1);
        auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "comment" || tok[0] == "obj_info") continue;
        if (tok[0] == "format") {
            if (tok.size() != 3) throw FormatError("malformed format line", lineno);
            if (tok[1] == "ascii") h.encoding = Encoding::ascii;
            else if (tok[1] == "binary_little_endian") h.encoding = Encoding::binary_le;
            else if (tok[1] == "binary_big_endian") h.encoding = Encoding::binary_be;
            else throw FormatError("unknown format '" + tok[1] + "'", lineno);
            if (tok[2] != "1.0") throw FormatError("unsupported PLY version '" + tok[2] + "'", lineno);
            saw_format = true;
        } else if (tok[0] == "element") {
            if (tok.size() != 3) throw FormatError("malformed element line", lineno);
            Element e;
            e.name = tok[1];
            auto [p, ec] = std::from_chars(tok[2].data(), tok[2].data() + tok[2].size(), e.count);
            if (ec != std::errc() || p != tok[2].data() + tok[2].size()) {
                throw FormatError("bad element count '" + tok[2] + "'", lineno);
            }
            h.elements.push_back(std::move(e));
        } else if (tok[0] == "property") {
            if (h.elements.empty()) throw FormatError("property before any element", lineno);
            Property prop;
            if (tok.size() == 5 && tok[1] == "list") {
                prop.is_list = true;
                if (!parse_type(tok[2], prop.count_type) || !parse_type(tok[3], prop.type)) {
                    throw FormatError("unknown list property type", lineno);
                }
                prop.name = tok[4];
            } else if (tok.size() == 3) {
                if (!parse_type(tok[1], prop.type)) throw FormatError("unknown property type '" + tok[1] + "'", lineno);
                prop.name = tok[2];
            } else {
                throw FormatError("malformed property line", lineno);
            }
            h.elements.back().properties.push_back(std::move(prop));
        } else if (tok[0] == "end_header") {
            break;
        } else {
            throw FormatError("unexpected header keyword '" + tok[0] + "'", lineno);
        }
    }
    if (!saw_format) throw FormatError("header has no format line", lineno);
    h.lines = lineno;
    return h;
}

double read_binary_scalar(const char*& p, ScalarType t, bool swap) {
    char buf[8];
    const std::size_t n = type_size(t);
    std::memcpy(buf, p, n);
    if (swap) {
        for (std::size_t i = 0; i < n / 2; ++i) std::swap(buf[i], buf[n - 1 - i]);
    }
    p += n;
    switch (t) {
    case ScalarType::int8: { std::int8_t v; std::memcpy(&v, buf, 1); return v; }
    case ScalarType::uint8: { std::uint8_t v; std::memcpy(&v, buf, 1); return v; }
    case ScalarType::int16: { std::int16_t v; std::memcpy(&v, buf, 2); return v; }
    case ScalarType::uint16: { std::uint16_t v; std::memcpy(&v, buf, 2); return v; }
    case ScalarType::int32: { std::int32_t v; std::memcpy(&v, buf, 4); return v; }
    case ScalarType::uint32: { std::uint32_t v; std::memcpy(&v, buf, 4); return v; }
    case ScalarType::float32: { float v; std::memcpy(&v, buf, 4); return v; }
    case ScalarType::float64: { double v; std::memcpy(&v, buf, 8); return v; }
    }
    return 0.0;
}

enum class Role { x, y, z, label, red, green, blue, channel, ignored };

struct VertexLayout {
    std::vector<Role> roles;
    std::vector<std::size_t> channel_slot;
    std::vector<std::string> channel_names;
};

VertexLayout plan_vertex(const Element& e, std::size_t header_lines) {
    VertexLayout lay;
    bool seen[3] = {false, false, false};
    for (const auto& prop : e.properties) {
        Role r = Role::ignored;
        std::size_t slot = 0;
        if (prop.is_list) {
            log::warn("ignoring list property '" + prop.name + "' on vertex element");
        } else if (prop.name == "x" || prop.name == "y" || prop.name == "z") {
            if (!is_floating(prop.type)) {
                throw FormatError("coordinate property '" + prop.name + "' must be float or double", header_lines);
            }
            const int axis = prop.name[0] - 'x';
            seen[axis] = true;
            r = static_cast<Role>(axis);
        } else if (prop.name == "label") {
            if (is_floating(prop.type)) throw FormatError("label property must be an integer type", header_lines);
            r = Role::label;
        } else if ((prop.name == "red" || prop.name == "green" || prop.name == "blue") &&
                   prop.type == ScalarType::uint8) {
            r = prop.name == "red" ? Role::red : (prop.name == "green" ? Role::green : Role::blue);
        } else if (is_floating(prop.type)) {
            r = Role::channel;
            slot = lay.channel_names.size();
            lay.channel_names.push_back(prop.name);
        } else {
            log::warn("ignoring unrecognized vertex property '" + prop.name + "'");
        }
        lay.roles.push_back(r);
        lay.channel_slot.push_back(slot);
    }
    if (!seen[0] || !seen[1] || !seen[2]) throw FormatError("vertex element lacks x, y and z", header_lines);
    return lay;
}

struct VertexSink {
    std::vector<Vec3> positions;
    std::vector<std::uint8_t> labels;
    std::vector<std::vector<double>> channels;
    std::vector<Rgb> colors;
    bool has_label = false;
    bool has_color = false;

    void add(const VertexLayout& lay, const std::vector<double>& vals, std::size_t vertex) {
        Vec3 p;
        Rgb c{0, 0, 0};
        for (std::size_t i = 0; i < lay.roles.size(); ++i) {
            const double v = vals[i];
            switch (lay.roles[i]) {
            case Role::x: p.x = v; break;
            case Role::y: p.y = v; break;
            case Role::z: p.z = v; break;
            case Role::label:
                if (v != 0.0 && v != 1.0) {
                    throw ValidationError("vertex " + std::to_string(vertex) + " has label " +
                                          std::to_string(static_cast<long long>(v)) + ", expected 0 or 1");
                }
                labels.push_back(static_cast<std::uint8_t>(v));
                break;
            case Role::red: c[0] = static_cast<std::uint8_t>(v); break;
            case Role::green: c[1] = static_cast<std::uint8_t>(v); break;
            case Role::blue: c[2] = static_cast<std::uint8_t>(v); break;
            case Role::channel: channels[lay.channel_slot[i]].push_back(v); break;
            case Role::ignored: break;
            }
        }
        if (!p.finite()) throw ValidationError("vertex " + std::to_string(vertex) + " has a non-finite coordinate");
        positions.push_back(p);
        if (has_color) colors.push_back(c);
    }
};

void write_header(std::ostream& os, const PointCloud& cloud, PlyFormat format) {
    os << "ply\n";
    os << (format == PlyFormat::ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n");
    os << "comment written by boltpipe\n";
    os << "element vertex " << cloud.size() << '\n';
    os << "property double x\nproperty double y\nproperty double z\n";
    if (cloud.has_labels()) os << "property uchar label\n";
    for (const auto& c : cloud.channels()) os << "property float " << c.name << '\n';
    if (cloud.has_colors()) os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    os << "end_header\n";
}

} // namespace

PointCloud load_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    const Header header = parse_header(in);

    VertexSink sink;
    VertexLayout layout;
    bool have_vertex = false;

    if (header.encoding == Encoding::ascii) {
        std::string line;
        std::size_t lineno = header.lines;
        for (const auto& e : header.elements) {
            const bool is_vertex = e.name == "vertex" && !have_vertex;
            if (is_vertex) {
                layout = plan_vertex(e, header.lines);
                sink.has_label = std::find(layout.roles.begin(), layout.roles.end(), Role::label) != layout.roles.end();
                sink.has_color = std::find(layout.roles.begin(), layout.roles.end(), Role::red) != layout.roles.end();
                sink.channels.assign(layout.channel_names.size(), {});
                sink.positions.reserve(e.count);
            } else {
                log::warn("skipping PLY element '" + e.name + "'");
            }
            std::vector<double> vals;
            for (std::size_t row = 0; row < e.count; ++row) {
                do {
                    if (!std::getline(in, line)) {
                        throw FormatError("element '" + e.name + "' declares " + std::to_string(e.count) +
                                              " rows but the body ends after " + std::to_string(row),
                                          lineno + 1);
                    }
                    ++lineno;
                } while (line.find_first_not_of(" \t\r") == std::string::npos);
                if (!is_vertex) continue;
                vals.clear();
                const char* p = line.c_str();
                const char* end = p + line.size();
                for (const auto& prop : e.properties) {
                    while (p < end && (*p == ' ' || *p == '\t')) ++p;
                    if (prop.is_list) {
                        // A list on a vertex is ignored: consume its count and entries.
                        char* after = nullptr;
                        const long cnt = std::strtol(p, &after, 10);
                        if (after == p) throw FormatError("missing list count", lineno);
                        p = after;
                        for (long k = 0; k < cnt; ++k) {
                            std::strtod(p, &after);
                            if (after == p) throw FormatError("truncated list", lineno);
                            p = after;
                        }
                        vals.push_back(0.0);
                        continue;
                    }
                    char* after = nullptr;
                    const double v = std::strtod(p, &after);
                    if (after == p) throw FormatError("too few values on vertex row", lineno);
                    p = after;
                    vals.push_back(v);
                }
                sink.add(layout, vals, row);
            }
            if (is_vertex) have_vertex = true;
        }
    } else {
        const bool swap = header.encoding == Encoding::binary_be;
        const std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const char* p = body.data();
        const char* end = body.data() + body.size();
        for (const auto& e : header.elements) {
            const bool is_vertex = e.name == "vertex" && !have_vertex;
            std::size_t fixed_row = 0;
            bool has_list = false;
            for (const auto& prop : e.properties) {
                if (prop.is_list) has_list = true;
                else fixed_row += type_size(prop.type);
            }
            if (is_vertex) {
                layout = plan_vertex(e, header.lines);
                sink.has_label = std::find(layout.roles.begin(), layout.roles.end(), Role::label) != layout.roles.end();
                sink.has_color = std::find(layout.roles.begin(), layout.roles.end(), Role::red) != layout.roles.end();
                sink.channels.assign(layout.channel_names.size(), {});
                sink.positions.reserve(e.count);
            } else {
                log::warn("skipping PLY element '" + e.name + "'");
            }
            if (!has_list && static_cast<std::size_t>(end - p) / std::max<std::size_t>(fixed_row, 1) < e.count &&
                fixed_row > 0) {
                throw FormatError("binary body truncated: element '" + e.name + "' declares " +
                                      std::to_string(e.count) + " rows",
                                  header.lines + 1);
            }
            std::vector<double> vals;
            for (std::size_t row = 0; row < e.count; ++row) {
                vals.clear();
                for (const auto& prop : e.properties) {
                    if (prop.is_list) {
                        if (static_cast<std::size_t>(end - p) < type_size(prop.count_type)) {
                            throw FormatError("binary body truncated inside list", header.lines + 1);
                        }
                        const auto cnt = static_cast<std::size_t>(read_binary_scalar(p, prop.count_type, swap));
                        if (static_cast<std::size_t>(end - p) < cnt * type_size(prop.type)) {
                            throw FormatError("binary body truncated inside list", header.lines + 1);
                        }
                        p += cnt * type_size(prop.type);
                        vals.push_back(0.0);
                    } else {
                        if (static_cast<std::size_t>(end - p) < type_size(prop.type)) {
                            throw FormatError("binary body truncated in element '" + e.name + "'", header.lines + 1);
                        }
                        vals.push_back(read_binary_scalar(p, prop.type, swap));
                    }
                }
                if (is_vertex) sink.add(layout, vals, row);
            }
            if (is_vertex) have_vertex = true;
        }
    }
    if (!have_vertex) throw FormatError("file has no vertex element", header.lines);

    PointCloud cloud(std::move(sink.positions));
    if (sink.has_label) cloud.set_labels(std::move(sink.labels));
    for (std::size_t c = 0; c < layout.channel_names.size(); ++c) {
        cloud.set_channel(layout.channel_names[c], std::move(sink.channels[c]));
    }
    if (sink.has_color) cloud.set_colors(std::move(sink.colors));
    return cloud;
}

void save_ply(const PointCloud& cloud, const std::filesystem::path& path, PlyFormat format) {
    cloud.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_header(os, cloud, format);

    const auto labels = cloud.has_labels() ? cloud.labels() : std::span<const std::uint8_t>{};
    const auto colors = cloud.has_colors() ? cloud.colors() : std::span<const Rgb>{};
    const auto& channels = cloud.channels();

    if (format == PlyFormat::ascii) {
        char buf[64];
        std::string row;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            row.clear();
            const Vec3& p = cloud.position(i);
            std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p.x, p.y, p.z);
            row += buf;
            if (!labels.empty()) {
                row += ' ';
                row += static_cast<char>('0' + labels[i]);
            }
            for (const auto& c : channels) {
                std::snprintf(buf, sizeof buf, " %.9g", static_cast<double>(static_cast<float>(c.values[i])));
                row += buf;
            }
            if (!colors.empty()) {
                std::snprintf(buf, sizeof buf, " %u %u %u", colors[i][0], colors[i][1], colors[i][2]);
                row += buf;
            }
            row += '\n';
            os << row;
        }
    } else {
        std::vector<char> rowbuf;
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            rowbuf.clear();
            auto put = [&](const void* src, std::size_t n) {
                const char* c = static_cast<const char*>(src);
                rowbuf.insert(rowbuf.end(), c, c + n);
            };
            const Vec3& p = cloud.position(i);
            put(&p.x, 8);
            put(&p.y, 8);
            put(&p.z, 8);
            if (!labels.empty()) put(&labels[i], 1);
            for (const auto& c : channels) {
                const float f = static_cast<float>(c.values[i]);
                put(&f, 4);
            }
            if (!colors.empty()) put(colors[i].data(), 3);
            os.write(rowbuf.data(), static_cast<std::streamsize>(rowbuf.size()));
        }
    }
    os.flush();
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

} // namespace boltpipe
