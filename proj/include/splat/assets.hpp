#pragma once

// Serialization: splat-cloud PLY archives, OBJ/MTL mesh export with a PNG
// atlas, PNG image IO with foreground masks, the flat key=value run config,
// CSV reports, and raw density-grid dumps. Binary layouts are little-endian;
// see docs/FORMATS.md for the exact bytes.

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "splat/errors.hpp"
#include "splat/gaussian.hpp"
#include "splat/image.hpp"
#include "splat/meshing.hpp"
#include "splat/texture.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary archives assume a little-endian host");

namespace splat {

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path);
    return std::move(buf).str();
}

inline void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed: " + path);
}

// Replaces the extension of a path (everything after the last '.' in the
// final component), or appends one if absent.
inline std::string with_extension(const std::string& path, const std::string& ext) {
    const std::size_t slash = path.find_last_of("/\\");
    const std::size_t dot = path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return path + ext;
    return path.substr(0, dot) + ext;
}

inline std::string filename_of(const std::string& path) {
    const std::size_t slash = path.find_last_of("/\\");
    return slash == std::string::npos ? path : path.substr(slash + 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Splat archive (binary little-endian PLY)
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr int kArchiveVersion = 1;

inline std::vector<std::string> archive_property_names(int sh_degree) {
    std::vector<std::string> names = {"x",           "y",           "z",
                                      "rot_w",       "rot_x",       "rot_y",
                                      "rot_z",       "log_scale_x", "log_scale_y",
                                      "log_scale_z", "opacity_logit"};
    const int n = sh_coeff_count(sh_degree);
    for (int k = 0; k < n; ++k)
        for (const char* ch : {"_r", "_g", "_b"})
            names.push_back("sh_" + std::to_string(k) + ch);
    return names;
}

}  // namespace detail

// Writes the cloud as binary little-endian PLY: one vertex element per splat
// with double-precision properties for every learnable field, so that a
// save/load round trip reproduces the cloud bit-for-bit.
inline void save_splats(const GaussianCloud& cloud, const std::string& path) {
    const int n_coeffs = sh_coeff_count(cloud.sh_degree);
    for (std::size_t i = 0; i < cloud.splats.size(); ++i)
        if (cloud.splats[i].sh_coeffs.size() != static_cast<std::size_t>(3 * n_coeffs))
            throw InvalidArgument("save_splats: splat " + std::to_string(i) +
                                  " has a coefficient count inconsistent with sh_degree " +
                                  std::to_string(cloud.sh_degree));

    std::ostringstream out;
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "comment splat-archive version " << detail::kArchiveVersion << "\n";
    out << "comment sh_degree " << cloud.sh_degree << "\n";
    out << "element vertex " << cloud.splats.size() << "\n";
    for (const std::string& name : detail::archive_property_names(cloud.sh_degree))
        out << "property double " << name << "\n";
    out << "end_header\n";

    std::vector<double> row(static_cast<std::size_t>(11 + 3 * n_coeffs));
    for (const SplatParams& s : cloud.splats) {
        double* p = row.data();
        for (int k = 0; k < 3; ++k) *p++ = s.position[k];
        for (int k = 0; k < 4; ++k) *p++ = s.rotation[k];
        for (int k = 0; k < 3; ++k) *p++ = s.log_scale[k];
        *p++ = s.opacity_logit;
        for (double c : s.sh_coeffs) *p++ = c;
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    detail::write_file(path, std::move(out).str());
}

inline GaussianCloud load_splats(const std::string& path) {
    const std::string bytes = detail::read_file(path);

    // Header: newline-terminated ASCII lines up to and including end_header.
    std::size_t pos = 0;
    auto next_line = [&](std::size_t& line_start) {
        line_start = pos;
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos)
            throw ParseError(path + ": header ended before end_header", pos);
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    std::size_t at = 0;
    if (next_line(at) != "ply") throw ParseError(path + ": not a PLY file", at);
    if (next_line(at) != "format binary_little_endian 1.0")
        throw ParseError(path + ": expected binary little-endian 1.0 format", at);

    int version = -1, sh_degree = -1;
    std::size_t vertex_count = 0;
    bool have_count = false;
    std::vector<std::string> properties;
    std::size_t property_at = 0;
    for (;;) {
        std::string line = next_line(at);
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "comment") {
            std::string tag;
            ls >> tag;
            if (tag == "splat-archive") {
                std::string version_word;
                ls >> version_word >> version;
                if (version_word != "version" || !ls)
                    throw ParseError(path + ": malformed splat-archive comment", at);
            } else if (tag == "sh_degree") {
                ls >> sh_degree;
                if (!ls) throw ParseError(path + ": malformed sh_degree comment", at);
            }
        } else if (word == "element") {
            std::string kind;
            ls >> kind >> vertex_count;
            if (kind != "vertex" || !ls)
                throw ParseError(path + ": expected 'element vertex <count>'", at);
            have_count = true;
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "double" || !ls)
                throw ParseError(path + ": only double properties are supported", at);
            if (properties.empty()) property_at = at;
            properties.push_back(name);
        } else {
            throw ParseError(path + ": unrecognized header line '" + line + "'", at);
        }
    }
    if (version != detail::kArchiveVersion)
        throw ParseError(path + ": unsupported splat-archive version " +
                             (version < 0 ? std::string("(missing)") : std::to_string(version)),
                         0);
    if (sh_degree < 0 || sh_degree > kMaxShDegree)
        throw ParseError(path + ": missing or out-of-range sh_degree comment", 0);
    if (!have_count) throw ParseError(path + ": missing 'element vertex' line", 0);
    if (const auto expected = detail::archive_property_names(sh_degree);
        properties != expected) {
        std::string detail = "property layout does not match sh_degree " +
                             std::to_string(sh_degree);
        const std::size_t n = std::min(properties.size(), expected.size());
        std::size_t k = 0;
        while (k < n && properties[k] == expected[k]) ++k;
        if (k < n)
            detail += ": expected '" + expected[k] + "', found '" + properties[k] +
                      "' at property index " + std::to_string(k);
        else
            detail += ": expected " + std::to_string(expected.size()) + " properties, found " +
                      std::to_string(properties.size());
        throw ParseError(path + ": " + detail, property_at);
    }

    const std::size_t record = (11 + 3 * static_cast<std::size_t>(sh_coeff_count(sh_degree))) *
                               sizeof(double);
    const std::size_t available = bytes.size() - pos;
    if (available < record * vertex_count) {
        const std::size_t whole = available / record;
        throw ParseError(path + ": truncated payload: expected " +
                             std::to_string(vertex_count) + " records, found " +
                             std::to_string(whole) + " complete records",
                         pos + whole * record);
    }
    if (available > record * vertex_count)
        throw ParseError(path + ": unexpected trailing bytes after payload",
                         pos + record * vertex_count);

    GaussianCloud cloud;
    cloud.sh_degree = sh_degree;
    cloud.splats.resize(vertex_count);
    const int n_coeffs = sh_coeff_count(sh_degree);
    const char* cursor = bytes.data() + pos;
    for (SplatParams& s : cloud.splats) {
        std::array<double, 11> head{};
        std::memcpy(head.data(), cursor, sizeof(head));
        cursor += sizeof(head);
        s.position = Vec3(head[0], head[1], head[2]);
        s.rotation = Vec4(head[3], head[4], head[5], head[6]);
        s.log_scale = Vec3(head[7], head[8], head[9]);
        s.opacity_logit = head[10];
        s.sh_coeffs.resize(static_cast<std::size_t>(3 * n_coeffs));
        std::memcpy(s.sh_coeffs.data(), cursor, s.sh_coeffs.size() * sizeof(double));
        cursor += s.sh_coeffs.size() * sizeof(double);
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// PNG images
// ---------------------------------------------------------------------------

// Writes an 8-bit PNG; channels 1/3/4 map to gray/RGB/RGBA. Values are
// clamped to [0,1] and rounded. Output bytes depend only on the pixel data,
// so identical images produce identical files.
inline void save_png(const Image& image, const std::string& path) {
    if (image.width < 1 || image.height < 1)
        throw InvalidArgument("save_png: empty image");
    int color_type;
    switch (image.channels) {
        case 1: color_type = PNG_COLOR_TYPE_GRAY; break;
        case 3: color_type = PNG_COLOR_TYPE_RGB; break;
        case 4: color_type = PNG_COLOR_TYPE_RGBA; break;
        default: throw InvalidArgument("save_png: channels must be 1, 3, or 4");
    }

    std::vector<std::uint8_t> bytes(image.data.size());
    for (std::size_t i = 0; i < image.data.size(); ++i)
        bytes[i] = static_cast<std::uint8_t>(
            std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
    for (int y = 0; y < image.height; ++y)
        rows[static_cast<std::size_t>(y)] =
            bytes.data() + static_cast<std::size_t>(y) * image.width * image.channels;

    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("save_png: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("save_png: libpng write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw IoError("save_png: close failed: " + path);
}

struct LoadedImage {
    Image rgb;   // width x height x 3, in [0,1]
    Image mask;  // width x height x 1: alpha channel, or all ones if absent
};

// Reads a PNG of any color type / bit depth into RGB plus a foreground mask.
// 8-bit samples scale by 1/255, 16-bit by 1/65535; images without an alpha
// channel are treated as fully foreground.
inline LoadedImage load_image_rgba(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open for reading: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("load_image_rgba: libpng initialization failed");
    }
    std::vector<std::uint8_t> raw;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("load_image_rgba: corrupt or unreadable PNG: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const int bit_depth = png_get_bit_depth(png, info);
    // Normalize every input to (RGB | RGBA) at the source bit depth.
    png_set_expand(png);  // palettes, sub-byte gray, tRNS alpha
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (bit_depth == 16) png_set_swap(png);  // PNG is big-endian on disk
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = static_cast<int>(png_get_channels(png, info));
    const int depth = png_get_bit_depth(png, info);
    if (channels != 3 && channels != 4) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("load_image_rgba: unsupported channel layout in " + path);
    }
    const std::size_t stride =
        static_cast<std::size_t>(width) * channels * (depth == 16 ? 2 : 1);
    raw.resize(stride * static_cast<std::size_t>(height));
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = raw.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    LoadedImage out;
    out.rgb = Image(width, height, 3);
    out.mask = Image(width, height, 1, 1.0);
    // Divide (rather than multiply by the reciprocal) so a value quantized to
    // the 8-bit grid in memory reloads to the bit-identical double.
    const double denom = depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c) {
                const std::size_t i =
                    (static_cast<std::size_t>(y) * width + x) * channels + c;
                double v;
                if (depth == 16) {
                    std::uint16_t s;
                    std::memcpy(&s, raw.data() + 2 * i, 2);
                    v = s / denom;
                } else {
                    v = raw[i] / denom;
                }
                if (c < 3)
                    out.rgb.at(x, y, c) = v;
                else
                    out.mask.at(x, y, 0) = v;
            }
    return out;
}

// ---------------------------------------------------------------------------
// OBJ / MTL mesh export
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_g7(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.7g", v);
    return buf;
}

}  // namespace detail

// Writes OBJ (1-based v/vt/vn/f records, 7 significant digits) plus, when an
// atlas is given, an MTL file and PNG texture next to it. The mesh must carry
// wedge UVs; identical UV pairs are deduplicated into shared vt records.
inline void save_mesh_obj(const TriangleMesh& mesh, const TextureAtlas* atlas,
                          const std::string& path) {
    if (mesh.uvs.size() != 3 * mesh.triangles.size())
        throw InvalidArgument("save_mesh_obj: mesh has no per-wedge UVs");
    const bool has_normals = mesh.normals.size() == mesh.vertices.size();

    std::ostringstream out;
    if (atlas) {
        out << "mtllib " << detail::filename_of(detail::with_extension(path, ".mtl")) << "\n";
        out << "usemtl material0\n";
    }
    for (const Vec3& v : mesh.vertices)
        out << "v " << detail::format_g7(v.x()) << ' ' << detail::format_g7(v.y()) << ' '
            << detail::format_g7(v.z()) << "\n";

    // Exact-match vt dedup: wedges that share a UV share one record.
    std::map<std::pair<std::uint64_t, std::uint64_t>, int> uv_index;
    std::vector<int> wedge_vt(mesh.uvs.size());
    int n_vt = 0;
    for (std::size_t i = 0; i < mesh.uvs.size(); ++i) {
        const auto key = std::make_pair(std::bit_cast<std::uint64_t>(mesh.uvs[i].x()),
                                        std::bit_cast<std::uint64_t>(mesh.uvs[i].y()));
        auto [it, inserted] = uv_index.try_emplace(key, n_vt);
        if (inserted) {
            out << "vt " << detail::format_g7(mesh.uvs[i].x()) << ' '
                << detail::format_g7(mesh.uvs[i].y()) << "\n";
            ++n_vt;
        }
        wedge_vt[i] = it->second;
    }
    if (has_normals)
        for (const Vec3& n : mesh.normals)
            out << "vn " << detail::format_g7(n.x()) << ' ' << detail::format_g7(n.y()) << ' '
                << detail::format_g7(n.z()) << "\n";

    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        out << 'f';
        for (int k = 0; k < 3; ++k) {
            const int v = mesh.triangles[t][static_cast<std::size_t>(k)] + 1;
            const int vt = wedge_vt[3 * t + static_cast<std::size_t>(k)] + 1;
            out << ' ' << v << '/' << vt;
            if (has_normals) out << '/' << v;
        }
        out << "\n";
    }
    detail::write_file(path, std::move(out).str());

    if (atlas) {
        const std::string png_name = detail::filename_of(detail::with_extension(path, ".png"));
        detail::write_file(detail::with_extension(path, ".mtl"),
                           "newmtl material0\nKd 1 1 1\nmap_Kd " + png_name + "\n");
        save_png(atlas->rgb, detail::with_extension(path, ".png"));
    }
}

// Parses the OBJ subset this library writes (v/vt/vn/f with fan
// triangulation for larger faces). Wedge UVs are populated when every face
// corner carries a vt reference.
inline TriangleMesh load_mesh_obj(const std::string& path) {
    const std::string text = detail::read_file(path);
    TriangleMesh mesh;
    std::vector<Vec2> vts;
    std::vector<Vec3> vns;
    std::vector<std::array<int, 3>> wedge_refs;  // per wedge: vt (or -1), vn (or -1)
    bool all_have_vt = true;

    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t line_at = pos;
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string word;
        if (!(ls >> word) || word[0] == '#') continue;
        if (word == "v" || word == "vn") {
            double x, y, z;
            if (!(ls >> x >> y >> z))
                throw ParseError(path + ": malformed '" + word + "' line", line_at);
            (word == "v" ? mesh.vertices : vns).push_back(Vec3(x, y, z));
        } else if (word == "vt") {
            double u, v;
            if (!(ls >> u >> v)) throw ParseError(path + ": malformed 'vt' line", line_at);
            vts.push_back(Vec2(u, v));
        } else if (word == "f") {
            struct Corner {
                int v, vt, vn;
            };
            std::vector<Corner> corners;
            std::string token;
            while (ls >> token) {
                Corner c{0, 0, 0};
                if (token.find("//") != std::string::npos) {
                    if (std::sscanf(token.c_str(), "%d//%d", &c.v, &c.vn) != 2)
                        throw ParseError(path + ": malformed face token '" + token + "'",
                                         line_at);
                } else if (std::sscanf(token.c_str(), "%d/%d/%d", &c.v, &c.vt, &c.vn) < 1) {
                    throw ParseError(path + ": malformed face token '" + token + "'", line_at);
                }
                if (c.v < 1 || static_cast<std::size_t>(c.v) > mesh.vertices.size())
                    throw ParseError(path + ": face references vertex " + std::to_string(c.v) +
                                         " of " + std::to_string(mesh.vertices.size()),
                                     line_at);
                if (c.vt < 0 || static_cast<std::size_t>(c.vt) > vts.size())
                    throw ParseError(path + ": face references vt " + std::to_string(c.vt),
                                     line_at);
                if (c.vn < 0 || static_cast<std::size_t>(c.vn) > vns.size())
                    throw ParseError(path + ": face references vn " + std::to_string(c.vn),
                                     line_at);
                corners.push_back(c);
            }
            if (corners.size() < 3)
                throw ParseError(path + ": face with fewer than 3 corners", line_at);
            for (std::size_t k = 2; k < corners.size(); ++k) {
                const Corner tri[3] = {corners[0], corners[k - 1], corners[k]};
                std::array<int, 3> idx{};
                for (int j = 0; j < 3; ++j) {
                    idx[static_cast<std::size_t>(j)] = tri[j].v - 1;
                    if (tri[j].vt == 0) all_have_vt = false;
                    wedge_refs.push_back({tri[j].vt - 1, tri[j].vn - 1, 0});
                }
                mesh.triangles.push_back(idx);
            }
        }
        // Unknown records (mtllib, usemtl, o, g, s, ...) are ignored.
    }

    if (all_have_vt && !mesh.triangles.empty()) {
        mesh.uvs.reserve(wedge_refs.size());
        for (const auto& w : wedge_refs) mesh.uvs.push_back(vts[static_cast<std::size_t>(w[0])]);
    }
    if (!vns.empty()) {
        mesh.normals.assign(mesh.vertices.size(), Vec3(0, 0, 1));
        for (std::size_t i = 0; i < wedge_refs.size(); ++i)
            if (wedge_refs[i][1] >= 0)
                mesh.normals[static_cast<std::size_t>(
                    mesh.triangles[i / 3][i % 3])] = vns[static_cast<std::size_t>(wedge_refs[i][1])];
    }
    return mesh;
}

// ---------------------------------------------------------------------------
// Density grid dump (debugging aid)
// ---------------------------------------------------------------------------

inline constexpr char kGridMagic[8] = {'S', 'P', 'L', 'G', 'R', 'D', '0', '1'};

inline void save_density_grid(const DensityGrid& grid, const std::string& path) {
    std::ostringstream out;
    out.write(kGridMagic, sizeof(kGridMagic));
    const std::int32_t res = grid.resolution;
    out.write(reinterpret_cast<const char*>(&res), sizeof(res));
    const std::array<double, 6> bounds = {grid.lo.x(), grid.lo.y(), grid.lo.z(),
                                          grid.hi.x(), grid.hi.y(), grid.hi.z()};
    out.write(reinterpret_cast<const char*>(bounds.data()), sizeof(bounds));
    out.write(reinterpret_cast<const char*>(grid.values.data()),
              static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
    detail::write_file(path, std::move(out).str());
}

inline DensityGrid load_density_grid(const std::string& path) {
    const std::string bytes = detail::read_file(path);
    if (bytes.size() < sizeof(kGridMagic) + sizeof(std::int32_t) + 6 * sizeof(double) ||
        std::memcmp(bytes.data(), kGridMagic, sizeof(kGridMagic)) != 0)
        throw ParseError(path + ": not a density grid dump", 0);
    std::size_t pos = sizeof(kGridMagic);
    std::int32_t res = 0;
    std::memcpy(&res, bytes.data() + pos, sizeof(res));
    pos += sizeof(res);
    std::array<double, 6> b{};
    std::memcpy(b.data(), bytes.data() + pos, sizeof(b));
    pos += sizeof(b);
    if (res < 1) throw ParseError(path + ": bad resolution", sizeof(kGridMagic));
    DensityGrid grid;
    grid.resolution = res;
    grid.lo = Vec3(b[0], b[1], b[2]);
    grid.hi = Vec3(b[3], b[4], b[5]);
    const std::size_t n = static_cast<std::size_t>(res) * res * res;
    if (bytes.size() - pos != n * sizeof(double))
        throw ParseError(path + ": value payload size mismatch", pos);
    grid.values.resize(n);
    std::memcpy(grid.values.data(), bytes.data() + pos, n * sizeof(double));
    return grid;
}

// ---------------------------------------------------------------------------
// Run configuration (flat key=value text)
// ---------------------------------------------------------------------------

// Every knob of the pipeline in one flat document. All fields have defaults
// except `input`; unknown keys are rejected so typos cannot silently fall
// back to defaults.
struct RunConfig {
    std::string input;               // scene image / archive / bundle path
    std::string output_dir = "out";
    std::string preset = "blob";     // synthetic scene preset
    double elevation = 0.0;          // assumed elevation used to build guidance cameras
    double true_elevation = 0.0;     // elevation the synthetic scene is actually shot at
    double radius = 2.0;             // orbit radius
    double fov_y = 49.1;
    int image_size = 128;
    int train_views = 24;
    int holdout_views = 8;
    int init_splats = 300;
    // trainer
    int iterations = 3000;
    double lambda_dssim = 0.2;
    double lr_position = 1.6e-4;
    double lr_rotation = 1e-3;
    double lr_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_sh = 2.5e-3;
    int densify_interval = 100;
    double densify_grad_threshold = 2e-4;
    double prune_opacity_threshold = 0.005;
    double split_scale_threshold = 0.02;
    int max_splats = 10000;
    double alpha_loss_weight = 0.1;
    double background = 1.0;         // gray level applied to all channels
    int log_interval = 100;
    // extraction + texture
    double mesh_threshold = 1.0;
    int atlas_size = 512;
    int refine_steps = 50;
    double noise_level = 0.2;
    // harness
    std::vector<double> sweep_angles = {-30, -20, -10, 0, 10, 20, 30};
    std::uint64_t seed = 0;
    int workers = 0;
};

namespace detail {

inline double parse_double_value(const std::string& key, const std::string& value,
                                 std::size_t at) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end != value.c_str() + value.size() || value.empty())
        throw ParseError("config key '" + key + "': not a number: '" + value + "'", at);
    return v;
}

inline long long parse_int_value(const std::string& key, const std::string& value,
                                 std::size_t at) {
    char* end = nullptr;
    const long long v = std::strtoll(value.c_str(), &end, 10);
    if (end != value.c_str() + value.size() || value.empty())
        throw ParseError("config key '" + key + "': not an integer: '" + value + "'", at);
    return v;
}

inline std::string trim(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Range validation shared by the parser and programmatic construction.
// Throws InvalidArgument naming the key and the allowed range.
inline void validate_config(const RunConfig& c) {
    auto range = [](bool ok, const char* key, const char* allowed) {
        if (!ok)
            throw InvalidArgument(std::string("config key '") + key + "': allowed range " +
                                  allowed);
    };
    range(c.elevation >= -90.0 && c.elevation <= 90.0, "elevation", "[-90, 90]");
    range(c.true_elevation >= -90.0 && c.true_elevation <= 90.0, "true_elevation",
          "[-90, 90]");
    range(c.radius > 0.0, "radius", "(0, inf)");
    range(c.fov_y > 0.0 && c.fov_y < 180.0, "fov_y", "(0, 180)");
    range(c.image_size >= 16 && c.image_size <= 4096, "image_size", "[16, 4096]");
    range(c.train_views >= 2, "train_views", "[2, inf)");
    range(c.holdout_views >= 2, "holdout_views", "[2, inf)");
    range(c.init_splats >= 1, "init_splats", "[1, inf)");
    range(c.iterations >= 1, "iterations", "[1, inf)");
    range(c.lambda_dssim >= 0.0 && c.lambda_dssim <= 1.0, "lambda_dssim", "[0, 1]");
    range(c.lr_position > 0.0, "lr_position", "(0, inf)");
    range(c.lr_rotation > 0.0, "lr_rotation", "(0, inf)");
    range(c.lr_scale > 0.0, "lr_scale", "(0, inf)");
    range(c.lr_opacity > 0.0, "lr_opacity", "(0, inf)");
    range(c.lr_sh > 0.0, "lr_sh", "(0, inf)");
    range(c.densify_grad_threshold > 0.0, "densify_grad_threshold", "(0, inf)");
    range(c.prune_opacity_threshold > 0.0 && c.prune_opacity_threshold < 1.0,
          "prune_opacity_threshold", "(0, 1)");
    range(c.split_scale_threshold > 0.0, "split_scale_threshold", "(0, inf)");
    range(c.max_splats >= 1, "max_splats", "[1, inf)");
    range(c.alpha_loss_weight >= 0.0, "alpha_loss_weight", "[0, inf)");
    range(c.background >= 0.0 && c.background <= 1.0, "background", "[0, 1]");
    range(c.log_interval >= 1, "log_interval", "[1, inf)");
    range(c.mesh_threshold > 0.0, "mesh_threshold", "(0, inf)");
    range(c.atlas_size >= 16 && c.atlas_size <= 8192, "atlas_size", "[16, 8192]");
    range(c.refine_steps >= 0, "refine_steps", "[0, inf)");
    range(c.noise_level >= 0.0, "noise_level", "[0, inf)");
    range(!c.sweep_angles.empty(), "sweep_angles", "non-empty list");
    for (double a : c.sweep_angles)
        range(a >= -90.0 && a <= 90.0, "sweep_angles", "[-90, 90] per angle");
    range(c.workers >= 0, "workers", "[0, inf)");
}

// Commands that consume config.input call this; synthesis does not need one.
inline void require_input(const RunConfig& c) {
    if (c.input.empty()) throw InvalidArgument("config key 'input': required, no default");
}

// Applies one key=value assignment. Shared by the file parser and the CLI's
// flag overrides (flag > file > default).
inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value,
                               std::size_t at = 0) {
    using detail::parse_double_value;
    using detail::parse_int_value;
    if (key == "input") c.input = value;
    else if (key == "output_dir") c.output_dir = value;
    else if (key == "preset") c.preset = value;
    else if (key == "elevation") c.elevation = parse_double_value(key, value, at);
    else if (key == "true_elevation") c.true_elevation = parse_double_value(key, value, at);
    else if (key == "radius") c.radius = parse_double_value(key, value, at);
    else if (key == "fov_y") c.fov_y = parse_double_value(key, value, at);
    else if (key == "image_size") c.image_size = static_cast<int>(parse_int_value(key, value, at));
    else if (key == "train_views") c.train_views = static_cast<int>(parse_int_value(key, value, at));
    else if (key == "holdout_views") c.holdout_views = static_cast<int>(parse_int_value(key, value, at));
    else if (key == "init_splats") c.init_splats = static_cast<int>(parse_int_value(key, value, at));
    else if (key == "iterations") c.iterations = static_cast<int>(parse_int_value(key, value, at));
    else if (key == "lambda_dssim") c.lambda_dssim = parse_double_value(key, value, at);
    else if (key == "lr_position") c.lr_position = parse_double_value(key, value, at);
    else if (key == "lr_rotation") c.lr_rotation = parse_double_value(key, value, at);
    else if (key == "lr_scale") c.lr_scale = parse_double_value(key, value, at);
    else if (key == "lr_opacity") c.lr_opacity = parse_double_value(key, value, at);
    else if (key == "lr_sh") c.lr_sh = parse_double_value(key, value, at);
    else if (key == "densify_interval") c.densify_interval = static_cast<int>(parse_int_value(key, value, at));
    else if (key == "densify_grad_threshold") c.densify_grad_threshold = parse_double_value(key, value, at);
    else if (key == "prune_opacity_threshold") c.prune_opacity_threshold = parse_double_value(key, value, at);
    else if (key == "split_scale_threshold") c.split_scale_threshold = parse_double_value(key, value, at);
    else if (key == "max_splats") c.max_splats = static_cast<int>(parse_int_value(key, value, at));
    else if (key == "alpha_loss_weight") c.alpha_loss_weight = parse_double_value(key, value, at);
    else if (key == "background") c.background = parse_double_value(key, value, at);
    else if (key == "log_interval") c.log_interval = static_cast<int>(parse_int_value(key, value, at));
    else if (key == "mesh_threshold") c.mesh_threshold = parse_double_value(key, value, at);
    else if (key == "atlas_size") c.atlas_size = static_cast<int>(parse_int_value(key, value, at));
    else if (key == "refine_steps") c.refine_steps = static_cast<int>(parse_int_value(key, value, at));
    else if (key == "noise_level") c.noise_level = parse_double_value(key, value, at);
    else if (key == "sweep_angles") {
        std::vector<double> angles;
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, ','))
            angles.push_back(parse_double_value(key, detail::trim(part), at));
        if (angles.empty()) throw ParseError("config key 'sweep_angles': empty list", at);
        c.sweep_angles = std::move(angles);
    } else if (key == "seed") {
        char* end = nullptr;
        c.seed = std::strtoull(value.c_str(), &end, 10);
        if (end != value.c_str() + value.size() || value.empty())
            throw ParseError("config key 'seed': not an unsigned integer: '" + value + "'", at);
    } else if (key == "workers") {
        c.workers = static_cast<int>(parse_int_value(key, value, at));
    } else {
        throw ParseError("unknown config key '" + key + "'", at);
    }
}

inline RunConfig parse_config_text(const std::string& text) {
    RunConfig c;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t line_at = pos;
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = detail::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line is not key=value: '" + line + "'", line_at);
        apply_config_entry(c, detail::trim(line.substr(0, eq)),
                           detail::trim(line.substr(eq + 1)), line_at);
    }
    validate_config(c);
    return c;
}

inline RunConfig parse_config(const std::string& path) {
    return parse_config_text(detail::read_file(path));
}

// Every key apply_config_entry accepts, in canonical serialization order.
inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "input",          "output_dir",    "preset",
        "elevation",      "true_elevation", "radius",
        "fov_y",          "image_size",    "train_views",
        "holdout_views",  "init_splats",   "iterations",
        "lambda_dssim",   "lr_position",   "lr_rotation",
        "lr_scale",       "lr_opacity",    "lr_sh",
        "densify_interval", "densify_grad_threshold", "prune_opacity_threshold",
        "split_scale_threshold", "max_splats", "alpha_loss_weight",
        "background",     "log_interval",  "mesh_threshold",
        "atlas_size",     "refine_steps",  "noise_level",
        "sweep_angles",   "seed",          "workers"};
    return keys;
}

// Canonical text form: every key, fixed order, full double precision.
// serialize -> parse -> serialize is byte-identical.
inline std::string serialize_config(const RunConfig& c) {
    using detail::format_full;
    std::ostringstream out;
    out << "input=" << c.input << "\n";
    out << "output_dir=" << c.output_dir << "\n";
    out << "preset=" << c.preset << "\n";
    out << "elevation=" << format_full(c.elevation) << "\n";
    out << "true_elevation=" << format_full(c.true_elevation) << "\n";
    out << "radius=" << format_full(c.radius) << "\n";
    out << "fov_y=" << format_full(c.fov_y) << "\n";
    out << "image_size=" << c.image_size << "\n";
    out << "train_views=" << c.train_views << "\n";
    out << "holdout_views=" << c.holdout_views << "\n";
    out << "init_splats=" << c.init_splats << "\n";
    out << "iterations=" << c.iterations << "\n";
    out << "lambda_dssim=" << format_full(c.lambda_dssim) << "\n";
    out << "lr_position=" << format_full(c.lr_position) << "\n";
    out << "lr_rotation=" << format_full(c.lr_rotation) << "\n";
    out << "lr_scale=" << format_full(c.lr_scale) << "\n";
    out << "lr_opacity=" << format_full(c.lr_opacity) << "\n";
    out << "lr_sh=" << format_full(c.lr_sh) << "\n";
    out << "densify_interval=" << c.densify_interval << "\n";
    out << "densify_grad_threshold=" << format_full(c.densify_grad_threshold) << "\n";
    out << "prune_opacity_threshold=" << format_full(c.prune_opacity_threshold) << "\n";
    out << "split_scale_threshold=" << format_full(c.split_scale_threshold) << "\n";
    out << "max_splats=" << c.max_splats << "\n";
    out << "alpha_loss_weight=" << format_full(c.alpha_loss_weight) << "\n";
    out << "background=" << format_full(c.background) << "\n";
    out << "log_interval=" << c.log_interval << "\n";
    out << "mesh_threshold=" << format_full(c.mesh_threshold) << "\n";
    out << "atlas_size=" << c.atlas_size << "\n";
    out << "refine_steps=" << c.refine_steps << "\n";
    out << "noise_level=" << format_full(c.noise_level) << "\n";
    out << "sweep_angles=";
    for (std::size_t i = 0; i < c.sweep_angles.size(); ++i)
        out << (i ? "," : "") << format_full(c.sweep_angles[i]);
    out << "\n";
    out << "seed=" << c.seed << "\n";
    out << "workers=" << c.workers << "\n";
    return std::move(out).str();
}

inline void save_config(const RunConfig& c, const std::string& path) {
    detail::write_file(path, serialize_config(c));
}

// ---------------------------------------------------------------------------
// CSV reports
// ---------------------------------------------------------------------------

// Fixed-decimal formatting for CSV cells; non-finite values get stable
// spellings so reports stay diffable.
inline std::string format_fixed(double v, int decimals = 4) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream out;
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw ShapeError("write_csv: row width " + std::to_string(row.size()) +
                             " does not match header width " + std::to_string(header.size()));
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
    detail::write_file(path, std::move(out).str());
}

}  // namespace splat
