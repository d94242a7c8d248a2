#include "roadfusion/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "roadfusion/error.hpp"

namespace rf::io {

namespace {

std::string offset_msg(const std::string& what, std::istream& in) {
    const auto pos = in.tellg();
    std::ostringstream os;
    os << what << " (byte offset " << (pos < 0 ? -1 : static_cast<long long>(pos)) << ")";
    return os.str();
}

[[noreturn]] void fail_format(const std::string& what, std::istream& in) {
    throw FormatError(offset_msg(what, in));
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create " + path.string());
    return f;
}

// Reads one whitespace/comment-delimited PNM header token.
std::string pnm_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        }
        c = in.get();
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    return tok;
}

long pnm_int(std::istream& in, const std::string& field) {
    const std::string tok = pnm_token(in);
    if (tok.empty()) fail_format("missing PNM header field " + field, in);
    try {
        std::size_t used = 0;
        const long v = std::stol(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        fail_format("non-numeric PNM header field " + field + ": '" + tok + "'", in);
    }
}

struct PnmHeader {
    int width = 0;
    int height = 0;
    long maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const char* magic) {
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != magic[0] || m1 != magic[1]) {
        fail_format(std::string("bad magic, expected ") + magic, in);
    }
    PnmHeader h;
    const long w = pnm_int(in, "width");
    const long ht = pnm_int(in, "height");
    h.maxval = pnm_int(in, "maxval");
    if (w <= 0 || ht <= 0 || w > 1 << 20 || ht > 1 << 20) {
        fail_format("implausible PNM dimensions", in);
    }
    h.width = static_cast<int>(w);
    h.height = static_cast<int>(ht);
    // The single whitespace after maxval was consumed by pnm_token.
    return h;
}

void read_exact(std::istream& in, char* buf, std::size_t n, const char* what) {
    in.read(buf, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        fail_format(std::string("truncated ") + what, in);
    }
}

std::uint32_t read_u32le(std::istream& in, const char* what) {
    unsigned char b[4];
    read_exact(in, reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32le(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

float byteswap_f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u = ((u & 0x000000ffu) << 24) | ((u & 0x0000ff00u) << 8) |
        ((u & 0x00ff0000u) >> 8) | ((u & 0xff000000u) >> 24);
    std::memcpy(&v, &u, 4);
    return v;
}

constexpr bool host_little_endian() {
    return std::endian::native == std::endian::little;
}

}  // namespace

DisparityImage read_pgm16(const std::filesystem::path& path, int scale) {
    auto f = open_in(path);
    return read_pgm16(f, scale);
}

DisparityImage read_pgm16(std::istream& in, int scale) {
    const PnmHeader h = read_pnm_header(in, "P5");
    if (h.maxval != 65535) {
        fail_format("PGM16 requires maxval 65535, got " + std::to_string(h.maxval), in);
    }
    DisparityImage img(h.width, h.height);
    img.scale = scale;
    std::vector<unsigned char> row(static_cast<std::size_t>(h.width) * 2);
    for (int v = 0; v < h.height; ++v) {
        read_exact(in, reinterpret_cast<char*>(row.data()), row.size(), "PGM16 payload");
        for (int u = 0; u < h.width; ++u) {
            const std::uint16_t raw = static_cast<std::uint16_t>(
                (static_cast<unsigned>(row[2 * u]) << 8) | row[2 * u + 1]);
            if (raw != 0) {
                img.at(u, v) = static_cast<double>(raw) / scale;
                img.valid[img.idx(u, v)] = 1;
            }
        }
    }
    return img;
}

void write_pgm16(const DisparityImage& img, const std::filesystem::path& path) {
    auto f = open_out(path);
    f << "P5\n" << img.width << " " << img.height << "\n65535\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 2);
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            long raw = 0;
            if (img.is_valid(u, v)) {
                raw = std::lround(img.at(u, v) * img.scale);
                if (raw < 0 || raw > 65535) {
                    throw RangeError("disparity " + std::to_string(img.at(u, v)) +
                                     " at pixel (" + std::to_string(u) + "," + std::to_string(v) +
                                     ") is not representable with scale " + std::to_string(img.scale));
                }
            }
            row[2 * u] = static_cast<unsigned char>((raw >> 8) & 0xff);
            row[2 * u + 1] = static_cast<unsigned char>(raw & 0xff);
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw IoError("write failed: " + path.string());
}

LabelImage read_label_pgm(const std::filesystem::path& path) {
    auto f = open_in(path);
    return read_label_pgm(f);
}

LabelImage read_label_pgm(std::istream& in) {
    const PnmHeader h = read_pnm_header(in, "P5");
    if (h.maxval != 255) {
        fail_format("label PGM requires maxval 255, got " + std::to_string(h.maxval), in);
    }
    LabelImage img(h.width, h.height);
    read_exact(in, reinterpret_cast<char*>(img.classes.data()), img.classes.size(), "label payload");
    for (std::size_t i = 0; i < img.classes.size(); ++i) {
        if (img.classes[i] > 2) {
            throw FormatError("label value " + std::to_string(img.classes[i]) +
                              " out of {0,1,2} at pixel index " + std::to_string(i));
        }
    }
    return img;
}

void write_label_pgm(const LabelImage& img, const std::filesystem::path& path) {
    auto f = open_out(path);
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.classes.data()),
            static_cast<std::streamsize>(img.classes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
    auto f = open_in(path);
    return read_ppm(f);
}

RgbImage read_ppm(std::istream& in) {
    const PnmHeader h = read_pnm_header(in, "P6");
    if (h.maxval != 255) {
        fail_format("PPM requires maxval 255, got " + std::to_string(h.maxval), in);
    }
    RgbImage img(h.width, h.height);
    read_exact(in, reinterpret_cast<char*>(img.data.data()), img.data.size(), "PPM payload");
    return img;
}

void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
    auto f = open_out(path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

Tensor read_pfm(const std::filesystem::path& path) {
    auto f = open_in(path);
    return read_pfm(f);
}

Tensor read_pfm(std::istream& in) {
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != 'P') fail_format("bad PFM magic", in);
    if (m1 == 'F') fail_format("color PFM (\"PF\") is not supported, expected grayscale \"Pf\"", in);
    if (m1 != 'f') fail_format("bad PFM magic", in);
    const long w = pnm_int(in, "width");
    const long h = pnm_int(in, "height");
    if (w <= 0 || h <= 0 || w > 1 << 20 || h > 1 << 20) fail_format("implausible PFM dimensions", in);
    const std::string scale_tok = pnm_token(in);
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (const std::exception&) {
        fail_format("non-numeric PFM scale '" + scale_tok + "'", in);
    }
    if (scale == 0.0) fail_format("PFM scale must be nonzero", in);
    const bool file_little = scale < 0.0;

    Tensor t({static_cast<int>(h), static_cast<int>(w), 1});
    std::vector<float> row(static_cast<std::size_t>(w));
    // Rows are stored bottom-up.
    for (long y = h - 1; y >= 0; --y) {
        read_exact(in, reinterpret_cast<char*>(row.data()), row.size() * 4, "PFM payload");
        for (long x = 0; x < w; ++x) {
            float v = row[static_cast<std::size_t>(x)];
            if (file_little != host_little_endian()) v = byteswap_f32(v);
            t.at(static_cast<int>(y), static_cast<int>(x), 0) = static_cast<double>(v);
        }
    }
    return t;
}

void write_pfm(const Tensor& map, const std::filesystem::path& path) {
    if (map.rank() != 3 || map.dim(2) != 1) {
        throw ShapeError("write_pfm expects an H x W x 1 map");
    }
    const int h = map.dim(0), w = map.dim(1);
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (std::isnan(map[i])) {
            throw RangeError("write_pfm: NaN sample at flat index " + std::to_string(i));
        }
    }
    auto f = open_out(path);
    f << "Pf\n" << w << " " << h << "\n" << (host_little_endian() ? "-1.0" : "1.0") << "\n";
    std::vector<float> row(static_cast<std::size_t>(w));
    for (int y = h - 1; y >= 0; --y) {
        for (int x = 0; x < w; ++x) row[static_cast<std::size_t>(x)] = static_cast<float>(map.at(y, x, 0));
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    }
    if (!f) throw IoError("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
    auto f = open_in(path);
    return read_tensor(f);
}

Tensor read_tensor(std::istream& in) {
    char magic[4];
    read_exact(in, magic, 4, "TNSR magic");
    if (std::memcmp(magic, "TNSR", 4) != 0) fail_format("bad TNSR magic", in);
    const std::uint32_t version = read_u32le(in, "TNSR version");
    if (version != 1) fail_format("unsupported TNSR version " + std::to_string(version), in);
    const std::uint32_t rank = read_u32le(in, "TNSR rank");
    if (rank < 1 || rank > 4) fail_format("TNSR rank must be 1..4, got " + std::to_string(rank), in);
    std::vector<int> dims(rank);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::uint32_t d = read_u32le(in, "TNSR dims");
        if (d == 0 || d > (1u << 24)) fail_format("implausible TNSR dimension", in);
        dims[i] = static_cast<int>(d);
        count *= d;
    }
    Tensor t(dims);
    std::vector<float> payload(count);
    read_exact(in, reinterpret_cast<char*>(payload.data()), count * 4, "TNSR payload");
    for (std::size_t i = 0; i < count; ++i) {
        float v = payload[i];
        if (!host_little_endian()) v = byteswap_f32(v);
        t[i] = static_cast<double>(v);
    }
    // Trailing bytes mean the header and payload disagree.
    char extra;
    if (in.get(extra)) fail_format("TNSR payload longer than header dims imply", in);
    return t;
}

void write_tensor(const Tensor& t, std::ostream& out) {
    out.write("TNSR", 4);
    write_u32le(out, 1);
    write_u32le(out, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_u32le(out, static_cast<std::uint32_t>(t.dim(i)));
    std::vector<float> payload(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        float v = static_cast<float>(t[i]);
        if (!host_little_endian()) v = byteswap_f32(v);
        payload[i] = v;
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * 4));
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    auto f = open_out(path);
    write_tensor(t, f);
    if (!f) throw IoError("write failed: " + path.string());
}

namespace {

std::map<std::string, double> read_kv(std::istream& in) {
    std::map<std::string, double> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            std::size_t used = 0;
            const double v = std::stod(val, &used);
            while (used < val.size() && std::isspace(static_cast<unsigned char>(val[used]))) ++used;
            if (used != val.size()) throw std::invalid_argument(val);
            kv[key] = v;
        } catch (const std::exception&) {
            throw FormatError("line " + std::to_string(lineno) + ": non-numeric value for key '" + key + "'");
        }
    }
    return kv;
}

double kv_get(const std::map<std::string, double>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("missing key '" + key + "'");
    return it->second;
}

}  // namespace

RoadModel read_road_model(const std::filesystem::path& path) {
    auto f = open_in(path);
    return read_road_model(f);
}

RoadModel read_road_model(std::istream& in) {
    const auto kv = read_kv(in);
    RoadModel m;
    m.a0 = kv_get(kv, "a0");
    m.a1 = kv_get(kv, "a1");
    m.theta = kv_get(kv, "theta_rad");
    m.delta = kv_get(kv, "delta");
    m.energy = kv_get(kv, "energy");
    m.inlier_count = static_cast<int>(kv_get(kv, "inlier_count"));
    return m;
}

void write_road_model(const RoadModel& m, const std::filesystem::path& path) {
    auto f = open_out(path);
    f.precision(17);
    f << "a0=" << m.a0 << "\n"
      << "a1=" << m.a1 << "\n"
      << "theta_rad=" << m.theta << "\n"
      << "delta=" << m.delta << "\n"
      << "energy=" << m.energy << "\n"
      << "inlier_count=" << m.inlier_count << "\n";
    if (!f) throw IoError("write failed: " + path.string());
}

CameraModel read_camera(const std::filesystem::path& path) {
    auto f = open_in(path);
    return read_camera(f);
}

CameraModel read_camera(std::istream& in) {
    const auto kv = read_kv(in);
    CameraModel c;
    c.fx = kv_get(kv, "fx");
    c.fy = kv_get(kv, "fy");
    c.u0 = kv_get(kv, "u0");
    c.v0 = kv_get(kv, "v0");
    c.baseline = kv_get(kv, "baseline");
    if (c.fx <= 0 || c.fy <= 0 || c.baseline <= 0) {
        throw RangeError("camera fx, fy and baseline must be positive");
    }
    return c;
}

void write_camera(const CameraModel& cam, const std::filesystem::path& path) {
    auto f = open_out(path);
    f.precision(17);
    f << "fx=" << cam.fx << "\n"
      << "fy=" << cam.fy << "\n"
      << "u0=" << cam.u0 << "\n"
      << "v0=" << cam.v0 << "\n"
      << "baseline=" << cam.baseline << "\n";
    if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace rf::io
