#include "p3seg/pgm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "p3seg/errors.hpp"

namespace p3seg {

namespace {

struct PgmHeader {
    int width = 0;
    int height = 0;
    int maxval = 0;
};

// P5 header: magic, then whitespace-separated width/height/maxval with
// '#' comments allowed, then a single whitespace byte before the raster.
PgmHeader read_header(std::istream& in, const std::string& path) {
    std::string magic;
    in >> magic;
    if (magic != "P5") throw format_error("not a binary PGM (P5): " + path);

    int fields[3];
    for (int& f : fields) {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string comment;
            std::getline(in, comment);
            in >> std::ws;
        }
        if (!(in >> f)) throw format_error("malformed PGM header: " + path);
    }
    in.get(); // the single separator byte
    PgmHeader h;
    h.width = fields[0];
    h.height = fields[1];
    h.maxval = fields[2];
    if (h.width < 1 || h.height < 1 || h.maxval < 1 || h.maxval > 65535)
        throw format_error("bad PGM dimensions: " + path);
    return h;
}

void write_header(std::ostream& out, int width, int height, int maxval) {
    out << "P5\n" << width << " " << height << "\n" << maxval << "\n";
}

} // namespace

void save_image_pgm(const std::string& path, const Tensor& image) {
    if (image.channels != 1) throw dimension_error("save_image_pgm: expected 1 channel");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot open for writing: " + path);
    write_header(out, image.width, image.height, 65535);

    std::string buf;
    buf.reserve(image.size() * 2);
    for (double v : image.data) {
        double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        const int q = static_cast<int>(std::lround(clamped * 65535.0));
        buf.push_back(static_cast<char>((q >> 8) & 0xff)); // MSB first
        buf.push_back(static_cast<char>(q & 0xff));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw format_error("short write: " + path);
}

Tensor load_image_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open: " + path);
    const PgmHeader h = read_header(in, path);
    if (h.maxval != 65535) throw format_error("expected 16-bit PGM image: " + path);

    Tensor image(1, h.height, h.width);
    std::vector<char> raw(image.size() * 2);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw format_error("truncated PGM raster: " + path);
    for (std::size_t i = 0; i < image.size(); ++i) {
        const unsigned hi = static_cast<unsigned char>(raw[2 * i]);
        const unsigned lo = static_cast<unsigned char>(raw[2 * i + 1]);
        image.data[i] = static_cast<double>((hi << 8) | lo) / 65535.0;
    }
    return image;
}

void save_label_pgm(const std::string& path, const LabelMap& labels) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot open for writing: " + path);
    write_header(out, labels.width, labels.height, 255);
    std::string buf;
    buf.reserve(labels.size());
    for (int v : labels.data) {
        if (v < 0 || v > 255) throw format_error("label out of byte range: " + path);
        buf.push_back(static_cast<char>(v));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw format_error("short write: " + path);
}

LabelMap load_label_pgm(const std::string& path, int n_classes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open: " + path);
    const PgmHeader h = read_header(in, path);
    if (h.maxval != 255) throw format_error("expected 8-bit PGM labels: " + path);

    LabelMap labels(h.height, h.width);
    std::vector<char> raw(labels.size());
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw format_error("truncated PGM raster: " + path);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int v = static_cast<unsigned char>(raw[i]);
        if (v >= n_classes) throw format_error("label class out of range: " + path);
        labels.data[i] = v;
    }
    return labels;
}

void save_mask_pgm(const std::string& path, const Mask& mask) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot open for writing: " + path);
    write_header(out, mask.width, mask.height, 255);
    std::string buf;
    buf.reserve(mask.size());
    for (auto v : mask.data) buf.push_back(static_cast<char>(v ? 255 : 0));
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

} // namespace p3seg
