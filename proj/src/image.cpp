#include "pfad/image.hpp"

#include <cmath>
#include <fstream>

#include "pfad/tensor.hpp"

namespace pfad {

namespace {

std::uint8_t quantize(float v) {
    float s = v * 255.0f + 0.5f;
    if (s < 0) s = 0;
    if (s > 255) s = 255;
    return static_cast<std::uint8_t>(s);
}

int read_pnm_token(std::istream& is) {
    // skips whitespace and '#' comments
    int c = is.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#')
            while (c != '\n' && c != EOF) c = is.get();
        c = is.get();
    }
    int val = 0;
    bool any = false;
    while (std::isdigit(c)) {
        val = val * 10 + (c - '0');
        any = true;
        c = is.get();
    }
    if (!any) throw std::runtime_error("malformed PNM header");
    return val;
}

}  // namespace

void save_ppm(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<std::uint8_t> buf(img.rgb.size());
    for (size_t i = 0; i < img.rgb.size(); ++i) buf[i] = quantize(img.rgb[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw std::runtime_error("write failed: " + path);
}

Image load_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    char m0 = static_cast<char>(is.get()), m1 = static_cast<char>(is.get());
    if (m0 != 'P' || m1 != '6') throw std::runtime_error("not a P6 PPM: " + path);
    Image img;
    img.w = read_pnm_token(is);
    img.h = read_pnm_token(is);
    const int maxval = read_pnm_token(is);
    if (maxval != 255) throw std::runtime_error("unsupported PPM maxval in " + path);
    std::vector<std::uint8_t> buf(static_cast<size_t>(img.h) * img.w * 3);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw std::runtime_error("truncated PPM: " + path);
    img.rgb.resize(buf.size());
    for (size_t i = 0; i < buf.size(); ++i) img.rgb[i] = static_cast<float>(buf[i]) / 255.0f;
    return img;
}

void save_pgm(const std::string& path, const GrayImage& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "P5\n" << img.w << " " << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pix.data()),
             static_cast<std::streamsize>(img.pix.size()));
    if (!os) throw std::runtime_error("write failed: " + path);
}

GrayImage load_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    char m0 = static_cast<char>(is.get()), m1 = static_cast<char>(is.get());
    if (m0 != 'P' || m1 != '5') throw std::runtime_error("not a P5 PGM: " + path);
    GrayImage img;
    img.w = read_pnm_token(is);
    img.h = read_pnm_token(is);
    const int maxval = read_pnm_token(is);
    if (maxval != 255) throw std::runtime_error("unsupported PGM maxval in " + path);
    img.pix.resize(static_cast<size_t>(img.h) * img.w);
    is.read(reinterpret_cast<char*>(img.pix.data()), static_cast<std::streamsize>(img.pix.size()));
    if (!is) throw std::runtime_error("truncated PGM: " + path);
    return img;
}

Image resize_image(const Image& img, int h_out, int w_out) {
    if (h_out < 1 || w_out < 1) throw std::invalid_argument("resize target must be positive");
    Tensor<float> t({img.h, img.w, 3}, img.rgb);
    Tensor<float> r = bilinear_resize(t, h_out, w_out, static_cast<Tape<float>*>(nullptr));
    Image out;
    out.h = h_out;
    out.w = w_out;
    out.rgb = r.data();
    return out;
}

}  // namespace pfad
