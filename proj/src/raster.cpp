#include "octa/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace octa {

GrayImage::GrayImage(int width, int height, std::vector<double> data,
                     std::optional<double> scale_mm_per_px)
    : width_(width), height_(height), data_(std::move(data)), scale_(scale_mm_per_px) {
    if (width_ < 1 || height_ < 1)
        throw ArgumentError("GrayImage: dimensions must be >= 1");
    if (data_.size() != static_cast<std::size_t>(width_) * height_)
        throw ArgumentError("GrayImage: data length does not match width*height");
    for (double v : data_)
        if (!(v >= 0.0 && v <= 1.0))
            throw ArgumentError("GrayImage: values must lie in [0,1]");
    if (scale_ && !(*scale_ > 0.0))
        throw ArgumentError("GrayImage: scale_mm_per_px must be positive");
}

GrayImage::GrayImage(int width, int height, double fill,
                     std::optional<double> scale_mm_per_px)
    : GrayImage(width, height,
                std::vector<double>(static_cast<std::size_t>(width < 1 ? 1 : width) *
                                        (height < 1 ? 1 : height),
                                    fill),
                scale_mm_per_px) {}

GrayImage GrayImage::with_scale(double scale_mm_per_px) const {
    return GrayImage(width_, height_, data_, scale_mm_per_px);
}

RoiMask::RoiMask(int width, int height, std::vector<std::uint8_t> included)
    : width_(width), height_(height), included_(std::move(included)) {
    if (width_ < 1 || height_ < 1)
        throw ArgumentError("RoiMask: dimensions must be >= 1");
    if (included_.size() != static_cast<std::size_t>(width_) * height_)
        throw ArgumentError("RoiMask: size does not match width*height");
    if (std::find_if(included_.begin(), included_.end(),
                     [](std::uint8_t v) { return v != 0; }) == included_.end())
        throw ArgumentError("RoiMask: at least one pixel must be included");
}

RoiMask RoiMask::full(int width, int height) {
    return RoiMask(width, height,
                   std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 1));
}

std::size_t RoiMask::count() const {
    return static_cast<std::size_t>(
        std::count_if(included_.begin(), included_.end(), [](std::uint8_t v) { return v != 0; }));
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> vessel, RoiMask roi)
    : width_(width), height_(height), vessel_(std::move(vessel)), roi_(std::move(roi)) {
    if (roi_.width() != width_ || roi_.height() != height_)
        throw ArgumentError("BinaryMask: ROI dimensions do not match mask");
    if (vessel_.size() != static_cast<std::size_t>(width_) * height_)
        throw ArgumentError("BinaryMask: size does not match width*height");
}

BinaryMask BinaryMask::empty(const RoiMask& roi) {
    return BinaryMask(roi.width(), roi.height(),
                      std::vector<std::uint8_t>(static_cast<std::size_t>(roi.width()) * roi.height(), 0),
                      roi);
}

std::size_t BinaryMask::vessel_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < vessel_.size(); ++i)
        if (roi_.included()[i] && vessel_[i])
            ++n;
    return n;
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_pnm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = in.peek()) != EOF && !std::isspace(c)) {
                tok.push_back(static_cast<char>(in.get()));
            }
            return tok;
        }
    }
    return tok;
}

int parse_pnm_int(std::istream& in, const char* what) {
    const std::string tok = next_pnm_token(in);
    if (tok.empty())
        throw FormatError(std::string("pgm: missing ") + what);
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size())
            throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError(std::string("pgm: malformed ") + what + " '" + tok + "'");
    }
}

} // namespace

GrayImage load_gray(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path + "'");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '5')
        throw FormatError("unsupported format in '" + path + "' (expected binary P5)");
    const int width = parse_pnm_int(in, "width");
    const int height = parse_pnm_int(in, "height");
    const int maxval = parse_pnm_int(in, "maxval");
    if (width < 1 || height < 1)
        throw FormatError("pgm: non-positive dimensions in '" + path + "'");
    if (maxval != 255 && maxval != 65535)
        throw FormatError("pgm: unsupported maxval " + std::to_string(maxval) + " in '" + path + "'");
    in.get(); // single whitespace byte after maxval

    const std::size_t n = static_cast<std::size_t>(width) * height;
    const std::size_t bytes = n * (maxval == 255 ? 1 : 2);
    std::vector<std::uint8_t> raw(bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes)
        throw FormatError("pgm: payload shorter than width*height in '" + path + "'");

    std::vector<double> data(n);
    if (maxval == 255) {
        for (std::size_t i = 0; i < n; ++i)
            data[i] = raw[i] / 255.0;
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned v = (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
            data[i] = v / 65535.0;
        }
    }
    return GrayImage(width, height, std::move(data));
}

void save_gray(const GrayImage& img, const std::string& path, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw ArgumentError("save_gray: bit depth must be 8 or 16");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write '" + path + "'");
    const int maxval = bit_depth == 8 ? 255 : 65535;
    out << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
    const std::size_t n = img.data().size();
    if (bit_depth == 8) {
        std::vector<std::uint8_t> raw(n);
        for (std::size_t i = 0; i < n; ++i)
            raw[i] = static_cast<std::uint8_t>(std::lround(img.data()[i] * 255.0));
        out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(n));
    } else {
        std::vector<std::uint8_t> raw(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            const unsigned v = static_cast<unsigned>(std::lround(img.data()[i] * 65535.0));
            raw[2 * i] = static_cast<std::uint8_t>(v >> 8);
            raw[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
        }
        out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(2 * n));
    }
    if (!out)
        throw IoError("failed while writing '" + path + "'");
}

BinaryMask load_mask(const std::string& path) {
    const GrayImage img = load_gray(path);
    std::vector<std::uint8_t> vessel(img.data().size());
    for (std::size_t i = 0; i < vessel.size(); ++i)
        vessel[i] = img.data()[i] > 0.5 ? 1 : 0;
    return BinaryMask(img.width(), img.height(), std::move(vessel),
                      RoiMask::full(img.width(), img.height()));
}

void save_mask(const BinaryMask& mask, const std::string& path) {
    std::vector<double> data(mask.vessel().size());
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = mask.vessel()[i] ? 1.0 : 0.0;
    save_gray(GrayImage(mask.width(), mask.height(), std::move(data)), path, 8);
}

RoiMask load_roi(const std::string& path) {
    const GrayImage img = load_gray(path);
    std::vector<std::uint8_t> inc(img.data().size());
    for (std::size_t i = 0; i < inc.size(); ++i)
        inc[i] = img.data()[i] > 0.5 ? 1 : 0;
    return RoiMask(img.width(), img.height(), std::move(inc));
}

void save_roi(const RoiMask& roi, const std::string& path) {
    std::vector<double> data(roi.included().size());
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = roi.included()[i] ? 1.0 : 0.0;
    save_gray(GrayImage(roi.width(), roi.height(), std::move(data)), path, 8);
}

Metadata load_metadata(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path + "'");
    Metadata meta;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("metadata: line " + std::to_string(lineno) + " of '" + path +
                              "' is not key=value");
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

void save_metadata(const Metadata& meta, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write '" + path + "'");
    for (const auto& [k, v] : meta)
        out << k << "=" << v << "\n";
}

std::string sidecar_path(const std::string& image_path) {
    return image_path + ".meta";
}

double pixel_scale(double fov_mm, int samples) {
    if (!(fov_mm > 0.0))
        throw ArgumentError("pixel_scale: fov_mm must be positive");
    if (samples < 1)
        throw ArgumentError("pixel_scale: samples must be >= 1");
    return fov_mm / samples;
}

int mirror_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0)
            i = -i - 1;
        else
            i = 2 * n - 1 - i;
    }
    return i;
}

std::vector<double> extract_patch(const GrayImage& img, int cx, int cy, int k) {
    if (k < 3 || k % 2 == 0)
        throw ArgumentError("extract_patch: k must be odd and >= 3");
    if (cx < 0 || cx >= img.width() || cy < 0 || cy >= img.height())
        throw ArgumentError("extract_patch: center outside image");
    const int half = k / 2;
    std::vector<double> patch(static_cast<std::size_t>(k) * k);
    std::size_t idx = 0;
    for (int dy = -half; dy <= half; ++dy) {
        const int y = mirror_index(cy + dy, img.height());
        for (int dx = -half; dx <= half; ++dx) {
            const int x = mirror_index(cx + dx, img.width());
            patch[idx++] = img.at(x, y);
        }
    }
    return patch;
}

} // namespace octa
