#include "fsgan/data.hpp"

#include "fsgan/errors.hpp"
#include "fsgan/random.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

namespace fsgan {

namespace {

bool has_image_extension(const std::filesystem::path& p)
{
    auto ext = p.extension().string();
    std::ranges::transform(ext, ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::uint8_t to_byte(double v)
{
    return static_cast<std::uint8_t>(std::lround(std::clamp((v + 1.0) * 127.5, 0.0, 255.0)));
}

cv::Mat to_mat(const double* chw, std::size_t r)
{
    cv::Mat bgr(static_cast<int>(r), static_cast<int>(r), CV_8UC3);
    const auto plane = r * r;
    for (std::size_t y = 0; y < r; ++y)
        for (std::size_t x = 0; x < r; ++x) {
            auto& px = bgr.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x));
            for (int c = 0; c < 3; ++c) px[2 - c] = to_byte(chw[static_cast<std::size_t>(c) * plane + y * r + x]);
        }
    return bgr;
}

void write_mat(const std::filesystem::path& path, const cv::Mat& m)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m)) throw std::runtime_error("failed to write image " + path.string());
}

double smoothstep(double e0, double e1, double x)
{
    const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// HSV with h in [0, 1) to RGB in [0, 1].
void hsv_to_rgb(double h, double s, double v, double rgb[3])
{
    h = h - std::floor(h);
    const double hh = h * 6.0;
    const int sector = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    const double table[6][3] = {{v, t, p}, {q, v, p}, {p, v, t}, {p, q, v}, {t, p, v}, {v, p, q}};
    for (int c = 0; c < 3; ++c) rgb[c] = table[sector][c];
}

// Signed distance (pixels, negative inside) to the shape outline.
double shape_distance(const SynthAttributes& a, double x, double y, double r)
{
    const double cx = a.center_x * r, cy = a.center_y * r, s = a.scale * r;
    const double dx = x - cx, dy = y - cy;
    switch (a.shape) {
    case 0: return std::hypot(dx, dy) - s;
    case 1: return std::max(std::abs(dx), std::abs(dy)) - 0.85 * s;
    case 2:
        // Upward equilateral triangle, apex at (0, -s), base at y = s / 2.
        return std::max(dy - 0.5 * s, (std::sqrt(3.0) * std::abs(dx) - dy - s) * 0.5);
    default: return std::abs(std::hypot(dx, dy) - 0.7 * s) - 0.3 * s;
    }
}

void require_range(const std::pair<double, double>& r, const char* what)
{
    if (!(r.first < r.second) || !std::isfinite(r.first) || !std::isfinite(r.second))
        throw ConfigError(std::string("synthetic domain: degenerate ") + what + " range");
}

} // namespace

ImageDataset ImageDataset::subset(std::span<const std::size_t> rows) const
{
    ImageDataset out;
    out.images = images.gather_rows(rows);
    out.resolution = resolution;
    for (auto r : rows) {
        if (!sources.empty()) out.sources.push_back(sources.at(r));
        if (!attributes.empty()) out.attributes.push_back(attributes.at(r));
    }
    return out;
}

ImageDataset load_image_dir(const std::filesystem::path& dir, std::size_t resolution)
{
    if (!std::filesystem::is_directory(dir)) throw LoadError("image directory does not exist: " + dir.string());
    if (resolution == 0) throw ConfigError("resolution must be positive");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
    std::ranges::sort(files);

    ImageDataset out;
    out.resolution = resolution;
    std::vector<Tensor> images;
    const auto r = static_cast<int>(resolution);
    for (const auto& f : files) {
        cv::Mat m = cv::imread(f.string(), cv::IMREAD_COLOR);
        if (m.empty()) {
            std::cerr << "warning: skipping undecodable image " << f << "\n";
            continue;
        }
        cv::Mat resized;
        if (m.rows == r && m.cols == r) resized = m;
        else cv::resize(m, resized, cv::Size(r, r), 0, 0, cv::INTER_LINEAR);
        Tensor img({3, resolution, resolution});
        for (int y = 0; y < r; ++y)
            for (int x = 0; x < r; ++x) {
                const auto& px = resized.at<cv::Vec3b>(y, x);
                for (int c = 0; c < 3; ++c)
                    img.data[(static_cast<std::size_t>(c) * resolution + static_cast<std::size_t>(y)) * resolution +
                             static_cast<std::size_t>(x)] = px[2 - c] / 127.5 - 1.0;
            }
        images.push_back(std::move(img));
        out.sources.push_back(f.string());
    }
    if (images.empty()) throw LoadError("no decodable PNG/JPEG images in " + dir.string());
    out.images = stack_rows(images);
    return out;
}

void save_image_dir(const ImageDataset& data, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu.png", i);
        write_mat(dir / name, to_mat(data.images.row(i).data(), data.resolution));
    }
}

void write_png(const std::filesystem::path& path, const Tensor& image)
{
    const auto r = image.shape.back();
    if (image.size() != 3 * r * r) throw ShapeError("write_png expects one (3, R, R) image, got " + shape_string(image.shape));
    write_mat(path, to_mat(image.data.data(), r));
}

void write_grid(const std::filesystem::path& path, const Tensor& images, std::size_t columns)
{
    if (images.rank() != 4 || images.dim(1) != 3) throw ShapeError("write_grid expects (N, 3, R, R)");
    const auto n = images.dim(0), r = images.dim(2);
    columns = std::max<std::size_t>(1, std::min(columns, n));
    const auto rows = (n + columns - 1) / columns;
    cv::Mat grid(static_cast<int>(rows * (r + 1) + 1), static_cast<int>(columns * (r + 1) + 1), CV_8UC3,
                 cv::Scalar(255, 255, 255));
    for (std::size_t i = 0; i < n; ++i) {
        const cv::Mat tile = to_mat(images.row(i).data(), r);
        const auto x = static_cast<int>((i % columns) * (r + 1) + 1), y = static_cast<int>((i / columns) * (r + 1) + 1);
        tile.copyTo(grid(cv::Rect(x, y, static_cast<int>(r), static_cast<int>(r))));
    }
    write_mat(path, grid);
}

Hsv rgb_to_hsv(double r, double g, double b)
{
    r = (r + 1) / 2, g = (g + 1) / 2, b = (b + 1) / 2;
    const double hi = std::max({r, g, b}), lo = std::min({r, g, b}), d = hi - lo;
    double h = 0.0;
    if (d > 0) {
        if (hi == r) h = std::fmod((g - b) / d, 6.0);
        else if (hi == g) h = (b - r) / d + 2.0;
        else h = (r - g) / d + 4.0;
        h /= 6.0;
        if (h < 0) h += 1.0;
    }
    return {h, hi > 0 ? d / hi : 0.0, hi};
}

Tensor render_shape(const SynthAttributes& a, std::size_t resolution)
{
    const auto r = static_cast<double>(resolution);
    Tensor img({3, resolution, resolution});
    double color[3];
    hsv_to_rgb(a.hue, 0.85, 0.95, color);
    const auto plane = resolution * resolution;
    for (std::size_t y = 0; y < resolution; ++y)
        for (std::size_t x = 0; x < resolution; ++x) {
            const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
            // Neutral background with a gentle vertical gradient.
            const double bg = std::clamp(a.background + 0.25 * (py / r - 0.5), -1.0, 1.0);
            const double cover = 1.0 - smoothstep(-0.75, 0.75, shape_distance(a, px, py, r));
            double shade = 1.0;
            if (a.striped) shade = 0.55 + 0.45 * (0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * (px + py) / 4.0));
            for (std::size_t c = 0; c < 3; ++c) {
                const double fg = 2.0 * color[c] * shade - 1.0;
                img.data[c * plane + y * resolution + x] = (1.0 - cover) * bg + cover * fg;
            }
            if (a.accessory) {
                const double ax = (a.center_x + 0.6 * a.scale) * r, ay = (a.center_y - 0.6 * a.scale) * r;
                const double dot = 1.0 - smoothstep(-0.75, 0.75, std::hypot(px - ax, py - ay) - std::max(1.2, 0.25 * a.scale * r));
                for (std::size_t c = 0; c < 3; ++c) {
                    auto& v = img.data[c * plane + y * resolution + x];
                    v = (1.0 - dot) * v + dot * 0.95;
                }
            }
        }
    return img;
}

ImageDataset synth_domain(const SynthDomainSpec& spec)
{
    if (spec.count == 0) throw ConfigError("synthetic domain: count must be positive");
    if (spec.resolution < 8) throw ConfigError("synthetic domain: resolution must be >= 8");
    if (spec.shape_types < 1 || spec.shape_types > 4) throw ConfigError("synthetic domain: shape_types must be in [1, 4]");
    require_range(spec.hue_range, "hue");
    require_range(spec.position_range, "position");
    require_range(spec.scale_range, "scale");
    require_range(spec.background_range, "background");
    if (!(spec.accessory_probability >= 0.0 && spec.accessory_probability <= 1.0))
        throw ConfigError("synthetic domain: accessory probability must lie in [0, 1]");

    Rng rng(spec.seed);
    auto in = [&rng](const std::pair<double, double>& range) {
        return range.first + (range.second - range.first) * uniform01(rng);
    };
    ImageDataset out;
    out.resolution = spec.resolution;
    std::vector<Tensor> images;
    images.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) {
        SynthAttributes a;
        a.shape = uniform_index(rng, spec.shape_types);
        a.hue = in(spec.hue_range);
        a.center_x = in(spec.position_range);
        a.center_y = in(spec.position_range);
        a.scale = in(spec.scale_range);
        a.accessory = uniform01(rng) < spec.accessory_probability;
        a.background = in(spec.background_range);
        if (spec.target_shift) {
            a.hue = a.hue + spec.target_shift->hue_rotation;
            a.hue -= std::floor(a.hue);
            a.striped = spec.target_shift->stripes;
        }
        images.push_back(render_shape(a, spec.resolution));
        out.attributes.push_back(a);
        out.sources.push_back("synth:" + std::to_string(spec.seed) + ":" + std::to_string(i));
    }
    out.images = stack_rows(images);
    return out;
}

} // namespace fsgan
