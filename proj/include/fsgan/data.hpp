#pragma once

#include "fsgan/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fsgan {

/// Attributes a procedural image was rendered from.
struct SynthAttributes {
    std::size_t shape = 0; // 0 circle, 1 square, 2 triangle, 3 ring
    double hue = 0.0;
    double center_x = 0.5, center_y = 0.5;
    double scale = 0.2;
    bool accessory = false;
    double background = 0.0;
    bool striped = false;
};

struct ImageDataset {
    Tensor images; // (N, 3, R, R) in [-1, 1], RGB
    std::size_t resolution = 0;
    std::vector<std::string> sources;
    std::vector<SynthAttributes> attributes; // empty for loaded images

    std::size_t size() const { return images.shape.empty() ? 0 : images.dim(0); }
    Tensor batch(std::span<const std::size_t> rows) const { return images.gather_rows(rows); }
    ImageDataset subset(std::span<const std::size_t> rows) const;
};

/// Decodes every PNG/JPEG in `dir` (sorted by file name), bilinear-resizes to `resolution`,
/// maps to [-1, 1]. Undecodable files are skipped with a warning on stderr.
ImageDataset load_image_dir(const std::filesystem::path& dir, std::size_t resolution);

/// Writes each image as an 8-bit PNG named 0000.png, 0001.png, ...
void save_image_dir(const ImageDataset& data, const std::filesystem::path& dir);

/// (3, R, R) or (1, 3, R, R) image in [-1, 1] to an 8-bit PNG.
void write_png(const std::filesystem::path& path, const Tensor& image);
/// (N, 3, R, R) images tiled row-major with `columns` per row and a 1-pixel gap.
void write_grid(const std::filesystem::path& path, const Tensor& images, std::size_t columns);

struct TargetShift {
    double hue_rotation = 0.5;
    bool stripes = true;
};

/// Procedural "shapes on a neutral background" domain.
struct SynthDomainSpec {
    std::size_t count = 5000;
    std::uint64_t seed = 0;
    std::size_t resolution = 32;
    std::size_t shape_types = 4;
    std::pair<double, double> hue_range{0.0, 0.45};
    std::pair<double, double> position_range{0.3, 0.7};
    std::pair<double, double> scale_range{0.14, 0.3};
    std::pair<double, double> background_range{-0.7, 0.1};
    double accessory_probability = 0.5;
    /// When set, rendered attributes are remapped to define a shifted target domain.
    std::optional<TargetShift> target_shift;
};

ImageDataset synth_domain(const SynthDomainSpec& spec);

/// Renders one image (3, R, R) from explicit attributes.
Tensor render_shape(const SynthAttributes& a, std::size_t resolution);

/// Hue in [0, 1) of an RGB triple in [-1, 1]; saturation and value returned alongside.
struct Hsv {
    double h, s, v;
};
Hsv rgb_to_hsv(double r, double g, double b);

} // namespace fsgan
