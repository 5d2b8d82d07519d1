// Dataset ingestion and generation. Two on-disk formats: IDX (MNIST binary
// layout, bit-exact) and png-dir (root/<split>/<class_name>/*.png). Images
// live in memory as float32 [N,C,H,W] scaled to [0,1].
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nv/tensor.hpp"

namespace nv {

struct Dataset {
  int channels = 0, height = 0, width = 0;
  std::vector<float> images;  // n*c*h*w, values in [0,1]
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::string split;  // "train" or "val"

  int size() const { return int(labels.size()); }
  int num_classes() const { return int(class_names.size()); }
  int64_t image_numel() const { return int64_t(channels) * height * width; }

  std::span<const float> image(int i) const {
    return {images.data() + size_t(i) * size_t(image_numel()), size_t(image_numel())};
  }
  std::span<float> image(int i) {
    return {images.data() + size_t(i) * size_t(image_numel()), size_t(image_numel())};
  }

  TensorF batch(std::span<const int> indices) const {
    TensorF t = TensorF::zeros({int(indices.size()), channels, height, width});
    auto d = t.data();
    const size_t n = size_t(image_numel());
    for (size_t i = 0; i < indices.size(); ++i) {
      auto src = image(indices[i]);
      std::copy(src.begin(), src.end(), d.begin() + long(i * n));
    }
    return t;
  }

  void check() const;  // label range, size consistency
};

enum class DataFormat { idx, png_dir };
DataFormat parse_format(const std::string& s);

// split is "train" or "val". For idx the directory must contain
// <split>-images-idx3-ubyte and <split>-labels-idx1-ubyte; for png_dir it
// must contain <split>/<class_name>/*.png with consistent image geometry.
Dataset load_dataset(const std::filesystem::path& root, DataFormat format,
                     const std::string& split);

void save_idx(const std::filesystem::path& dir, const Dataset& data);
void save_png_dir(const std::filesystem::path& dir, const Dataset& data);

// Tints a grayscale dataset: with probability rho a sample keeps its class
// color, otherwise it gets a uniformly random *other* palette color. The
// black background stays black. Deterministic in the seed.
Dataset make_colored(const Dataset& base, double rho,
                     const std::vector<std::array<float, 3>>& palette, uint64_t seed);

std::vector<std::array<float, 3>> default_palette(int num_classes);

// Procedural 28x28 grayscale digit dataset (10 classes): jittered affine
// renderings of a fixed glyph set plus pixel noise. Classes are balanced.
Dataset make_digits(int n, uint64_t seed, const std::string& split);

// PNG io used by the png-dir format; 8-bit gray or RGB only.
struct PngImage {
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> pixels;  // row-major, interleaved
};
PngImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const PngImage& img);

}  // namespace nv
