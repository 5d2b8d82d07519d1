#include "nv/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

#include <png.h>

namespace nv {

namespace fs = std::filesystem;

void Dataset::check() const {
  if (size() == 0) throw std::runtime_error("dataset is empty");
  if (int64_t(images.size()) != int64_t(size()) * image_numel())
    throw std::runtime_error("dataset: image buffer size mismatch");
  for (int l : labels)
    if (l < 0 || l >= num_classes())
      throw std::runtime_error(strprintf("dataset: label %d outside [0,%d)", l,
                                         num_classes()));
}

DataFormat parse_format(const std::string& s) {
  if (s == "idx") return DataFormat::idx;
  if (s == "png-dir") return DataFormat::png_dir;
  throw std::invalid_argument("unknown dataset format: " + s);
}

// ---------------------------------------------------------------------------
// IDX (MNIST binary layout): big-endian int32 header, uint8 payload.

namespace {

uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated idx file: " + path);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) |
         uint32_t(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

Dataset load_idx(const fs::path& dir, const std::string& split) {
  const fs::path images_path = dir / (split + "-images-idx3-ubyte");
  const fs::path labels_path = dir / (split + "-labels-idx1-ubyte");
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("cannot open idx file: " + images_path.string());
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("cannot open idx file: " + labels_path.string());

  if (read_be32(imgs, images_path.string()) != 2051)
    throw std::runtime_error("bad idx image magic in " + images_path.string());
  const uint32_t n = read_be32(imgs, images_path.string());
  const uint32_t rows = read_be32(imgs, images_path.string());
  const uint32_t cols = read_be32(imgs, images_path.string());

  if (read_be32(labs, labels_path.string()) != 2049)
    throw std::runtime_error("bad idx label magic in " + labels_path.string());
  const uint32_t nl = read_be32(labs, labels_path.string());
  if (n != nl)
    throw std::runtime_error(strprintf("idx count mismatch: %u images in %s, %u labels in %s",
                                       n, images_path.string().c_str(), nl,
                                       labels_path.string().c_str()));
  if (n == 0) throw std::runtime_error("empty idx dataset: " + images_path.string());

  Dataset d;
  d.split = split;
  d.channels = 1;
  d.height = int(rows);
  d.width = int(cols);
  std::vector<uint8_t> raw(size_t(n) * rows * cols);
  imgs.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!imgs) throw std::runtime_error("truncated idx file: " + images_path.string());
  d.images.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) d.images[i] = float(raw[i]) / 255.0f;

  std::vector<uint8_t> rawl(n);
  labs.read(reinterpret_cast<char*>(rawl.data()), std::streamsize(rawl.size()));
  if (!labs) throw std::runtime_error("truncated idx file: " + labels_path.string());
  int max_label = 0;
  d.labels.resize(n);
  for (size_t i = 0; i < n; ++i) {
    d.labels[i] = int(rawl[i]);
    max_label = std::max(max_label, d.labels[i]);
  }
  for (int k = 0; k <= max_label; ++k) d.class_names.push_back(std::to_string(k));
  d.check();
  return d;
}

}  // namespace

void save_idx(const fs::path& dir, const Dataset& data) {
  if (data.channels != 1)
    throw std::invalid_argument("save_idx: only single-channel datasets fit the idx layout");
  fs::create_directories(dir);
  const fs::path images_path = dir / (data.split + "-images-idx3-ubyte");
  const fs::path labels_path = dir / (data.split + "-labels-idx1-ubyte");
  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("cannot write " + images_path.string());
  write_be32(imgs, 2051);
  write_be32(imgs, uint32_t(data.size()));
  write_be32(imgs, uint32_t(data.height));
  write_be32(imgs, uint32_t(data.width));
  std::vector<uint8_t> raw(data.images.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    float v = std::clamp(data.images[i], 0.0f, 1.0f);
    raw[i] = uint8_t(std::lround(v * 255.0f));
  }
  imgs.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));

  std::ofstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("cannot write " + labels_path.string());
  write_be32(labs, 2049);
  write_be32(labs, uint32_t(data.size()));
  for (int l : data.labels) {
    uint8_t b = uint8_t(l);
    labs.write(reinterpret_cast<const char*>(&b), 1);
  }
}

// ---------------------------------------------------------------------------
// PNG io via libpng.

PngImage read_png(const fs::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open png: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw std::runtime_error("libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("corrupt png file: " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  PngImage img;
  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  img.channels = int(png_get_channels(png, info));
  if (img.channels != 1 && img.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error(strprintf("unsupported png channel count %d in %s",
                                       img.channels, path.string().c_str()));
  }
  img.pixels.resize(size_t(img.width) * img.height * img.channels);
  std::vector<png_bytep> rows(size_t(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[size_t(y)] = img.pixels.data() + size_t(y) * img.width * img.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

void write_png(const fs::path& path, const PngImage& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_png: channels must be 1 or 3");
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot write png: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("libpng init failed for " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("png write failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(size_t(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[size_t(y)] = const_cast<png_bytep>(img.pixels.data()) +
                      size_t(y) * img.width * img.channels;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// ---------------------------------------------------------------------------
// png-dir: root/<split>/<class_name>/*.png, lexicographic order throughout.

namespace {

Dataset load_png_dir(const fs::path& root, const std::string& split) {
  const fs::path base = root / split;
  if (!fs::is_directory(base))
    throw std::runtime_error("png-dir split directory missing: " + base.string());
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(base))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.empty())
    throw std::runtime_error("png-dir has no class directories: " + base.string());

  Dataset d;
  d.split = split;
  d.class_names = classes;
  for (size_t k = 0; k < classes.size(); ++k) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(base / classes[k]))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw std::runtime_error("png-dir class has no png files: " +
                               (base / classes[k]).string());
    for (const fs::path& f : files) {
      PngImage img = read_png(f);
      if (d.size() == 0 && d.channels == 0) {
        d.channels = img.channels;
        d.height = img.height;
        d.width = img.width;
      }
      if (img.channels != d.channels || img.height != d.height || img.width != d.width)
        throw std::runtime_error(strprintf(
            "png-dir geometry mismatch at %s: got %dx%dx%d, expected %dx%dx%d",
            f.string().c_str(), img.channels, img.height, img.width, d.channels,
            d.height, d.width));
      // interleaved u8 -> planar float
      const size_t plane = size_t(d.height) * d.width;
      const size_t off = d.images.size();
      d.images.resize(off + plane * size_t(d.channels));
      for (int y = 0; y < d.height; ++y)
        for (int x = 0; x < d.width; ++x)
          for (int c = 0; c < d.channels; ++c)
            d.images[off + size_t(c) * plane + size_t(y) * d.width + x] =
                float(img.pixels[(size_t(y) * d.width + x) * d.channels + size_t(c)]) /
                255.0f;
      d.labels.push_back(int(k));
    }
  }
  d.check();
  return d;
}

}  // namespace

void save_png_dir(const fs::path& dir, const Dataset& data) {
  const fs::path base = dir / data.split;
  std::vector<int> counter(size_t(data.num_classes()), 0);
  for (int k = 0; k < data.num_classes(); ++k)
    fs::create_directories(base / data.class_names[size_t(k)]);
  const size_t plane = size_t(data.height) * data.width;
  for (int i = 0; i < data.size(); ++i) {
    const int k = data.labels[size_t(i)];
    PngImage img;
    img.width = data.width;
    img.height = data.height;
    img.channels = data.channels;
    img.pixels.resize(plane * size_t(data.channels));
    auto src = data.image(i);
    for (int y = 0; y < data.height; ++y)
      for (int x = 0; x < data.width; ++x)
        for (int c = 0; c < data.channels; ++c) {
          float v = std::clamp(src[size_t(c) * plane + size_t(y) * data.width + x], 0.0f, 1.0f);
          img.pixels[(size_t(y) * data.width + x) * data.channels + size_t(c)] =
              uint8_t(std::lround(v * 255.0f));
        }
    write_png(base / data.class_names[size_t(k)] /
                  strprintf("%06d.png", counter[size_t(k)]++),
              img);
  }
}

Dataset load_dataset(const fs::path& root, DataFormat format, const std::string& split) {
  if (split != "train" && split != "val")
    throw std::invalid_argument("split must be 'train' or 'val', got '" + split + "'");
  if (!fs::exists(root))
    throw std::runtime_error("dataset path does not exist: " + root.string());
  return format == DataFormat::idx ? load_idx(root, split) : load_png_dir(root, split);
}

// ---------------------------------------------------------------------------
// Colored variant.

std::vector<std::array<float, 3>> default_palette(int num_classes) {
  static const std::array<float, 3> table[10] = {
      {1.0f, 0.0f, 0.0f},  // red
      {0.0f, 1.0f, 0.0f},  // green
      {0.0f, 0.0f, 1.0f},  // blue
      {1.0f, 1.0f, 0.0f},  // yellow
      {1.0f, 0.0f, 1.0f},  // magenta
      {0.0f, 1.0f, 1.0f},  // cyan
      {1.0f, 0.5f, 0.0f},  // orange
      {0.6f, 0.0f, 0.8f},  // purple
      {0.5f, 1.0f, 0.0f},  // chartreuse
      {1.0f, 0.0f, 0.5f},  // rose
  };
  if (num_classes < 1 || num_classes > 10)
    throw std::invalid_argument("default_palette supports 1..10 classes");
  return {table, table + num_classes};
}

Dataset make_colored(const Dataset& base, double rho,
                     const std::vector<std::array<float, 3>>& palette, uint64_t seed) {
  if (base.channels != 1)
    throw std::invalid_argument("make_colored: base dataset must be single-channel");
  if (rho < 0.0 || rho > 1.0)
    throw std::invalid_argument("make_colored: rho must lie in [0,1]");
  if (int(palette.size()) != base.num_classes())
    throw std::invalid_argument(strprintf("make_colored: palette has %d colors for %d classes",
                                          int(palette.size()), base.num_classes()));
  Dataset out;
  out.split = base.split;
  out.channels = 3;
  out.height = base.height;
  out.width = base.width;
  out.labels = base.labels;
  out.class_names = base.class_names;
  out.images.resize(size_t(base.size()) * 3 * size_t(base.height) * base.width);
  Rng rng(substream(seed, base.split == "train" ? 11 : 12));
  const size_t plane = size_t(base.height) * base.width;
  const int k = base.num_classes();
  for (int i = 0; i < base.size(); ++i) {
    int color_idx = base.labels[size_t(i)];
    if (!(rng.uniform() < rho)) {
      // uniformly random *other* color
      int r = int(rng.randint(uint64_t(k - 1)));
      color_idx = r >= color_idx ? r + 1 : r;
    }
    const auto& col = palette[size_t(color_idx)];
    auto gray = base.image(i);
    float* dst = out.images.data() + size_t(i) * 3 * plane;
    for (size_t p = 0; p < plane; ++p) {
      dst[p] = gray[p] * col[0];
      dst[plane + p] = gray[p] * col[1];
      dst[2 * plane + p] = gray[p] * col[2];
    }
  }
  out.check();
  return out;
}

// ---------------------------------------------------------------------------
// Procedural digits: fixed 5x7 glyphs rendered through a jittered affine map
// with bilinear sampling, stroke intensity jitter, and Gaussian pixel noise.

namespace {

// Classic 5x7 font rows, one bit per cell, msb = leftmost of 5 columns.
constexpr uint8_t kGlyphs[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

float glyph_at(int digit, int col, int row) {
  if (col < 0 || col >= 5 || row < 0 || row >= 7) return 0.0f;
  return (kGlyphs[digit][row] >> (4 - col)) & 1 ? 1.0f : 0.0f;
}

// Bilinear sample of the glyph over continuous coords u in [0,5), v in [0,7).
float glyph_sample(int digit, float u, float v) {
  const float fu = std::floor(u - 0.5f), fv = std::floor(v - 0.5f);
  const float au = u - 0.5f - fu, av = v - 0.5f - fv;
  const int c0 = int(fu), r0 = int(fv);
  return glyph_at(digit, c0, r0) * (1 - au) * (1 - av) +
         glyph_at(digit, c0 + 1, r0) * au * (1 - av) +
         glyph_at(digit, c0, r0 + 1) * (1 - au) * av +
         glyph_at(digit, c0 + 1, r0 + 1) * au * av;
}

}  // namespace

Dataset make_digits(int n, uint64_t seed, const std::string& split) {
  if (n < 1) throw std::invalid_argument("make_digits: n must be >= 1");
  constexpr int kSize = 28;
  Dataset d;
  d.split = split;
  d.channels = 1;
  d.height = kSize;
  d.width = kSize;
  d.images.resize(size_t(n) * kSize * kSize);
  d.labels.resize(size_t(n));
  for (int k = 0; k < 10; ++k) d.class_names.push_back(std::to_string(k));
  Rng rng(substream(seed, split == "train" ? 21 : 22));
  for (int i = 0; i < n; ++i) {
    const int digit = i % 10;
    d.labels[size_t(i)] = digit;
    const float angle = float(rng.uniform(-0.20, 0.20));
    const float sx = float(rng.uniform(0.85, 1.15));
    const float sy = float(rng.uniform(0.85, 1.15));
    const float tx = float(rng.uniform(-3.0, 3.0));
    const float ty = float(rng.uniform(-3.0, 3.0));
    const float intensity = float(rng.uniform(0.70, 1.00));
    const float noise_sd = 0.04f;
    const float ca = std::cos(angle), sa = std::sin(angle);
    // glyph cell size on canvas before jitter: 5x7 cells scaled to ~16x21 px
    const float cell_w = 3.2f * sx, cell_h = 3.0f * sy;
    float* img = d.images.data() + size_t(i) * kSize * kSize;
    for (int y = 0; y < kSize; ++y) {
      for (int x = 0; x < kSize; ++x) {
        // map canvas pixel back into glyph coordinates
        const float cx = float(x) - (kSize / 2.0f + tx);
        const float cy = float(y) - (kSize / 2.0f + ty);
        const float gx = (ca * cx + sa * cy) / cell_w + 2.5f;
        const float gy = (-sa * cx + ca * cy) / cell_h + 3.5f;
        float v = glyph_sample(digit, gx, gy) * intensity;
        v += noise_sd * float(rng.normal());
        img[y * kSize + x] = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  d.check();
  return d;
}

}  // namespace nv
