#include "udnet/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace udnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageTensor from_rgb8(const std::vector<unsigned char>& rgb, int h, int w) {
  ImageTensor img(3, h, w, ColourSpace::RGB);
  const Eigen::Index n = img.plane_size();
  for (Eigen::Index i = 0; i < n; ++i) {
    img.data[i] = rgb[3 * i] / 255.0;
    img.data[n + i] = rgb[3 * i + 1] / 255.0;
    img.data[2 * n + i] = rgb[3 * i + 2] / 255.0;
  }
  return img;
}

std::vector<unsigned char> to_rgb8(const ImageTensor& img) {
  const Eigen::Index n = img.plane_size();
  std::vector<unsigned char> rgb(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      double v = std::round(img.data[c * n + i] * 255.0);
      rgb[3 * i + c] = static_cast<unsigned char>(std::min(255.0, std::max(0.0, v)));
    }
  }
  return rgb;
}

ImageTensor load_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("unreadable file: " + path.string());
  std::string magic;
  f >> magic;
  if (magic != "P6") throw Error("unsupported format / corrupt header: " + path.string());
  auto next_int = [&]() {
    // skip whitespace and '#' comments
    for (;;) {
      int ch = f.peek();
      if (ch == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(ch)) {
        f.get();
      } else {
        break;
      }
    }
    long v = -1;
    f >> v;
    if (!f || v < 0) throw Error("unsupported format / corrupt header: " + path.string());
    return v;
  };
  long w = next_int(), h = next_int(), maxval = next_int();
  if (w < 1 || h < 1) throw Error("zero-sized image: " + path.string());
  if (maxval != 255) throw Error("unsupported format (PPM maxval != 255): " + path.string());
  f.get();  // single whitespace after maxval
  std::vector<unsigned char> rgb(3 * w * h);
  f.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (f.gcount() != static_cast<std::streamsize>(rgb.size()))
    throw Error("unsupported format / corrupt header: truncated PPM " + path.string());
  return from_rgb8(rgb, static_cast<int>(h), static_cast<int>(w));
}

void save_ppm(const ImageTensor& img, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("unwritable path: " + path.string());
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  auto rgb = to_rgb8(img);
  f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!f) throw Error("write failed: " + path.string());
}

ImageTensor load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("unreadable file: " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw Error("unsupported format / corrupt header: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("png init failed");
  }
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("unsupported format / corrupt header: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int depth = png_get_bit_depth(png, info);
  int ctype = png_get_color_type(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (ctype == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (ctype == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (ctype == PNG_COLOR_TYPE_GRAY || ctype == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  if (w < 1 || h < 1) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("zero-sized image: " + path.string());
  }
  pixels.resize(static_cast<size_t>(3) * w * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<size_t>(3) * w * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_rgb8(pixels, static_cast<int>(h), static_cast<int>(w));
}

void save_png(const ImageTensor& img, const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("unwritable path: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("png init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto rgb = to_rgb8(img);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = rgb.data() + static_cast<size_t>(3) * img.width * y;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

bool has_ext(const std::filesystem::path& p, const char* ext) {
  std::string e = p.extension().string();
  for (auto& ch : e) ch = static_cast<char>(std::tolower(ch));
  return e == ext;
}

}  // namespace

ImageTensor load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("unreadable file: " + path.string());
  if (has_ext(path, ".ppm")) return load_ppm(path);
  if (has_ext(path, ".png")) return load_png(path);
  // fall back on content sniffing
  std::ifstream f(path, std::ios::binary);
  char sig[2] = {0, 0};
  f.read(sig, 2);
  if (sig[0] == 'P' && sig[1] == '6') return load_ppm(path);
  return load_png(path);
}

void save_image(const ImageTensor& img, const std::filesystem::path& path) {
  if (img.space != ColourSpace::RGB) throw Error("save_image: non-RGB input");
  if (img.channels != 3) throw Error("save_image: expected 3 channels");
  if (has_ext(path, ".ppm")) save_ppm(img, path);
  else save_png(img, path);
}

}  // namespace udnet
