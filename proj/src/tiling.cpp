#include "prognos/tiling.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace prognos {

std::array<std::uint64_t, 256> GrayImage::histogram() const {
  std::array<std::uint64_t, 256> h{};
  for (std::uint8_t p : pixels) ++h[p];
  return h;
}

int otsu_threshold(const std::array<std::uint64_t, 256>& histogram) {
  std::uint64_t total = 0;
  int nonzero_bins = 0;
  double total_weighted = 0.0;
  for (int level = 0; level < 256; ++level) {
    total += histogram[level];
    if (histogram[level] > 0) ++nonzero_bins;
    total_weighted += static_cast<double>(level) * histogram[level];
  }
  if (nonzero_bins < 2)
    throw ValidationError("otsu: degenerate histogram (fewer than two levels)");

  double best_variance = -1.0;
  int best_level = 0;
  std::uint64_t count_low = 0;
  double weighted_low = 0.0;
  for (int t = 0; t < 256; ++t) {
    count_low += histogram[t];
    weighted_low += static_cast<double>(t) * histogram[t];
    std::uint64_t count_high = total - count_low;
    if (count_low == 0 || count_high == 0) continue;
    double mean_low = weighted_low / count_low;
    double mean_high = (total_weighted - weighted_low) / count_high;
    double w0 = static_cast<double>(count_low) / total;
    double w1 = 1.0 - w0;
    double diff = mean_low - mean_high;
    double variance = w0 * w1 * diff * diff;
    if (variance > best_variance) {
      best_variance = variance;
      best_level = t;
    }
  }
  return best_level;
}

PatchManifest extract_patches(const GrayImage& image, const std::string& slide_id,
                              double mpp, const TilingConfig& config) {
  if (config.patch_size < 1) throw ValidationError("tiling: patch size must be positive");
  PatchManifest manifest;
  manifest.slide_id = slide_id;
  manifest.mpp = mpp;
  manifest.patch_size = config.patch_size;

  const int ps = config.patch_size;
  if (image.width < ps || image.height < ps) {
    manifest.image_too_small = true;
    return manifest;
  }

  int threshold = otsu_threshold(image.histogram());
  auto is_foreground = [&](std::uint8_t p) {
    return config.foreground_is_dark ? p <= threshold : p > threshold;
  };

  const int tiles_down = image.height / ps;
  const int tiles_across = image.width / ps;
  const double area = static_cast<double>(ps) * ps;
  for (int tr = 0; tr < tiles_down; ++tr) {
    for (int tc = 0; tc < tiles_across; ++tc) {
      int origin_row = tr * ps;
      int origin_col = tc * ps;
      long fg = 0;
      for (int r = 0; r < ps; ++r)
        for (int c = 0; c < ps; ++c)
          if (is_foreground(image.at(origin_row + r, origin_col + c))) ++fg;
      double fraction = fg / area;
      if (fraction >= config.min_foreground)
        manifest.coords.push_back({origin_row, origin_col, fraction});
    }
  }
  return manifest;
}

namespace {

int next_pnm_int(std::istream& in) {
  // Skips whitespace and '#' comments between tokens.
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value;
  if (!(in >> value)) throw ValidationError("malformed PNM header");
  return value;
}

GrayImage load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open image '" + path.string() + "'");
  char p, kind;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6'))
    throw ValidationError("unsupported PNM type in '" + path.string() + "'");
  bool color = kind == '3' || kind == '6';
  bool ascii = kind == '2' || kind == '3';

  GrayImage image;
  image.width = next_pnm_int(in);
  image.height = next_pnm_int(in);
  int maxval = next_pnm_int(in);
  if (maxval <= 0 || maxval > 255)
    throw ValidationError("unsupported PNM max value in '" + path.string() + "'");
  const long n = static_cast<long>(image.width) * image.height;
  image.pixels.resize(static_cast<std::size_t>(n));

  auto to_gray = [&](int r, int g, int b) {
    double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return static_cast<std::uint8_t>(std::lround(y * 255.0 / maxval));
  };

  if (ascii) {
    for (long i = 0; i < n; ++i) {
      if (color) {
        int r = next_pnm_int(in), g = next_pnm_int(in), b = next_pnm_int(in);
        image.pixels[static_cast<std::size_t>(i)] = to_gray(r, g, b);
      } else {
        int v = next_pnm_int(in);
        image.pixels[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>(v * 255 / maxval);
      }
    }
  } else {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(color ? n * 3 : n));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw ValidationError("truncated PNM payload in '" + path.string() + "'");
    for (long i = 0; i < n; ++i) {
      if (color)
        image.pixels[static_cast<std::size_t>(i)] =
            to_gray(raw[static_cast<std::size_t>(3 * i)], raw[static_cast<std::size_t>(3 * i + 1)],
                    raw[static_cast<std::size_t>(3 * i + 2)]);
      else
        image.pixels[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>(raw[static_cast<std::size_t>(i)] * 255 / maxval);
    }
  }
  return image;
}

GrayImage load_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw MissingArtifactError("cannot open image '" + path.string() + "'");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw NumericalError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw ValidationError("malformed PNG '" + path.string() + "'");
  }

  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);

  std::vector<unsigned char> row(static_cast<std::size_t>(width) * channels);
  GrayImage image;
  image.width = width;
  image.height = height;
  image.pixels.resize(static_cast<std::size_t>(width) * height);
  for (int r = 0; r < height; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < width; ++c) {
      std::uint8_t gray;
      if (channels >= 3) {
        double y = 0.299 * row[static_cast<std::size_t>(c) * channels] +
                   0.587 * row[static_cast<std::size_t>(c) * channels + 1] +
                   0.114 * row[static_cast<std::size_t>(c) * channels + 2];
        gray = static_cast<std::uint8_t>(std::lround(y));
      } else {
        gray = row[static_cast<std::size_t>(c) * channels];
      }
      image.pixels[static_cast<std::size_t>(r) * width + c] = gray;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return image;
}

}  // namespace

GrayImage load_image_gray(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw MissingArtifactError("cannot open image '" + path.string() + "'");
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
  return load_pnm(path);
}

void write_manifest(const PatchManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write manifest '" + path.string() + "'");
  out << "slide_id\trow\tcol\tforeground_fraction\n";
  char buf[64];
  for (const auto& e : manifest.coords) {
    std::snprintf(buf, sizeof(buf), "%.17g", e.foreground_fraction);
    out << manifest.slide_id << '\t' << e.row << '\t' << e.col << '\t' << buf << '\n';
  }
}

}  // namespace prognos
