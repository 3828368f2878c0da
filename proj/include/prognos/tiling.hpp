#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prognos/common.hpp"

namespace prognos {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * width + col];
  }
  std::array<std::uint64_t, 256> histogram() const;
};

// Threshold maximizing between-class variance over the split [0..t] / [t+1..255];
// ties break to the lowest maximizing level. Throws on single-level input.
int otsu_threshold(const std::array<std::uint64_t, 256>& histogram);

struct TilingConfig {
  int patch_size = 256;            // pixels at 0.5 microns/pixel by default
  double min_foreground = 0.1;     // keep tiles at or above this fraction
  bool foreground_is_dark = true;  // tissue darker than glass on grayscale
};

struct PatchManifestEntry {
  int row = 0;  // pixel origin
  int col = 0;
  double foreground_fraction = 0.0;
};

struct PatchManifest {
  std::string slide_id;
  double mpp = 0.5;  // microns per pixel
  int patch_size = 256;
  std::vector<PatchManifestEntry> coords;
  bool image_too_small = false;
};

// Non-overlapping patch grid over the foreground; partial edge tiles are
// dropped. Foreground is decided by a global Otsu threshold with the
// configured polarity (dark pixels are pixel <= threshold).
PatchManifest extract_patches(const GrayImage& image, const std::string& slide_id,
                              double mpp, const TilingConfig& config = {});

// Reads PGM/PPM (P2/P3/P5/P6) or PNG rasters; color converts to luma.
GrayImage load_image_gray(const std::filesystem::path& path);

void write_manifest(const PatchManifest& manifest, const std::filesystem::path& path);

}  // namespace prognos
