#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hood/common.hpp"

namespace hood {

// Byte-valued image collection. Pixels are stored per image in channel-major
// order (all R, then G, then B planes, each row-major), matching the CIFAR
// binary layout. Labels may be absent for OOD sets.
struct Dataset {
  std::string name;
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  int count() const {
    long per = static_cast<long>(width) * height * channels;
    return per == 0 ? 0 : static_cast<int>(pixels.size() / static_cast<std::size_t>(per));
  }
  bool has_labels() const { return !labels.empty(); }
  long image_size() const { return static_cast<long>(width) * height * channels; }

  std::span<const std::uint8_t> image(int i) const {
    return {pixels.data() + static_cast<std::size_t>(i) * image_size(),
            static_cast<std::size_t>(image_size())};
  }
  std::span<std::uint8_t> image(int i) {
    return {pixels.data() + static_cast<std::size_t>(i) * image_size(),
            static_cast<std::size_t>(image_size())};
  }

  // First `n` records, preserving order.
  Dataset prefix(int n) const;
};

enum class DatasetFormat { cifar_binary, hood_native };

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);

// Synthetic texture families. Classes are told apart by base color; families
// by spatial structure. Every family keeps the per-image mean at the base
// color by balancing a brighter and a darker tone around it.
enum class TextureFamily { patch, stripes, checker };

TextureFamily texture_family_from_string(const std::string& s);
std::string to_string(TextureFamily f);

struct SynthSpec {
  int class_count = 4;
  int image_size = 32;
  TextureFamily family = TextureFamily::patch;
  int count = 0;
  float noise_amplitude = 10.0f;
  bool labeled = true;
  std::vector<std::array<std::uint8_t, 3>> palette;  // defaults when empty

  void validate() const;
};

std::vector<std::array<std::uint8_t, 3>> default_palette();

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed);

// v -> round(clamp(v * b, 0, 255)); b = 1 is the identity.
void apply_brightness(std::span<std::uint8_t> img, float b);
// v -> round(clamp(m + c * (v - m), 0, 255)) with m the gray mean of the
// whole image; c = 1 identity, c = 0 collapses to the mean.
void apply_contrast(std::span<std::uint8_t> img, float c);

Dataset augment_brightness(const Dataset& ds, float b);
Dataset augment_contrast(const Dataset& ds, float c);

// Binary PPM (P6) writers. Heatmap export blends blue -> red by per-pixel
// channel-max response.
void export_image_ppm(std::span<const std::uint8_t> chw_pixels, int width,
                      int height, const std::filesystem::path& path);

}  // namespace hood
