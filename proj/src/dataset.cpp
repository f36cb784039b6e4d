#include "hood/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "hood/binio.hpp"

namespace hood {

namespace {

const char kNativeMagic[9] = "HOODDS01";
constexpr long kCifarImageBytes = 3072;  // 3 x 32 x 32
constexpr long kCifarRecordBytes = kCifarImageBytes + 1;
constexpr int kCifarMaxLabel = 9;

std::uint8_t clamp_byte(double v) {
  long r = std::lround(v);
  if (r < 0) r = 0;
  if (r > 255) r = 255;
  return static_cast<std::uint8_t>(r);
}

}  // namespace

Dataset Dataset::prefix(int n) const {
  if (n < 0 || n > count())
    throw InputError("dataset prefix of " + std::to_string(n) + " from " +
                     std::to_string(count()) + " records");
  Dataset out;
  out.name = name;
  out.width = width;
  out.height = height;
  out.channels = channels;
  out.pixels.assign(pixels.begin(),
                    pixels.begin() + static_cast<std::size_t>(n) * image_size());
  if (has_labels()) out.labels.assign(labels.begin(), labels.begin() + n);
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  BinReader r(path);
  Dataset ds;
  ds.name = path.stem().string();
  if (format == DatasetFormat::cifar_binary) {
    if (r.file_size() == 0 || r.file_size() % kCifarRecordBytes != 0)
      throw FormatError(path.string() + ": expected a multiple of " +
                            std::to_string(kCifarRecordBytes) +
                            " bytes, got " + std::to_string(r.file_size()),
                        r.file_size());
    long n = static_cast<long>(r.file_size() / kCifarRecordBytes);
    ds.width = 32;
    ds.height = 32;
    ds.channels = 3;
    ds.pixels.resize(static_cast<std::size_t>(n) * kCifarImageBytes);
    ds.labels.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
      std::uint64_t at = r.offset();
      std::uint8_t label = r.u8();
      if (label > kCifarMaxLabel)
        throw FormatError(path.string() + ": label " + std::to_string(label) +
                              " exceeds " + std::to_string(kCifarMaxLabel),
                          at);
      ds.labels[static_cast<std::size_t>(i)] = label;
      r.bytes(ds.pixels.data() + static_cast<std::size_t>(i) * kCifarImageBytes,
              kCifarImageBytes);
    }
    return ds;
  }

  r.expect_magic(kNativeMagic);
  std::uint32_t n = r.u32();
  ds.width = static_cast<int>(r.u32());
  ds.height = static_cast<int>(r.u32());
  ds.channels = static_cast<int>(r.u32());
  if (ds.width < 1 || ds.height < 1 || ds.channels < 1)
    throw FormatError(path.string() + ": degenerate dimensions", 12);
  bool has_labels = r.u8() != 0;
  long per = ds.image_size();
  ds.pixels.resize(static_cast<std::size_t>(n) * per);
  if (has_labels) ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (has_labels) {
      std::uint64_t at = r.offset();
      std::uint32_t label = r.u32();
      if (label > 0x7fffffffu)
        throw FormatError(path.string() + ": label " + std::to_string(label) +
                              " does not fit a class index",
                          at);
      ds.labels[i] = static_cast<int>(label);
    }
    r.bytes(ds.pixels.data() + static_cast<std::size_t>(i) * per,
            static_cast<std::size_t>(per));
  }
  r.expect_eof();
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  BinWriter w(path);
  w.magic(kNativeMagic);
  w.u32(static_cast<std::uint32_t>(ds.count()));
  w.u32(static_cast<std::uint32_t>(ds.width));
  w.u32(static_cast<std::uint32_t>(ds.height));
  w.u32(static_cast<std::uint32_t>(ds.channels));
  w.u8(ds.has_labels() ? 1 : 0);
  long per = ds.image_size();
  for (int i = 0; i < ds.count(); ++i) {
    if (ds.has_labels()) w.u32(static_cast<std::uint32_t>(ds.labels[static_cast<std::size_t>(i)]));
    w.bytes(ds.pixels.data() + static_cast<std::size_t>(i) * per,
            static_cast<std::size_t>(per));
  }
  w.close();
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

TextureFamily texture_family_from_string(const std::string& s) {
  if (s == "patch") return TextureFamily::patch;
  if (s == "stripes") return TextureFamily::stripes;
  if (s == "checker") return TextureFamily::checker;
  throw ConfigError("unknown texture family '" + s +
                    "' (expected patch, stripes or checker)");
}

std::string to_string(TextureFamily f) {
  switch (f) {
    case TextureFamily::patch: return "patch";
    case TextureFamily::stripes: return "stripes";
    case TextureFamily::checker: return "checker";
  }
  return "?";
}

// Kept away from both byte rails: the dim channels survive the two-tone
// dip and the bright channels survive a 2x brightness gain without
// collapsing into the 255 ceiling.
std::vector<std::array<std::uint8_t, 3>> default_palette() {
  return {{90, 50, 50}, {50, 90, 50}, {50, 50, 90}, {90, 90, 50},
          {90, 50, 90}, {50, 90, 90}, {100, 70, 50}, {70, 70, 70}};
}

void SynthSpec::validate() const {
  if (count < 1) throw InputError("synth spec: sample count must be positive");
  if (class_count < 2) throw InputError("synth spec: need at least 2 classes");
  if (image_size < 8) throw InputError("synth spec: image size must be >= 8");
  if (noise_amplitude < 0.0f)
    throw InputError("synth spec: noise amplitude must be non-negative");
  auto pal = palette.empty() ? default_palette() : palette;
  if (static_cast<int>(pal.size()) < class_count)
    throw InputError("synth spec: palette has " + std::to_string(pal.size()) +
                     " colors for " + std::to_string(class_count) + " classes");
}

namespace {

// Two tones around the base color. Structure regions use base + delta; the
// complement uses base - delta * (up_area / down_area), so the image mean
// stays at the base color and classes remain separable by mean color.
constexpr float kToneDelta = 40.0f;

void fill_two_tone(std::span<std::uint8_t> img, int size,
                   const std::array<std::uint8_t, 3>& base,
                   const std::vector<bool>& up_mask, Rng& rng, float noise) {
  long pixels = static_cast<long>(size) * size;
  long up = static_cast<long>(std::count(up_mask.begin(), up_mask.end(), true));
  long down = pixels - up;
  float down_delta = down > 0 ? kToneDelta * static_cast<float>(up) /
                                    static_cast<float>(down)
                              : 0.0f;
  for (long p = 0; p < pixels; ++p) {
    float tone = up_mask[static_cast<std::size_t>(p)] ? kToneDelta : -down_delta;
    for (int c = 0; c < 3; ++c) {
      float v = static_cast<float>(base[static_cast<std::size_t>(c)]) + tone +
                rng.uniform(-noise, noise);
      img[static_cast<std::size_t>(c * pixels + p)] = clamp_byte(v);
    }
  }
}

std::vector<bool> patch_mask(int size, Rng& rng) {
  std::vector<bool> mask(static_cast<std::size_t>(size) * size, false);
  int pw = size * 3 / 8 + rng.uniform_int(size / 4 + 1);
  int ph = size * 3 / 8 + rng.uniform_int(size / 4 + 1);
  int x0 = rng.uniform_int(size - pw + 1);
  int y0 = rng.uniform_int(size - ph + 1);
  for (int y = y0; y < y0 + ph; ++y)
    for (int x = x0; x < x0 + pw; ++x)
      mask[static_cast<std::size_t>(y) * size + x] = true;
  return mask;
}

// Orientation, period and phase vary per image so the family spans a wide
// slice of texture space rather than a single pattern.
std::vector<bool> stripes_mask(int size, Rng& rng) {
  std::vector<bool> mask(static_cast<std::size_t>(size) * size, false);
  const int periods[] = {2, 4, 8};
  int period = periods[rng.uniform_int(3)];
  bool vertical = rng.uniform_int(2) == 1;
  int phase = rng.uniform_int(2 * period);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      int along = vertical ? x : y;
      mask[static_cast<std::size_t>(y) * size + x] =
          ((along + phase) / period) % 2 == 0;
    }
  return mask;
}

std::vector<bool> checker_mask(int size, Rng& rng) {
  std::vector<bool> mask(static_cast<std::size_t>(size) * size, false);
  const int cells[] = {2, 4, 8};
  int cell = cells[rng.uniform_int(3)];
  int ox = rng.uniform_int(2 * cell);
  int oy = rng.uniform_int(2 * cell);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      mask[static_cast<std::size_t>(y) * size + x] =
          (((y + oy) / cell) + ((x + ox) / cell)) % 2 == 0;
  return mask;
}

}  // namespace

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto palette = spec.palette.empty() ? default_palette() : spec.palette;
  Rng rng(seed);

  Dataset ds;
  ds.name = to_string(spec.family);
  ds.width = spec.image_size;
  ds.height = spec.image_size;
  ds.channels = 3;
  ds.pixels.resize(static_cast<std::size_t>(spec.count) * ds.image_size());
  if (spec.labeled) ds.labels.resize(static_cast<std::size_t>(spec.count));

  for (int i = 0; i < spec.count; ++i) {
    int cls = i % spec.class_count;
    if (spec.labeled) ds.labels[static_cast<std::size_t>(i)] = cls;
    std::vector<bool> mask;
    switch (spec.family) {
      case TextureFamily::patch: mask = patch_mask(spec.image_size, rng); break;
      case TextureFamily::stripes: mask = stripes_mask(spec.image_size, rng); break;
      case TextureFamily::checker: mask = checker_mask(spec.image_size, rng); break;
    }
    fill_two_tone(ds.image(i), spec.image_size,
                  palette[static_cast<std::size_t>(cls)], mask,
                  rng, spec.noise_amplitude);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Augmentations
// ---------------------------------------------------------------------------

void apply_brightness(std::span<std::uint8_t> img, float b) {
  if (b < 0.0f) throw InputError("brightness factor must be non-negative");
  for (auto& v : img) v = clamp_byte(static_cast<double>(v) * b);
}

void apply_contrast(std::span<std::uint8_t> img, float c) {
  if (c < 0.0f) throw InputError("contrast factor must be non-negative");
  double m = 0.0;
  for (auto v : img) m += v;
  m /= static_cast<double>(img.size());
  for (auto& v : img) v = clamp_byte(m + static_cast<double>(c) * (v - m));
}

Dataset augment_brightness(const Dataset& ds, float b) {
  Dataset out = ds;
  for (int i = 0; i < out.count(); ++i) apply_brightness(out.image(i), b);
  return out;
}

Dataset augment_contrast(const Dataset& ds, float c) {
  Dataset out = ds;
  for (int i = 0; i < out.count(); ++i) apply_contrast(out.image(i), c);
  return out;
}

// ---------------------------------------------------------------------------
// PPM export
// ---------------------------------------------------------------------------

void export_image_ppm(std::span<const std::uint8_t> chw_pixels, int width,
                      int height, const std::filesystem::path& path) {
  long pixels = static_cast<long>(width) * height;
  if (static_cast<long>(chw_pixels.size()) != 3 * pixels)
    throw InputError("ppm export: expected " + std::to_string(3 * pixels) +
                     " bytes, got " + std::to_string(chw_pixels.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << width << " " << height << "\n255\n";
  for (long p = 0; p < pixels; ++p) {
    std::uint8_t rgb[3] = {chw_pixels[static_cast<std::size_t>(p)],
                           chw_pixels[static_cast<std::size_t>(pixels + p)],
                           chw_pixels[static_cast<std::size_t>(2 * pixels + p)]};
    out.write(reinterpret_cast<const char*>(rgb), 3);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace hood
