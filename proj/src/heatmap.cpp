#include "hood/heatmap.hpp"

#include <cmath>
#include <numeric>

#include "hood/binio.hpp"

namespace hood {

long nearest_in_distribution(const Eigen::VectorXf& feature, int predicted_class,
                             const FeatureBank& bank) {
  if (feature.size() != bank.dim())
    throw InputError("nearest_in_distribution: query dim " +
                     std::to_string(feature.size()) + " != bank dim " +
                     std::to_string(bank.dim()));
  const auto& rows = bank.rows_of_class(predicted_class);
  if (rows.empty())
    throw LookupError("nearest_in_distribution: no bank entry of class " +
                      std::to_string(predicted_class));
  // Distances in double so that exact duplicates tie exactly and the
  // smallest-index rule decides.
  Eigen::VectorXd q = feature.cast<double>();
  long best = rows[0];
  double best_d = (bank.features().row(best).transpose().cast<double>() - q)
                      .squaredNorm();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    double d = (bank.features().row(rows[i]).transpose().cast<double>() - q)
                   .squaredNorm();
    if (d < best_d) {  // strict: ties keep the earlier (smaller) index
      best_d = d;
      best = rows[i];
    }
  }
  return best;
}

Heatmap make_ood_heatmap(std::span<const std::uint8_t> x_o,
                         std::span<const std::uint8_t> x_nn, int width,
                         int height, float scale) {
  if (x_o.size() != x_nn.size() ||
      static_cast<long>(x_o.size()) != 3l * width * height)
    throw InputError("make_ood_heatmap: image sizes differ or do not match " +
                     std::to_string(width) + "x" + std::to_string(height) + "x3");
  Heatmap h;
  h.width = width;
  h.height = height;
  h.values = scale * (normalize_image(x_nn) - normalize_image(x_o));
  return h;
}

TargetSet build_target_sets(const FrozenClassifier& model,
                            const FeatureBank& bank, const Dataset& d_in,
                            const Dataset& d_out, float target_scale) {
  if (d_out.count() == 0) throw InputError("build_target_sets: empty OOD set");
  if (d_in.count() == 0) throw InputError("build_target_sets: empty in-distribution set");
  if (d_in.width != d_out.width || d_in.height != d_out.height)
    throw InputError("build_target_sets: in/out image geometry differs");

  TargetSet ts;
  ts.width = d_in.width;
  ts.height = d_in.height;
  ts.in_refs.resize(static_cast<std::size_t>(d_in.count()));
  std::iota(ts.in_refs.begin(), ts.in_refs.end(), 0u);

  // Classify all OOD images up front; a class with no bank entries aborts
  // with a summary instead of failing on the first affected sample.
  int d = bank.dim();
  int c = model.config().class_count;
  std::vector<int> predicted(static_cast<std::size_t>(d_out.count()));
  std::vector<Eigen::VectorXf> features(static_cast<std::size_t>(d_out.count()));
  const int batch = 256;
  for (int start = 0; start < d_out.count(); start += batch) {
    int n = std::min(batch, d_out.count() - start);
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), start);
    ClassifyResult out = model.classify(d_out, idx);
    for (int i = 0; i < n; ++i) {
      auto probs = out.probs.values().segment(static_cast<long>(i) * c, c);
      long arg = 0;
      probs.maxCoeff(&arg);
      predicted[static_cast<std::size_t>(start + i)] = static_cast<int>(arg);
      features[static_cast<std::size_t>(start + i)] =
          Eigen::Map<const Eigen::VectorXf>(
              out.features.values().data() + static_cast<long>(i) * d, d);
    }
  }

  std::vector<int> missing_count(static_cast<std::size_t>(c), 0);
  bool any_missing = false;
  for (int i = 0; i < d_out.count(); ++i) {
    int cls = predicted[static_cast<std::size_t>(i)];
    if (bank.rows_of_class(cls).empty()) {
      ++missing_count[static_cast<std::size_t>(cls)];
      any_missing = true;
    }
  }
  if (any_missing) {
    std::string msg = "build_target_sets: no bank entries for predicted";
    for (int cls = 0; cls < c; ++cls)
      if (missing_count[static_cast<std::size_t>(cls)] > 0)
        msg += " class " + std::to_string(cls) + " (" +
               std::to_string(missing_count[static_cast<std::size_t>(cls)]) +
               " samples)";
    throw LookupError(msg);
  }

  ts.out_targets.reserve(static_cast<std::size_t>(d_out.count()));
  for (int i = 0; i < d_out.count(); ++i) {
    long nn = nearest_in_distribution(features[static_cast<std::size_t>(i)],
                                      predicted[static_cast<std::size_t>(i)], bank);
    std::uint32_t nn_ref = bank.image_ref(nn);
    Heatmap h = make_ood_heatmap(d_out.image(i),
                                 d_in.image(static_cast<int>(nn_ref)), ts.width,
                                 ts.height, target_scale);
    ts.out_targets.push_back({static_cast<std::uint32_t>(i), nn_ref, std::move(h)});
  }
  return ts;
}

// ---------------------------------------------------------------------------
// TargetSet file
// ---------------------------------------------------------------------------

static const char kTargetMagic[9] = "HOODTS01";

void TargetSet::save(const std::filesystem::path& path) const {
  BinWriter w(path);
  w.magic(kTargetMagic);
  w.u32(static_cast<std::uint32_t>(in_refs.size()));
  w.u32(static_cast<std::uint32_t>(out_targets.size()));
  w.u32(static_cast<std::uint32_t>(width));
  w.u32(static_cast<std::uint32_t>(height));
  for (std::uint32_t ref : in_refs) {
    w.u32(ref);
    w.u8(0);
  }
  for (const auto& t : out_targets) {
    w.u32(t.image_ref);
    w.u8(1);
    w.u32(t.nn_image_ref);
    w.f32_array(t.heatmap.values.data(),
                static_cast<std::size_t>(t.heatmap.values.size()));
  }
  w.close();
}

TargetSet TargetSet::load(const std::filesystem::path& path) {
  BinReader r(path);
  r.expect_magic(kTargetMagic);
  TargetSet ts;
  std::uint32_t n_in = r.u32();
  std::uint32_t n_out = r.u32();
  ts.width = static_cast<int>(r.u32());
  ts.height = static_cast<int>(r.u32());
  if (ts.width < 1 || ts.height < 1)
    throw FormatError(path.string() + ": degenerate heatmap dims", 16);
  long hm_values = 3l * ts.width * ts.height;
  for (std::uint32_t i = 0; i < n_in + n_out; ++i) {
    std::uint32_t ref = r.u32();
    std::uint64_t at = r.offset();
    std::uint8_t kind = r.u8();
    if (kind == 0) {
      ts.in_refs.push_back(ref);
    } else if (kind == 1) {
      OutTarget t;
      t.image_ref = ref;
      t.nn_image_ref = r.u32();
      t.heatmap.width = ts.width;
      t.heatmap.height = ts.height;
      t.heatmap.values.resize(hm_values);
      r.f32_array(t.heatmap.values.data(), static_cast<std::size_t>(hm_values));
      ts.out_targets.push_back(std::move(t));
    } else {
      throw FormatError(path.string() + ": unknown record kind " +
                            std::to_string(kind),
                        at);
    }
  }
  if (ts.in_refs.size() != n_in || ts.out_targets.size() != n_out)
    throw FormatError(path.string() + ": record kinds disagree with counts",
                      r.offset());
  r.expect_eof();
  return ts;
}

void export_heatmap_image(const Heatmap& map, const std::filesystem::path& path) {
  long pixels = map.pixels();
  std::vector<std::uint8_t> chw(static_cast<std::size_t>(3 * pixels));
  for (long p = 0; p < pixels; ++p) {
    float t = std::max({std::abs(map.values[p]),
                        std::abs(map.values[pixels + p]),
                        std::abs(map.values[2 * pixels + p])});
    if (t > 1.0f) t = 1.0f;
    chw[static_cast<std::size_t>(p)] =
        static_cast<std::uint8_t>(std::lround(255.0f * t));          // R
    chw[static_cast<std::size_t>(pixels + p)] = 0;                   // G
    chw[static_cast<std::size_t>(2 * pixels + p)] =
        static_cast<std::uint8_t>(std::lround(255.0f * (1.0f - t))); // B
  }
  export_image_ppm(chw, map.width, map.height, path);
}

}  // namespace hood
