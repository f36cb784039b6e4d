#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hood/classifier.hpp"
#include "hood/dataset.hpp"
#include "hood/decoder.hpp"

namespace hood {

struct ConfigParseError : Error {
  ConfigParseError(const std::string& what, long line_number)
      : Error(what + " (line " + std::to_string(line_number) + ")"),
        line(line_number) {}
  long line;
};

// Plain-text configuration: one `key = value` per line, `#` comments, dotted
// keys for nesting. Chosen for diff-ability; parsed with no dependencies.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::filesystem::path& path);
  static KeyValueConfig from_string(const std::string& text,
                                    const std::string& origin = "<string>");

  void set(const std::string& key, const std::string& value);
  // "key=value" as passed to --set.
  void apply_override(const std::string& kv);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long get_int(const std::string& key, long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<long> get_int_list(const std::string& key,
                                 std::vector<long> fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

enum class Split { in_train, in_test, out_train, out_test };
std::string to_string(Split s);

struct DataSplitConfig {
  int count = 0;
  TextureFamily family = TextureFamily::patch;
  std::string path;  // files mode
};

// Everything one experiment run needs, stitched from a config file plus
// command-line overrides. The global seed derives an independent stream per
// stage and per dataset split.
struct ExperimentConfig {
  std::uint64_t seed = 1;

  std::string data_source = "synth";  // synth | files
  DatasetFormat file_format = DatasetFormat::hood_native;
  int image_size = 32;
  int classes = 4;
  float noise = 10.0f;
  DataSplitConfig in_train{2000, TextureFamily::patch, ""};
  DataSplitConfig in_test{400, TextureFamily::patch, ""};
  DataSplitConfig out_train{400, TextureFamily::stripes, ""};
  DataSplitConfig out_test{400, TextureFamily::checker, ""};

  ClassifierConfig classifier;
  DecoderConfig decoder;
  float target_scale = 0.5f;
  double detector_delta = 0.1;

  std::vector<int> ablation_sizes = {50, 100, 500, 1000, 2000};
  int ablation_epochs = 40;  // decoder epochs for the sweep; 0: inherit decoder.epochs
  std::vector<double> lighting_brightness = {2.0, 2.5};
  std::vector<double> lighting_contrast = {0.5, 0.1};
  int visualize_count = 8;

  static ExperimentConfig from(const KeyValueConfig& kv);
  void validate() const;
  std::map<std::string, std::string> snapshot() const;

  std::uint64_t split_seed(Split split) const;
  Dataset make_dataset(Split split) const;
  // Same split with a different sample count (ablation sweeps).
  Dataset make_dataset(Split split, int count) const;
};

}  // namespace hood
