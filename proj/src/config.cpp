#include "hood/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace hood {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path.string());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text,
                                           const std::string& origin) {
  KeyValueConfig cfg;
  std::istringstream is(text);
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigParseError(origin + ": expected 'key = value', got '" + line + "'",
                             line_no);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigParseError(origin + ": empty key", line_no);
    if (cfg.entries_.count(key))
      throw ConfigParseError(origin + ": duplicate key '" + key + "'", line_no);
    cfg.entries_[key] = value;
  }
  return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

void KeyValueConfig::apply_override(const std::string& kv) {
  std::size_t eq = kv.find('=');
  if (eq == std::string::npos || trim(kv.substr(0, eq)).empty())
    throw ConfigError("override '" + kv + "' is not of the form key=value");
  entries_[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
}

bool KeyValueConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

long KeyValueConfig::get_int(const std::string& key, long fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(it->second, &used);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + it->second + "' is not an integer");
  }
  if (used != it->second.size())
    throw ConfigError("key '" + key + "': '" + it->second + "' is not an integer");
  return v;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(it->second, &used);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + it->second + "' is not a number");
  }
  if (used != it->second.size())
    throw ConfigError("key '" + key + "': '" + it->second + "' is not a number");
  return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(it->second, &used);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + it->second +
                      "' is not an unsigned integer");
  }
  if (used != it->second.size())
    throw ConfigError("key '" + key + "': '" + it->second +
                      "' is not an unsigned integer");
  return v;
}

std::vector<long> KeyValueConfig::get_int_list(const std::string& key,
                                               std::vector<long> fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<long> out;
  for (const auto& part : split_list(it->second)) {
    std::size_t used = 0;
    out.push_back(std::stol(part, &used));
    if (used != part.size())
      throw ConfigError("key '" + key + "': '" + part + "' is not an integer");
  }
  return out;
}

std::vector<double> KeyValueConfig::get_double_list(
    const std::string& key, std::vector<double> fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  for (const auto& part : split_list(it->second)) {
    std::size_t used = 0;
    out.push_back(std::stod(part, &used));
    if (used != part.size())
      throw ConfigError("key '" + key + "': '" + part + "' is not a number");
  }
  return out;
}

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

std::string to_string(Split s) {
  switch (s) {
    case Split::in_train: return "in_train";
    case Split::in_test: return "in_test";
    case Split::out_train: return "out_train";
    case Split::out_test: return "out_test";
  }
  return "?";
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed", "data.source", "data.format", "data.image_size", "data.classes",
      "data.noise",
      "data.in_train.count", "data.in_train.family", "data.in_train.path",
      "data.in_test.count", "data.in_test.family", "data.in_test.path",
      "data.out_train.count", "data.out_train.family", "data.out_train.path",
      "data.out_test.count", "data.out_test.family", "data.out_test.path",
      "classifier.epochs", "classifier.batch", "classifier.lr",
      "classifier.feature_dim", "classifier.blocks",
      "decoder.alpha", "decoder.epochs", "decoder.lr", "decoder.beta1",
      "decoder.beta2", "decoder.batch", "decoder.ood_ratio",
      "decoder.proj_channels", "decoder.blocks",
      "targets.scale", "detector.delta",
      "ablation.sizes", "ablation.epochs",
      "lighting.brightness", "lighting.contrast",
      "visualize.count"};
  return keys;
}

void read_split(const KeyValueConfig& kv, const std::string& name,
                DataSplitConfig& split) {
  split.count = static_cast<int>(kv.get_int("data." + name + ".count", split.count));
  std::string family = kv.get_string("data." + name + ".family",
                                     to_string(split.family));
  split.family = texture_family_from_string(family);
  split.path = kv.get_string("data." + name + ".path", split.path);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += format_double(v[i]);
  }
  return s;
}

}  // namespace

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.entries())
    if (!known_keys().count(key))
      throw ConfigError("unknown config key '" + key + "'");

  ExperimentConfig cfg;
  cfg.seed = kv.get_u64("seed", cfg.seed);
  cfg.data_source = kv.get_string("data.source", cfg.data_source);
  std::string fmt = kv.get_string("data.format", "hood_native");
  if (fmt == "hood_native")
    cfg.file_format = DatasetFormat::hood_native;
  else if (fmt == "cifar_binary")
    cfg.file_format = DatasetFormat::cifar_binary;
  else
    throw ConfigError("data.format must be hood_native or cifar_binary, got '" +
                      fmt + "'");
  cfg.image_size = static_cast<int>(kv.get_int("data.image_size", cfg.image_size));
  cfg.classes = static_cast<int>(kv.get_int("data.classes", cfg.classes));
  cfg.noise = static_cast<float>(kv.get_double("data.noise", cfg.noise));
  read_split(kv, "in_train", cfg.in_train);
  read_split(kv, "in_test", cfg.in_test);
  read_split(kv, "out_train", cfg.out_train);
  read_split(kv, "out_test", cfg.out_test);

  cfg.classifier.width = cfg.image_size;
  cfg.classifier.height = cfg.image_size;
  cfg.classifier.class_count = cfg.classes;
  cfg.classifier.epochs = static_cast<int>(kv.get_int("classifier.epochs", 10));
  cfg.classifier.batch_size = static_cast<int>(kv.get_int("classifier.batch", 64));
  cfg.classifier.lr = static_cast<float>(kv.get_double("classifier.lr", 1e-3));
  cfg.classifier.feature_dim =
      static_cast<int>(kv.get_int("classifier.feature_dim", 64));
  {
    std::vector<long> ch = kv.get_int_list("classifier.blocks", {16, 32, 64});
    cfg.classifier.blocks.clear();
    for (long c : ch) cfg.classifier.blocks.push_back({static_cast<int>(c), 3, 2});
  }
  cfg.classifier.seed = Rng::derive(cfg.seed, "classifier");

  cfg.decoder.alpha = static_cast<float>(kv.get_double("decoder.alpha", 5.0));
  cfg.decoder.epochs = static_cast<int>(kv.get_int("decoder.epochs", 150));
  cfg.decoder.lr = static_cast<float>(kv.get_double("decoder.lr", 2e-4));
  cfg.decoder.beta1 = static_cast<float>(kv.get_double("decoder.beta1", 0.5));
  cfg.decoder.beta2 = static_cast<float>(kv.get_double("decoder.beta2", 0.999));
  cfg.decoder.batch_size = static_cast<int>(kv.get_int("decoder.batch", 200));
  cfg.decoder.ood_ratio =
      static_cast<float>(kv.get_double("decoder.ood_ratio", 0.2));
  cfg.decoder.proj_channels =
      static_cast<int>(kv.get_int("decoder.proj_channels", 128));
  {
    std::vector<long> ch = kv.get_int_list("decoder.blocks", {32, 16, 8});
    cfg.decoder.block_channels.clear();
    for (long c : ch) cfg.decoder.block_channels.push_back(static_cast<int>(c));
  }
  cfg.decoder.seed = Rng::derive(cfg.seed, "decoder");

  cfg.target_scale = static_cast<float>(kv.get_double("targets.scale", 0.5));
  cfg.detector_delta = kv.get_double("detector.delta", 0.1);

  {
    std::vector<long> sizes =
        kv.get_int_list("ablation.sizes", {50, 100, 500, 1000, 2000});
    cfg.ablation_sizes.clear();
    for (long s : sizes) cfg.ablation_sizes.push_back(static_cast<int>(s));
  }
  cfg.ablation_epochs = static_cast<int>(kv.get_int("ablation.epochs", 40));
  cfg.lighting_brightness =
      kv.get_double_list("lighting.brightness", {2.0, 2.5});
  cfg.lighting_contrast = kv.get_double_list("lighting.contrast", {0.5, 0.1});
  cfg.visualize_count = static_cast<int>(kv.get_int("visualize.count", 8));

  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (data_source != "synth" && data_source != "files")
    throw ConfigError("data.source must be synth or files, got '" + data_source + "'");
  if (classes < 2) throw ConfigError("data.classes must be >= 2");
  classifier.validate();
  decoder.validate();
  if (decoder.output_size() != image_size)
    throw ConfigError("decoder emits " + std::to_string(decoder.output_size()) +
                      "x" + std::to_string(decoder.output_size()) +
                      " heatmaps but data.image_size is " +
                      std::to_string(image_size));
  if (target_scale <= 0.0f || target_scale > 0.5f)
    throw ConfigError("targets.scale must lie in (0, 0.5] to keep heatmaps in "
                      "the representable range");
  if (data_source == "synth") {
    // In-distribution splits share a family; the three roles must differ.
    if (in_train.family != in_test.family)
      throw ConfigError("in_train and in_test families must match");
    if (in_train.family == out_train.family ||
        in_train.family == out_test.family ||
        out_train.family == out_test.family)
      throw ConfigError("families for in/out-train/out-test must be pairwise "
                        "distinct");
    if (in_train.count < 1 || in_test.count < 1 || out_train.count < 1 ||
        out_test.count < 1)
      throw ConfigError("all synth split counts must be positive");
  } else {
    for (const auto* s : {&in_train, &in_test, &out_train, &out_test}) {
      if (s->path.empty())
        throw ConfigError("files mode requires a path for every data split");
      if (!std::filesystem::exists(s->path))
        throw ConfigError("dataset path does not exist: " + s->path);
    }
  }
  if (ablation_sizes.empty()) throw ConfigError("ablation.sizes must be non-empty");
  for (int s : ablation_sizes)
    if (s < 1) throw ConfigError("ablation.sizes entries must be positive");
  if (ablation_epochs < 0) throw ConfigError("ablation.epochs must be >= 0");
  if (visualize_count < 1) throw ConfigError("visualize.count must be positive");
  for (double b : lighting_brightness)
    if (b < 0.0) throw ConfigError("lighting.brightness entries must be >= 0");
  for (double c : lighting_contrast)
    if (c < 0.0) throw ConfigError("lighting.contrast entries must be >= 0");
}

std::map<std::string, std::string> ExperimentConfig::snapshot() const {
  std::map<std::string, std::string> m;
  m["seed"] = std::to_string(seed);
  m["data.source"] = data_source;
  m["data.format"] = file_format == DatasetFormat::hood_native ? "hood_native"
                                                               : "cifar_binary";
  m["data.image_size"] = std::to_string(image_size);
  m["data.classes"] = std::to_string(classes);
  m["data.noise"] = format_double(noise);
  auto put_split = [&](const std::string& name, const DataSplitConfig& s) {
    m["data." + name + ".count"] = std::to_string(s.count);
    m["data." + name + ".family"] = to_string(s.family);
    if (!s.path.empty()) m["data." + name + ".path"] = s.path;
  };
  put_split("in_train", in_train);
  put_split("in_test", in_test);
  put_split("out_train", out_train);
  put_split("out_test", out_test);
  m["classifier.epochs"] = std::to_string(classifier.epochs);
  m["classifier.batch"] = std::to_string(classifier.batch_size);
  m["classifier.lr"] = format_double(classifier.lr);
  m["classifier.feature_dim"] = std::to_string(classifier.feature_dim);
  {
    std::vector<int> ch;
    for (const auto& b : classifier.blocks) ch.push_back(b.out_channels);
    m["classifier.blocks"] = join_ints(ch);
  }
  m["decoder.alpha"] = format_double(decoder.alpha);
  m["decoder.epochs"] = std::to_string(decoder.epochs);
  m["decoder.lr"] = format_double(decoder.lr);
  m["decoder.beta1"] = format_double(decoder.beta1);
  m["decoder.beta2"] = format_double(decoder.beta2);
  m["decoder.batch"] = std::to_string(decoder.batch_size);
  m["decoder.ood_ratio"] = format_double(decoder.ood_ratio);
  m["decoder.proj_channels"] = std::to_string(decoder.proj_channels);
  m["decoder.blocks"] = join_ints(decoder.block_channels);
  m["targets.scale"] = format_double(target_scale);
  m["detector.delta"] = format_double(detector_delta);
  m["ablation.sizes"] = join_ints(ablation_sizes);
  m["ablation.epochs"] = std::to_string(ablation_epochs);
  m["lighting.brightness"] = join_doubles(lighting_brightness);
  m["lighting.contrast"] = join_doubles(lighting_contrast);
  m["visualize.count"] = std::to_string(visualize_count);
  return m;
}

std::uint64_t ExperimentConfig::split_seed(Split split) const {
  return Rng::derive(seed, "data." + to_string(split));
}

Dataset ExperimentConfig::make_dataset(Split split) const {
  const DataSplitConfig* s = nullptr;
  switch (split) {
    case Split::in_train: s = &in_train; break;
    case Split::in_test: s = &in_test; break;
    case Split::out_train: s = &out_train; break;
    case Split::out_test: s = &out_test; break;
  }
  return make_dataset(split, s->count);
}

Dataset ExperimentConfig::make_dataset(Split split, int count) const {
  const DataSplitConfig* s = nullptr;
  bool labeled = false;
  switch (split) {
    case Split::in_train: s = &in_train; labeled = true; break;
    case Split::in_test: s = &in_test; labeled = true; break;
    case Split::out_train: s = &out_train; break;
    case Split::out_test: s = &out_test; break;
  }
  if (data_source == "files") {
    Dataset ds = load_dataset(s->path, file_format);
    if (count < ds.count()) ds = ds.prefix(count);
    ds.name = to_string(split);
    return ds;
  }
  SynthSpec spec;
  spec.class_count = classes;
  spec.image_size = image_size;
  spec.family = s->family;
  spec.count = count;
  spec.noise_amplitude = noise;
  spec.labeled = labeled;
  Dataset ds = synth_dataset(spec, split_seed(split));
  ds.name = to_string(split);
  return ds;
}

}  // namespace hood
