#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hood/config.hpp"
#include "hood/metrics.hpp"

namespace hood {

// A stage asked for an artifact that an earlier stage has not produced.
// The CLI maps this onto exit code 2.
struct MissingInputError : Error {
  explicit MissingInputError(const std::filesystem::path& p)
      : Error("missing stage input: " + p.string()), path(p) {}
  std::filesystem::path path;
};

// Run metadata: config snapshot, per-stage wall times, artifact digests and
// evaluation results, stored as sorted `key = value` lines. Artifacts a
// stage consumes are re-digested and checked against the entry the producing
// stage wrote, so tampering between stages is detected.
class Manifest {
 public:
  static Manifest load_or_empty(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;  // empty when absent

  void record_artifact(const std::filesystem::path& out_dir,
                       const std::string& name);
  void verify_artifact(const std::filesystem::path& out_dir,
                       const std::string& name) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

// Stage outputs, all under the run directory.
inline constexpr const char* kClassifierFile = "classifier.ckpt";
inline constexpr const char* kBankFile = "bank.fb";
inline constexpr const char* kTargetsFile = "targets.ts";
inline constexpr const char* kDecoderFile = "decoder.ckpt";
inline constexpr const char* kScoresFile = "scores.txt";
inline constexpr const char* kReportFile = "report.txt";
inline constexpr const char* kReportKvFile = "report.kv";
inline constexpr const char* kManifestFile = "manifest.txt";
inline constexpr const char* kAblationFile = "ablation.txt";
inline constexpr const char* kLightingFile = "lighting.txt";

const std::vector<std::string>& stage_names();

// Executes one pipeline stage against the run directory, updating the
// manifest (config snapshot, artifact digests, wall time) on success.
void run_stage(const std::string& name, const ExperimentConfig& cfg,
               const std::filesystem::path& out_dir, bool verbose = false);

}  // namespace hood
