#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "naseval/space.hpp"
#include "naseval/supernet.hpp"

namespace naseval::cli {

inline constexpr const char* kToolVersion = "naseval 0.1.0";

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitPartialFailure = 2;
inline constexpr int kExitIo = 3;

/// Experiment description: a JSON document with typed accessors and
/// defaults. Command-line flags are merged into the document before any
/// accessor runs, so the hash always covers the effective configuration.
class ExperimentConfig {
 public:
  ExperimentConfig() : doc_(nlohmann::json::object()) {}
  explicit ExperimentConfig(nlohmann::json doc) : doc_(std::move(doc)) {}

  static ExperimentConfig from_file(const std::filesystem::path& path);

  const nlohmann::json& doc() const { return doc_; }
  nlohmann::json& doc() { return doc_; }

  /// FNV-1a over the canonical (key-sorted) serialization.
  std::string hash() const;

  space::SearchSpaceSpec space_spec() const;
  supernet::TaskSpec task_spec() const;
  supernet::TrainConfig train_config(const char* section) const;  // "train" / "ws_train"
  std::vector<std::uint64_t> seeds() const;
  std::int64_t budget() const;

  /// Output directory with the NASEVAL_OUT_ROOT override applied.
  std::filesystem::path output_dir() const;

 private:
  nlohmann::json doc_;
};

int cmd_enumerate(const ExperimentConfig& config);
int cmd_ground_truth(const ExperimentConfig& config);
int cmd_search(const ExperimentConfig& config);
int cmd_ws_rank(const ExperimentConfig& config);
int cmd_sharing_amount(const ExperimentConfig& config);

/// Full argv interface; returns the process exit code.
int run_main(int argc, const char* const* argv);

}  // namespace naseval::cli
