#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "i2l/harness.hpp"

namespace i2l::cli {

inline constexpr const char* kToolVersion = "0.1.0";

std::string sha256_hex(const std::string& bytes);

// Canonical JSON text of a config; the manifest hash is taken over it.
std::string canonical_config(const ExperimentConfig& config);

// Run manifest kept in <out>/manifest.json. Stage entries from a different
// config hash are discarded on load.
class Manifest {
 public:
  Manifest(std::filesystem::path out, const ExperimentConfig& config);

  const std::string& config_hash() const { return hash_; }
  bool has_stage(const std::string& stage) const;
  void record(const std::string& stage, const std::vector<std::string>& outputs, const std::string& started,
              nlohmann::json extra = nullptr);
  // Throws std::runtime_error if a referenced output is missing.
  void write() const;

 private:
  std::filesystem::path out_;
  std::string hash_;
  nlohmann::json doc_;
};

std::string utc_timestamp();

struct Context {
  ExperimentConfig config;
  std::filesystem::path out;
};

// Each stage loads upstream artifacts recorded under the same config hash
// and rebuilds them otherwise.
void cmd_simulate(const Context& ctx);
void cmd_features(const Context& ctx);
void cmd_train(const Context& ctx);
void cmd_evaluate(const Context& ctx);
// Prints a summary table and writes it to <out>/summary.md.
void cmd_report(const Context& ctx, std::ostream& out);

}  // namespace i2l::cli
