#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rvseg/train.hpp"

namespace rvseg {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat key=value run configuration. Every key has a documented default,
// unknown keys are rejected, and the canonical text form (sorted keys) is
// what checkpoints embed.
class RunConfig {
 public:
  RunConfig();  // defaults only

  static const std::map<std::string, std::string>& defaults();

  // `# comment` and blank lines allowed; everything else must be key=value.
  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::string canonical_text() const;

  TrainConfig to_train_config() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string to_config_text(const TrainConfig& cfg);

}  // namespace rvseg
