#pragma once

#include "healthygan/datasets.hpp"
#include "healthygan/trainer.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace healthygan {

/// Raised for malformed files, unknown keys, and type errors. The CLI maps it
/// to the usage-error exit code.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat dotted-key configuration. Every key has a schema-declared type and a
/// default, files and command-line overrides replace values, and the resolved
/// state can be dumped back out as a file that reproduces the run.
///
/// File format: one `key = value` per line, `#` starts a comment, blank lines
/// ignored.
class Config {
 public:
  Config();

  void load_file(const std::string& path);
  /// Applies a single `key=value` token, as given on the command line.
  void apply_override(const std::string& token);
  void set(const std::string& key, const std::string& value);

  const std::string& get_string(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Canonical sorted `key = value` dump; feeding it back through load_file
  /// reproduces this exact configuration.
  std::string resolved_text() const;
  /// Short stable hex digest of the resolved text, for run directory names.
  std::string digest() const;
  void write_snapshot(const std::string& path) const;

  DatasetSpec dataset_spec() const;
  TrainConfig train_config() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace healthygan
