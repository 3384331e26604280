#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dpmine/core.hpp"

namespace dpmine::runner {

/// Flat `key = value` settings grouped by `[section]` headers. Keys are stored
/// as "section.key"; `#` starts a comment.
class Config {
public:
  static Config parse(std::string_view text, const std::string &origin = "<string>");
  static Config load(const std::filesystem::path &path);

  void set(const std::string &key, const std::string &value) { entries_[key] = value; }
  [[nodiscard]] bool has(const std::string &key) const { return entries_.count(key) != 0; }

  /// Values in `other` replace ours; unknown keys are rejected.
  void merge(const Config &other);

  [[nodiscard]] std::string str(const std::string &key) const;
  [[nodiscard]] double real(const std::string &key) const;
  [[nodiscard]] std::int64_t integer(const std::string &key) const;
  [[nodiscard]] bool flag(const std::string &key) const;
  [[nodiscard]] std::vector<double> reals(const std::string &key) const;
  [[nodiscard]] std::vector<std::int64_t> integers(const std::string &key) const;
  [[nodiscard]] std::vector<std::string> words(const std::string &key) const;

  /// Canonical text with sections and keys sorted.
  [[nodiscard]] std::string dump() const;

  [[nodiscard]] const std::map<std::string, std::string> &entries() const { return entries_; }

private:
  std::map<std::string, std::string> entries_;
};

/// Every recognized key with its default value.
const Config &default_config();

/// Built-in defaults overlaid with `path` (when non-empty).
Config load_with_defaults(const std::filesystem::path &path);

/// "0,3,5-9" -> {0, 3, 5, 6, 7, 8, 9}.
std::vector<std::uint64_t> parse_seed_list(const std::string &text);

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

} // namespace dpmine::runner
