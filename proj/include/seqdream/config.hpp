#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace seqdream {

// Minimal INI: [section] headers, key = value lines, # or ; comments,
// whitespace trimmed, later duplicates win. Values keep inline text verbatim.
struct IniFile {
  std::map<std::string, std::map<std::string, std::string>> sections;

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> raw(const std::string& section, const std::string& key) const;

  // Typed getters; a present but unparseable value is a config error.
  std::string get_string(const std::string& s, const std::string& k, const std::string& def) const;
  double get_double(const std::string& s, const std::string& k, double def) const;
  int get_int(const std::string& s, const std::string& k, int def) const;
  uint64_t get_u64(const std::string& s, const std::string& k, uint64_t def) const;
  bool get_bool(const std::string& s, const std::string& k, bool def) const;
  // Comma-separated lists.
  std::vector<double> get_double_list(const std::string& s, const std::string& k,
                                      const std::vector<double>& def) const;
  std::vector<int> get_int_list(const std::string& s, const std::string& k,
                                const std::vector<int>& def) const;
  std::vector<uint64_t> get_u64_list(const std::string& s, const std::string& k,
                                     const std::vector<uint64_t>& def) const;

  // Required variants: missing key is a config error naming [section] key.
  std::string require_string(const std::string& s, const std::string& k) const;
  double require_double(const std::string& s, const std::string& k) const;
};

IniFile parse_ini(const std::filesystem::path& path);
// `origin` labels parse errors (defaults to "<inline>"); used by tests.
IniFile parse_ini_text(const std::string& text, const std::string& origin = "<inline>");

}  // namespace seqdream
