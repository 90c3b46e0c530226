#include "seqdream/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "seqdream/common.hpp"

namespace seqdream {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& s, const std::string& k, const std::string& what,
                            const std::string& val) {
  fail(ErrorKind::config, "[" + s + "] " + k + ": expected " + what + ", got '" + val + "'");
}

double parse_double(const std::string& s, const std::string& k, const std::string& val) {
  const std::string t = trim(val);
  if (t.empty()) bad_value(s, k, "a number", val);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) bad_value(s, k, "a number", val);
  return v;
}

int64_t parse_integer(const std::string& s, const std::string& k, const std::string& val) {
  const std::string t = trim(val);
  int64_t v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) bad_value(s, k, "an integer", val);
  return v;
}

uint64_t parse_unsigned(const std::string& s, const std::string& k, const std::string& val) {
  const std::string t = trim(val);
  uint64_t v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) bad_value(s, k, "an unsigned integer", val);
  return v;
}

std::vector<std::string> split_list(const std::string& val) {
  std::vector<std::string> out;
  std::istringstream ss(val);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (!out.empty() && out.back().empty()) out.pop_back();  // tolerate a trailing comma
  return out;
}

}  // namespace

bool IniFile::has(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  return s != sections.end() && s->second.count(key) > 0;
}

std::optional<std::string> IniFile::raw(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  if (s == sections.end()) return std::nullopt;
  const auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

std::string IniFile::get_string(const std::string& s, const std::string& k,
                                const std::string& def) const {
  return raw(s, k).value_or(def);
}

double IniFile::get_double(const std::string& s, const std::string& k, double def) const {
  const auto v = raw(s, k);
  return v ? parse_double(s, k, *v) : def;
}

int IniFile::get_int(const std::string& s, const std::string& k, int def) const {
  const auto v = raw(s, k);
  return v ? static_cast<int>(parse_integer(s, k, *v)) : def;
}

uint64_t IniFile::get_u64(const std::string& s, const std::string& k, uint64_t def) const {
  const auto v = raw(s, k);
  return v ? parse_unsigned(s, k, *v) : def;
}

bool IniFile::get_bool(const std::string& s, const std::string& k, bool def) const {
  const auto v = raw(s, k);
  if (!v) return def;
  const std::string t = trim(*v);
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  bad_value(s, k, "a boolean", *v);
}

std::vector<double> IniFile::get_double_list(const std::string& s, const std::string& k,
                                             const std::vector<double>& def) const {
  const auto v = raw(s, k);
  if (!v) return def;
  std::vector<double> out;
  for (const std::string& item : split_list(*v)) out.push_back(parse_double(s, k, item));
  if (out.empty()) bad_value(s, k, "a nonempty list", *v);
  return out;
}

std::vector<int> IniFile::get_int_list(const std::string& s, const std::string& k,
                                       const std::vector<int>& def) const {
  const auto v = raw(s, k);
  if (!v) return def;
  std::vector<int> out;
  for (const std::string& item : split_list(*v))
    out.push_back(static_cast<int>(parse_integer(s, k, item)));
  if (out.empty()) bad_value(s, k, "a nonempty list", *v);
  return out;
}

std::vector<uint64_t> IniFile::get_u64_list(const std::string& s, const std::string& k,
                                            const std::vector<uint64_t>& def) const {
  const auto v = raw(s, k);
  if (!v) return def;
  std::vector<uint64_t> out;
  for (const std::string& item : split_list(*v)) out.push_back(parse_unsigned(s, k, item));
  if (out.empty()) bad_value(s, k, "a nonempty list", *v);
  return out;
}

std::string IniFile::require_string(const std::string& s, const std::string& k) const {
  const auto v = raw(s, k);
  if (!v) fail(ErrorKind::config, "missing config key [" + s + "] " + k);
  return *v;
}

double IniFile::require_double(const std::string& s, const std::string& k) const {
  return parse_double(s, k, require_string(s, k));
}

IniFile parse_ini_text(const std::string& text, const std::string& origin) {
  IniFile ini;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        fail(ErrorKind::parse, origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      ini.sections[section];  // remember empty sections too
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::parse,
           origin + ":" + std::to_string(lineno) + ": expected 'key = value' or '[section]'");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty())
      fail(ErrorKind::parse, origin + ":" + std::to_string(lineno) + ": empty key");
    ini.sections[section][key] = trim(t.substr(eq + 1));
  }
  return ini;
}

IniFile parse_ini(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ini_text(buf.str(), path.string());
}

}  // namespace seqdream
