#include "ffseg/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ffseg/errors.hpp"

namespace ffseg {
namespace {

std::string Trim(const std::string& s) {
  const auto first = std::find_if_not(s.begin(), s.end(),
                                      [](unsigned char c) { return std::isspace(c); });
  const auto last = std::find_if_not(s.rbegin(), s.rend(),
                                     [](unsigned char c) { return std::isspace(c); }).base();
  return first < last ? std::string(first, last) : std::string();
}

double ParseDouble(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "': expected a number, got '" + text + "'");
  }
}

}  // namespace

KeyValueConfig KeyValueConfig::Parse(const std::string& text) {
  KeyValueConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = Trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw InputError("config line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    const std::string key = Trim(trimmed.substr(0, eq));
    if (key.empty()) {
      throw InputError("config line " + std::to_string(line_no) + ": empty key");
    }
    config.values_[key] = Trim(trimmed.substr(eq + 1));
  }
  return config;
}

KeyValueConfig KeyValueConfig::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return Parse(buffer.str());
}

std::optional<std::string> KeyValueConfig::Get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::GetString(const std::string& key,
                                      const std::string& fallback) const {
  return Get(key).value_or(fallback);
}

double KeyValueConfig::GetDouble(const std::string& key, double fallback) const {
  const auto v = Get(key);
  return v ? ParseDouble(key, *v) : fallback;
}

long long KeyValueConfig::GetInt(const std::string& key, long long fallback) const {
  const auto v = Get(key);
  if (!v) return fallback;
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw InputError("config key '" + key + "': expected an integer, got '" + *v + "'");
  }
  return out;
}

bool KeyValueConfig::GetBool(const std::string& key, bool fallback) const {
  const auto v = Get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw InputError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<double> KeyValueConfig::GetDoubles(const std::string& key) const {
  std::vector<double> out;
  const auto v = Get(key);
  if (!v) return out;
  std::string text = *v;
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream in(text);
  std::string token;
  while (in >> token) out.push_back(ParseDouble(key, token));
  return out;
}

void KeyValueConfig::RejectUnknown(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const std::string& k) {
      if (!k.empty() && k.back() == '*') {
        return key.compare(0, k.size() - 1, k, 0, k.size() - 1) == 0;
      }
      return key == k;
    });
    if (!ok) throw InputError("unknown config key '" + key + "'");
  }
}

std::string KeyValueConfig::ToString() const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) out << key << " = " << value << "\n";
  return out.str();
}

}  // namespace ffseg
