#include <algorithm>
#include <cctype>

#include "coralvol/common.hpp"

namespace coralvol {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_config_text(std::string_view text,
                                                                   const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string_view raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    // Strip comments that are not inside quotes.
    bool in_quotes = false;
    std::size_t cut = raw.size();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '"') in_quotes = !in_quotes;
      if (raw[i] == '#' && !in_quotes) {
        cut = i;
        break;
      }
    }
    std::string line = trim(raw.substr(0, cut));
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') throw ConfigError(where + ": sections are not supported");
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    // TOML-style arrays become comma lists: [32, 32, 64] -> 32,32,64
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
      std::string inner = value.substr(1, value.size() - 2);
      inner.erase(std::remove_if(inner.begin(), inner.end(),
                                 [](char c) { return std::isspace(static_cast<unsigned char>(c)) || c == '"'; }),
                  inner.end());
      value = inner;
    }
    if (std::any_of(out.begin(), out.end(), [&](const auto& kv) { return kv.first == key; }))
      throw ConfigError(where + ": duplicate key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
    if (nl == text.size()) break;
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> load_config_file(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file " + path);
  }
  return parse_config_text(text, path);
}

}  // namespace coralvol
