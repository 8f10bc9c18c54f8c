#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sharelr {

// "key = value" lines; '#' starts a comment; keys may repeat. Values keep
// inner whitespace and lose the surrounding one.
class KeyValueFile {
 public:
  static KeyValueFile Parse(std::string_view text, std::string origin = "<string>");
  static KeyValueFile Load(const std::string& path);

  bool Has(std::string_view key) const;
  // Last occurrence wins.
  std::optional<std::string> Get(std::string_view key) const;
  std::vector<std::string> GetAll(std::string_view key) const;

  std::string GetString(std::string_view key, std::string fallback) const;
  long long GetInt(std::string_view key, long long fallback) const;
  double GetDouble(std::string_view key, double fallback) const;
  bool GetBool(std::string_view key, bool fallback) const;

  void Set(std::string key, std::string value);
  void Append(std::string key, std::string value);
  void Remove(std::string_view key);
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

  std::string ToText() const;

 private:
  std::string origin_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace sharelr
