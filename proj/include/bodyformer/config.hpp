#ifndef BODYFORMER_CONFIG_HPP
#define BODYFORMER_CONFIG_HPP

#include <map>
#include <stdexcept>
#include <string>

namespace bodyformer {

/// Flat `key = value` text config; '#' starts a comment.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Stable content hash used for provenance headers.
  std::string content_hash() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace bodyformer

#endif
