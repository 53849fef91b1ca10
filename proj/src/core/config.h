#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/common.h"

namespace gnvc {

// Flat key=value run configuration.  Every known key has a default; a file
// only overrides.  Unknown keys are rejected outright — silent typos in a
// config that drives hours of training are not worth tolerating.
struct Config {
  std::map<std::string, std::string> values;

  static const std::map<std::string, std::string> &defaults();
  static Config from_string(const std::string &text);
  static Config from_file(const std::string &path);
  // The validated "key=value" lines of `text`, without filling in defaults.
  static std::vector<std::pair<std::string, std::string>> parse_pairs(const std::string &text);

  bool has(const std::string &key) const { return values.count(key) != 0; }
  const std::string &str(const std::string &key) const;
  int64_t i(const std::string &key) const;
  uint64_t u(const std::string &key) const;
  double d(const std::string &key) const;
  bool b(const std::string &key) const;
  std::vector<double> dlist(const std::string &key) const; // comma separated

  // "frames:steps,frames:steps,..." used by the curriculum schedule
  std::vector<std::pair<int, int>> phase_list(const std::string &key) const;

  void set(const std::string &key, const std::string &v);
};

} // namespace gnvc
