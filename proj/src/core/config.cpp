#include "core/config.h"

#include <cctype>

namespace gnvc {

const std::map<std::string, std::string> &Config::defaults() {
  static const std::map<std::string, std::string> d = {
      {"seed", "1234"},
      {"checkpoint_dir", "checkpoints"},

      {"data.count", "256"},
      {"data.frames", "13"},
      {"data.width", "64"},
      {"data.height", "64"},
      {"data.min_rects", "1"},
      {"data.max_rects", "3"},
      {"data.min_size", "12"},
      {"data.max_size", "36"},
      {"data.max_speed", "3"},
      {"data.static_prob", "0.2"},
      {"data.integer_prob", "0.75"},
      {"data.texture_prob", "0.7"},
      {"data.motion_scale", "1.0"},

      {"vae.width", "16"},
      {"vae.latent_channels", "8"},
      {"vae.spatial_stride", "4"},
      {"vae.temporal_stride", "2"},
      {"vae.train.steps", "1200"},
      {"vae.train.batch", "4"},
      {"vae.train.lr", "1e-3"},
      {"vae.train.frames", "5"},
      {"vae.train.final_frames", "13"},
      {"vae.train.final_steps", "200"},
      {"vae.train.latent_reg", "1e-3"},

      {"codec.width", "32"},
      {"codec.y_channels", "32"},
      {"codec.context_channels", "16"},

      {"refiner.width", "128"},
      {"refiner.blocks", "4"},
      {"refiner.heads", "4"},
      {"refiner.patch", "2"},
      {"refiner.max_latents", "16"},

      {"flow.t_n", "0.7"},
      {"flow.steps", "5"},

      {"prior.train.steps", "2000"},
      {"prior.train.batch", "4"},
      {"prior.train.lr", "3e-4"},
      {"prior.train.frames", "13"},

      {"stage1.lambda_r", "0.5"},
      {"stage1.lr", "1e-4"},
      {"stage1.batch", "8"},
      {"stage1.phases", "5:400,9:150,13:100"},

      {"stage2.lambdas", "0.05,0.1,0.25,0.5"},
      {"stage2.batch", "2"},
      {"stage2.steps", "250"},
      {"stage2.lr_start", "5e-5"},
      {"stage2.lr_end", "1e-5"},
      {"stage2.frames", "13"},
      {"stage2.train_vae", "1"},
      {"stage2.lambda_lpips", "1.0"},

      {"encode.quality", "3"},
      {"encode.refine", "1"},
      {"encode.noise_seed", "77"},
      {"encode.max_gop", "25"},

      {"eval.seed", "999"},
      {"eval.count", "32"},
  };
  return d;
}

static std::string trim(const std::string &s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(uint8_t(s[a]))) ++a;
  while (b > a && std::isspace(uint8_t(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::pair<std::string, std::string>> Config::parse_pairs(const std::string &text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::map<std::string, int> seen;
  size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail_config("config line " + std::to_string(lineno) + " has no '=': " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (!defaults().count(key))
      fail_config("unknown config key '" + key + "' (line " + std::to_string(lineno) + ")");
    if (seen[key]++)
      fail_config("duplicate config key '" + key + "' (line " + std::to_string(lineno) + ")");
    out.emplace_back(std::move(key), std::move(val));
  }
  return out;
}

Config Config::from_string(const std::string &text) {
  Config cfg;
  cfg.values = defaults();
  for (auto &[key, val] : parse_pairs(text)) cfg.values[key] = val;
  return cfg;
}

Config Config::from_file(const std::string &path) {
  std::vector<uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error &) {
    fail_config("cannot read config file: " + path);
  }
  return from_string(std::string(bytes.begin(), bytes.end()));
}

const std::string &Config::str(const std::string &key) const {
  auto it = values.find(key);
  if (it == values.end()) fail_config("config key '" + key + "' is not defined");
  return it->second;
}

int64_t Config::i(const std::string &key) const {
  try {
    size_t used = 0;
    int64_t v = std::stoll(str(key), &used);
    if (used != str(key).size()) throw std::invalid_argument("");
    return v;
  } catch (const std::logic_error &) {
    fail_config("config key '" + key + "' wants an integer, got '" + str(key) + "'");
  }
}

uint64_t Config::u(const std::string &key) const {
  int64_t v = i(key);
  if (v < 0) fail_config("config key '" + key + "' must be non-negative");
  return uint64_t(v);
}

double Config::d(const std::string &key) const {
  try {
    size_t used = 0;
    double v = std::stod(str(key), &used);
    if (used != str(key).size()) throw std::invalid_argument("");
    return v;
  } catch (const std::logic_error &) {
    fail_config("config key '" + key + "' wants a number, got '" + str(key) + "'");
  }
}

bool Config::b(const std::string &key) const {
  const std::string &v = str(key);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  fail_config("config key '" + key + "' wants a boolean, got '" + v + "'");
}

std::vector<double> Config::dlist(const std::string &key) const {
  std::vector<double> out;
  const std::string &v = str(key);
  size_t pos = 0;
  while (pos <= v.size()) {
    size_t c = v.find(',', pos);
    std::string tok = trim(v.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
    if (!tok.empty()) {
      try {
        out.push_back(std::stod(tok));
      } catch (const std::logic_error &) {
        fail_config("config key '" + key + "': bad list element '" + tok + "'");
      }
    }
    if (c == std::string::npos) break;
    pos = c + 1;
  }
  if (out.empty()) fail_config("config key '" + key + "' wants a non-empty list");
  return out;
}

std::vector<std::pair<int, int>> Config::phase_list(const std::string &key) const {
  std::vector<std::pair<int, int>> out;
  const std::string &v = str(key);
  size_t pos = 0;
  while (pos <= v.size()) {
    size_t c = v.find(',', pos);
    std::string tok = trim(v.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
    if (!tok.empty()) {
      size_t colon = tok.find(':');
      if (colon == std::string::npos)
        fail_config("config key '" + key + "': phase '" + tok + "' wants frames:steps");
      try {
        out.push_back({std::stoi(tok.substr(0, colon)), std::stoi(tok.substr(colon + 1))});
      } catch (const std::logic_error &) {
        fail_config("config key '" + key + "': bad phase '" + tok + "'");
      }
    }
    if (c == std::string::npos) break;
    pos = c + 1;
  }
  if (out.empty()) fail_config("config key '" + key + "' wants phases");
  return out;
}

void Config::set(const std::string &key, const std::string &v) {
  GNVC_CHECK(defaults().count(key) != 0, "setting unknown config key " + key);
  values[key] = v;
}

} // namespace gnvc
