// SPDX-License-Identifier: Apache-2.0
#include "amodal/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "amodal/error.hpp"

namespace amodal {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kUsage, "config " + key + ": '" + v + "' is not a number");
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kUsage, "config " + key + ": '" + v + "' is not an integer");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long i = std::stoull(v, &used);
    if (used == v.size() && v.find('-') == std::string::npos) return i;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kUsage, "config " + key + ": '" + v + "' is not a nonnegative integer");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::kUsage, "config " + key + ": '" + v + "' is not a boolean");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');)
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : to_list(v)) out.push_back(static_cast<int>(to_int(key, s)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"model.resolution", [](TrainConfig& c, auto& k, auto& v) { c.model.resolution = static_cast<int>(to_int(k, v)); },
       [](const TrainConfig& c) { return std::to_string(c.model.resolution); }},
      {"model.channels",
       [](TrainConfig& c, auto& k, auto& v) {
         const auto ch = to_int_list(k, v);
         require(ch.size() == 3, ErrorKind::kUsage, "config model.channels needs three widths");
         c.model.channels1 = ch[0], c.model.channels2 = ch[1], c.model.channels3 = ch[2];
       },
       [](const TrainConfig& c) {
         return join(std::vector<int>{c.model.channels1, c.model.channels2, c.model.channels3});
       }},
      {"model.phi", [](TrainConfig& c, auto&, auto& v) { c.model.phi = parse_activation(v); },
       [](const TrainConfig& c) { return std::string(activation_name(c.model.phi)); }},
      {"model.paste_coarse", [](TrainConfig& c, auto& k, auto& v) { c.model.paste_coarse = to_bool(k, v); },
       [](const TrainConfig& c) { return std::string(c.model.paste_coarse ? "true" : "false"); }},
      {"model.disc_channels", [](TrainConfig& c, auto& k, auto& v) { c.model.disc_channels = to_int_list(k, v); },
       [](const TrainConfig& c) { return join(c.model.disc_channels); }},
      {"model.disc_weighted_mask",
       [](TrainConfig& c, auto& k, auto& v) { c.model.disc_weighted_mask = to_bool(k, v); },
       [](const TrainConfig& c) { return std::string(c.model.disc_weighted_mask ? "true" : "false"); }},
      {"model.softmax_scale",
       [](TrainConfig& c, auto& k, auto& v) { c.model.attention.softmax_scale = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.model.attention.softmax_scale); }},
      {"model.seed", [](TrainConfig& c, auto& k, auto& v) { c.model.seed = to_u64(k, v); },
       [](const TrainConfig& c) { return std::to_string(c.model.seed); }},
      {"backbone.channels", [](TrainConfig& c, auto& k, auto& v) { c.backbone.channels = to_int_list(k, v); },
       [](const TrainConfig& c) { return join(c.backbone.channels); }},
      {"backbone.kernel", [](TrainConfig& c, auto& k, auto& v) { c.backbone.kernel = static_cast<int>(to_int(k, v)); },
       [](const TrainConfig& c) { return std::to_string(c.backbone.kernel); }},
      {"backbone.seed", [](TrainConfig& c, auto& k, auto& v) { c.backbone.seed = to_u64(k, v); },
       [](const TrainConfig& c) { return std::to_string(c.backbone.seed); }},
      {"backbone.weights", [](TrainConfig& c, auto&, auto& v) { c.backbone_weights = v; },
       [](const TrainConfig& c) { return c.backbone_weights; }},
      {"loss.hinge", [](TrainConfig& c, auto& k, auto& v) { c.weights.hinge = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.weights.hinge); }},
      {"loss.perceptual", [](TrainConfig& c, auto& k, auto& v) { c.weights.perceptual = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.weights.perceptual); }},
      {"loss.patch", [](TrainConfig& c, auto& k, auto& v) { c.weights.patch = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.weights.patch); }},
      {"loss.style", [](TrainConfig& c, auto& k, auto& v) { c.weights.style = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.weights.style); }},
      {"loss.l1", [](TrainConfig& c, auto& k, auto& v) { c.weights.l1 = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.weights.l1); }},
      {"loss.perceptual_taps", [](TrainConfig& c, auto&, auto& v) { c.perceptual_taps = to_list(v); },
       [](const TrainConfig& c) { return join(c.perceptual_taps); }},
      {"loss.style_taps", [](TrainConfig& c, auto&, auto& v) { c.style_taps = to_list(v); },
       [](const TrainConfig& c) { return join(c.style_taps); }},
      {"loss.ablate", [](TrainConfig& c, auto&, auto& v) { c.ablate = to_list(v); },
       [](const TrainConfig& c) { return join(c.ablate); }},
      {"train.batch_size", [](TrainConfig& c, auto& k, auto& v) { c.batch_size = static_cast<int>(to_int(k, v)); },
       [](const TrainConfig& c) { return std::to_string(c.batch_size); }},
      {"train.steps", [](TrainConfig& c, auto& k, auto& v) { c.steps = static_cast<int>(to_int(k, v)); },
       [](const TrainConfig& c) { return std::to_string(c.steps); }},
      {"train.lr_g", [](TrainConfig& c, auto& k, auto& v) { c.g_opt.lr = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.g_opt.lr); }},
      {"train.lr_d", [](TrainConfig& c, auto& k, auto& v) { c.d_opt.lr = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.d_opt.lr); }},
      {"train.beta1", [](TrainConfig& c, auto& k, auto& v) { c.g_opt.beta1 = c.d_opt.beta1 = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.g_opt.beta1); }},
      {"train.beta2", [](TrainConfig& c, auto& k, auto& v) { c.g_opt.beta2 = c.d_opt.beta2 = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.g_opt.beta2); }},
      {"train.eps", [](TrainConfig& c, auto& k, auto& v) { c.g_opt.eps = c.d_opt.eps = to_double(k, v); },
       [](const TrainConfig& c) { return fmt(c.g_opt.eps); }},
      {"train.seed", [](TrainConfig& c, auto& k, auto& v) { c.seed = to_u64(k, v); },
       [](const TrainConfig& c) { return std::to_string(c.seed); }},
      {"train.checkpoint_every",
       [](TrainConfig& c, auto& k, auto& v) { c.checkpoint_every = static_cast<int>(to_int(k, v)); },
       [](const TrainConfig& c) { return std::to_string(c.checkpoint_every); }},
  };
  return table;
}

}  // namespace

ConfigMap ConfigMap::parse(const std::string& text, const std::string& source) {
  ConfigMap m;
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string key = eq == std::string::npos ? "" : trim(line.substr(0, eq));
    if (key.empty() || key.find('.') == std::string::npos)
      fail(ErrorKind::kUsage, source + ":" + std::to_string(lineno) + ": expected 'section.key = value'");
    m.entries_[key] = trim(line.substr(eq + 1));
  }
  return m;
}

ConfigMap ConfigMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kUsage, "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::optional<std::string> ConfigMap::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ConfigMap::merge(const ConfigMap& other) {
  for (const auto& [k, v] : other.entries_) entries_[k] = v;
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  for (const auto& term : ablate) amodal::ablate(w, term);
  return w;
}

void TrainConfig::validate() const {
  require(g_opt.lr >= 0.0 && d_opt.lr >= 0.0, ErrorKind::kUsage, "learning rates must be nonnegative");
  require(g_opt.beta1 >= 0.0 && g_opt.beta1 < 1.0 && g_opt.beta2 >= 0.0 && g_opt.beta2 < 1.0, ErrorKind::kUsage,
          "adam betas must lie in [0, 1)");
  require(g_opt.eps > 0.0, ErrorKind::kUsage, "adam eps must be positive");
  require(batch_size >= 1, ErrorKind::kUsage, "train.batch_size must be >= 1");
  require(steps >= 0, ErrorKind::kUsage, "train.steps must be >= 0");
  require(checkpoint_every >= 0, ErrorKind::kUsage, "train.checkpoint_every must be >= 0");
  require(model.resolution >= 8 && model.resolution % 4 == 0, ErrorKind::kUsage,
          "model.resolution must be a multiple of 4 and at least 8");
  require(model.channels1 > 0 && model.channels2 > 0 && model.channels3 > 0, ErrorKind::kUsage,
          "model.channels must be positive");
  for (auto w : weights.as_array()) require(w >= 0.0, ErrorKind::kUsage, "loss weights must be nonnegative");
  (void)effective_weights();
}

TrainConfig apply_config(const ConfigMap& map, TrainConfig base) {
  for (const auto& [key, value] : map.entries()) {
    bool known = false;
    for (const auto& f : fields())
      if (key == f.key) {
        f.set(base, key, value);
        known = true;
        break;
      }
    if (!known) fail(ErrorKind::kUsage, "unknown config key '" + key + "'");
  }
  return base;
}

std::string config_text(const TrainConfig& config) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(config) << "\n";
  return os.str();
}

}  // namespace amodal
