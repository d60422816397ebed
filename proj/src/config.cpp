#include "atk/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "atk/error.hpp"

namespace atk {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValues KeyValues::parse_text(const std::string& text) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " has no '=': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + " has an empty key");
    if (kv.values_.count(key))
      throw ConfigError("config key '" + key + "' appears twice");
    kv.values_[key] = value;
  }
  return kv;
}

KeyValues KeyValues::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_text(ss.str());
}

bool KeyValues::has(const std::string& key) const {
  used_.insert(key);
  return values_.count(key) != 0;
}

void KeyValues::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  used_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double parse_number(const std::string& text, const std::string& what) {
  const auto slash = text.find('/');
  const char* begin = text.c_str();
  char* end = nullptr;
  const double num = std::strtod(begin, &end);
  if (end == begin) throw ConfigError(what + ": cannot parse number '" + text + "'");
  if (slash == std::string::npos) {
    if (static_cast<size_t>(end - begin) != text.size())
      throw ConfigError(what + ": trailing characters in number '" + text + "'");
    return num;
  }
  if (static_cast<size_t>(end - begin) != slash)
    throw ConfigError(what + ": malformed rational '" + text + "'");
  const std::string denom_text = text.substr(slash + 1);
  const char* dbegin = denom_text.c_str();
  const double denom = std::strtod(dbegin, &end);
  if (end == dbegin || static_cast<size_t>(end - dbegin) != denom_text.size())
    throw ConfigError(what + ": malformed rational '" + text + "'");
  if (denom == 0.0) throw ConfigError(what + ": zero denominator in '" + text + "'");
  return num / denom;
}

int64_t KeyValues::get_int(const std::string& key, int64_t fallback) const {
  used_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const long long v = std::strtoll(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("config key '" + key + "': not an integer: '" + it->second + "'");
  return v;
}

uint64_t KeyValues::get_seed(const std::string& key, uint64_t fallback) const {
  used_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ConfigError("config key '" + key + "': not a seed: '" + it->second + "'");
  return v;
}

double KeyValues::get_number(const std::string& key, double fallback) const {
  used_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return parse_number(it->second, "config key '" + key + "'");
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  used_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<int> KeyValues::get_int_list(const std::string& key,
                                         std::vector<int> fallback) const {
  used_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  std::istringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    char* end = nullptr;
    const long v = std::strtol(item.c_str(), &end, 10);
    if (item.empty() || end == item.c_str() || *end != '\0')
      throw ConfigError("config key '" + key + "': bad list item '" + item + "'");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

void KeyValues::reject_unknown() const {
  for (const auto& [key, value] : values_)
    if (!used_.count(key)) throw ConfigError("config: unknown key '" + key + "'");
}

std::string KeyValues::echo() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << "=" << value << "\n";
  return os.str();
}

RunSpec parse_run_spec(const KeyValues& kv) {
  RunSpec spec;

  spec.arch.height = static_cast<int>(kv.get_int("model.height", 16));
  spec.arch.width = static_cast<int>(kv.get_int("model.width", 16));
  spec.arch.channels = static_cast<int>(kv.get_int("model.channels", 3));
  spec.arch.widths = kv.get_int_list("model.widths", {8, 16});
  spec.arch.num_classes = static_cast<int>(kv.get_int("model.classes", 10));

  auto& t = spec.train;
  const std::string kind = kv.get_string("objective.kind", "trades");
  if (kind == "trades")
    t.objective.kind = ObjectiveKind::trades;
  else if (kind == "standard")
    t.objective.kind = ObjectiveKind::standard_at;
  else
    throw ConfigError("config key 'objective.kind': unknown objective '" + kind + "'");
  t.objective.beta = kv.get_number("objective.beta", t.objective.beta);
  t.objective.label_smoothing =
      kv.get_number("objective.label_smoothing", t.objective.label_smoothing);

  const std::string norm = kv.get_string("threat.norm", "linf");
  if (norm == "linf")
    t.threat.norm = Norm::linf;
  else if (norm == "l2")
    t.threat.norm = Norm::l2;
  else
    throw ConfigError("config key 'threat.norm': unknown norm '" + norm + "'");
  t.threat.eps = kv.get_number("threat.eps", t.threat.eps);

  t.attack.steps = static_cast<int>(kv.get_int("attack.steps", t.attack.steps));
  t.attack.step_size = kv.get_number("attack.step_size", t.attack.step_size);
  t.attack.random_start = kv.get_bool("attack.random_start", t.attack.random_start);
  t.attack.restarts = static_cast<int>(kv.get_int("attack.restarts", t.attack.restarts));
  const std::string default_loss =
      t.objective.kind == ObjectiveKind::trades ? "kl" : "ce";
  const std::string loss = kv.get_string("attack.loss", default_loss);
  if (loss == "ce")
    t.attack.loss = AttackLoss::ce;
  else if (loss == "kl")
    t.attack.loss = AttackLoss::kl_to_clean;
  else
    throw ConfigError("config key 'attack.loss': unknown loss '" + loss + "'");

  t.optim.lr = kv.get_number("optim.lr", t.optim.lr);
  t.optim.momentum = kv.get_number("optim.momentum", t.optim.momentum);
  t.optim.weight_decay = kv.get_number("optim.weight_decay", t.optim.weight_decay);
  t.optim.ema_tau = kv.get_number("optim.ema_tau", t.optim.ema_tau);

  t.mix.ratio = kv.get_number("mix.ratio", t.mix.ratio);
  t.mix.batch_size = static_cast<int>(kv.get_int("mix.batch_size", t.mix.batch_size));

  t.epochs = kv.get_int("train.epochs", t.epochs);
  t.crop_pad = static_cast<int>(kv.get_int("train.crop_pad", t.crop_pad));
  t.cutout_hole = static_cast<int>(kv.get_int("train.cutout_hole", t.cutout_hole));
  t.augment_generated = kv.get_bool("train.augment_generated", t.augment_generated);
  t.wall_clock = kv.get_bool("train.wall_clock", t.wall_clock);
  t.seed = kv.get_seed("seed.train", t.seed);
  t.val_attack_seed = kv.get_seed("seed.val_attack", t.val_attack_seed);

  spec.gen.num_classes = static_cast<int>(kv.get_int("gen.classes", spec.arch.num_classes));
  spec.gen.height = static_cast<int>(kv.get_int("gen.height", spec.arch.height));
  spec.gen.width = static_cast<int>(kv.get_int("gen.width", spec.arch.width));
  spec.gen.channels = static_cast<int>(kv.get_int("gen.channels", spec.arch.channels));
  spec.gen.quality = kv.get_number("gen.quality", spec.gen.quality);
  spec.gen.noise = kv.get_number("gen.noise", spec.gen.noise);
  const std::string source = kv.get_string("gen.source", "generated");
  if (source == "original")
    spec.gen.source = DataSource::original;
  else if (source == "generated")
    spec.gen.source = DataSource::generated;
  else
    throw ConfigError("config key 'gen.source': unknown source '" + source + "'");
  spec.gen_per_class = static_cast<int>(kv.get_int("gen.per_class", spec.gen_per_class));

  spec.select.keep_fraction = kv.get_number("select.keep_fraction", spec.select.keep_fraction);

  spec.seed_init = kv.get_seed("seed.init", spec.seed_init);
  spec.seed_data = kv.get_seed("seed.data", spec.seed_data);
  spec.seed_eval = kv.get_seed("seed.eval", spec.seed_eval);

  spec.data_original = kv.get_string("data.original", "");
  spec.data_generated = kv.get_string("data.generated", "");
  spec.data_val = kv.get_string("data.val", "");

  kv.reject_unknown();
  return spec;
}

}  // namespace atk
