#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "atk/data.hpp"
#include "atk/model.hpp"
#include "atk/train.hpp"

namespace atk {

// Line-oriented key=value settings. '#' starts a comment, whitespace around
// keys and values is trimmed. Numeric values accept p/q rationals such as
// 8/255. Reads are tracked so a run can reject keys it never understood.
class KeyValues {
 public:
  static KeyValues parse_file(const std::string& path);
  static KeyValues parse_text(const std::string& text);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_seed(const std::string& key, uint64_t fallback) const;
  double get_number(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;

  // throws naming the first key that no getter ever touched
  void reject_unknown() const;
  // canonical sorted key=value text, one per line
  std::string echo() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

double parse_number(const std::string& text, const std::string& what);

// Everything one training or evaluation run needs, materialized from keys.
struct RunSpec {
  ArchDescriptor arch;
  TrainConfig train;
  GeneratorConfig gen;
  int gen_per_class = 100;
  SelectionConfig select;
  uint64_t seed_init = 1;  // weights
  uint64_t seed_data = 2;  // generator draws
  uint64_t seed_eval = 3;  // evaluation attacks
  std::string data_original;
  std::string data_generated;
  std::string data_val;
};

RunSpec parse_run_spec(const KeyValues& kv);

}  // namespace atk
