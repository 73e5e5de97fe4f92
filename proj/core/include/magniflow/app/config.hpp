#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "magniflow/dmm/model.hpp"
#include "magniflow/dmm/training.hpp"
#include "magniflow/flow/pyrlk.hpp"
#include "magniflow/fvs/training.hpp"
#include "magniflow/nofa/nofa.hpp"

namespace magniflow::app {

enum class KeyType { kInt, kUInt, kReal, kBool, kString, kIntList };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
};

// Every accepted key with its default.
const std::vector<KeySpec>& config_registry();

// Flat key = value settings validated against the registry. Unknown keys
// and unparsable values raise ContractError naming the key.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& path);
  // `key = value` lines, '#' starts a comment.
  static RunConfig parse(const std::string& text);

  void set(const std::string& key, const std::string& value);
  // MAGNIFLOW_SEED, if present, overrides `seed`.
  void apply_environment();

  const std::string& raw(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  std::uint64_t seed() const { return get_uint("seed"); }

  nofa::NofaConfig nofa() const;
  dmm::DmmConfig dmm() const;
  fvs::FvsConfig fvs() const;
  PyrLkOptions pyrlk() const;
  nn::AdamWOptions adam() const;

  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace magniflow::app
