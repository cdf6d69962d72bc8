#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "aliasforge/attack.hpp"
#include "aliasforge/ga.hpp"
#include "aliasforge/netgen.hpp"
#include "aliasforge/trace.hpp"

namespace aliasforge {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run depends on. Every field has a default; a run is
/// reproducible from (config file, overrides, seed).
struct RunConfig {
  std::uint64_t seed = 0;
  std::string netgen_preset = "default";
  NetGenConfig netgen;
  GAConfig ga;
  TraceParams trace;
  bool trace_seed_set = false;  // otherwise the noise seed comes from the "noise" stream
  PredictorKind predictor = PredictorKind::KNN;
  int knn_k = 5;
  int train_corpus = 500;  // graphs generated when eval trains its own attacker

  /// Applies one `key = value` setting (keys as in the config file).
  void set(std::string_view key, std::string_view value);
  /// Parses `key = value` lines; `[section]` headers prefix following keys
  /// with `section.`; `#` starts a comment.
  void load_text(std::string_view text, std::string_view origin = "config");
  void load_file(const std::string& path);

  /// Sorted `key=value` lines covering every setting.
  std::string canonical() const;
  std::string hash() const;

  // Seeds for the named random substreams.
  std::uint64_t stream(std::string_view name, std::uint64_t index = 0) const;

  /// Trace parameters with the effective noise seed.
  TraceParams trace_params() const;
  /// GA settings for the `index`-th model of a run.
  GAConfig ga_config(std::uint64_t index = 0) const;
};

}  // namespace aliasforge
