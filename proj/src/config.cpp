#include "aliasforge/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "aliasforge/rng.hpp"

namespace aliasforge {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_as(std::string_view key, std::string_view value) {
  T out{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ConfigError("config key " + std::string(key) + ": cannot parse \"" + std::string(value) + "\"");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key " + std::string(key) + ": expected true/false");
}

std::vector<int> parse_list(std::string_view key, std::string_view value) {
  std::vector<int> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    out.push_back(parse_as<int>(key, trim(value.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return out;
}

std::string list_str(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  auto& n = netgen;
  if (key == "seed") seed = parse_as<std::uint64_t>(key, value);
  else if (key == "netgen.preset") {
    netgen_preset = std::string(value);
    try {
      netgen = NetGenConfig::preset(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  else if (key == "netgen.conv_min") n.conv_min = parse_as<int>(key, value);
  else if (key == "netgen.conv_max") n.conv_max = parse_as<int>(key, value);
  else if (key == "netgen.fc_min") n.fc_min = parse_as<int>(key, value);
  else if (key == "netgen.fc_max") n.fc_max = parse_as<int>(key, value);
  else if (key == "netgen.channel_choices") n.channel_choices = parse_list(key, value);
  else if (key == "netgen.fc_dim_choices") n.fc_dim_choices = parse_list(key, value);
  else if (key == "netgen.p_residual") n.p_residual = parse_as<double>(key, value);
  else if (key == "netgen.p_depthwise") n.p_depthwise = parse_as<double>(key, value);
  else if (key == "netgen.p_pool") n.p_pool = parse_as<double>(key, value);
  else if (key == "netgen.p_stride") n.p_stride = parse_as<double>(key, value);
  else if (key == "netgen.input_size") n.input.h = n.input.w = parse_as<int>(key, value);
  else if (key == "netgen.input_channels") n.input.c = parse_as<int>(key, value);
  else if (key == "netgen.classes") n.classes = parse_as<int>(key, value);
  else if (key == "ga.population_size") ga.population_size = parse_as<int>(key, value);
  else if (key == "ga.generations") ga.generations = parse_as<int>(key, value);
  else if (key == "ga.budget") ga.budget = parse_as<double>(key, value);
  else if (key == "ga.mutation_sigma") ga.mutation_sigma = parse_as<double>(key, value);
  else if (key == "fitness.mode") {
    try {
      ga.fitness_mode = parse_fitness_mode(value);
    } catch (const MetricError& e) {
      throw ConfigError(e.what());
    }
  }
  else if (key == "fitness.hinge") ga.fitness_mode = parse_bool(key, value) ? FitnessMode::Hinge : FitnessMode::Verbatim;
  else if (key == "trace.lambda") trace.macs_per_cycle = parse_as<double>(key, value);
  else if (key == "trace.kappa") trace.cycles_per_element = parse_as<double>(key, value);
  else if (key == "trace.bandwidth") trace.bytes_per_cycle = parse_as<double>(key, value);
  else if (key == "trace.noise_sigma") trace.noise_sigma = parse_as<double>(key, value);
  else if (key == "trace.seed") {
    trace.seed = parse_as<std::uint64_t>(key, value);
    trace_seed_set = true;
  }
  else if (key == "trace.include_activations") trace.sequence.include_activations = parse_bool(key, value);
  else if (key == "attack.predictor") {
    try {
      predictor = parse_predictor_kind(value);
    } catch (const AttackError& e) {
      throw ConfigError(e.what());
    }
  }
  else if (key == "attack.k") knn_k = parse_as<int>(key, value);
  else if (key == "attack.train_corpus") train_corpus = parse_as<int>(key, value);
  else throw ConfigError("unknown config key \"" + std::string(key) + "\"");

  // netgen ranges are checked at use, since min/max may be set in either order.
  if (key.starts_with("ga.")) {
    try {
      ga.check();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key " + std::string(key) + ": " + e.what());
    }
  }
  if (!(trace.macs_per_cycle > 0 && trace.cycles_per_element > 0 && trace.bytes_per_cycle > 0 &&
        trace.noise_sigma >= 0))
    throw ConfigError("config key " + std::string(key) + ": trace rates must be positive");
}

void RunConfig::load_text(std::string_view text, std::string_view origin) {
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    std::string key(trim(line.substr(0, eq)));
    if (!section.empty()) key = section + "." + key;
    std::string_view value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  load_text(buf.str(), path);
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv{
      {"seed", std::to_string(seed)},
      {"netgen.preset", netgen_preset},
      {"netgen.conv_min", std::to_string(netgen.conv_min)},
      {"netgen.conv_max", std::to_string(netgen.conv_max)},
      {"netgen.fc_min", std::to_string(netgen.fc_min)},
      {"netgen.fc_max", std::to_string(netgen.fc_max)},
      {"netgen.channel_choices", list_str(netgen.channel_choices)},
      {"netgen.fc_dim_choices", list_str(netgen.fc_dim_choices)},
      {"netgen.p_residual", num(netgen.p_residual)},
      {"netgen.p_depthwise", num(netgen.p_depthwise)},
      {"netgen.p_pool", num(netgen.p_pool)},
      {"netgen.p_stride", num(netgen.p_stride)},
      {"netgen.input_size", std::to_string(netgen.input.h)},
      {"netgen.input_channels", std::to_string(netgen.input.c)},
      {"netgen.classes", std::to_string(netgen.classes)},
      {"ga.population_size", std::to_string(ga.population_size)},
      {"ga.generations", std::to_string(ga.generations)},
      {"ga.budget", num(ga.budget)},
      {"ga.mutation_sigma", num(ga.mutation_sigma)},
      {"fitness.mode", std::string(to_string(ga.fitness_mode))},
      {"trace.lambda", num(trace.macs_per_cycle)},
      {"trace.kappa", num(trace.cycles_per_element)},
      {"trace.bandwidth", num(trace.bytes_per_cycle)},
      {"trace.noise_sigma", num(trace.noise_sigma)},
      {"trace.seed", std::to_string(trace_params().seed)},
      {"trace.include_activations", trace.sequence.include_activations ? "true" : "false"},
      {"attack.predictor", std::string(to_string(predictor))},
      {"attack.k", std::to_string(knn_k)},
      {"attack.train_corpus", std::to_string(train_corpus)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const { return hex64(fnv1a(canonical())); }

std::uint64_t RunConfig::stream(std::string_view name, std::uint64_t index) const {
  return derive_seed(seed, name, index);
}

TraceParams RunConfig::trace_params() const {
  TraceParams p = trace;
  if (!trace_seed_set) p.seed = stream("noise");
  return p;
}

GAConfig RunConfig::ga_config(std::uint64_t index) const {
  GAConfig g = ga;
  g.seed = stream("ga", index);
  g.trace = trace_params();
  return g;
}

}  // namespace aliasforge
