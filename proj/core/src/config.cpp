#include "lfdnet/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lfdnet/error.hpp"

namespace lfdnet {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
  }

  // Call after reading all keys.
  void reject_unknown() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + path(k) + "'");
    }
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, double& out) {
    if (auto* v = find(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, int& out) {
    if (auto* v = find(key)) {
      if (!v->is_number_integer()) throw type_error(key, "an integer");
      const auto x = v->get<long long>();
      if (x < INT32_MIN || x > INT32_MAX) throw ConfigError("config key '" + path(key) + "' out of range");
      out = static_cast<int>(x);
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (auto* v = find(key)) {
      if (!v->is_number_unsigned()) throw type_error(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (auto* v = find(key)) {
      if (!v->is_boolean()) throw type_error(key, "a boolean");
      out = v->get<bool>();
    }
  }
  template <class T>
  void get(const std::string& key, std::vector<T>& out) {
    if (auto* v = find(key)) {
      if (!v->is_array()) throw type_error(key, "an array");
      std::vector<T> r;
      for (const auto& e : *v) {
        if constexpr (std::is_same_v<T, bool>) {
          if (!e.is_boolean()) throw type_error(key, "an array of booleans");
          r.push_back(e.get<bool>());
        } else {
          if (!e.is_number_integer()) throw type_error(key, "an array of integers");
          r.push_back(static_cast<T>(e.get<long long>()));
        }
      }
      out = std::move(r);
    }
  }
  Section sub(const std::string& key) {
    static const json empty = json::object();
    const json* v = find(key);
    return Section(v ? *v : empty, path(key));
  }
  bool has(const std::string& key) const { return j_.contains(key); }
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

 private:
  ConfigError type_error(const std::string& key, const char* what) const {
    return ConfigError("config key '" + path(key) + "' must be " + what);
  }

  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

// Re-raise a section validator's message with the config key prefix.
template <class F>
void check(const std::string& section, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    throw ConfigError("config section '" + section + "': " + e.what());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  check("render", [&] { render.validate(); });
  check("split", [&] { split.validate(); });
  check("train", [&] { train.validate(); });
  check("gbdt", [&] { gbdt.validate(); });
  check("arch", [&] { arch_for({"a", "b"}).validate(); });
}

ArchSpec PipelineConfig::arch_for(const std::vector<std::string>& class_names) const {
  ArchSpec a = arch;
  a.input_size = render.resolution;
  a.classes = static_cast<int>(class_names.size());
  a.class_names = class_names;
  return a;
}

PipelineConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  Section top(root, "");
  {
    auto s = top.sub("render");
    s.get("resolution", c.render.resolution);
    s.get("fill_fraction", c.render.fill_fraction);
    s.reject_unknown();
  }
  {
    auto s = top.sub("arch");
    if (s.has("input_size")) throw ConfigError("config key 'arch.input_size' is not settable; use render.resolution");
    if (s.has("classes") || s.has("class_names"))
      throw ConfigError("config key 'arch.classes' is not settable; classes come from the manifest labels");
    auto& a = c.arch;
    s.get("stem_filters", a.stem_filters);
    s.get("stem_kernel", a.stem_kernel);
    s.get("initial_pool", a.initial_pool);
    s.get("group_filters", a.group_filters);
    s.get("group_downsample", a.group_downsample);
    s.get("blocks_per_group", a.blocks_per_group);
    s.get("block_kernel", a.block_kernel);
    s.get("final_pool", a.final_pool);
    s.get("fc", a.fc);
    s.get("dropout", a.dropout);
    s.get("bn_momentum", a.bn_momentum);
    s.get("bn_epsilon", a.bn_epsilon);
    s.reject_unknown();
  }
  {
    auto s = top.sub("split");
    s.get("train_fraction", c.split.train_fraction);
    s.reject_unknown();
  }
  {
    auto s = top.sub("train");
    s.get("learning_rate", c.train.learning_rate);
    s.get("batch_size", c.train.batch_size);
    s.get("epochs", c.train.epochs);
    s.get("class_weighting", c.train.class_weighting);
    s.reject_unknown();
  }
  {
    auto s = top.sub("gbdt");
    s.get("rounds", c.gbdt.rounds);
    s.get("learning_rate", c.gbdt.learning_rate);
    s.get("max_depth", c.gbdt.max_depth);
    s.get("min_child_weight", c.gbdt.min_child_weight);
    s.get("lambda", c.gbdt.lambda);
    s.get("gamma", c.gbdt.gamma);
    s.get("probs_only", c.gbdt_probs_only);
    s.reject_unknown();
  }
  {
    auto s = top.sub("seeds");
    s.get("split", c.split.seed);
    s.get("init", c.init_seed);
    s.get("shuffle", c.train.seed);
    s.reject_unknown();
  }
  top.reject_unknown();
  c.validate();
  return c;
}

std::string PipelineConfig::to_json() const {
  json j;
  j["render"] = {{"resolution", render.resolution}, {"fill_fraction", render.fill_fraction}};
  j["arch"] = {{"stem_filters", arch.stem_filters},
               {"stem_kernel", arch.stem_kernel},
               {"initial_pool", arch.initial_pool},
               {"group_filters", arch.group_filters},
               {"group_downsample", arch.group_downsample},
               {"blocks_per_group", arch.blocks_per_group},
               {"block_kernel", arch.block_kernel},
               {"final_pool", arch.final_pool},
               {"fc", arch.fc},
               {"dropout", arch.dropout},
               {"bn_momentum", arch.bn_momentum},
               {"bn_epsilon", arch.bn_epsilon}};
  j["split"] = {{"train_fraction", split.train_fraction}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"class_weighting", train.class_weighting}};
  j["gbdt"] = {{"rounds", gbdt.rounds},
               {"learning_rate", gbdt.learning_rate},
               {"max_depth", gbdt.max_depth},
               {"min_child_weight", gbdt.min_child_weight},
               {"lambda", gbdt.lambda},
               {"gamma", gbdt.gamma},
               {"probs_only", gbdt_probs_only}};
  j["seeds"] = {{"split", split.seed}, {"init", init_seed}, {"shuffle", train.seed}};
  return j.dump(2) + "\n";
}

PipelineConfig load_config(const std::filesystem::path& flag_path) {
  std::filesystem::path path = flag_path;
  if (path.empty()) {
    const char* env = std::getenv(kConfigEnvVar);
    if (env && *env) path = env;
  }
  if (path.empty()) return PipelineConfig{};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace lfdnet
