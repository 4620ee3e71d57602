#include "painforge/cli/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "painforge/core/errors.hpp"
#include "painforge/core/hash.hpp"
#include "painforge/tensor/tensor_io.hpp"

namespace painforge {
namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ConfigError("'" + s + "' is not a number");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ConfigError("'" + s + "' is not a non-negative integer");
  return v;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(to_u64(s)); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const T& values, const std::function<std::string(typename T::value_type)>& f) {
  std::string out;
  for (const auto& v : values) out += (out.empty() ? "" : ",") + f(v);
  return out;
}

template <std::size_t N>
std::array<std::size_t, N> size_array(const std::string& s) {
  const auto items = split_list(s);
  if (items.size() != N) throw ConfigError("expected " + std::to_string(N) + " comma-separated counts");
  std::array<std::size_t, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = to_size(items[i]);
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string sz(std::size_t v) { return std::to_string(v); }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"seed", [](RunConfig& c, const std::string& v) { c.set_seed(to_u64(v)); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"output_root", [](RunConfig& c, const std::string& v) { c.output_root = v; },
       [](const RunConfig& c) { return c.output_root.string(); }},
      {"dataset.identities", [](RunConfig& c, const std::string& v) { c.dataset.identities = to_size(v); },
       [](const RunConfig& c) { return sz(c.dataset.identities); }},
      {"dataset.expressions", [](RunConfig& c, const std::string& v) { c.dataset.expressions_per_identity = to_size(v); },
       [](const RunConfig& c) { return sz(c.dataset.expressions_per_identity); }},
      {"dataset.views", [](RunConfig& c, const std::string& v) { c.dataset.yaws = default_yaws(to_size(v)); },
       nullptr},
      {"dataset.yaws",
       [](RunConfig& c, const std::string& v) {
         c.dataset.yaws.clear();
         for (const auto& item : split_list(v)) c.dataset.yaws.push_back(to_double(item));
       },
       [](const RunConfig& c) { return join<std::vector<double>>(c.dataset.yaws, fmt); }},
      {"dataset.resolution", [](RunConfig& c, const std::string& v) { c.dataset.resolution = to_size(v); },
       [](const RunConfig& c) { return sz(c.dataset.resolution); }},
      {"dataset.pspi_distribution",
       [](RunConfig& c, const std::string& v) {
         if (v == "uniform") {
           c.dataset.pspi_distribution = DatasetSpec::uniform_pspi();
           return;
         }
         const auto items = split_list(v);
         if (items.size() != kNumPspiClasses) throw ConfigError("pspi_distribution needs 17 probabilities");
         for (std::size_t i = 0; i < kNumPspiClasses; ++i) c.dataset.pspi_distribution[i] = to_double(items[i]);
       },
       [](const RunConfig& c) {
         return join<std::array<double, kNumPspiClasses>>(c.dataset.pspi_distribution, fmt);
       }},
      {"dataset.demographics",
       [](RunConfig& c, const std::string& v) {
         if (v == "reference") {
           c.dataset.demographics.reset();
           return;
         }
         // age;ethnicity;gender count lists
         std::vector<std::string> parts;
         std::stringstream in(v);
         std::string part;
         while (std::getline(in, part, ';')) parts.push_back(trim(part));
         if (parts.size() != 3) throw ConfigError("demographics must be 'reference' or 'age;ethnicity;gender' counts");
         DemographicConfig d;
         d.age = size_array<2>(parts[0]);
         d.ethnicity = size_array<6>(parts[1]);
         d.gender = size_array<2>(parts[2]);
         c.dataset.demographics = d;
       },
       [](const RunConfig& c) -> std::string {
         if (!c.dataset.demographics) return "reference";
         const auto& d = *c.dataset.demographics;
         return join<std::array<std::size_t, 2>>(d.age, sz) + ";" + join<std::array<std::size_t, 6>>(d.ethnicity, sz) +
                ";" + join<std::array<std::size_t, 2>>(d.gender, sz);
       }},
      {"model.patch_size", [](RunConfig& c, const std::string& v) { c.model.patch_size = to_size(v); },
       [](const RunConfig& c) { return sz(c.model.patch_size); }},
      {"model.hidden_dim", [](RunConfig& c, const std::string& v) { c.model.hidden_dim = to_size(v); },
       [](const RunConfig& c) { return sz(c.model.hidden_dim); }},
      {"model.num_layers", [](RunConfig& c, const std::string& v) { c.model.num_layers = to_size(v); },
       [](const RunConfig& c) { return sz(c.model.num_layers); }},
      {"model.num_heads", [](RunConfig& c, const std::string& v) { c.model.num_heads = to_size(v); },
       [](const RunConfig& c) { return sz(c.model.num_heads); }},
      {"model.mlp_ratio", [](RunConfig& c, const std::string& v) { c.model.mlp_ratio = to_size(v); },
       [](const RunConfig& c) { return sz(c.model.mlp_ratio); }},
      {"model.dropout", [](RunConfig& c, const std::string& v) { c.model.dropout_p = to_double(v); },
       [](const RunConfig& c) { return fmt(c.model.dropout_p); }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = to_size(v); },
       [](const RunConfig& c) { return sz(c.train.epochs); }},
      {"train.freeze_epochs", [](RunConfig& c, const std::string& v) { c.train.freeze_epochs = to_size(v); },
       [](const RunConfig& c) { return sz(c.train.freeze_epochs); }},
      {"train.lr_backbone", [](RunConfig& c, const std::string& v) { c.train.lr_backbone = to_double(v); },
       [](const RunConfig& c) { return fmt(c.train.lr_backbone); }},
      {"train.lr_heads", [](RunConfig& c, const std::string& v) { c.train.lr_heads = to_double(v); },
       [](const RunConfig& c) { return fmt(c.train.lr_heads); }},
      {"train.floor_fraction", [](RunConfig& c, const std::string& v) { c.train.floor_fraction = to_double(v); },
       [](const RunConfig& c) { return fmt(c.train.floor_fraction); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = to_size(v); },
       [](const RunConfig& c) { return sz(c.train.batch_size); }},
      {"train.weight_decay", [](RunConfig& c, const std::string& v) { c.train.weight_decay = to_double(v); },
       [](const RunConfig& c) { return fmt(c.train.weight_decay); }},
      {"train.beta1", [](RunConfig& c, const std::string& v) { c.train.beta1 = to_double(v); },
       [](const RunConfig& c) { return fmt(c.train.beta1); }},
      {"train.beta2", [](RunConfig& c, const std::string& v) { c.train.beta2 = to_double(v); },
       [](const RunConfig& c) { return fmt(c.train.beta2); }},
      {"train.test_fraction", [](RunConfig& c, const std::string& v) { c.train.test_fraction = to_double(v); },
       [](const RunConfig& c) { return fmt(c.train.test_fraction); }},
      {"train.val_fraction", [](RunConfig& c, const std::string& v) { c.train.val_fraction = to_double(v); },
       [](const RunConfig& c) { return fmt(c.train.val_fraction); }},
      {"loss.pspi", [](RunConfig& c, const std::string& v) { c.loss.pspi = to_double(v); },
       [](const RunConfig& c) { return fmt(c.loss.pspi); }},
      {"loss.au", [](RunConfig& c, const std::string& v) { c.loss.au = to_double(v); },
       [](const RunConfig& c) { return fmt(c.loss.au); }},
      {"loss.pspi_distill", [](RunConfig& c, const std::string& v) { c.loss.pspi_distill = to_double(v); },
       [](const RunConfig& c) { return fmt(c.loss.pspi_distill); }},
      {"loss.au_distill", [](RunConfig& c, const std::string& v) { c.loss.au_distill = to_double(v); },
       [](const RunConfig& c) { return fmt(c.loss.au_distill); }},
      {"loss.feature_distill", [](RunConfig& c, const std::string& v) { c.loss.feature_distill = to_double(v); },
       [](const RunConfig& c) { return fmt(c.loss.feature_distill); }},
      {"loss.temperature", [](RunConfig& c, const std::string& v) { c.loss.temperature = to_double(v); },
       [](const RunConfig& c) { return fmt(c.loss.temperature); }},
      {"eval.thresholds",
       [](RunConfig& c, const std::string& v) {
         c.thresholds.clear();
         for (const auto& item : split_list(v)) c.thresholds.push_back(static_cast<int>(to_u64(item)));
       },
       [](const RunConfig& c) { return join<std::vector<int>>(c.thresholds, [](int t) { return std::to_string(t); }); }},
      {"eval.folds", [](RunConfig& c, const std::string& v) { c.eval_folds = to_size(v); },
       [](const RunConfig& c) { return sz(c.eval_folds); }},
  };
  return table;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  dataset.seed = value;
  train.seed = value;
}

void RunConfig::validate() const {
  dataset.validate();
  ModelConfig m = model;
  m.image_size = dataset.resolution;
  m.validate();
  train.validate();
  loss.validate();
  if (thresholds.empty()) throw ConfigError("eval.thresholds must name at least one threshold");
  for (int t : thresholds)
    if (t < 1 || t > 16) throw ConfigError("eval.thresholds must lie in [1, 16]");
  if (eval_folds == 1) throw ConfigError("eval.folds must be 0 (holdout) or at least 2");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = "config line " + std::to_string(number) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(body.substr(0, eq)), value = trim(body.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields())
      if (key == f.key) field = &f;
    if (!field) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    if (key == "dataset.views" && seen.count("dataset.yaws")) throw ConfigError(where + "give views or yaws, not both");
    if (key == "dataset.yaws" && seen.count("dataset.views")) throw ConfigError(where + "give views or yaws, not both");
    try {
      field->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  config.model.image_size = config.dataset.resolution;
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  return parse_run_config(read_file(path));
}

std::string serialize_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields())
    if (f.get) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

std::string canonical_config_json(const RunConfig& config) {
  json j = json::object();
  for (const auto& f : fields())
    if (f.get && std::string(f.key) != "output_root") j[f.key] = f.get(config);
  return j.dump();
}

std::string config_hash(const RunConfig& config) { return sha256_hex(canonical_config_json(config)); }

}  // namespace painforge
