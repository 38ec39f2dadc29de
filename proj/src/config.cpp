#include "unigan/config.hpp"

#include <fstream>
#include <iterator>
#include <set>

#include "unigan/errors.hpp"

namespace unigan {
namespace {

using nlohmann::json;

const std::set<std::string> kRunKeys = {"data", "metrics", "out"};

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::string unknown;
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError("unknown config key(s): " + unknown);
}

}  // namespace

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "preset",          "ablation",          "lambda_color",       "lambda_cyc",        "lambda_con",
      "lambda_vgg",      "lambda_tv",         "color_norm",         "plus_plain_l1",     "plus_plain_l2",
      "num_cycles",      "lr",                "beta1",              "beta2",             "adam_eps",
      "batch_size",      "epochs",            "max_steps",          "seed",              "num_res_blocks",
      "gen_base_channels", "disc_base_channels", "disc_num_downsamples", "structure_channels", "extractor",
      "perceptual_layer", "checkpoint_interval", "augment_flip",      "augment_crop_jitter"};
  return keys;
}

json to_json(const TrainConfig& c) {
  const auto& w = c.weights;
  return json{{"preset", to_string(c.preset)},
              {"ablation", to_string(c.ablation)},
              {"lambda_color", w.lambda_color},
              {"lambda_cyc", w.lambda_cyc},
              {"lambda_con", w.lambda_con},
              {"lambda_vgg", w.lambda_vgg},
              {"lambda_tv", w.lambda_tv},
              {"color_norm", to_string(w.color_norm)},
              {"plus_plain_l1", w.plus_plain_l1},
              {"plus_plain_l2", w.plus_plain_l2},
              {"num_cycles", to_string(w.num_cycles)},
              {"lr", c.lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"max_steps", c.max_steps},
              {"seed", c.seed},
              {"num_res_blocks", c.num_res_blocks},
              {"gen_base_channels", c.gen_base_channels},
              {"disc_base_channels", c.disc_base_channels},
              {"disc_num_downsamples", c.disc_num_downsamples},
              {"structure_channels", c.structure_channels},
              {"extractor", c.extractor},
              {"perceptual_layer", c.perceptual_layer},
              {"checkpoint_interval", c.checkpoint_interval},
              {"augment_flip", c.augment.flip},
              {"augment_crop_jitter", c.augment.crop_jitter}};
}

void merge_train_config(TrainConfig& c, const json& j) {
  const std::vector<std::string>& keys = train_config_keys();
  reject_unknown(j, std::set<std::string>(keys.begin(), keys.end()));
  auto has = [&](const char* k) { return j.contains(k); };
  if (has("preset")) {
    c.preset = preset_from_string(get_as<std::string>(j, "preset"));
    c.apply_preset();
  }
  if (has("ablation")) c.ablation = ablation_row_from_string(get_as<std::string>(j, "ablation"));
  auto& w = c.weights;
  if (has("lambda_color")) w.lambda_color = get_as<Scalar>(j, "lambda_color");
  if (has("lambda_cyc")) w.lambda_cyc = get_as<Scalar>(j, "lambda_cyc");
  if (has("lambda_con")) w.lambda_con = get_as<Scalar>(j, "lambda_con");
  if (has("lambda_vgg")) w.lambda_vgg = get_as<Scalar>(j, "lambda_vgg");
  if (has("lambda_tv")) w.lambda_tv = get_as<Scalar>(j, "lambda_tv");
  if (has("color_norm")) w.color_norm = norm_from_string(get_as<std::string>(j, "color_norm"));
  if (has("plus_plain_l1")) w.plus_plain_l1 = get_as<bool>(j, "plus_plain_l1");
  if (has("plus_plain_l2")) w.plus_plain_l2 = get_as<bool>(j, "plus_plain_l2");
  if (has("num_cycles")) w.num_cycles = cycle_count_from_string(get_as<std::string>(j, "num_cycles"));
  if (has("lr")) c.lr = get_as<Scalar>(j, "lr");
  if (has("beta1")) c.beta1 = get_as<Scalar>(j, "beta1");
  if (has("beta2")) c.beta2 = get_as<Scalar>(j, "beta2");
  if (has("adam_eps")) c.adam_eps = get_as<Scalar>(j, "adam_eps");
  if (has("batch_size")) c.batch_size = get_as<int>(j, "batch_size");
  if (has("epochs")) c.epochs = get_as<int>(j, "epochs");
  if (has("max_steps")) c.max_steps = get_as<std::int64_t>(j, "max_steps");
  if (has("seed")) c.seed = get_as<std::uint64_t>(j, "seed");
  if (has("num_res_blocks")) c.num_res_blocks = get_as<int>(j, "num_res_blocks");
  if (has("gen_base_channels")) c.gen_base_channels = get_as<int>(j, "gen_base_channels");
  if (has("disc_base_channels")) c.disc_base_channels = get_as<int>(j, "disc_base_channels");
  if (has("disc_num_downsamples")) c.disc_num_downsamples = get_as<int>(j, "disc_num_downsamples");
  if (has("structure_channels")) c.structure_channels = get_as<int>(j, "structure_channels");
  if (has("extractor")) c.extractor = get_as<std::string>(j, "extractor");
  if (has("perceptual_layer")) c.perceptual_layer = get_as<std::string>(j, "perceptual_layer");
  if (has("checkpoint_interval")) c.checkpoint_interval = get_as<std::int64_t>(j, "checkpoint_interval");
  if (has("augment_flip")) c.augment.flip = get_as<bool>(j, "augment_flip");
  if (has("augment_crop_jitter")) c.augment.crop_jitter = get_as<int>(j, "augment_crop_jitter");
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  merge_train_config(c, j);
  c.validate();
  return c;
}

RunConfigFile RunConfigFile::parse(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + origin + ": " + e.what());
  }
  std::set<std::string> allowed(train_config_keys().begin(), train_config_keys().end());
  allowed.insert(kRunKeys.begin(), kRunKeys.end());
  reject_unknown(j, allowed);

  RunConfigFile run;
  json train_part = json::object();
  for (const auto& [key, value] : j.items()) {
    if (!kRunKeys.count(key)) train_part[key] = value;
  }
  merge_train_config(run.train, train_part);
  if (j.contains("data")) run.data = get_as<std::string>(j, "data");
  if (j.contains("metrics")) run.metrics = get_as<std::vector<std::string>>(j, "metrics");
  if (j.contains("out")) run.out = get_as<std::string>(j, "out");
  return run;
}

RunConfigFile RunConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text, path.string());
}

json RunConfigFile::to_json() const {
  json j = unigan::to_json(train);
  j["data"] = data;
  j["metrics"] = metrics;
  j["out"] = out;
  return j;
}

}  // namespace unigan
