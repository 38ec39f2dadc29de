#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "unigan/training.hpp"

namespace unigan {

// Flat JSON view of TrainConfig. A preset is applied before the explicit
// lambda keys, so explicit values win.
nlohmann::json to_json(const TrainConfig& cfg);
// Rejects unknown keys (ConfigError listing them) and ill-typed values.
TrainConfig train_config_from_json(const nlohmann::json& j);
// Applies the keys present in `j` on top of `cfg`.
void merge_train_config(TrainConfig& cfg, const nlohmann::json& j);

const std::vector<std::string>& train_config_keys();

// Run description for the command line: every TrainConfig key plus dataset
// path, metric selection and output directory. All fields have defaults.
struct RunConfigFile {
  TrainConfig train;
  std::string data;                                  // dataset root
  std::vector<std::string> metrics = {"psnr", "ssim", "sd", "fid", "frd"};
  std::string out;                                   // empty: derived run directory

  static RunConfigFile parse(const std::string& text, const std::string& origin = "<config>");
  static RunConfigFile load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

}  // namespace unigan
