#include <algorithm>
#include <array>
#include <utility>

#include "unigan/errors.hpp"
#include "unigan/training.hpp"

namespace unigan {
namespace {

constexpr std::array<std::pair<AblationRow, const char*>, 16> kRowNames = {{
    {AblationRow::B, "B"},     {AblationRow::C, "C"},     {AblationRow::D, "D"},     {AblationRow::E11, "E11"},
    {AblationRow::E12, "E12"}, {AblationRow::E13, "E13"}, {AblationRow::E14, "E14"}, {AblationRow::E15, "E15"},
    {AblationRow::E16, "E16"}, {AblationRow::E21, "E21"}, {AblationRow::E22, "E22"}, {AblationRow::E3, "E3"},
    {AblationRow::E41, "E41"}, {AblationRow::E42, "E42"}, {AblationRow::F, "F"},     {AblationRow::F14, "F14"},
}};

ModelToggles row_d() {
  ModelToggles t;
  t.cycle = true;
  return t;
}

}  // namespace

std::string to_string(AblationRow row) {
  for (const auto& [r, name] : kRowNames) {
    if (r == row) return name;
  }
  return "?";
}

AblationRow ablation_row_from_string(const std::string& name) {
  if (name == "A") throw ConfigError("ablation row A (unpaired training) is not supported");
  for (const auto& [r, n] : kRowNames) {
    if (name == n) return r;
  }
  throw ConfigError("unknown ablation row '" + name + "'");
}

const std::vector<AblationRow>& all_ablation_rows() {
  static const std::vector<AblationRow> rows = [] {
    std::vector<AblationRow> out;
    for (const auto& entry : kRowNames) out.push_back(entry.first);
    return out;
  }();
  return rows;
}

ModelToggles configure_ablation(AblationRow row) {
  ModelToggles t;
  switch (row) {
    case AblationRow::B:
      // Paired GAN on the image alone.
      t.use_structure = false;
      t.struct_disc = false;
      t.plain_disc = true;
      return t;
    case AblationRow::C:
      return t;
    case AblationRow::D:
    case AblationRow::E21:  // D already carries the structure-guided discriminator
      return row_d();
    case AblationRow::E11:
      t = row_d();
      t.color_on_x = true;
      return t;
    case AblationRow::E12:
      t = row_d();
      t.plain_l1 = true;
      return t;
    case AblationRow::E13:
      t = row_d();
      t.plain_l2 = true;
      return t;
    case AblationRow::E14:
      t = row_d();
      t.color_on_y = true;
      return t;
    case AblationRow::E15:
      t = row_d();
      t.color_on_y = true;
      t.color_norm = Norm::L2;
      t.plain_l1 = true;
      return t;
    case AblationRow::E16:
      t = row_d();
      t.color_on_y = true;
      t.plain_l1 = true;
      return t;
    case AblationRow::E22:
      t = row_d();
      t.plain_disc = true;
      return t;
    case AblationRow::E3:
      t = row_d();
      t.self_content = true;
      return t;
    case AblationRow::E41:
      t = row_d();
      t.perceptual = true;
      return t;
    case AblationRow::E42:
      t = row_d();
      t.perceptual = true;
      t.tv = true;
      return t;
    case AblationRow::F:
    case AblationRow::F14:
      t = row_d();
      t.color_on_y = true;
      t.plain_l1 = row == AblationRow::F;
      t.plain_disc = true;
      t.self_content = true;
      t.perceptual = true;
      t.tv = true;
      return t;
  }
  throw ConfigError("unhandled ablation row");
}

std::string to_string(Preset preset) {
  switch (preset) {
    case Preset::gesture:
      return "gesture";
    case Preset::crossview:
      return "crossview";
    case Preset::custom:
      return "custom";
  }
  return "?";
}

Preset preset_from_string(const std::string& name) {
  if (name == "gesture") return Preset::gesture;
  if (name == "crossview") return Preset::crossview;
  if (name == "custom") return Preset::custom;
  throw ConfigError("unknown preset '" + name + "' (expected gesture, crossview or custom)");
}

LossWeights preset_weights(Preset preset) {
  LossWeights w;
  switch (preset) {
    case Preset::gesture:
      w.lambda_cyc = 0.1;
      w.lambda_con = 0.01;
      w.lambda_vgg = 1000;
      w.lambda_color = 800;
      w.lambda_tv = 1e-6;
      break;
    case Preset::crossview:
      w.lambda_cyc = 0.1;
      w.lambda_con = 100;
      w.lambda_vgg = 100;
      w.lambda_color = 100;
      w.lambda_tv = 1e-6;
      break;
    case Preset::custom:
      break;
  }
  return w;
}

}  // namespace unigan
