#pragma once

// Versioned binary container shared by checkpoints and extractor weights.
//
// Layout (all integers little-endian):
//   "UGCK"  u32 version
//   u32 record_count  { u32 name_len, name, u64 text_len, text }   -- JSON config records
//   u32 tensor_count  { u32 name_len, name, u32 rank, u64 dims[rank], f32 data[numel] }
//
// Tensor payloads are IEEE-754 binary32; values are rounded on save.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "unigan/tensor.hpp"

namespace unigan {

inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  std::map<std::string, std::string> records;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
  const std::string& record(const std::string& name) const;
};

// Writes to `<path>.tmp` and renames, so an interrupted save leaves the old file intact.
void save_container(const std::filesystem::path& path, const Container& container);
Container load_container(const std::filesystem::path& path);

std::string serialize_container(const Container& container);
Container parse_container(const std::string& bytes, const std::string& origin = "<memory>");

}  // namespace unigan
