#include "unigan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "unigan/errors.hpp"

namespace unigan {
namespace {

constexpr char kMagic[4] = {'U', 'G', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_bytes(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string short_string() { return bytes(static_cast<std::size_t>(uint(4))); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw LoadError("truncated container " + origin_);
  }
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Container::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw LoadError("container has no tensor '" + name + "'");
}

bool Container::has_tensor(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

const std::string& Container::record(const std::string& name) const {
  auto it = records.find(name);
  if (it == records.end()) throw LoadError("container has no record '" + name + "'");
  return it->second;
}

std::string serialize_container(const Container& c) {
  std::string out(kMagic, 4);
  put_u32(out, kContainerVersion);
  put_u32(out, static_cast<std::uint32_t>(c.records.size()));
  for (const auto& [name, text] : c.records) {
    put_bytes(out, name);
    put_u64(out, text.size());
    out += text;
  }
  put_u32(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    put_bytes(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u64(out, static_cast<std::uint64_t>(d));
    for (auto v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Container parse_container(const std::string& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (r.bytes(4) != std::string(kMagic, 4)) throw LoadError("bad magic in container " + origin);
  const auto version = r.uint(4);
  if (version != kContainerVersion) {
    throw LoadError("unsupported container version " + std::to_string(version) + " in " + origin);
  }
  Container c;
  const auto nrec = r.uint(4);
  for (std::uint64_t i = 0; i < nrec; ++i) {
    auto name = r.short_string();
    const auto len = r.uint(8);
    c.records[name] = r.bytes(static_cast<std::size_t>(len));
  }
  const auto ntens = r.uint(4);
  for (std::uint64_t i = 0; i < ntens; ++i) {
    auto name = r.short_string();
    const auto rank = r.uint(4);
    if (rank > 8) throw LoadError("implausible tensor rank in " + origin);
    Shape shape;
    for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::int64_t>(r.uint(8)));
    Tensor t(shape);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4)));
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw LoadError("trailing bytes in container " + origin);
  return c;
}

void save_container(const std::filesystem::path& path, const Container& container) {
  const std::string bytes = serialize_container(container);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("failed to move checkpoint into place at " + path.string());
  }
}

Container load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_container(bytes, path.string());
}

}  // namespace unigan
