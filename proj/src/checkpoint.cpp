#include "confnet2seq/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "confnet2seq/errors.hpp"

namespace confnet2seq::num {

namespace {

constexpr const char* kFormat = "confnet2seq-checkpoint";
constexpr int kVersion = 1;

void put_le(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& prefix) { return with_suffix(prefix, ".json"); }
std::filesystem::path blob_path(const std::filesystem::path& prefix) { return with_suffix(prefix, ".bin"); }

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == name; });
}

const Tensor& Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.tensor;
  throw CompatibilityError("checkpoint has no tensor named '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& prefix, const Checkpoint& checkpoint) {
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  nlohmann::json manifest = {{"format", kFormat},
                             {"version", kVersion},
                             {"step", checkpoint.step},
                             {"config", checkpoint.config},
                             {"blob", blob_path(prefix).filename().string()}};
  nlohmann::json entries = nlohmann::json::array();
  std::ofstream blob(blob_path(prefix), std::ios::binary | std::ios::trunc);
  if (!blob) throw Error("cannot write " + blob_path(prefix).string());
  for (const auto& t : checkpoint.tensors) {
    entries.push_back({{"name", t.name}, {"shape", t.tensor.shape()}});
    for (double v : t.tensor.values()) put_le(blob, v);
  }
  blob.close();
  if (!blob) throw Error("failed writing " + blob_path(prefix).string());
  manifest["tensors"] = std::move(entries);
  std::ofstream out(manifest_path(prefix), std::ios::trunc);
  if (!out) throw Error("cannot write " + manifest_path(prefix).string());
  out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& prefix) {
  std::ifstream in(manifest_path(prefix));
  if (!in) throw Error("cannot read checkpoint manifest " + manifest_path(prefix).string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kFormat || manifest.value("version", 0) != kVersion)
    throw CompatibilityError("unsupported checkpoint format in " + manifest_path(prefix).string());

  std::ifstream blob(blob_path(prefix), std::ios::binary);
  if (!blob) throw Error("cannot read checkpoint blob " + blob_path(prefix).string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  ck.step = manifest.at("step").get<std::size_t>();
  ck.config = manifest.value("config", nlohmann::json::object());
  std::size_t offset = 0;
  for (const auto& entry : manifest.at("tensors")) {
    auto shape = entry.at("shape").get<Shape>();
    const std::size_t n = shape_size(shape);
    if (offset + 8 * n > bytes.size())
      throw FormatError("checkpoint blob too short for tensor '" + entry.at("name").get<std::string>() + "'");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = get_le(bytes.data() + offset + 8 * i);
    offset += 8 * n;
    ck.tensors.push_back({entry.at("name").get<std::string>(), Tensor::constant(std::move(shape), std::move(values))});
  }
  if (offset != bytes.size()) throw FormatError("checkpoint blob has trailing bytes");
  return ck;
}

}  // namespace confnet2seq::num
