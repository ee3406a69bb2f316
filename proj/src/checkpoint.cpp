#include "kgrec/checkpoint.hpp"

#include "kgrec/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace kgrec::nn {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume little-endian");

namespace {

std::string blob_name(const std::string& tensor) {
  std::string out = tensor;
  for (char& c : out) {
    if (c == '/') c = '.';
  }
  return out + ".f32";
}

}  // namespace

void round_to_f32(Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<Real>(static_cast<float>(m.data()[i]));
  }
}

void save_checkpoint(const fs::path& dir, std::span<const Parameter* const> params,
                     const CheckpointInfo& info) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "f32le";
  manifest["seed"] = info.seed;
  manifest["step"] = info.step;
  manifest["extra"] = info.extra;
  manifest["tensors"] = nlohmann::json::array();
  for (const Parameter* p : params) {
    const std::string file = blob_name(p->name);
    std::vector<float> buf(static_cast<std::size_t>(p->value.size()));
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(p->value.data()[i]);
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw Error("failed writing " + (dir / file).string());
    manifest["tensors"].push_back(
        {{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}, {"file", file}});
  }
  std::ofstream(dir / "checkpoint.json") << manifest.dump(2) << '\n';
}

CheckpointInfo load_checkpoint(const fs::path& dir, std::span<Parameter* const> params) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw Error("no checkpoint at " + dir.string());
  const nlohmann::json manifest = nlohmann::json::parse(in);
  std::map<std::string, nlohmann::json> by_name;
  for (const auto& t : manifest.at("tensors")) by_name[t.at("name").get<std::string>()] = t;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw Error("checkpoint " + dir.string() + " lacks " + p->name);
    const auto rows = it->second.at("shape").at(0).get<Eigen::Index>();
    const auto cols = it->second.at("shape").at(1).get<Eigen::Index>();
    if (rows != p->value.rows() || cols != p->value.cols()) {
      throw Error("checkpoint shape mismatch for " + p->name + ": stored [" +
                  std::to_string(rows) + 'x' + std::to_string(cols) + "] vs expected " +
                  shape_str(p->value));
    }
    std::vector<float> buf(static_cast<std::size_t>(rows * cols));
    std::ifstream blob(dir / it->second.at("file").get<std::string>(), std::ios::binary);
    blob.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!blob) throw Error("truncated checkpoint blob for " + p->name);
    for (std::size_t i = 0; i < buf.size(); ++i) p->value.data()[i] = buf[i];
    p->zero_grad();
  }
  CheckpointInfo info;
  info.seed = manifest.at("seed").get<std::uint64_t>();
  info.step = manifest.at("step").get<long>();
  info.extra = manifest.value("extra", nlohmann::json::object());
  return info;
}

}  // namespace kgrec::nn
