#include "msb/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "msb/common.hpp"

namespace msb::checkpoint {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'M', 'S', 'B', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw CorruptionError("truncated checkpoint: " + path);
  return value;
}
}  // namespace

void save(models::Model& model, const Sidecar& sidecar, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const auto params = model.params();
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const nn::Param* p : params) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  }
  json j;
  j["model_kind"] = sidecar.model_kind;
  j["fusion_method"] = sidecar.fusion_method;
  j["encoder_name"] = sidecar.encoder_name;
  j["grid"] = sidecar.grid;
  j["epoch"] = sidecar.epoch;
  j["validation_metric"] = sidecar.validation_metric;
  std::ofstream side(path + ".json");
  side << j.dump(2) << '\n';
}

void load(models::Model& model, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CorruptionError("bad checkpoint magic: " + path);
  }
  const auto count = read_pod<std::uint32_t>(in, path);
  auto params = model.params();
  if (count != params.size()) {
    throw IntegrityError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                         std::to_string(params.size()));
  }
  for (nn::Param* p : params) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = read_pod<std::uint32_t>(in, path);
    const auto cols = read_pod<std::uint32_t>(in, path);
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw IntegrityError("checkpoint tensor '" + name + "' does not match model parameter '" +
                           p->name + "'");
    }
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!in) throw CorruptionError("truncated checkpoint: " + path);
  }
}

Sidecar read_sidecar(const std::string& path) {
  std::ifstream in(path + ".json");
  if (!in) throw InputError("cannot open checkpoint sidecar: " + path + ".json");
  json j = json::parse(in);
  Sidecar s;
  s.model_kind = j.value("model_kind", "");
  s.fusion_method = j.value("fusion_method", "");
  s.encoder_name = j.value("encoder_name", "");
  s.grid = j.value("grid", "");
  s.epoch = j.value("epoch", -1);
  s.validation_metric = j.value("validation_metric", 0.0);
  return s;
}

}  // namespace msb::checkpoint
