#include "fcncd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fcncd/baselines.hpp"
#include "fcncd/error.hpp"

namespace fcncd {

namespace {

constexpr char kMagic[] = "FCNCDCK1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

nlohmann::json shape_json(const ModelShape& s) {
  return {{"participants", s.participants}, {"items", s.items}, {"dimensions", s.dimensions}, {"item_dims", s.item_dims}};
}

ModelShape shape_from_json(const nlohmann::json& j) {
  ModelShape s;
  s.participants = j.at("participants").get<std::size_t>();
  s.items = j.at("items").get<std::size_t>();
  s.dimensions = j.at("dimensions").get<std::size_t>();
  s.item_dims = j.at("item_dims").get<std::vector<std::size_t>>();
  return s;
}

}  // namespace

void save_checkpoint(const RankingModel& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : model.parameters().entries()) {
    table.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += p.value.size();
  }
  const nlohmann::json header = {{"kind", model.kind()},
                                 {"config", model.config()},
                                 {"shape", shape_json(model.shape())},
                                 {"parameters", table},
                                 {"scalars", offset},
                                 {"extra", extra}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, kMagicLen);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.parameters().entries()) {
    out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) throw ParseError(path.string() + ": not a checkpoint file");
  const std::uint64_t len = read_u64(in);
  if (!in || len > (1ULL << 32)) throw ParseError(path.string() + ": corrupt checkpoint header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError(path.string() + ": truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
  }

  Checkpoint ck;
  Rng unused(0);
  ck.model = make_model(header.at("kind").get<std::string>(), header.at("config"), shape_from_json(header.at("shape")),
                        unused);
  ck.extra = header.value("extra", nlohmann::json::object());

  auto& params = ck.model->parameters();
  const auto& table = header.at("parameters");
  if (table.size() != params.size()) throw ParseError(path.string() + ": parameter count does not match the model");
  for (const auto& entry : table) {
    const std::string name = entry.at("name").get<std::string>();
    if (!params.contains(name)) throw ParseError(path.string() + ": unknown parameter '" + name + "'");
    Array& value = params[name];
    if (entry.at("shape").get<Shape>() != value.shape()) throw ShapeError(path.string() + ": shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!in) throw ParseError(path.string() + ": truncated checkpoint payload");
    require_finite(value.values(), name);
  }
  return ck;
}

}  // namespace fcncd
