#include "fcncd/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fcncd/error.hpp"

namespace fcncd {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string_view rest(line);
  while (true) {
    const auto comma = rest.find(',');
    out.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

[[noreturn]] void fail(const CsvFile& file, std::size_t line, const std::string& what) {
  throw ParseError(file.path + ":" + std::to_string(line) + ": " + what);
}

void require_fields(const CsvFile& file, const CsvRow& row, std::size_t n) {
  if (row.fields.size() != n) {
    fail(file, row.line, "expected " + std::to_string(n) + " fields, found " + std::to_string(row.fields.size()));
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_real(double value) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error("cannot format real");
  return std::string(buf, end);
}

CsvFile read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  CsvFile file;
  file.path = path.string();
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      file.comments.push_back(trim(std::string_view(t).substr(1)));
      continue;
    }
    if (!have_header) {
      file.header = split_fields(t);
      have_header = true;
      continue;
    }
    file.rows.push_back(CsvRow{number, split_fields(t)});
  }
  if (!have_header) throw ParseError(file.path + ": missing header line");
  return file;
}

std::size_t parse_index(const CsvFile& file, const CsvRow& row, std::size_t field) {
  const std::string& text = row.fields.at(field);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(file, row.line, "field " + std::to_string(field + 1) + " ('" + file.header.at(std::min(field, file.header.size() - 1)) +
                             "') value '" + text + "' is not a non-negative integer");
  }
  return value;
}

int parse_int(const CsvFile& file, const CsvRow& row, std::size_t field) {
  const std::string& text = row.fields.at(field);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(file, row.line, "field " + std::to_string(field + 1) + " value '" + text + "' is not an integer");
  }
  return value;
}

double parse_real(const CsvFile& file, const CsvRow& row, std::size_t field) {
  const std::string& text = row.fields.at(field);
  double value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(file, row.line, "field " + std::to_string(field + 1) + " value '" + text + "' is not a real number");
  }
  return value;
}

namespace {

struct ParsedFiles {
  std::vector<std::size_t> item_dims;
  BlockType block_type = BlockType::Rank;
  std::vector<ItemBlock> blocks;
  std::vector<ResponseRecord> records;
  std::size_t max_dimension = 0;
  std::size_t max_participant = 0;
};

ParsedFiles parse_files(const DatasetPaths& paths) {
  ParsedFiles out;

  const CsvFile items = read_csv(paths.items);
  if (items.header.size() != 2) throw ParseError(items.path + ": header must be item_id,dimension_id");
  for (const auto& row : items.rows) {
    require_fields(items, row, 2);
    const std::size_t id = parse_index(items, row, 0);
    const std::size_t dim = parse_index(items, row, 1);
    if (id != out.item_dims.size()) fail(items, row.line, "item ids must be consecutive from 0, got " + std::to_string(id));
    out.item_dims.push_back(dim);
    out.max_dimension = std::max(out.max_dimension, dim);
  }
  if (out.item_dims.empty()) throw ParseError(items.path + ": no items");

  const CsvFile blocks = read_csv(paths.blocks);
  bool typed = false;
  for (const auto& c : blocks.comments) {
    const auto eq = c.find('=');
    if (eq != std::string::npos && trim(c.substr(0, eq)) == "block_type") {
      out.block_type = parse_block_type(trim(c.substr(eq + 1)));
      typed = true;
    }
  }
  if (!typed) throw ParseError(blocks.path + ": missing '# block_type=...' line");
  if (blocks.header.size() < 3) throw ParseError(blocks.path + ": header must be block_id,item_id_1,...,item_id_t");
  const std::size_t t = blocks.header.size() - 1;
  for (const auto& row : blocks.rows) {
    require_fields(blocks, row, t + 1);
    ItemBlock block;
    block.id = parse_index(blocks, row, 0);
    if (block.id != out.blocks.size()) fail(blocks, row.line, "block ids must be consecutive from 0, got " + std::to_string(block.id));
    for (std::size_t j = 0; j < t; ++j) {
      const std::size_t item = parse_index(blocks, row, j + 1);
      if (item >= out.item_dims.size()) fail(blocks, row.line, "unknown item id " + std::to_string(item));
      block.items.push_back(item);
    }
    out.blocks.push_back(std::move(block));
  }

  const CsvFile responses = read_csv(paths.responses);
  if (responses.header.size() != t + 2) {
    throw ParseError(responses.path + ": header has " + std::to_string(responses.header.size()) +
                     " columns, expected participant_id,block_id plus t=" + std::to_string(t) + " values");
  }
  for (const auto& row : responses.rows) {
    require_fields(responses, row, t + 2);
    ResponseRecord rec;
    rec.participant = parse_index(responses, row, 0);
    rec.block = parse_index(responses, row, 1);
    if (rec.block >= out.blocks.size()) fail(responses, row.line, "unknown block id " + std::to_string(rec.block));
    rec.ranks.type = out.block_type;
    for (std::size_t j = 0; j < t; ++j) rec.ranks.values.push_back(parse_int(responses, row, j + 2));
    out.max_participant = std::max(out.max_participant, rec.participant);
    out.records.push_back(std::move(rec));
  }
  return out;
}

ResponseDataset assemble(ParsedFiles files, std::size_t participants, std::size_t dimensions) {
  ResponseDataset ds;
  ds.num_participants = participants;
  ds.num_items = files.item_dims.size();
  ds.num_dimensions = dimensions;
  ds.block_type = files.block_type;
  ds.q = QMatrix::from_dimensions(files.item_dims, dimensions);
  ds.blocks = std::move(files.blocks);
  ds.records = std::move(files.records);
  return ds;
}

}  // namespace

ResponseDataset load_dataset(const DatasetPaths& paths) {
  ParsedFiles files = parse_files(paths);
  const std::size_t participants = files.records.empty() ? 0 : files.max_participant + 1;
  const std::size_t dims = files.max_dimension + 1;
  ResponseDataset ds = assemble(std::move(files), participants, dims);
  require_valid(ds);
  return ds;
}

DatasetManifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ParseError("cannot open " + manifest_path.string());
  json j;
  try {
    in >> j;
    DatasetManifest m;
    m.name = j.value("name", std::string("dataset"));
    m.num_participants = j.at("num_participants").get<std::size_t>();
    m.num_items = j.at("num_items").get<std::size_t>();
    m.num_dimensions = j.at("num_dimensions").get<std::size_t>();
    m.num_blocks = j.at("num_blocks").get<std::size_t>();
    m.items_per_block = j.at("items_per_block").get<std::size_t>();
    m.block_type = parse_block_type(j.at("block_type").get<std::string>());
    const auto& files = j.at("files");
    m.items_file = files.at("items").get<std::string>();
    m.blocks_file = files.at("blocks").get<std::string>();
    m.responses_file = files.at("responses").get<std::string>();
    if (j.contains("truth")) {
      const auto& truth = j.at("truth");
      if (truth.contains("theta")) m.truth_theta_file = truth.at("theta").get<std::string>();
      if (truth.contains("items")) m.truth_items_file = truth.at("items").get<std::string>();
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
}

void write_manifest(const DatasetManifest& m, const fs::path& manifest_path) {
  json j;
  j["name"] = m.name;
  j["num_participants"] = m.num_participants;
  j["num_items"] = m.num_items;
  j["num_dimensions"] = m.num_dimensions;
  j["num_blocks"] = m.num_blocks;
  j["items_per_block"] = m.items_per_block;
  j["block_type"] = std::string(to_string(m.block_type));
  j["files"] = {{"items", m.items_file}, {"blocks", m.blocks_file}, {"responses", m.responses_file}};
  if (m.truth_theta_file || m.truth_items_file) {
    json truth = json::object();
    if (m.truth_theta_file) truth["theta"] = *m.truth_theta_file;
    if (m.truth_items_file) truth["items"] = *m.truth_items_file;
    j["truth"] = truth;
  }
  auto out = open_out(manifest_path);
  out << j.dump(2) << '\n';
}

DatasetManifest manifest_for(const ResponseDataset& ds, std::string name) {
  DatasetManifest m;
  m.name = std::move(name);
  m.num_participants = ds.num_participants;
  m.num_items = ds.num_items;
  m.num_dimensions = ds.num_dimensions;
  m.num_blocks = ds.num_blocks();
  m.items_per_block = ds.block_size();
  m.block_type = ds.block_type;
  return m;
}

ResponseDataset load_dataset(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) throw ParseError("dataset manifest not found: " + manifest_path.string());
  const DatasetManifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  DatasetPaths paths{base / m.items_file, base / m.blocks_file, base / m.responses_file};
  for (const auto& p : {paths.items, paths.blocks, paths.responses}) {
    if (!fs::exists(p)) throw ParseError("dataset file not found: " + p.string());
  }
  ParsedFiles files = parse_files(paths);

  const std::string where = manifest_path.string() + ": ";
  if (files.item_dims.size() != m.num_items) {
    throw ParseError(where + "manifest declares M=" + std::to_string(m.num_items) + " items but " + paths.items.string() +
                     " lists " + std::to_string(files.item_dims.size()));
  }
  std::set<std::size_t> used(files.item_dims.begin(), files.item_dims.end());
  if (files.max_dimension + 1 > m.num_dimensions || used.size() != m.num_dimensions) {
    throw ParseError(where + "dimension count mismatch: manifest declares K=" + std::to_string(m.num_dimensions) +
                     " but the Q-matrix (" + paths.items.string() + ") covers " + std::to_string(used.size()) +
                     " dimension column(s) with max id " + std::to_string(files.max_dimension));
  }
  if (files.blocks.size() != m.num_blocks) {
    throw ParseError(where + "manifest declares L=" + std::to_string(m.num_blocks) + " blocks but found " +
                     std::to_string(files.blocks.size()));
  }
  if (files.block_type != m.block_type) throw ParseError(where + "block type differs between manifest and blocks file");
  if (!files.blocks.empty() && files.blocks.front().items.size() != m.items_per_block) {
    throw ParseError(where + "items_per_block mismatch");
  }
  if (!files.records.empty() && files.max_participant >= m.num_participants) {
    throw ParseError(where + "participant id " + std::to_string(files.max_participant) + " exceeds N=" +
                     std::to_string(m.num_participants));
  }
  ResponseDataset ds = assemble(std::move(files), m.num_participants, m.num_dimensions);
  require_valid(ds);
  return ds;
}

fs::path save_dataset(const ResponseDataset& ds, const fs::path& directory, const DatasetManifest& manifest) {
  fs::create_directories(directory);
  {
    auto out = open_out(directory / manifest.items_file);
    out << "item_id,dimension_id\n";
    for (std::size_t m = 0; m < ds.num_items; ++m) out << m << ',' << ds.q.dimension_of(m) << '\n';
  }
  const std::size_t t = ds.block_size();
  {
    auto out = open_out(directory / manifest.blocks_file);
    out << "# block_type=" << to_string(ds.block_type) << '\n' << "block_id";
    for (std::size_t j = 1; j <= t; ++j) out << ",item_id_" << j;
    out << '\n';
    for (const auto& block : ds.blocks) {
      out << block.id;
      for (std::size_t item : block.items) out << ',' << item;
      out << '\n';
    }
  }
  {
    auto out = open_out(directory / manifest.responses_file);
    out << "participant_id,block_id";
    for (std::size_t j = 1; j <= t; ++j) out << ",v_" << j;
    out << '\n';
    for (const auto& rec : ds.records) {
      out << rec.participant << ',' << rec.block;
      for (int v : rec.ranks.values) out << ',' << v;
      out << '\n';
    }
  }
  const fs::path manifest_path = directory / "manifest.json";
  write_manifest(manifest, manifest_path);
  return manifest_path;
}

fs::path save_dataset(const ResponseDataset& ds, const fs::path& directory, std::string name) {
  return save_dataset(ds, directory, manifest_for(ds, std::move(name)));
}

}  // namespace fcncd
