#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fcncd/dataset.hpp"

namespace fcncd {

/// The three CSV files a dataset is made of.
///
///   items.csv      item_id,dimension_id
///   blocks.csv     "# block_type=<PICK|RANK|MOLE>" line, then
///                  block_id,item_id_1,...,item_id_t
///   responses.csv  participant_id,block_id,v_1,...,v_t
struct DatasetPaths {
  std::filesystem::path items;
  std::filesystem::path blocks;
  std::filesystem::path responses;
};

/// Contents of manifest.json. File paths are relative to the manifest.
struct DatasetManifest {
  std::string name = "dataset";
  std::size_t num_participants = 0;
  std::size_t num_items = 0;
  std::size_t num_dimensions = 0;
  std::size_t num_blocks = 0;
  std::size_t items_per_block = 0;
  BlockType block_type = BlockType::Rank;
  std::string items_file = "items.csv";
  std::string blocks_file = "blocks.csv";
  std::string responses_file = "responses.csv";
  std::optional<std::string> truth_theta_file;
  std::optional<std::string> truth_items_file;
};

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);
DatasetManifest manifest_for(const ResponseDataset& dataset, std::string name);

/// Loads CSV files; counts are inferred (N = max participant id + 1, K = max dimension id + 1).
ResponseDataset load_dataset(const DatasetPaths& paths);

/// Loads a dataset through its manifest and checks the files against the declared counts.
ResponseDataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes items.csv, blocks.csv, responses.csv and manifest.json into `directory`.
/// Returns the manifest path.
std::filesystem::path save_dataset(const ResponseDataset& dataset, const std::filesystem::path& directory,
                                   const DatasetManifest& manifest);
std::filesystem::path save_dataset(const ResponseDataset& dataset, const std::filesystem::path& directory,
                                   std::string name = "dataset");

/// Minimal comma-separated reader shared by the file formats: trims fields,
/// skips blank lines and lines starting with '#'.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

struct CsvFile {
  std::string path;
  std::vector<std::string> comments;  // '#' lines, without the marker
  std::vector<std::string> header;
  std::vector<CsvRow> rows;
};

CsvFile read_csv(const std::filesystem::path& path);

/// Parses a non-negative integer field, throwing ParseError with file:line context.
std::size_t parse_index(const CsvFile& file, const CsvRow& row, std::size_t field);
int parse_int(const CsvFile& file, const CsvRow& row, std::size_t field);
double parse_real(const CsvFile& file, const CsvRow& row, std::size_t field);

/// Shortest decimal text that reads back to the same double.
std::string format_real(double value);

}  // namespace fcncd
