#pragma once

#include <filesystem>
#include <string>

#include "fcncd/dataset.hpp"
#include "fcncd/simulator.hpp"

namespace fcncd::testing {

/// Small simulated dataset: item m on dimension m % K, one record per (participant, block).
inline SimResult small_sim(std::size_t participants, std::size_t blocks, std::size_t t = 4,
                           BlockType type = BlockType::Mole, std::uint64_t seed = 7) {
  SimConfig c;
  c.participants = participants;
  c.dimensions = t;
  c.blocks = blocks;
  c.block_size = t;
  c.items = blocks * t;
  c.response_type = type;
  c.seed = seed;
  return generate(c);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fcncd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fcncd::testing
