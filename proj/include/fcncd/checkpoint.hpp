#pragma once

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "fcncd/model.hpp"

namespace fcncd {

/// Binary model snapshot:
///   "FCNCDCK1\n"
///   uint64 little-endian header length
///   JSON header: kind, config, shape, parameter table (name, shape, offset), extra
///   little-endian float64 payload in parameter-table order
struct Checkpoint {
  std::unique_ptr<RankingModel> model;
  nlohmann::json extra;  // training metadata stored alongside the weights
};

void save_checkpoint(const RankingModel& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Rebuilds the model from its kind and config, then loads every parameter.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fcncd
