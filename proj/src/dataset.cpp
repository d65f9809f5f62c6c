#include "fcncd/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

#include "fcncd/error.hpp"

namespace fcncd {

std::string_view to_string(BlockType type) {
  switch (type) {
    case BlockType::Pick: return "PICK";
    case BlockType::Rank: return "RANK";
    case BlockType::Mole: return "MOLE";
  }
  return "?";
}

BlockType parse_block_type(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "PICK") return BlockType::Pick;
  if (upper == "RANK") return BlockType::Rank;
  if (upper == "MOLE") return BlockType::Mole;
  throw ValidationError("unknown block type '" + std::string(text) + "'");
}

QMatrix::QMatrix(std::size_t items, std::size_t dimensions)
    : items_(items), dimensions_(dimensions), entries_(items * dimensions, 0) {}

QMatrix QMatrix::from_dimensions(std::span<const std::size_t> dimensions, std::size_t dimension_count) {
  QMatrix q(dimensions.size(), dimension_count);
  for (std::size_t m = 0; m < dimensions.size(); ++m) {
    if (dimensions[m] >= dimension_count) {
      throw ValidationError("item " + std::to_string(m) + " loads on dimension " +
                            std::to_string(dimensions[m]) + " but K=" + std::to_string(dimension_count));
    }
    q.set(m, dimensions[m], true);
  }
  return q;
}

void QMatrix::set(std::size_t item, std::size_t dim, bool value) {
  if (item >= items_ || dim >= dimensions_) throw ValidationError("Q-matrix index out of range");
  entries_[item * dimensions_ + dim] = value ? 1 : 0;
}

std::span<const std::uint8_t> QMatrix::row(std::size_t item) const {
  if (item >= items_) throw ValidationError("item " + std::to_string(item) + " out of range");
  return {entries_.data() + item * dimensions_, dimensions_};
}

std::size_t one_hot_index(std::span<const std::uint8_t> row) {
  std::size_t hits = 0;
  std::size_t index = 0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (row[k] > 1) throw ValidationError("Q-matrix row is not binary");
    if (row[k] == 1) {
      ++hits;
      index = k;
    }
  }
  if (hits != 1) throw ValidationError("item not unidimensional: Q-matrix row has " + std::to_string(hits) + " ones");
  return index;
}

std::size_t QMatrix::dimension_of(std::size_t item) const { return one_hot_index(row(item)); }

std::vector<std::size_t> QMatrix::item_dimensions() const {
  std::vector<std::size_t> dims(items_);
  for (std::size_t m = 0; m < items_; ++m) dims[m] = dimension_of(m);
  return dims;
}

std::optional<std::string> rank_vector_violation(const RankVector& ranks) {
  const auto& v = ranks.values;
  const std::size_t t = v.size();
  if (t < 2) return "block has fewer than 2 items";
  const auto count = [&](int value) { return std::count(v.begin(), v.end(), value); };
  switch (ranks.type) {
    case BlockType::Rank: {
      std::vector<int> sorted = v;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < t; ++i) {
        if (sorted[i] != static_cast<int>(i + 1)) return "RANK values are not a permutation of 1..t";
      }
      return std::nullopt;
    }
    case BlockType::Pick: {
      const auto top = count(static_cast<int>(t));
      if (top != 1) return top == 0 ? "missing picked item" : "duplicate picked item";
      if (count(1) != static_cast<std::ptrdiff_t>(t - 1)) return "non-picked items must be 1";
      return std::nullopt;
    }
    case BlockType::Mole: {
      if (t < 3) return "MOLE requires t >= 3";
      const auto most = count(3);
      const auto least = count(1);
      if (most > 1) return "duplicate most-conforming";
      if (most == 0) return "missing most-conforming";
      if (least > 1) return "duplicate least-conforming";
      if (least == 0) return "missing least-conforming";
      if (count(2) != static_cast<std::ptrdiff_t>(t - 2)) return "MOLE middle items must be 2";
      return std::nullopt;
    }
  }
  return "unknown block type";
}

RankVector encode_response(BlockType type, std::size_t t, const RawChoice& raw) {
  if (t < 2) throw ValidationError("blocks need at least 2 items");
  const auto check_index = [t](std::size_t i) {
    if (i >= t) throw ValidationError("choice index " + std::to_string(i) + " out of range for t=" + std::to_string(t));
  };
  RankVector out{type, std::vector<int>(t, 0)};
  switch (type) {
    case BlockType::Pick: {
      const auto* pick = std::get_if<PickChoice>(&raw);
      if (pick == nullptr) throw ValidationError("PICK block expects a single chosen index");
      check_index(pick->chosen);
      std::fill(out.values.begin(), out.values.end(), 1);
      out.values[pick->chosen] = static_cast<int>(t);
      return out;
    }
    case BlockType::Rank: {
      const auto* order = std::get_if<RankOrder>(&raw);
      if (order == nullptr) throw ValidationError("RANK block expects a full preference order");
      if (order->best_to_worst.size() != t) throw ValidationError("RANK order is not a permutation");
      std::vector<std::uint8_t> seen(t, 0);
      for (std::size_t pos = 0; pos < t; ++pos) {
        const std::size_t item = order->best_to_worst[pos];
        check_index(item);
        if (seen[item]) throw ValidationError("RANK order is not a permutation");
        seen[item] = 1;
        out.values[item] = static_cast<int>(t - pos);
      }
      return out;
    }
    case BlockType::Mole: {
      const auto* mole = std::get_if<MoleChoice>(&raw);
      if (mole == nullptr) throw ValidationError("MOLE block expects (most, least)");
      if (t < 3) throw ValidationError("MOLE requires t >= 3");
      check_index(mole->most);
      check_index(mole->least);
      if (mole->most == mole->least) throw ValidationError("MOLE most and least must differ");
      std::fill(out.values.begin(), out.values.end(), 2);
      out.values[mole->most] = 3;
      out.values[mole->least] = 1;
      return out;
    }
  }
  throw ValidationError("unknown block type");
}

std::vector<Violation> validate(const ResponseDataset& ds) {
  std::vector<Violation> out;
  const auto add = [&out](std::string where, std::string rule) { out.push_back({std::move(where), std::move(rule)}); };

  if (ds.q.items() != ds.num_items || ds.q.dimensions() != ds.num_dimensions) {
    add("q", "Q-matrix is " + std::to_string(ds.q.items()) + "x" + std::to_string(ds.q.dimensions()) +
                 " but dataset declares M=" + std::to_string(ds.num_items) + ", K=" + std::to_string(ds.num_dimensions));
  }
  std::vector<std::size_t> dims(ds.q.items(), 0);
  std::vector<std::uint8_t> dim_ok(ds.q.items(), 0);
  for (std::size_t m = 0; m < ds.q.items(); ++m) {
    const auto row = ds.q.row(m);
    const auto ones = std::count(row.begin(), row.end(), std::uint8_t{1});
    if (ones != 1) {
      add("q row " + std::to_string(m), "item not unidimensional");
    } else {
      dims[m] = static_cast<std::size_t>(std::find(row.begin(), row.end(), std::uint8_t{1}) - row.begin());
      dim_ok[m] = 1;
    }
  }

  const std::size_t t = ds.block_size();
  for (std::size_t l = 0; l < ds.blocks.size(); ++l) {
    const auto& block = ds.blocks[l];
    const std::string where = "block " + std::to_string(l);
    if (block.id != l) add(where, "block id " + std::to_string(block.id) + " does not match its position");
    if (block.items.size() < 2) add(where, "block has fewer than 2 items");
    if (block.items.size() != t) add(where, "block size differs from the dataset's t");
    std::set<std::size_t> items;
    std::set<std::size_t> block_dims;
    for (std::size_t item : block.items) {
      if (item >= ds.num_items) {
        add(where, "item id " + std::to_string(item) + " out of range");
        continue;
      }
      if (!items.insert(item).second) add(where, "duplicate item " + std::to_string(item));
      if (item < dim_ok.size() && dim_ok[item] && !block_dims.insert(dims[item]).second) {
        add(where, "two items load on dimension " + std::to_string(dims[item]));
      }
    }
  }

  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    const auto& rec = ds.records[r];
    const std::string where = "record " + std::to_string(r);
    if (rec.participant >= ds.num_participants) add(where, "participant id out of range");
    if (rec.block >= ds.blocks.size()) {
      add(where, "block id out of range");
    } else if (rec.ranks.size() != ds.blocks[rec.block].items.size()) {
      add(where, "rank vector length differs from block size");
    }
    if (rec.ranks.type != ds.block_type) add(where, "rank vector type differs from dataset block type");
    if (auto why = rank_vector_violation(rec.ranks)) add(where, *why);
    if (!seen.insert({rec.participant, rec.block}).second) add(where, "duplicate (participant, block) record");
  }
  return out;
}

void require_valid(const ResponseDataset& dataset) {
  const auto violations = validate(dataset);
  if (violations.empty()) return;
  std::string msg = "dataset has " + std::to_string(violations.size()) + " violation(s):";
  for (std::size_t i = 0; i < violations.size() && i < 10; ++i) {
    msg += "\n  " + violations[i].where + ": " + violations[i].rule;
  }
  throw ValidationError(msg);
}

std::string_view to_string(SplitMode mode) {
  return mode == SplitMode::PerParticipant ? "per-participant" : "global";
}

SplitMode parse_split_mode(std::string_view text) {
  if (text == "per-participant") return SplitMode::PerParticipant;
  if (text == "global") return SplitMode::Global;
  throw ValidationError("unknown split mode '" + std::string(text) + "'");
}

namespace {

std::size_t train_count(std::size_t blocks, double fraction) {
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(blocks)));
  return std::clamp<std::size_t>(n, 1, blocks - 1);
}

}  // namespace

std::pair<ResponseDataset, ResponseDataset> split_by_block(const ResponseDataset& ds, double train_fraction,
                                                           Rng& rng, SplitMode mode) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  }
  const std::size_t blocks = ds.num_blocks();
  if (blocks < 2) throw ValidationError("split_by_block needs at least 2 blocks");

  ResponseDataset train = ds;
  ResponseDataset test = ds;
  train.records.clear();
  test.records.clear();

  if (mode == SplitMode::Global) {
    std::vector<std::size_t> order(blocks);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::uint8_t> in_train(blocks, 0);
    for (std::size_t i = 0; i < train_count(blocks, train_fraction); ++i) in_train[order[i]] = 1;
    for (const auto& rec : ds.records) (in_train.at(rec.block) ? train : test).records.push_back(rec);
    return {std::move(train), std::move(test)};
  }

  // Per participant: partition that participant's answered blocks.
  std::vector<std::vector<std::size_t>> by_participant(ds.num_participants);
  for (std::size_t r = 0; r < ds.records.size(); ++r) by_participant.at(ds.records[r].participant).push_back(r);
  std::vector<std::uint8_t> record_in_train(ds.records.size(), 1);
  for (auto& rows : by_participant) {
    if (rows.size() < 2) continue;
    std::vector<std::size_t> order = rows;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ds.records[a].block < ds.records[b].block; });
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = train_count(order.size(), train_fraction); i < order.size(); ++i) {
      record_in_train[order[i]] = 0;
    }
  }
  for (std::size_t r = 0; r < ds.records.size(); ++r) {
    (record_in_train[r] ? train : test).records.push_back(ds.records[r]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace fcncd
