#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fcncd/array.hpp"

namespace fcncd {

/// Response mode of a forced-choice block.
enum class BlockType { Pick, Rank, Mole };

std::string_view to_string(BlockType type);
BlockType parse_block_type(std::string_view text);

/// Binary item x dimension incidence matrix. Well-formed rows are one-hot.
class QMatrix {
 public:
  QMatrix() = default;
  QMatrix(std::size_t items, std::size_t dimensions);

  /// One-hot matrix with item m loading on dimensions[m].
  static QMatrix from_dimensions(std::span<const std::size_t> dimensions, std::size_t dimension_count);

  std::size_t items() const { return items_; }
  std::size_t dimensions() const { return dimensions_; }

  std::uint8_t operator()(std::size_t item, std::size_t dim) const { return entries_[item * dimensions_ + dim]; }
  void set(std::size_t item, std::size_t dim, bool value);
  std::span<const std::uint8_t> row(std::size_t item) const;

  /// The dimension an item loads on; throws ValidationError unless the row is one-hot.
  std::size_t dimension_of(std::size_t item) const;
  /// dimension_of for every item.
  std::vector<std::size_t> item_dimensions() const;

  bool operator==(const QMatrix&) const = default;

 private:
  std::size_t items_ = 0;
  std::size_t dimensions_ = 0;
  std::vector<std::uint8_t> entries_;
};

/// Index of the single set entry of a one-hot row; throws otherwise.
std::size_t one_hot_index(std::span<const std::uint8_t> row);

struct ItemBlock {
  std::size_t id = 0;
  std::vector<std::size_t> items;  // file order; rank positions align with it

  bool operator==(const ItemBlock&) const = default;
};

/// Encoded ranking result for one block.
///  RANK: permutation of 1..t, t = most compatible.
///  PICK: chosen item t, every other item 1.
///  MOLE: most conforming 3, least conforming 1, the rest 2.
struct RankVector {
  BlockType type = BlockType::Rank;
  std::vector<int> values;

  std::size_t size() const { return values.size(); }
  int operator[](std::size_t i) const { return values[i]; }
  bool operator==(const RankVector&) const = default;
};

/// Description of the first rule a rank vector breaks, or nullopt if valid.
std::optional<std::string> rank_vector_violation(const RankVector& ranks);

struct PickChoice {
  std::size_t chosen = 0;
};
struct RankOrder {
  std::vector<std::size_t> best_to_worst;  // block positions, most compatible first
};
struct MoleChoice {
  std::size_t most = 0;
  std::size_t least = 0;
};
using RawChoice = std::variant<PickChoice, RankOrder, MoleChoice>;

/// Encodes a raw answer on a t-item block into its rank vector.
RankVector encode_response(BlockType type, std::size_t t, const RawChoice& raw);

struct ResponseRecord {
  std::size_t participant = 0;
  std::size_t block = 0;
  RankVector ranks;

  bool operator==(const ResponseRecord&) const = default;
};

/// Participants, items, dimensions, blocks, Q-matrix and the response log.
struct ResponseDataset {
  std::size_t num_participants = 0;
  std::size_t num_items = 0;
  std::size_t num_dimensions = 0;
  BlockType block_type = BlockType::Rank;
  QMatrix q;
  std::vector<ItemBlock> blocks;
  std::vector<ResponseRecord> records;

  std::size_t num_blocks() const { return blocks.size(); }
  /// Items per block (constant within a dataset); 0 if there are no blocks.
  std::size_t block_size() const { return blocks.empty() ? 0 : blocks.front().items.size(); }

  bool operator==(const ResponseDataset&) const = default;
};

struct Violation {
  std::string where;  // e.g. "q row 3", "record 12", "block 4"
  std::string rule;

  bool operator==(const Violation&) const = default;
};

/// Every invariant breach in the dataset; empty iff the dataset is well formed.
std::vector<Violation> validate(const ResponseDataset& dataset);

/// Throws ValidationError listing the violations if any exist.
void require_valid(const ResponseDataset& dataset);

enum class SplitMode {
  PerParticipant,  // each participant's blocks are partitioned independently
  Global,          // one block partition shared by every participant
};

std::string_view to_string(SplitMode mode);
SplitMode parse_split_mode(std::string_view text);

/// Partitions records by block into (train, test), deterministic in `rng`.
/// The number of train blocks is round(train_fraction * L) clamped to
/// [1, L - 1]; every record follows its block.
std::pair<ResponseDataset, ResponseDataset> split_by_block(const ResponseDataset& dataset,
                                                           double train_fraction, Rng& rng,
                                                           SplitMode mode = SplitMode::PerParticipant);

}  // namespace fcncd
