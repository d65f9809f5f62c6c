#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fcncd/array.hpp"

namespace fcncd {

/// How the optimizer treats rows that received no gradient in a step.
enum class UpdateMode {
  Dense,       // every entry updated every step
  SparseRows,  // embedding table: only rows touched by the batch are updated
};

struct Parameter {
  std::string name;
  Array value;
  UpdateMode mode = UpdateMode::Dense;
};

/// Named, insertion-ordered collection of learnable arrays.
class ParameterSet {
 public:
  void add(std::string name, Array value, UpdateMode mode = UpdateMode::Dense);

  bool contains(std::string_view name) const;
  Array& operator[](std::string_view name);
  const Array& operator[](std::string_view name) const;
  const Parameter& entry(std::string_view name) const;

  std::vector<Parameter>& entries() { return entries_; }
  const std::vector<Parameter>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

 private:
  std::size_t index_of(std::string_view name) const;

  std::vector<Parameter> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Name -> array view used to bind graph leaves at evaluation time.
/// The referenced arrays must outlive the bindings.
class Bindings {
 public:
  Bindings() = default;
  explicit Bindings(const ParameterSet& params);

  void bind(std::string name, const Array& value);
  const Array* find(std::string_view name) const;

 private:
  std::map<std::string, const Array*, std::less<>> arrays_;
};

/// Gradient accumulator shaped like a ParameterSet.
///
/// Rows written through a row gather are tracked individually, so clearing
/// and sparse optimizer updates only touch those rows; any other write marks
/// the whole slot dense.
class GradientBuffer {
 public:
  struct Slot {
    Array grad;
    std::vector<std::uint8_t> row_touched;
    std::vector<std::size_t> touched_rows;
    bool dense = false;

    bool touched() const { return dense || !touched_rows.empty(); }
    void touch_row(std::size_t row);
  };

  GradientBuffer() = default;
  explicit GradientBuffer(const ParameterSet& params);

  void add_slot(std::string name, const Shape& shape);
  void zero();

  Slot* find(std::string_view name);
  const Slot* find(std::string_view name) const;
  const Slot& slot(std::string_view name) const;

  /// Dense copies of every gradient, keyed by parameter name.
  std::map<std::string, Array> to_map() const;

 private:
  std::map<std::string, Slot, std::less<>> slots_;
};

}  // namespace fcncd
