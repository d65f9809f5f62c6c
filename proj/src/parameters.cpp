#include "fcncd/parameters.hpp"

#include <algorithm>

#include "fcncd/error.hpp"

namespace fcncd {

void ParameterSet::add(std::string name, Array value, UpdateMode mode) {
  if (contains(name)) throw ValidationError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back(Parameter{std::move(name), std::move(value), mode});
}

bool ParameterSet::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::size_t ParameterSet::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

Array& ParameterSet::operator[](std::string_view name) { return entries_[index_of(name)].value; }

const Array& ParameterSet::operator[](std::string_view name) const {
  return entries_[index_of(name)].value;
}

const Parameter& ParameterSet::entry(std::string_view name) const { return entries_[index_of(name)]; }

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.value.size();
  return n;
}

Bindings::Bindings(const ParameterSet& params) {
  for (const auto& p : params.entries()) bind(p.name, p.value);
}

void Bindings::bind(std::string name, const Array& value) { arrays_[std::move(name)] = &value; }

const Array* Bindings::find(std::string_view name) const {
  auto it = arrays_.find(name);
  return it == arrays_.end() ? nullptr : it->second;
}

void GradientBuffer::Slot::touch_row(std::size_t row) {
  if (!row_touched[row]) {
    row_touched[row] = 1;
    touched_rows.push_back(row);
  }
}

GradientBuffer::GradientBuffer(const ParameterSet& params) {
  for (const auto& p : params.entries()) add_slot(p.name, p.value.shape());
}

void GradientBuffer::add_slot(std::string name, const Shape& shape) {
  Slot slot;
  slot.grad = Array(shape);
  slot.row_touched.assign(slot.grad.rows(), 0);
  slots_[std::move(name)] = std::move(slot);
}

void GradientBuffer::zero() {
  for (auto& [name, slot] : slots_) {
    if (slot.dense) {
      std::fill(slot.grad.values().begin(), slot.grad.values().end(), 0.0);
      std::fill(slot.row_touched.begin(), slot.row_touched.end(), 0);
    } else {
      const std::size_t cols = slot.grad.cols();
      for (std::size_t row : slot.touched_rows) {
        std::fill_n(slot.grad.data() + row * cols, cols, 0.0);
        slot.row_touched[row] = 0;
      }
    }
    slot.touched_rows.clear();
    slot.dense = false;
  }
}

GradientBuffer::Slot* GradientBuffer::find(std::string_view name) {
  auto it = slots_.find(name);
  return it == slots_.end() ? nullptr : &it->second;
}

const GradientBuffer::Slot* GradientBuffer::find(std::string_view name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? nullptr : &it->second;
}

const GradientBuffer::Slot& GradientBuffer::slot(std::string_view name) const {
  const Slot* s = find(name);
  if (s == nullptr) throw ValidationError("no gradient slot for '" + std::string(name) + "'");
  return *s;
}

std::map<std::string, Array> GradientBuffer::to_map() const {
  std::map<std::string, Array> out;
  for (const auto& [name, slot] : slots_) out.emplace(name, slot.grad);
  return out;
}

}  // namespace fcncd
