#pragma once

#include <algorithm>
#include <cstdint>
#include <list>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "asrpu/error.hpp"

namespace asrpu {

class SharedMemory;

/// Stream buffer in shared memory. Items carry a logical index counted from
/// the start of the utterance; the live window is [first_live, next_write)
/// plus `reserved` slots handed out to a running kernel but not yet published.
class BufferBase {
 public:
  BufferBase(std::string name, std::int64_t item_bytes, std::int64_t capacity_items,
             SharedMemory* owner)
      : name_(std::move(name)),
        item_bytes_(item_bytes),
        capacity_items_(capacity_items),
        owner_(owner) {}
  virtual ~BufferBase() = default;
  BufferBase(const BufferBase&) = delete;
  BufferBase& operator=(const BufferBase&) = delete;

  const std::string& name() const noexcept { return name_; }
  std::int64_t item_bytes() const noexcept { return item_bytes_; }
  std::int64_t capacity_items() const noexcept { return capacity_items_; }
  std::int64_t first_live() const noexcept { return first_live_; }
  std::int64_t next_write() const noexcept { return next_write_; }
  std::int64_t reserved() const noexcept { return reserved_; }
  std::int64_t live_items() const noexcept { return next_write_ - first_live_; }
  std::int64_t occupied_items() const noexcept { return live_items() + reserved_; }
  std::int64_t occupied_bytes() const noexcept { return occupied_items() * item_bytes_; }
  /// Total items ever published in this utterance.
  std::int64_t written_total() const noexcept { return next_write_; }

  /// Registers a consumer. The buffer frees an item only once every reader
  /// has released it.
  int add_reader() {
    reader_marks_.push_back(first_live_);
    return static_cast<int>(reader_marks_.size()) - 1;
  }
  int reader_count() const noexcept { return static_cast<int>(reader_marks_.size()); }
  std::int64_t reader_mark(int reader) const { return reader_marks_.at(static_cast<std::size_t>(reader)); }

  /// Claims space for n outputs. Throws CapacityError on overflow of this
  /// buffer or of the whole shared memory.
  void reserve_output(std::int64_t n);

  /// Makes n reserved slots visible to readers.
  void publish(std::int64_t n) {
    if (n < 0 || n > reserved_) throw std::logic_error(name_ + ": publish exceeds reservation");
    reserved_ -= n;
    next_write_ += n;
  }

  /// Reader `reader` no longer needs its next n items. With a single reader
  /// (or none registered) this advances first_live directly.
  void consume_inputs(std::int64_t n, int reader = 0) {
    if (n < 0) throw std::logic_error(name_ + ": negative consume");
    if (n == 0) return;
    if (reader_marks_.empty()) {
      if (first_live_ + n > next_write_) throw std::logic_error(name_ + ": over-consumption");
      first_live_ += n;
    } else {
      auto& mark = reader_marks_.at(static_cast<std::size_t>(reader));
      if (mark + n > next_write_) throw std::logic_error(name_ + ": over-consumption");
      mark += n;
      first_live_ = *std::min_element(reader_marks_.begin(), reader_marks_.end());
    }
    compact();
  }

  /// Empties the buffer and rewinds the logical stream to index 0.
  void clear() {
    first_live_ = next_write_ = reserved_ = 0;
    std::fill(reader_marks_.begin(), reader_marks_.end(), 0);
    drop_storage();
  }

 protected:
  virtual void grow_to(std::int64_t items) = 0;
  virtual void drop_front(std::int64_t items) = 0;
  virtual void drop_storage() = 0;

  std::int64_t storage_base_ = 0;  // logical index of storage slot 0

 private:
  void compact() {
    const auto dead = first_live_ - storage_base_;
    if (dead > 0 && dead >= occupied_items()) {
      drop_front(dead);
      storage_base_ = first_live_;
    }
  }

  std::string name_;
  std::int64_t item_bytes_;
  std::int64_t capacity_items_;
  SharedMemory* owner_;
  std::int64_t first_live_ = 0;
  std::int64_t next_write_ = 0;
  std::int64_t reserved_ = 0;
  std::vector<std::int64_t> reader_marks_;
};

/// Typed stream buffer: each item is `dim` values of T stored contiguously.
template <class T>
class TensorBuffer final : public BufferBase {
 public:
  TensorBuffer(std::string name, std::int64_t dim, std::int64_t capacity_items, SharedMemory* owner)
      : BufferBase(std::move(name), dim * static_cast<std::int64_t>(sizeof(T)), capacity_items, owner),
        dim_(dim) {}

  std::int64_t dim() const noexcept { return dim_; }

  /// Dequantisation scale for int8 activations (value = code * scale).
  float scale() const noexcept { return scale_; }
  void set_scale(float s) { scale_ = s; }

  /// Published item at a logical index.
  std::span<const T> item(std::int64_t index) const {
    if (index < first_live() || index >= next_write())
      throw std::out_of_range(name() + ": item " + std::to_string(index) + " not live");
    return {data_.data() + offset(index), static_cast<std::size_t>(dim_)};
  }

  /// Writable slot: published items or reserved-but-unpublished slots.
  std::span<T> slot(std::int64_t index) {
    if (index < first_live() || index >= next_write() + reserved())
      throw std::out_of_range(name() + ": slot " + std::to_string(index) + " not reserved");
    return {data_.data() + offset(index), static_cast<std::size_t>(dim_)};
  }

  /// Convenience for hosts and tests: reserve, copy and publish one item.
  void push(std::span<const T> values) {
    if (static_cast<std::int64_t>(values.size()) != dim_) throw std::invalid_argument(name() + ": wrong item size");
    reserve_output(1);
    auto s = slot(next_write());
    std::copy(values.begin(), values.end(), s.begin());
    publish(1);
  }

 protected:
  void grow_to(std::int64_t items) override {
    const auto need = static_cast<std::size_t>((items - storage_base_) * dim_);
    if (data_.size() < need) data_.resize(need, T{});
  }
  void drop_front(std::int64_t items) override {
    const auto n = static_cast<std::size_t>(std::min<std::int64_t>(items * dim_, static_cast<std::int64_t>(data_.size())));
    data_.erase(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(n));
  }
  void drop_storage() override {
    data_.clear();
    storage_base_ = 0;
  }

 private:
  std::size_t offset(std::int64_t index) const {
    return static_cast<std::size_t>((index - storage_base_) * dim_);
  }

  std::int64_t dim_;
  float scale_ = 1.0f;
  std::vector<T> data_;
};

/// The scratchpad holding every kernel buffer. Tracks total occupancy
/// against its byte capacity.
class SharedMemory {
 public:
  explicit SharedMemory(std::int64_t capacity_bytes) : capacity_bytes_(capacity_bytes) {}
  SharedMemory(const SharedMemory&) = delete;
  SharedMemory& operator=(const SharedMemory&) = delete;

  template <class T>
  TensorBuffer<T>& create(std::string name, std::int64_t dim, std::int64_t capacity_items = 0) {
    if (dim <= 0) throw ConfigError(name + ": buffer item dimension must be > 0");
    const auto item_bytes = dim * static_cast<std::int64_t>(sizeof(T));
    if (capacity_items <= 0) capacity_items = std::max<std::int64_t>(1, capacity_bytes_ / item_bytes);
    auto buf = std::make_unique<TensorBuffer<T>>(std::move(name), dim, capacity_items, this);
    auto& ref = *buf;
    buffers_.push_back(std::move(buf));
    return ref;
  }

  std::int64_t capacity_bytes() const noexcept { return capacity_bytes_; }
  std::int64_t occupied_bytes() const {
    std::int64_t total = 0;
    for (const auto& b : buffers_) total += b->occupied_bytes();
    return total;
  }
  std::int64_t peak_bytes() const noexcept { return peak_bytes_; }
  void reset_peak() { peak_bytes_ = occupied_bytes(); }

  const std::vector<std::unique_ptr<BufferBase>>& buffers() const noexcept { return buffers_; }

  void clear_all() {
    for (auto& b : buffers_) b->clear();
    peak_bytes_ = 0;
  }

  void check_reserve(const BufferBase& buf, std::int64_t n) {
    const auto add = n * buf.item_bytes();
    const auto total = occupied_bytes() + add;
    if (total > capacity_bytes_)
      throw CapacityError("shared memory overflow reserving " + std::to_string(n) + " items in '" +
                          buf.name() + "': " + std::to_string(total) + " > " +
                          std::to_string(capacity_bytes_) + " bytes");
    peak_bytes_ = std::max(peak_bytes_, total);
  }

 private:
  std::int64_t capacity_bytes_;
  std::int64_t peak_bytes_ = 0;
  std::vector<std::unique_ptr<BufferBase>> buffers_;
};

inline void BufferBase::reserve_output(std::int64_t n) {
  if (n < 0) throw std::logic_error(name_ + ": negative reservation");
  if (n == 0) return;
  if (occupied_items() + n > capacity_items_)
    throw CapacityError("buffer '" + name_ + "' overflow: " + std::to_string(occupied_items() + n) +
                        " > " + std::to_string(capacity_items_) + " items");
  if (owner_) owner_->check_reserve(*this, n);
  reserved_ += n;
  grow_to(next_write_ + reserved_);
}

/// Identifies the model data a kernel needs resident in model memory.
struct ModelBlob {
  std::uint64_t id = 0;
  std::int64_t bytes = 0;
};

/// Model memory in prefetch mode: holds one resident blob loaded by DMA.
class ModelMemory {
 public:
  ModelMemory(std::int64_t capacity_bytes, std::int64_t dma_bytes_per_cycle)
      : capacity_bytes_(capacity_bytes), bytes_per_cycle_(dma_bytes_per_cycle) {}

  /// Starts loading `blob` at issue_cycle and returns the cycle at which it is
  /// resident. A blob already resident completes immediately.
  std::int64_t dma_prefetch(std::uint64_t blob, std::int64_t size_bytes, std::int64_t issue_cycle) {
    if (size_bytes > capacity_bytes_)
      throw CapacityError("model blob of " + std::to_string(size_bytes) + " bytes exceeds model memory (" +
                          std::to_string(capacity_bytes_) + " bytes)");
    if (resident_ && *resident_ == blob) {
      ++hits_;
      return std::max(issue_cycle, ready_at_);
    }
    const auto start = std::max(issue_cycle, busy_until_);
    const auto done = start + (size_bytes + bytes_per_cycle_ - 1) / bytes_per_cycle_;
    busy_until_ = ready_at_ = done;
    resident_ = blob;
    bytes_transferred_ += size_bytes;
    ++transfers_;
    return done;
  }

  std::int64_t dma_prefetch(const ModelBlob& blob, std::int64_t issue_cycle) {
    return dma_prefetch(blob.id, blob.bytes, issue_cycle);
  }

  bool is_resident(std::uint64_t blob) const noexcept { return resident_ && *resident_ == blob; }
  std::optional<std::uint64_t> resident() const noexcept { return resident_; }
  std::int64_t capacity_bytes() const noexcept { return capacity_bytes_; }
  std::int64_t busy_until() const noexcept { return busy_until_; }

  /// Steps start on a fresh cycle origin; in-flight transfers from the
  /// previous step have completed by then.
  void begin_step() { busy_until_ = ready_at_ = 0; }

  /// Switch to cache mode: the resident blob is dropped.
  void flush() { resident_.reset(); }

  std::int64_t bytes_transferred() const noexcept { return bytes_transferred_; }
  std::int64_t transfers() const noexcept { return transfers_; }
  std::int64_t hits() const noexcept { return hits_; }

 private:
  std::int64_t capacity_bytes_;
  std::int64_t bytes_per_cycle_;
  std::optional<std::uint64_t> resident_;
  std::int64_t busy_until_ = 0;
  std::int64_t ready_at_ = 0;
  std::int64_t bytes_transferred_ = 0;
  std::int64_t transfers_ = 0;
  std::int64_t hits_ = 0;
};

/// Fully associative LRU cache over fixed-size lines. Used for graph
/// accesses during hypothesis expansion; statistics only.
class LruCacheModel {
 public:
  LruCacheModel(std::int64_t capacity_bytes, std::int64_t line_bytes)
      : line_bytes_(line_bytes), capacity_lines_(std::max<std::int64_t>(1, capacity_bytes / line_bytes)) {}

  /// Touches every line overlapped by [address, address + size). Returns
  /// true when all of them hit.
  bool access(std::uint64_t address, std::int64_t size = 1) {
    const auto first = address / static_cast<std::uint64_t>(line_bytes_);
    const auto last = (address + static_cast<std::uint64_t>(std::max<std::int64_t>(size, 1)) - 1) /
                      static_cast<std::uint64_t>(line_bytes_);
    bool all_hit = true;
    for (auto line = first; line <= last; ++line) all_hit &= touch(line);
    return all_hit;
  }

  std::int64_t hits() const noexcept { return hits_; }
  std::int64_t misses() const noexcept { return misses_; }
  std::int64_t capacity_lines() const noexcept { return capacity_lines_; }
  std::int64_t line_bytes() const noexcept { return line_bytes_; }
  double hit_rate() const {
    const auto n = hits_ + misses_;
    return n == 0 ? 0.0 : static_cast<double>(hits_) / static_cast<double>(n);
  }

  void flush() {
    order_.clear();
    where_.clear();
  }
  void reset_stats() { hits_ = misses_ = 0; }

 private:
  bool touch(std::uint64_t line) {
    if (auto it = where_.find(line); it != where_.end()) {
      order_.splice(order_.begin(), order_, it->second);
      ++hits_;
      return true;
    }
    ++misses_;
    if (static_cast<std::int64_t>(order_.size()) >= capacity_lines_) {
      where_.erase(order_.back());
      order_.pop_back();
    }
    order_.push_front(line);
    where_[line] = order_.begin();
    return false;
  }

  std::int64_t line_bytes_;
  std::int64_t capacity_lines_;
  std::list<std::uint64_t> order_;
  std::unordered_map<std::uint64_t, std::list<std::uint64_t>::iterator> where_;
  std::int64_t hits_ = 0;
  std::int64_t misses_ = 0;
};

}  // namespace asrpu
