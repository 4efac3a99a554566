#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <stdexcept>

namespace spanweave {

/// Thrown out of blocking queue operations after cancel().
struct Cancelled : std::runtime_error {
  Cancelled() : std::runtime_error("cancelled") {}
};

/// Bounded single-producer/single-consumer FIFO. push() blocks while full,
/// pop() blocks while empty; the try_ variants never block and are what the
/// cooperative scheduler uses.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  BoundedQueue(const BoundedQueue&) = delete;
  BoundedQueue& operator=(const BoundedQueue&) = delete;

  void push(T value) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return cancelled_ || items_.size() < capacity_; });
    if (cancelled_) throw Cancelled();
    enqueue(std::move(value));
    lock.unlock();
    not_empty_.notify_one();
  }

  bool try_push(T& value) {
    {
      std::lock_guard lock(mutex_);
      if (cancelled_) throw Cancelled();
      if (items_.size() >= capacity_) return false;
      enqueue(std::move(value));
    }
    not_empty_.notify_one();
    return true;
  }

  /// Empty result means the queue is closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return cancelled_ || closed_ || !items_.empty(); });
    if (cancelled_) throw Cancelled();
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    lock.unlock();
    not_full_.notify_one();
    return value;
  }

  enum class TryPop { Item, Empty, Closed };

  TryPop try_pop(std::optional<T>& out) {
    {
      std::lock_guard lock(mutex_);
      if (cancelled_) throw Cancelled();
      if (items_.empty()) return closed_ ? TryPop::Closed : TryPop::Empty;
      out.emplace(std::move(items_.front()));
      items_.pop_front();
    }
    not_full_.notify_one();
    return TryPop::Item;
  }

  /// No more pushes; consumers drain what is left.
  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    not_empty_.notify_all();
  }

  void cancel() {
    {
      std::lock_guard lock(mutex_);
      cancelled_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t capacity() const noexcept { return capacity_; }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }

  std::size_t peak() const {
    std::lock_guard lock(mutex_);
    return peak_;
  }

 private:
  void enqueue(T value) {
    items_.push_back(std::move(value));
    if (items_.size() > peak_) peak_ = items_.size();
  }

  const std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  std::size_t peak_ = 0;
  bool closed_ = false;
  bool cancelled_ = false;
};

}  // namespace spanweave
