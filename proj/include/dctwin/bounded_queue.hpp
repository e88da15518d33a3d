#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <mutex>
#include <optional>

namespace dctwin {

/// Blocking single-producer/single-consumer queue with backpressure. The
/// producer blocks while the queue is full; closing wakes both sides. A
/// producer-side failure travels to the consumer through close(error).
template <typename T>
class BoundedQueue {
public:
    enum class PopStatus { Item, Closed, Timeout };

    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

    /// Returns false if the queue was closed before the item could be pushed.
    bool push(T item) {
        std::unique_lock lock(mutex_);
        not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        if (closed_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    /// Waits until an item is available, the queue is closed and drained, or
    /// the deadline passes. Rethrows the producer's error once drained.
    template <typename Clock, typename Duration>
    PopStatus pop_until(T& out, const std::optional<std::chrono::time_point<Clock, Duration>>& deadline) {
        std::unique_lock lock(mutex_);
        auto ready = [&] { return closed_ || !items_.empty(); };
        if (deadline) {
            if (!not_empty_.wait_until(lock, *deadline, ready)) return PopStatus::Timeout;
        } else {
            not_empty_.wait(lock, ready);
        }
        if (!items_.empty()) {
            out = std::move(items_.front());
            items_.pop_front();
            not_full_.notify_one();
            return PopStatus::Item;
        }
        if (error_) std::rethrow_exception(error_);
        return PopStatus::Closed;
    }

    PopStatus pop(T& out) { return pop_until(out, std::optional<std::chrono::steady_clock::time_point>{}); }

    void close(std::exception_ptr error = nullptr) {
        std::lock_guard lock(mutex_);
        if (closed_) return;
        closed_ = true;
        error_ = error;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    bool closed() const {
        std::lock_guard lock(mutex_);
        return closed_;
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return items_.size();
    }

    std::size_t capacity() const { return capacity_; }

private:
    const std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable not_empty_;
    std::condition_variable not_full_;
    std::deque<T> items_;
    bool closed_ = false;
    std::exception_ptr error_;
};

} // namespace dctwin
