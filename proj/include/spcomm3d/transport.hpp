#pragma once

// In-process multi-rank message passing. One worker thread per rank,
// eager buffered sends, blocking receives matched on
// (context, source, destination, tag) with FIFO order per key.

#include <chrono>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <type_traits>
#include <vector>

namespace spc3d {

/// A contiguous run of `length` words starting at word `offset` of a store.
struct Descriptor {
  std::size_t offset = 0;
  std::size_t length = 0;
  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

enum class Phase : std::uint8_t { none = 0, setup = 1, precomm = 2, compute = 3, postcomm = 4 };

const char* to_string(Phase p) noexcept;

/// Per-rank traffic. Wire words and staging-copy words are kept apart so
/// buffer copies can be audited independently of what crossed the wire.
struct TrafficCounters {
  std::uint64_t sent_words = 0;
  std::uint64_t sent_messages = 0;
  std::uint64_t recv_words = 0;
  std::uint64_t recv_messages = 0;
  std::uint64_t staging_words = 0;

  TrafficCounters& operator+=(const TrafficCounters& o) noexcept;
  friend TrafficCounters operator-(TrafficCounters a, const TrafficCounters& b) noexcept {
    a.sent_words -= b.sent_words;
    a.sent_messages -= b.sent_messages;
    a.recv_words -= b.recv_words;
    a.recv_messages -= b.recv_messages;
    a.staging_words -= b.staging_words;
    return a;
  }
  friend bool operator==(const TrafficCounters&, const TrafficCounters&) = default;
};

/// One matched receive. On disk: little-endian u32 phase, u32 src, u32 dst,
/// u32 context, u64 words (24 bytes), after an 8-byte "SPC3DTR1" magic.
struct TraceRecord {
  Phase phase = Phase::none;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint32_t context = 0;
  std::uint64_t words = 0;
  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct TransportOptions {
  std::chrono::milliseconds deadlock_timeout{30000};
  bool trace = false;
};

template <typename T>
concept WireWord = std::is_trivially_copyable_v<T> && sizeof(T) == 8;

class Fabric;

class Communicator {
public:
  int rank() const noexcept { return me_; }
  int size() const noexcept { return static_cast<int>(members_.size()); }
  std::uint32_t context() const noexcept { return ctx_; }
  int world_rank() const noexcept { return members_[static_cast<std::size_t>(me_)]; }
  int world_rank_of(int member) const { return members_.at(static_cast<std::size_t>(member)); }
  const std::vector<int>& members() const noexcept { return members_; }

  void send_buffer(int dest, int tag, std::span<const double> region);
  /// Receives exactly region.size() words; a size mismatch throws before
  /// anything is written.
  void recv_buffer(int src, int tag, std::span<double> region);

  /// Sends the concatenation of the described regions of `store`.
  void send_gathered(int dest, int tag, std::span<const Descriptor> descriptors, std::span<const double> store);
  /// Writes the payload into the described regions in order. Returns the
  /// words received.
  std::size_t recv_scattered(int src, int tag, std::span<const Descriptor> descriptors, std::span<double> store);

  template <WireWord T>
  void send(int dest, int tag, std::span<const T> data) {
    post(dest, tag, to_words(data));
  }
  template <WireWord T>
  std::vector<T> recv(int src, int tag) {
    return from_words<T>(take(src, tag));
  }

  /// Concatenation of every member's part in rank order. Part sizes may
  /// differ; `counts` receives them when non-null.
  template <WireWord T>
  std::vector<T> allgather(std::span<const T> part, std::vector<std::size_t>* counts = nullptr) {
    auto words = allgather_words(to_words(part), counts);
    return from_words<T>(std::move(words));
  }

  /// `full` is split into size() consecutive segments of the given lengths;
  /// member m gets the elementwise sum of every member's segment m, summed
  /// in ascending source order.
  std::vector<double> reduce_scatter(std::span<const double> full, std::span<const std::size_t> segments);

  /// Members with equal color form a communicator ordered by (key, rank).
  Communicator split(int color, int key);

  void barrier();

  void count_staging(std::size_t words);
  void set_phase(Phase phase);
  TrafficCounters counters() const;

private:
  friend class World;
  Communicator(std::shared_ptr<Fabric> fabric, std::vector<int> members, int me, std::uint32_t ctx);

  template <WireWord T>
  static std::vector<std::uint64_t> to_words(std::span<const T> data) {
    std::vector<std::uint64_t> out(data.size());
    if (!data.empty()) std::memcpy(out.data(), data.data(), data.size() * 8);
    return out;
  }
  template <WireWord T>
  static std::vector<T> from_words(std::vector<std::uint64_t> words) {
    if constexpr (std::is_same_v<T, std::uint64_t>) {
      return words;
    } else {
      std::vector<T> out(words.size());
      if (!words.empty()) std::memcpy(out.data(), words.data(), words.size() * 8);
      return out;
    }
  }

  void post(int dest, int tag, std::vector<std::uint64_t> payload);
  std::vector<std::uint64_t> take(int src, int tag);
  std::vector<std::uint64_t> allgather_words(std::vector<std::uint64_t> part, std::vector<std::size_t>* counts);

  std::shared_ptr<Fabric> fabric_;
  std::vector<int> members_;
  int me_ = 0;
  std::uint32_t ctx_ = 0;
  int split_seq_ = 0;
};

/// Owns the rank workers' shared mailbox fabric.
class World {
public:
  explicit World(int size, TransportOptions options = {});
  ~World();
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  int size() const noexcept { return size_; }

  /// Runs `body` once per rank on its own thread with the world
  /// communicator and joins. The first non-abort failure is rethrown; a
  /// failed world refuses further runs.
  void run(const std::function<void(Communicator&)>& body);

  TrafficCounters counters(int world_rank) const;
  std::vector<TraceRecord> trace(int world_rank) const;
  /// Records grouped by receiving rank, each rank's in receive order.
  void write_trace(const std::filesystem::path& path) const;
  static std::vector<TraceRecord> read_trace(const std::filesystem::path& path);

private:
  int size_;
  std::shared_ptr<Fabric> fabric_;
};

}  // namespace spc3d
