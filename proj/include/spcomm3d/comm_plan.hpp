#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "spcomm3d/analysis.hpp"
#include "spcomm3d/ownership.hpp"
#include "spcomm3d/transport.hpp"

namespace spc3d {

/// Broadcast graphs move owned rows to their users: each receiver gets
/// every id from at most one sender. Reduce graphs move partial rows to
/// their owner: each sender sends every id to at most one receiver.
enum class Direction { broadcast, reduce };

/// How message payloads meet the dense store.
///  both_buffers:  copy into a send buffer, copy out of a receive buffer.
///  single_buffer: the store is re-laid out so the side carrying unique ids
///                 (receive side of broadcasts, send side of reductions)
///                 transfers directly; the other side keeps a buffer.
///  no_buffers:    both sides use coalesced descriptor lists over the store.
enum class Strategy { both_buffers, single_buffer, no_buffers };

const char* to_string(Direction d) noexcept;
const char* to_string(Strategy s) noexcept;
/// Accepts "bb", "rb", "sb" and "nb".
Strategy parse_strategy(std::string_view s);

/// Messages of one fiber keyed by (sender, receiver) fiber ranks. Ids in a
/// message are ascending; empty messages are never stored.
struct CommGraph {
  Direction direction = Direction::broadcast;
  int size = 0;
  std::map<std::pair<int, int>, std::vector<Index>> messages;

  Index total_ids() const;
  /// Throws PlanError on self-messages, empty or unsorted messages, or
  /// duplicated ids on the unique side.
  void validate() const;
  friend bool operator==(const CommGraph&, const CommGraph&) = default;
};

/// m(a -> b) = { i : a, b in Lambda_i, owner(i) = a }.
CommGraph build_precomm_rows(const FiberLambda& lambda, const OwnerMap& owners);
/// Column analogue of build_precomm_rows.
CommGraph build_precomm_cols(const FiberLambda& lambda, const OwnerMap& owners);
/// m(a -> b) = { i : a, b in Lambda_i, owner(i) = b }.
CommGraph build_postcomm_spmm(const FiberLambda& lambda, const OwnerMap& owners);

/// Swaps sender and receiver of every message and flips the direction.
CommGraph reversed(const CommGraph& graph);

struct PeerMessage {
  int peer = 0;
  std::vector<Index> ids;
  friend bool operator==(const PeerMessage&, const PeerMessage&) = default;
};

/// The part of a graph that touches one fiber rank, peers ascending.
struct RankMessages {
  Direction direction = Direction::broadcast;
  int self = 0;
  std::vector<PeerMessage> outgoing;
  std::vector<PeerMessage> incoming;
  friend bool operator==(const RankMessages&, const RankMessages&) = default;
};

RankMessages project(const CommGraph& graph, int self);

enum class StoreLayout { by_id, peer_grouped };

/// A rank's resident dense rows: `width` words per id, one contiguous array.
class DenseRowStore {
public:
  DenseRowStore() = default;
  /// `ids` sorted and unique; laid out in id order, zero-filled.
  DenseRowStore(std::size_t width, std::vector<Index> ids);

  std::size_t width() const noexcept { return width_; }
  std::size_t rows() const noexcept { return ids_.size(); }
  std::size_t size_words() const noexcept { return data_.size(); }
  std::span<double> words() noexcept { return data_; }
  std::span<const double> words() const noexcept { return data_; }

  const std::vector<Index>& ids() const noexcept { return ids_; }
  const std::vector<Index>& layout_order() const noexcept { return order_; }
  StoreLayout layout() const noexcept { return layout_; }

  bool contains(Index id) const { return find(id).has_value(); }
  std::optional<std::size_t> offset_of(Index id) const;
  std::span<double> row(Index id);
  std::span<const double> row(Index id) const;

  /// Moves rows so that they appear in `order` (a permutation of ids()).
  void relayout(std::vector<Index> order, StoreLayout layout);

  /// Hash of the directory (ids, offsets, width), not of the values.
  std::uint64_t directory_checksum() const;

private:
  std::optional<std::size_t> find(Index id) const;

  std::size_t width_ = 0;
  std::vector<Index> ids_;
  std::vector<std::size_t> slot_;
  std::vector<Index> order_;
  std::vector<double> data_;
  StoreLayout layout_ = StoreLayout::by_id;
};

const char* to_string(StoreLayout l) noexcept;

enum class TransferMode { buffered, direct, described };

const char* to_string(TransferMode m) noexcept;

/// One message of a compiled plan.
///  buffered:  `offsets` holds the source/target word offset of every id
///             (into the store, or into the reduction inbox for reduce
///             receives); `buffer_offset` locates the staging region.
///  direct:    a single descriptor naming a contiguous store region.
///  described: coalesced descriptors (into the inbox for reduce receives).
struct PeerTransfer {
  int peer = 0;
  std::vector<Index> ids;
  TransferMode mode = TransferMode::buffered;
  std::vector<std::size_t> offsets;
  std::size_t buffer_offset = 0;
  std::vector<Descriptor> descriptors;
  std::size_t words = 0;
};

/// Owner-side summation of one row: sources in ascending fiber rank;
/// `from_inbox` false means the owner's own partial in the store.
struct ReduceSource {
  int member = 0;
  bool from_inbox = false;
  std::size_t offset = 0;
};

struct ReduceTarget {
  Index id = 0;
  std::size_t target = 0;
  std::vector<ReduceSource> sources;
};

struct CommPlan {
  Strategy strategy = Strategy::both_buffers;
  Direction direction = Direction::broadcast;
  int self = 0;
  std::size_t width = 0;
  std::vector<PeerTransfer> sends;
  std::vector<PeerTransfer> recvs;
  std::size_t send_buffer_words = 0;
  std::size_t recv_buffer_words = 0;
  std::size_t inbox_words = 0;
  std::vector<ReduceTarget> reductions;

  std::size_t send_words() const;
  std::size_t recv_words() const;
};

/// Merges consecutive (offset, width) runs into maximal descriptors.
std::vector<Descriptor> coalesce(std::span<const std::size_t> offsets, std::size_t width);

/// Compiles this rank's part of a graph. single_buffer re-lays out `store`
/// first (unique-side groups by ascending peer, remaining ids after them).
/// Throws PlanError naming the id and peer when an id is not resident.
CommPlan compile_plan(const RankMessages& messages, DenseRowStore& store, Strategy strategy);
CommPlan compile_plan(const CommGraph& graph, int self, DenseRowStore& store, Strategy strategy);

/// A compiled plan plus the scratch memory it needs, allocated once.
class Exchange {
public:
  Exchange() = default;
  explicit Exchange(CommPlan plan);

  const CommPlan& plan() const noexcept { return plan_; }
  /// Buffer and inbox words held by this exchange.
  std::size_t scratch_words() const noexcept { return send_buf_.size() + recv_buf_.size() + inbox_.size(); }

  /// Broadcast: ships owned rows and fills needed rows of `store`.
  /// Reduce: ships partial rows, then every owned row of `store` becomes
  /// the sum of all partials in ascending fiber rank order.
  void run(Communicator& fiber, DenseRowStore& store, int tag);

private:
  CommPlan plan_;
  std::vector<double> send_buf_;
  std::vector<double> recv_buf_;
  std::vector<double> inbox_;
};

}  // namespace spc3d
