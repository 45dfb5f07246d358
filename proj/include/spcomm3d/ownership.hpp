#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spcomm3d/grid.hpp"
#include "spcomm3d/transport.hpp"

namespace spc3d {

/// Owner (fiber-local rank) of every id in a fiber's contiguous id range.
struct OwnerMap {
  Range ids;
  std::vector<int> owner;
  /// False for ids no fiber member uses; those got a round-robin owner.
  std::vector<bool> used;

  int owner_of(Index id) const { return owner[static_cast<std::size_t>(id - ids.begin)]; }
  bool is_used(Index id) const { return used[static_cast<std::size_t>(id - ids.begin)]; }
  std::uint64_t checksum() const;

  friend bool operator==(const OwnerMap&, const OwnerMap&) = default;
};

/// Uniform choice among `candidates` keyed by (seed, id). Stateless so that
/// every participant computes the same answer regardless of arrival order.
int pick_candidate(std::uint64_t seed, Index id, std::size_t candidates);

/// Owner for an id nobody uses.
int fallback_owner(Range ids, Index id, int fiber_size);

/// Fiber member responsible for choosing the owner of `id`: contiguous
/// near-equal shards of the fiber's id range.
int responsible_member(Range ids, Index id, int fiber_size);

/// Single-address-space owner assignment. `used_per_member[m]` lists the
/// ids member m touches (sorted, unique, inside `ids`).
OwnerMap assign_owners_serial(std::span<const std::vector<Index>> used_per_member, Range ids, std::uint64_t seed);

/// Distributed owner assignment over `fiber`: each member sends the ids it
/// uses to their responsible members, responsible members pick an owner per
/// id among its candidates, and the picks are all-gathered. Every member
/// returns the full map. Seeds are cross-checked first; a mismatch throws
/// OwnershipError on every member.
OwnerMap assign_owners_distributed(Communicator& fiber, std::span<const Index> my_used, Range ids,
                                   std::uint64_t seed);

}  // namespace spc3d
