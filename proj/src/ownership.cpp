#include "spcomm3d/ownership.hpp"

#include <string>

#include "spcomm3d/error.hpp"
#include "spcomm3d/hash.hpp"

namespace spc3d {

namespace {

constexpr int kCandidacyTag = 101;

void check_ids(std::span<const Index> used, Range ids) {
  for (std::size_t k = 0; k < used.size(); ++k) {
    if (!ids.contains(used[k]))
      throw OwnershipError("id " + std::to_string(used[k]) + " outside fiber range [" + std::to_string(ids.begin) +
                           ", " + std::to_string(ids.end) + ")");
    if (k > 0 && used[k] <= used[k - 1]) throw OwnershipError("used ids must be sorted and unique");
  }
}

int choose(std::uint64_t seed, Range ids, Index id, const std::vector<int>& candidates, int fiber_size) {
  if (candidates.empty()) return fallback_owner(ids, id, fiber_size);
  return candidates[static_cast<std::size_t>(pick_candidate(seed, id, candidates.size()))];
}

}  // namespace

std::uint64_t OwnerMap::checksum() const {
  Checksum c;
  c.add(static_cast<std::uint64_t>(ids.begin));
  c.add(static_cast<std::uint64_t>(ids.end));
  for (std::size_t k = 0; k < owner.size(); ++k)
    c.add(static_cast<std::uint64_t>(owner[k]) << 1 | (used[k] ? 1u : 0u));
  return c.value();
}

int pick_candidate(std::uint64_t seed, Index id, std::size_t candidates) {
  return static_cast<int>(mix64(seed, static_cast<std::uint64_t>(id)) % candidates);
}

int fallback_owner(Range ids, Index id, int fiber_size) {
  return static_cast<int>((id - ids.begin) % fiber_size);
}

int responsible_member(Range ids, Index id, int fiber_size) {
  return part_of(ids.size(), fiber_size, id - ids.begin);
}

OwnerMap assign_owners_serial(std::span<const std::vector<Index>> used_per_member, Range ids, std::uint64_t seed) {
  const int n = static_cast<int>(used_per_member.size());
  if (n < 1) throw OwnershipError("fiber must have at least one member");
  std::vector<std::vector<int>> candidates(static_cast<std::size_t>(ids.size()));
  for (int m = 0; m < n; ++m) {
    check_ids(used_per_member[static_cast<std::size_t>(m)], ids);
    for (Index id : used_per_member[static_cast<std::size_t>(m)])
      candidates[static_cast<std::size_t>(id - ids.begin)].push_back(m);
  }
  OwnerMap map{ids, std::vector<int>(static_cast<std::size_t>(ids.size())),
               std::vector<bool>(static_cast<std::size_t>(ids.size()))};
  for (Index id = ids.begin; id < ids.end; ++id) {
    const auto& cand = candidates[static_cast<std::size_t>(id - ids.begin)];
    map.owner[static_cast<std::size_t>(id - ids.begin)] = choose(seed, ids, id, cand, n);
    map.used[static_cast<std::size_t>(id - ids.begin)] = !cand.empty();
  }
  return map;
}

OwnerMap assign_owners_distributed(Communicator& fiber, std::span<const Index> my_used, Range ids,
                                   std::uint64_t seed) {
  const int n = fiber.size();
  const int me = fiber.rank();
  check_ids(my_used, ids);

  const std::uint64_t fingerprint = mix64(seed, 0x5345454455ULL);
  auto prints = fiber.allgather<std::uint64_t>(std::span<const std::uint64_t>(&fingerprint, 1));
  for (int m = 0; m < n; ++m)
    if (prints[static_cast<std::size_t>(m)] != fingerprint)
      throw OwnershipError("inconsistent owner-assignment seeds in fiber (member " + std::to_string(me) +
                           " vs member " + std::to_string(m) + ")");

  // Candidacy: one message per peer carrying my used ids in its shard.
  std::vector<std::vector<Index>> outgoing(static_cast<std::size_t>(n));
  for (Index id : my_used) outgoing[static_cast<std::size_t>(responsible_member(ids, id, n))].push_back(id);
  for (int p = 0; p < n; ++p)
    if (p != me) fiber.send<Index>(p, kCandidacyTag, outgoing[static_cast<std::size_t>(p)]);

  const Range shard = split_range(ids.size(), n, me);
  std::vector<std::vector<int>> candidates(static_cast<std::size_t>(shard.size()));
  for (int p = 0; p < n; ++p) {
    std::vector<Index> got =
        p == me ? outgoing[static_cast<std::size_t>(me)] : fiber.recv<Index>(p, kCandidacyTag);
    for (Index id : got) {
      const Index local = id - ids.begin - shard.begin;
      if (local < 0 || local >= shard.size())
        throw OwnershipError("candidacy for id " + std::to_string(id) + " sent to the wrong member");
      candidates[static_cast<std::size_t>(local)].push_back(p);
    }
  }

  // Encode (owner, used) per id of my shard; all-gather in shard order.
  std::vector<std::int64_t> mine(static_cast<std::size_t>(shard.size()));
  for (Index k = 0; k < shard.size(); ++k) {
    const Index id = ids.begin + shard.begin + k;
    const auto& cand = candidates[static_cast<std::size_t>(k)];
    mine[static_cast<std::size_t>(k)] = std::int64_t{choose(seed, ids, id, cand, n)} * 2 + (cand.empty() ? 0 : 1);
  }
  auto all = fiber.allgather<std::int64_t>(mine);
  if (static_cast<Index>(all.size()) != ids.size()) throw OwnershipError("owner all-gather size mismatch");

  OwnerMap map{ids, std::vector<int>(all.size()), std::vector<bool>(all.size())};
  for (std::size_t k = 0; k < all.size(); ++k) {
    map.owner[k] = static_cast<int>(all[k] / 2);
    map.used[k] = (all[k] & 1) != 0;
  }
  return map;
}

}  // namespace spc3d
