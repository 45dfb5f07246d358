#include "spcomm3d/comm_plan.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "spcomm3d/error.hpp"
#include "spcomm3d/hash.hpp"

namespace spc3d {

const char* to_string(Direction d) noexcept { return d == Direction::broadcast ? "broadcast" : "reduce"; }

const char* to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::both_buffers: return "bb";
    case Strategy::single_buffer: return "rb";
    case Strategy::no_buffers: return "nb";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "bb") return Strategy::both_buffers;
  if (s == "rb" || s == "sb") return Strategy::single_buffer;
  if (s == "nb") return Strategy::no_buffers;
  throw ConfigError("unknown strategy '" + std::string(s) + "' (expected bb, rb, sb or nb)");
}

const char* to_string(StoreLayout l) noexcept { return l == StoreLayout::by_id ? "by_id" : "peer_grouped"; }

const char* to_string(TransferMode m) noexcept {
  switch (m) {
    case TransferMode::buffered: return "buffered";
    case TransferMode::direct: return "direct";
    case TransferMode::described: return "described";
  }
  return "?";
}

Index CommGraph::total_ids() const {
  Index n = 0;
  for (const auto& [_, ids] : messages) n += static_cast<Index>(ids.size());
  return n;
}

void CommGraph::validate() const {
  std::map<int, std::set<Index>> unique_side;
  for (const auto& [pair, ids] : messages) {
    const auto [src, dst] = pair;
    if (src == dst) throw PlanError("self-message at fiber rank " + std::to_string(src));
    if (src < 0 || dst < 0 || src >= size || dst >= size) throw PlanError("message endpoint outside fiber");
    if (ids.empty()) throw PlanError("empty message " + std::to_string(src) + "->" + std::to_string(dst));
    if (!std::is_sorted(ids.begin(), ids.end()) || std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw PlanError("message ids not strictly ascending");
    auto& seen = unique_side[direction == Direction::broadcast ? dst : src];
    for (Index id : ids)
      if (!seen.insert(id).second)
        throw PlanError("id " + std::to_string(id) + " repeated on the unique side of rank " +
                        std::to_string(direction == Direction::broadcast ? dst : src));
  }
}

namespace {

CommGraph build(const FiberLambda& lambda, const OwnerMap& owners, Direction direction) {
  if (lambda.ids != owners.ids) throw PlanError("lambda and owner map cover different id ranges");
  CommGraph g;
  g.direction = direction;
  g.size = lambda.size;
  for (Index id = lambda.ids.begin; id < lambda.ids.end; ++id) {
    const auto& users = lambda.lambda_set(id);
    if (users.empty()) continue;
    const int owner = owners.owner_of(id);
    if (!std::binary_search(users.begin(), users.end(), owner))
      throw PlanError("owner " + std::to_string(owner) + " of id " + std::to_string(id) + " is not one of its users");
    for (int user : users) {
      if (user == owner) continue;
      auto key = direction == Direction::broadcast ? std::make_pair(owner, user) : std::make_pair(user, owner);
      g.messages[key].push_back(id);
    }
  }
  return g;
}

}  // namespace

CommGraph build_precomm_rows(const FiberLambda& lambda, const OwnerMap& owners) {
  return build(lambda, owners, Direction::broadcast);
}

CommGraph build_precomm_cols(const FiberLambda& lambda, const OwnerMap& owners) {
  return build(lambda, owners, Direction::broadcast);
}

CommGraph build_postcomm_spmm(const FiberLambda& lambda, const OwnerMap& owners) {
  return build(lambda, owners, Direction::reduce);
}

CommGraph reversed(const CommGraph& graph) {
  CommGraph r;
  r.direction = graph.direction == Direction::broadcast ? Direction::reduce : Direction::broadcast;
  r.size = graph.size;
  for (const auto& [pair, ids] : graph.messages) r.messages[{pair.second, pair.first}] = ids;
  return r;
}

RankMessages project(const CommGraph& graph, int self) {
  RankMessages rm;
  rm.direction = graph.direction;
  rm.self = self;
  for (const auto& [pair, ids] : graph.messages) {
    if (pair.first == self) rm.outgoing.push_back({pair.second, ids});
    if (pair.second == self) rm.incoming.push_back({pair.first, ids});
  }
  std::sort(rm.incoming.begin(), rm.incoming.end(), [](const auto& a, const auto& b) { return a.peer < b.peer; });
  return rm;
}

DenseRowStore::DenseRowStore(std::size_t width, std::vector<Index> ids)
    : width_(width), ids_(std::move(ids)), data_(ids_.size() * width, 0.0) {
  if (!std::is_sorted(ids_.begin(), ids_.end()) || std::adjacent_find(ids_.begin(), ids_.end()) != ids_.end())
    throw PlanError("store ids must be sorted and unique");
  slot_.resize(ids_.size());
  for (std::size_t k = 0; k < ids_.size(); ++k) slot_[k] = k;
  order_ = ids_;
}

std::optional<std::size_t> DenseRowStore::find(Index id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return std::nullopt;
  return slot_[static_cast<std::size_t>(it - ids_.begin())];
}

std::optional<std::size_t> DenseRowStore::offset_of(Index id) const {
  auto s = find(id);
  if (!s) return std::nullopt;
  return *s * width_;
}

std::span<double> DenseRowStore::row(Index id) {
  auto off = offset_of(id);
  if (!off) throw PlanError("id " + std::to_string(id) + " is not resident in the store");
  return std::span<double>(data_).subspan(*off, width_);
}

std::span<const double> DenseRowStore::row(Index id) const {
  auto off = offset_of(id);
  if (!off) throw PlanError("id " + std::to_string(id) + " is not resident in the store");
  return std::span<const double>(data_).subspan(*off, width_);
}

void DenseRowStore::relayout(std::vector<Index> order, StoreLayout layout) {
  std::vector<Index> check = order;
  std::sort(check.begin(), check.end());
  if (check != ids_) throw PlanError("relayout order is not a permutation of the store ids");
  std::vector<double> moved(data_.size());
  std::vector<std::size_t> slot(ids_.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t at = static_cast<std::size_t>(std::lower_bound(ids_.begin(), ids_.end(), order[k]) - ids_.begin());
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(slot_[at] * width_), width_,
                moved.begin() + static_cast<std::ptrdiff_t>(k * width_));
    slot[at] = k;
  }
  data_ = std::move(moved);
  slot_ = std::move(slot);
  order_ = std::move(order);
  layout_ = layout;
}

std::uint64_t DenseRowStore::directory_checksum() const {
  Checksum c;
  c.add(width_);
  for (std::size_t k = 0; k < ids_.size(); ++k) {
    c.add(static_cast<std::uint64_t>(ids_[k]));
    c.add(slot_[k]);
  }
  return c.value();
}

std::size_t CommPlan::send_words() const {
  std::size_t n = 0;
  for (const auto& t : sends) n += t.words;
  return n;
}

std::size_t CommPlan::recv_words() const {
  std::size_t n = 0;
  for (const auto& t : recvs) n += t.words;
  return n;
}

std::vector<Descriptor> coalesce(std::span<const std::size_t> offsets, std::size_t width) {
  std::vector<Descriptor> out;
  for (std::size_t off : offsets) {
    if (!out.empty() && out.back().offset + out.back().length == off)
      out.back().length += width;
    else
      out.push_back({off, width});
  }
  return out;
}

namespace {

std::size_t resident(const DenseRowStore& store, Index id, int peer) {
  auto off = store.offset_of(id);
  if (!off)
    throw PlanError("id " + std::to_string(id) + " exchanged with fiber rank " + std::to_string(peer) +
                    " is not resident in the store");
  return *off;
}

std::vector<std::size_t> store_offsets(const DenseRowStore& store, const PeerMessage& m) {
  std::vector<std::size_t> offs;
  offs.reserve(m.ids.size());
  for (Index id : m.ids) offs.push_back(resident(store, id, m.peer));
  return offs;
}

void group_unique_side(const std::vector<PeerMessage>& unique_side, DenseRowStore& store) {
  std::vector<Index> order;
  std::set<Index> placed;
  for (const auto& m : unique_side)
    for (Index id : m.ids) {
      resident(store, id, m.peer);
      order.push_back(id);
      placed.insert(id);
    }
  for (Index id : store.ids())
    if (!placed.count(id)) order.push_back(id);
  store.relayout(std::move(order), StoreLayout::peer_grouped);
}

}  // namespace

CommPlan compile_plan(const RankMessages& messages, DenseRowStore& store, Strategy strategy) {
  const bool broadcast = messages.direction == Direction::broadcast;
  const std::size_t w = store.width();
  CommPlan plan;
  plan.strategy = strategy;
  plan.direction = messages.direction;
  plan.self = messages.self;
  plan.width = w;

  const auto& unique_side = broadcast ? messages.incoming : messages.outgoing;
  if (strategy == Strategy::single_buffer) group_unique_side(unique_side, store);

  // Which side transfers without a staging copy.
  const bool send_zero_copy =
      strategy == Strategy::no_buffers || (strategy == Strategy::single_buffer && !broadcast);
  const bool recv_zero_copy =
      strategy == Strategy::no_buffers || (strategy == Strategy::single_buffer && broadcast);

  for (const auto& m : messages.outgoing) {
    PeerTransfer t;
    t.peer = m.peer;
    t.ids = m.ids;
    t.words = m.ids.size() * w;
    auto offs = store_offsets(store, m);
    if (!send_zero_copy) {
      t.mode = TransferMode::buffered;
      t.offsets = std::move(offs);
      t.buffer_offset = plan.send_buffer_words;
      plan.send_buffer_words += t.words;
    } else {
      t.descriptors = coalesce(offs, w);
      t.mode = strategy == Strategy::single_buffer ? TransferMode::direct : TransferMode::described;
      if (t.mode == TransferMode::direct && t.descriptors.size() > 1)
        throw PlanError("grouped layout left message to fiber rank " + std::to_string(m.peer) + " non-contiguous");
    }
    plan.sends.push_back(std::move(t));
  }

  for (const auto& m : messages.incoming) {
    PeerTransfer t;
    t.peer = m.peer;
    t.ids = m.ids;
    t.words = m.ids.size() * w;
    std::vector<std::size_t> offs;
    if (broadcast) {
      offs = store_offsets(store, m);
    } else {
      // Partials land in the inbox, grouped by sender then id.
      for (std::size_t k = 0; k < m.ids.size(); ++k) {
        resident(store, m.ids[k], m.peer);
        offs.push_back(plan.inbox_words + k * w);
      }
      plan.inbox_words += t.words;
    }
    if (!recv_zero_copy) {
      t.mode = TransferMode::buffered;
      t.offsets = std::move(offs);
      t.buffer_offset = plan.recv_buffer_words;
      plan.recv_buffer_words += t.words;
    } else {
      t.descriptors = coalesce(offs, w);
      t.mode = (strategy == Strategy::single_buffer) ? TransferMode::direct : TransferMode::described;
      if (t.mode == TransferMode::direct && t.descriptors.size() > 1)
        throw PlanError("grouped layout left message from fiber rank " + std::to_string(m.peer) + " non-contiguous");
    }
    plan.recvs.push_back(std::move(t));
  }

  if (!broadcast) {
    std::map<Index, std::vector<ReduceSource>> sources;
    std::size_t inbox = 0;
    for (const auto& m : messages.incoming)
      for (Index id : m.ids) {
        sources[id].push_back({m.peer, true, inbox});
        inbox += w;
      }
    for (auto& [id, list] : sources) {
      const std::size_t target = resident(store, id, messages.self);
      list.push_back({messages.self, false, target});
      std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.member < b.member; });
      plan.reductions.push_back({id, target, std::move(list)});
    }
  }
  return plan;
}

CommPlan compile_plan(const CommGraph& graph, int self, DenseRowStore& store, Strategy strategy) {
  return compile_plan(project(graph, self), store, strategy);
}

Exchange::Exchange(CommPlan plan)
    : plan_(std::move(plan)), send_buf_(plan_.send_buffer_words), recv_buf_(plan_.recv_buffer_words),
      inbox_(plan_.inbox_words) {}

void Exchange::run(Communicator& fiber, DenseRowStore& store, int tag) {
  const std::size_t w = plan_.width;
  auto data = store.words();

  for (const auto& t : plan_.sends) {
    switch (t.mode) {
      case TransferMode::buffered: {
        auto buf = std::span<double>(send_buf_).subspan(t.buffer_offset, t.words);
        for (std::size_t k = 0; k < t.offsets.size(); ++k)
          std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(t.offsets[k]), w,
                      buf.begin() + static_cast<std::ptrdiff_t>(k * w));
        fiber.count_staging(t.words);
        fiber.send_buffer(t.peer, tag, buf);
        break;
      }
      case TransferMode::direct: {
        const auto& d = t.descriptors.front();
        fiber.send_buffer(t.peer, tag, std::span<const double>(data).subspan(d.offset, d.length));
        break;
      }
      case TransferMode::described:
        fiber.send_gathered(t.peer, tag, t.descriptors, data);
        break;
    }
  }

  const bool broadcast = plan_.direction == Direction::broadcast;
  std::span<double> target = broadcast ? data : std::span<double>(inbox_);
  for (const auto& t : plan_.recvs) {
    switch (t.mode) {
      case TransferMode::buffered: {
        auto buf = std::span<double>(recv_buf_).subspan(t.buffer_offset, t.words);
        fiber.recv_buffer(t.peer, tag, buf);
        for (std::size_t k = 0; k < t.offsets.size(); ++k)
          std::copy_n(buf.begin() + static_cast<std::ptrdiff_t>(k * w), w,
                      target.begin() + static_cast<std::ptrdiff_t>(t.offsets[k]));
        fiber.count_staging(t.words);
        break;
      }
      case TransferMode::direct: {
        const auto& d = t.descriptors.front();
        fiber.recv_buffer(t.peer, tag, target.subspan(d.offset, d.length));
        break;
      }
      case TransferMode::described:
        fiber.recv_scattered(t.peer, tag, t.descriptors, target);
        break;
    }
  }

  if (!broadcast) {
    std::vector<double> acc(w);
    for (const auto& r : plan_.reductions) {
      bool first = true;
      for (const auto& s : r.sources) {
        const double* src = (s.from_inbox ? inbox_.data() : data.data()) + s.offset;
        if (first) {
          std::copy_n(src, w, acc.begin());
          first = false;
        } else {
          for (std::size_t k = 0; k < w; ++k) acc[k] += src[k];
        }
      }
      std::copy(acc.begin(), acc.end(), data.begin() + static_cast<std::ptrdiff_t>(r.target));
    }
  }
}

}  // namespace spc3d
