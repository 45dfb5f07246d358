#include "spcomm3d/transport.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_map>

#include "spcomm3d/error.hpp"
#include "spcomm3d/hash.hpp"

namespace spc3d {

namespace {

constexpr int kAllgatherTag = -1;
constexpr int kReduceScatterTag = -2;
constexpr char kTraceMagic[8] = {'S', 'P', 'C', '3', 'D', 'T', 'R', '1'};

struct MailKey {
  std::uint32_t ctx;
  int src;
  int dst;
  int tag;
  bool operator==(const MailKey&) const = default;
};

struct MailKeyHash {
  std::size_t operator()(const MailKey& k) const noexcept {
    std::uint64_t h = mix64(k.ctx, static_cast<std::uint64_t>(k.src));
    h = mix64(h, static_cast<std::uint64_t>(k.dst));
    return static_cast<std::size_t>(mix64(h, static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.tag))));
  }
};

}  // namespace

class Fabric {
public:
  Fabric(int size, TransportOptions opts)
      : options(opts), arrivals(static_cast<std::size_t>(size)), counters(static_cast<std::size_t>(size)),
        phases(static_cast<std::size_t>(size), Phase::none), traces(static_cast<std::size_t>(size)) {}

  void deliver(const MailKey& key, std::vector<std::uint64_t> payload) {
    {
      std::lock_guard lock(mu);
      boxes[key].push_back(std::move(payload));
    }
    arrivals[static_cast<std::size_t>(key.dst)].notify_all();
  }

  std::vector<std::uint64_t> await(const MailKey& key) {
    std::unique_lock lock(mu);
    const auto deadline = std::chrono::steady_clock::now() + options.deadlock_timeout;
    auto& cv = arrivals[static_cast<std::size_t>(key.dst)];
    for (;;) {
      if (aborted) throw AbortedError("rank " + std::to_string(key.dst) + " aborted: another rank failed");
      auto it = boxes.find(key);
      if (it != boxes.end() && !it->second.empty()) {
        auto payload = std::move(it->second.front());
        it->second.pop_front();
        if (it->second.empty()) boxes.erase(it);
        return payload;
      }
      if (cv.wait_until(lock, deadline) == std::cv_status::timeout) {
        it = boxes.find(key);
        if (it != boxes.end() && !it->second.empty()) continue;
        throw DeadlockError("deadlock: rank " + std::to_string(key.dst) + " waited " +
                            std::to_string(options.deadlock_timeout.count()) + " ms for rank " +
                            std::to_string(key.src) + " (context " + std::to_string(key.ctx) + ", tag " +
                            std::to_string(key.tag) + ")");
      }
    }
  }

  void abort() {
    {
      std::lock_guard lock(mu);
      aborted = true;
    }
    for (auto& cv : arrivals) cv.notify_all();
  }

  std::uint32_t split_context(std::uint32_t parent, int seq, int color) {
    std::lock_guard lock(mu);
    auto [it, inserted] = split_contexts.try_emplace(std::make_tuple(parent, seq, color), next_ctx);
    if (inserted) ++next_ctx;
    return it->second;
  }

  TransportOptions options;
  std::mutex mu;
  std::vector<std::condition_variable> arrivals;
  std::unordered_map<MailKey, std::deque<std::vector<std::uint64_t>>, MailKeyHash> boxes;
  bool aborted = false;
  bool broken = false;

  // Indexed by world rank; each slot is written only by its own rank's worker.
  std::vector<TrafficCounters> counters;
  std::vector<Phase> phases;
  std::vector<std::vector<TraceRecord>> traces;

  std::map<std::tuple<std::uint32_t, int, int>, std::uint32_t> split_contexts;
  std::uint32_t next_ctx = 1;
};

const char* to_string(Phase p) noexcept {
  switch (p) {
    case Phase::none: return "none";
    case Phase::setup: return "setup";
    case Phase::precomm: return "precomm";
    case Phase::compute: return "compute";
    case Phase::postcomm: return "postcomm";
  }
  return "?";
}

TrafficCounters& TrafficCounters::operator+=(const TrafficCounters& o) noexcept {
  sent_words += o.sent_words;
  sent_messages += o.sent_messages;
  recv_words += o.recv_words;
  recv_messages += o.recv_messages;
  staging_words += o.staging_words;
  return *this;
}

Communicator::Communicator(std::shared_ptr<Fabric> fabric, std::vector<int> members, int me, std::uint32_t ctx)
    : fabric_(std::move(fabric)), members_(std::move(members)), me_(me), ctx_(ctx) {}

void Communicator::post(int dest, int tag, std::vector<std::uint64_t> payload) {
  if (dest < 0 || dest >= size()) throw TransportError("send to invalid member " + std::to_string(dest));
  if (dest == me_) throw TransportError("self-send is not supported");
  auto& c = fabric_->counters[static_cast<std::size_t>(world_rank())];
  c.sent_words += payload.size();
  c.sent_messages += 1;
  fabric_->deliver({ctx_, world_rank(), world_rank_of(dest), tag}, std::move(payload));
}

std::vector<std::uint64_t> Communicator::take(int src, int tag) {
  if (src < 0 || src >= size()) throw TransportError("receive from invalid member " + std::to_string(src));
  const int me = world_rank();
  const int from = world_rank_of(src);
  auto payload = fabric_->await({ctx_, from, me, tag});
  auto& c = fabric_->counters[static_cast<std::size_t>(me)];
  c.recv_words += payload.size();
  c.recv_messages += 1;
  if (fabric_->options.trace)
    fabric_->traces[static_cast<std::size_t>(me)].push_back(
        {fabric_->phases[static_cast<std::size_t>(me)], static_cast<std::uint32_t>(from),
         static_cast<std::uint32_t>(me), ctx_, payload.size()});
  return payload;
}

void Communicator::send_buffer(int dest, int tag, std::span<const double> region) {
  post(dest, tag, to_words(region));
}

void Communicator::recv_buffer(int src, int tag, std::span<double> region) {
  auto payload = take(src, tag);
  if (payload.size() != region.size())
    throw TransportError("word-count mismatch: rank " + std::to_string(world_rank()) + " expected " +
                         std::to_string(region.size()) + " words from rank " + std::to_string(world_rank_of(src)) +
                         ", got " + std::to_string(payload.size()));
  if (!payload.empty()) std::memcpy(region.data(), payload.data(), payload.size() * 8);
}

void Communicator::send_gathered(int dest, int tag, std::span<const Descriptor> descriptors,
                                 std::span<const double> store) {
  std::size_t total = 0;
  for (const auto& d : descriptors) {
    if (d.offset + d.length > store.size())
      throw TransportError("send descriptor [" + std::to_string(d.offset) + ", +" + std::to_string(d.length) +
                           ") outside store of " + std::to_string(store.size()) + " words");
    total += d.length;
  }
  std::vector<std::uint64_t> payload(total);
  std::size_t at = 0;
  for (const auto& d : descriptors) {
    std::memcpy(payload.data() + at, store.data() + d.offset, d.length * 8);
    at += d.length;
  }
  post(dest, tag, std::move(payload));
}

std::size_t Communicator::recv_scattered(int src, int tag, std::span<const Descriptor> descriptors,
                                         std::span<double> store) {
  std::size_t total = 0;
  for (const auto& d : descriptors) {
    if (d.offset + d.length > store.size())
      throw TransportError("receive descriptor [" + std::to_string(d.offset) + ", +" + std::to_string(d.length) +
                           ") outside store of " + std::to_string(store.size()) + " words");
    total += d.length;
  }
  auto payload = take(src, tag);
  if (payload.size() != total)
    throw TransportError("word-count mismatch: rank " + std::to_string(world_rank()) + " described " +
                         std::to_string(total) + " words, rank " + std::to_string(world_rank_of(src)) + " sent " +
                         std::to_string(payload.size()));
  std::size_t at = 0;
  for (const auto& d : descriptors) {
    std::memcpy(store.data() + d.offset, payload.data() + at, d.length * 8);
    at += d.length;
  }
  return total;
}

std::vector<std::uint64_t> Communicator::allgather_words(std::vector<std::uint64_t> part,
                                                         std::vector<std::size_t>* counts) {
  for (int p = 0; p < size(); ++p)
    if (p != me_) post(p, kAllgatherTag, part);
  std::vector<std::uint64_t> out;
  if (counts) counts->assign(static_cast<std::size_t>(size()), 0);
  for (int p = 0; p < size(); ++p) {
    if (p == me_) {
      if (counts) (*counts)[static_cast<std::size_t>(p)] = part.size();
      out.insert(out.end(), part.begin(), part.end());
    } else {
      auto got = take(p, kAllgatherTag);
      if (counts) (*counts)[static_cast<std::size_t>(p)] = got.size();
      out.insert(out.end(), got.begin(), got.end());
    }
  }
  return out;
}

std::vector<double> Communicator::reduce_scatter(std::span<const double> full, std::span<const std::size_t> segments) {
  if (static_cast<int>(segments.size()) != size())
    throw TransportError("reduce_scatter: " + std::to_string(segments.size()) + " segments for " +
                         std::to_string(size()) + " members");
  std::vector<std::size_t> starts(segments.size() + 1, 0);
  for (std::size_t m = 0; m < segments.size(); ++m) starts[m + 1] = starts[m] + segments[m];
  if (starts.back() != full.size())
    throw TransportError("reduce_scatter: segments cover " + std::to_string(starts.back()) + " of " +
                         std::to_string(full.size()) + " words");
  for (int p = 0; p < size(); ++p) {
    if (p == me_) continue;
    auto seg = full.subspan(starts[static_cast<std::size_t>(p)], segments[static_cast<std::size_t>(p)]);
    post(p, kReduceScatterTag, to_words(seg));
  }
  const std::size_t mine = segments[static_cast<std::size_t>(me_)];
  auto own = full.subspan(starts[static_cast<std::size_t>(me_)], mine);
  std::vector<double> acc;
  for (int p = 0; p < size(); ++p) {
    std::vector<double> contribution;
    if (p == me_) {
      contribution.assign(own.begin(), own.end());
    } else {
      contribution = from_words<double>(take(p, kReduceScatterTag));
      if (contribution.size() != mine)
        throw TransportError("reduce_scatter: segment-shape mismatch, rank " + std::to_string(world_rank_of(p)) +
                             " sent " + std::to_string(contribution.size()) + " words, expected " +
                             std::to_string(mine));
    }
    if (p == 0) {
      acc = std::move(contribution);
    } else {
      for (std::size_t k = 0; k < mine; ++k) acc[k] += contribution[k];
    }
  }
  return acc;
}

Communicator Communicator::split(int color, int key) {
  const std::int64_t mine[2] = {color, key};
  auto all = allgather<std::int64_t>(std::span<const std::int64_t>(mine, 2));
  const int seq = split_seq_++;
  struct Candidate {
    std::int64_t key;
    int parent;
  };
  std::vector<Candidate> group;
  for (int p = 0; p < size(); ++p)
    if (all[static_cast<std::size_t>(2 * p)] == color) group.push_back({all[static_cast<std::size_t>(2 * p + 1)], p});
  std::sort(group.begin(), group.end(),
            [](const Candidate& a, const Candidate& b) { return a.key != b.key ? a.key < b.key : a.parent < b.parent; });
  std::vector<int> members;
  int me = 0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i].parent == me_) me = static_cast<int>(i);
    members.push_back(world_rank_of(group[i].parent));
  }
  return Communicator(fabric_, std::move(members), me, fabric_->split_context(ctx_, seq, color));
}

void Communicator::barrier() { allgather<std::uint64_t>(std::span<const std::uint64_t>{}); }

void Communicator::count_staging(std::size_t words) {
  fabric_->counters[static_cast<std::size_t>(world_rank())].staging_words += words;
}

void Communicator::set_phase(Phase phase) { fabric_->phases[static_cast<std::size_t>(world_rank())] = phase; }

TrafficCounters Communicator::counters() const { return fabric_->counters[static_cast<std::size_t>(world_rank())]; }

World::World(int size, TransportOptions options) : size_(size) {
  if (size < 1) throw ConfigError("world size must be >= 1");
  fabric_ = std::make_shared<Fabric>(size, options);
}

World::~World() = default;

void World::run(const std::function<void(Communicator&)>& body) {
  if (fabric_->broken) throw TransportError("world is unusable after an earlier failure");
  std::vector<int> all(static_cast<std::size_t>(size_));
  for (int r = 0; r < size_; ++r) all[static_cast<std::size_t>(r)] = r;

  std::mutex err_mu;
  std::exception_ptr first;
  auto worker = [&](int r) {
    Communicator comm(fabric_, all, r, 0);
    try {
      body(comm);
    } catch (const AbortedError&) {
      // secondary; the root cause is recorded by the failing rank
    } catch (...) {
      {
        std::lock_guard lock(err_mu);
        if (!first) first = std::current_exception();
      }
      fabric_->abort();
    }
  };

  if (size_ == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(size_));
    for (int r = 0; r < size_; ++r) threads.emplace_back(worker, r);
  }

  if (first) {
    fabric_->broken = true;
    std::rethrow_exception(first);
  }
  if (fabric_->aborted) {
    fabric_->broken = true;
    throw TransportError("world aborted without a recorded cause");
  }
  std::lock_guard lock(fabric_->mu);
  if (!fabric_->boxes.empty()) {
    fabric_->broken = true;
    throw TransportError("unreceived messages left after run (" + std::to_string(fabric_->boxes.size()) +
                         " mailboxes)");
  }
}

TrafficCounters World::counters(int world_rank) const {
  return fabric_->counters.at(static_cast<std::size_t>(world_rank));
}

std::vector<TraceRecord> World::trace(int world_rank) const {
  return fabric_->traces.at(static_cast<std::size_t>(world_rank));
}

namespace {

void put_le(std::ofstream& out, std::uint64_t v, int bytes) {
  char buf[8];
  for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, bytes);
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void World::write_trace(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TransportError("cannot write trace to " + path.string());
  out.write(kTraceMagic, sizeof kTraceMagic);
  for (const auto& rank_trace : fabric_->traces) {
    for (const auto& r : rank_trace) {
      put_le(out, static_cast<std::uint64_t>(r.phase), 4);
      put_le(out, r.src, 4);
      put_le(out, r.dst, 4);
      put_le(out, r.context, 4);
      put_le(out, r.words, 8);
    }
  }
}

std::vector<TraceRecord> World::read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TransportError("cannot read trace " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kTraceMagic))
    throw TransportError("not a trace file: " + path.string());
  std::vector<TraceRecord> out;
  unsigned char rec[24];
  while (in.read(reinterpret_cast<char*>(rec), 24)) {
    out.push_back({static_cast<Phase>(get_le(rec, 4)), static_cast<std::uint32_t>(get_le(rec + 4, 4)),
                   static_cast<std::uint32_t>(get_le(rec + 8, 4)), static_cast<std::uint32_t>(get_le(rec + 12, 4)),
                   get_le(rec + 16, 8)});
  }
  if (in.gcount() != 0) throw TransportError("truncated trace record in " + path.string());
  return out;
}

}  // namespace spc3d
