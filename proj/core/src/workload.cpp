#include "optmig/workload.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <string>
#include <vector>

#include "optmig/error.hpp"

namespace optmig {
namespace {

constexpr std::uint64_t kP1 = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kP2 = 0xC2B2AE3D27D4EB4Full;

std::uint64_t rotl(std::uint64_t x, int r) noexcept { return (x << r) | (x >> (64 - r)); }

// Roots are u64 slots at the start of the data segment.
std::uint64_t root(HeapAccess& h, std::size_t i) {
  auto seg = h.data_segment();
  if ((i + 1) * 8 > seg.size()) throw Error(ErrorCode::ConfigInvalid, "data segment too small");
  std::uint64_t v = 0;
  std::memcpy(&v, seg.data() + i * 8, 8);
  return v;
}

void set_root(HeapAccess& h, std::size_t i, std::uint64_t v) {
  auto seg = h.data_segment();
  if ((i + 1) * 8 > seg.size()) throw Error(ErrorCode::ConfigInvalid, "data segment too small");
  std::memcpy(seg.data() + i * 8, &v, 8);
}

void fill_words(std::span<std::byte> out, std::uint64_t seed) {
  std::uint64_t s = seed;
  for (std::size_t i = 0; i + 8 <= out.size(); i += 8) {
    s += kP1;
    const std::uint64_t w = mix64(s);
    std::memcpy(out.data() + i, &w, 8);
  }
}

// Writes seed-derived content into every page of a region.
void fill_region(HeapAccess& h, Bytes offset, Bytes size, std::uint64_t seed) {
  Page buf{};
  for (Bytes done = 0; done < size; done += kPageSize) {
    const Bytes n = std::min<Bytes>(kPageSize, size - done);
    fill_words(buf, mix64(seed ^ (offset + done)));
    h.write(offset + done, std::span<const std::byte>(buf.data(), n));
  }
}

std::uint64_t hash_region(HeapAccess& h, Bytes offset, Bytes size, std::uint64_t seed) {
  std::vector<std::byte> buf(64 * KiB);
  std::uint64_t acc = seed;
  for (Bytes done = 0; done < size; done += buf.size()) {
    const Bytes n = std::min<Bytes>(buf.size(), size - done);
    h.read(offset + done, std::span<std::byte>(buf.data(), n));
    acc = hash_bytes(std::span<const std::byte>(buf.data(), n), acc);
  }
  return acc;
}

std::uint64_t hash_roots(HeapAccess& h, std::size_t n) {
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc = mix64(acc ^ root(h, i));
  return acc;
}

// ---------------------------------------------------------------------------

class EcallLoop final : public Workload {
 public:
  using Workload::Workload;

  // roots: state, resident offset, resident size
  void setup(HeapAccess& h) override {
    const Allocation state = h.malloc(kPageSize);
    set_root(h, 0, state.offset);
    const Bytes ws = spec_.resolved_working_set();
    if (ws > 0) {
      const Allocation res = h.malloc(ws);
      set_root(h, 1, res.offset);
      set_root(h, 2, ws);
    }
  }

  std::uint64_t step(HeapAccess& h, std::uint64_t op) override {
    const Bytes state = root(h, 0);
    const std::uint64_t c = h.load<std::uint64_t>(state) + 1;
    h.store(state, c);
    std::uint64_t v = 0;
    if (const Bytes size = root(h, 2)) {
      const std::uint64_t r = rand(op);
      const Bytes addr = root(h, 1) + (r % (size / 8)) * 8;
      v = h.load<std::uint64_t>(addr);
      h.store(addr, v ^ r);
    }
    return mix64(c ^ rotl(v, 17));
  }

  std::uint64_t digest(HeapAccess& h) override {
    std::uint64_t d = hash_region(h, root(h, 0), kPageSize, hash_roots(h, 3));
    if (root(h, 2)) d = hash_region(h, root(h, 1), root(h, 2), d);
    return d;
  }
};

class KeyValue final : public Workload {
 public:
  explicit KeyValue(WorkloadSpec spec) : Workload(spec) {
    if (spec_.keys == 0 || spec_.value_size < 8 || spec_.value_size % 8 != 0) {
      throw Error(ErrorCode::ConfigInvalid, "KeyValue needs keys > 0 and 8-byte aligned values");
    }
  }

  // roots: index offset (keys x {version, hash}), values offset
  void setup(HeapAccess& h) override {
    const Allocation index = h.malloc(spec_.keys * 16);
    const Allocation values = h.malloc(spec_.keys * spec_.value_size);
    set_root(h, 0, index.offset);
    set_root(h, 1, values.offset);
    std::vector<std::byte> value(spec_.value_size);
    for (std::uint64_t k = 0; k < spec_.keys; ++k) {
      fill_words(value, mix64(spec_.seed ^ (k * kP2)));
      h.write(values.offset + k * spec_.value_size, value);
      const std::array<std::uint64_t, 2> entry{0, hash_bytes(value)};
      h.write(index.offset + k * 16, std::as_bytes(std::span(entry)));
    }
  }

  std::uint64_t step(HeapAccess& h, std::uint64_t op) override {
    const std::uint64_t r = rand(op);
    const std::uint64_t key = r % spec_.keys;
    const Bytes entry_at = root(h, 0) + key * 16;
    const Bytes value_at = root(h, 1) + key * spec_.value_size;
    thread_local std::vector<std::byte> value;
    value.resize(spec_.value_size);
    if ((r >> 32) % 100 < spec_.set_percent) {
      fill_words(value, rand(op, 1));
      h.write(value_at, value);
      const std::array<std::uint64_t, 2> entry{op + 1, hash_bytes(value)};
      h.write(entry_at, std::as_bytes(std::span(entry)));
      return mix64(entry[0] ^ entry[1]);
    }
    std::array<std::uint64_t, 2> entry{};
    h.read(entry_at, std::as_writable_bytes(std::span(entry)));
    h.read(value_at, value);
    const std::uint64_t got = hash_bytes(value);
    if (got != entry[1]) {
      throw Error(ErrorCode::IntegrityFailure, "KVS value does not match its index entry");
    }
    return mix64(entry[0] ^ got ^ key);
  }

  std::uint64_t digest(HeapAccess& h) override {
    const std::uint64_t d = hash_region(h, root(h, 0), spec_.keys * 16, hash_roots(h, 2));
    return hash_region(h, root(h, 1), spec_.keys * spec_.value_size, d);
  }
};

class SequentialScan final : public Workload {
 public:
  using Workload::Workload;

  // roots: region offset, page count, cursor, running hash
  void setup(HeapAccess& h) override {
    const Bytes ws = spec_.resolved_working_set();
    const Allocation a = h.malloc(ws);
    set_root(h, 0, a.offset);
    set_root(h, 1, pages_for(ws));
    set_root(h, 2, 0);
    set_root(h, 3, spec_.seed);
    fill_region(h, a.offset, ws, spec_.seed);
  }

  std::uint64_t step(HeapAccess& h, std::uint64_t op) override {
    const Bytes base = root(h, 0);
    const std::uint64_t pages = root(h, 1);
    const std::uint64_t cursor = root(h, 2);
    Page page{};
    const Bytes at = base + cursor * kPageSize;
    h.read(at, page);
    const std::uint64_t hp = hash_bytes(page);
    if (op % 8 == 0) {
      // In-place keystream pass over the page.
      Page ks{};
      fill_words(ks, rand(op));
      for (std::size_t i = 0; i < kPageSize; ++i) page[i] ^= ks[i];
      h.write(at, page);
    }
    set_root(h, 2, (cursor + 1) % pages);
    const std::uint64_t running = mix64(root(h, 3) ^ hp);
    set_root(h, 3, running);
    return running;
  }

  std::uint64_t digest(HeapAccess& h) override {
    return hash_region(h, root(h, 0), root(h, 1) * kPageSize, hash_roots(h, 4));
  }
};

class RandomProbe final : public Workload {
 public:
  using Workload::Workload;

  static constexpr Bytes kBucket = 16;  // {key, value}; key 0 means empty

  // roots: table offset, bucket count, live keys
  void setup(HeapAccess& h) override {
    const Bytes ws = spec_.resolved_working_set();
    const std::uint64_t buckets = ws / kBucket;
    if (buckets < 16) throw Error(ErrorCode::ConfigInvalid, "RandomProbe table too small");
    const Allocation t = h.malloc(buckets * kBucket);
    set_root(h, 0, t.offset);
    set_root(h, 1, buckets);
    set_root(h, 2, 0);
    for (std::uint64_t i = 0; i < buckets / 4; ++i) upsert(h, key_of(i), mix64(spec_.seed + i));
  }

  std::uint64_t step(HeapAccess& h, std::uint64_t op) override {
    const std::uint64_t r = rand(op);
    const std::uint64_t buckets = root(h, 1);
    const std::uint64_t key = key_of((r >> 8) % (buckets / 2));
    if (r % 100 < 20) return upsert(h, key, r);
    return mix64(probe(h, key) ^ key);
  }

  std::uint64_t digest(HeapAccess& h) override {
    return hash_region(h, root(h, 0), root(h, 1) * kBucket, hash_roots(h, 3));
  }

 private:
  std::uint64_t key_of(std::uint64_t i) const noexcept { return mix64(spec_.seed ^ (i * kP1)) | 1; }

  std::uint64_t probe(HeapAccess& h, std::uint64_t key) {
    const Bytes base = root(h, 0);
    const std::uint64_t buckets = root(h, 1);
    for (std::uint64_t i = 0, b = key % buckets; i < buckets; ++i, b = (b + 1) % buckets) {
      std::array<std::uint64_t, 2> e{};
      h.read(base + b * kBucket, std::as_writable_bytes(std::span(e)));
      if (e[0] == key) return e[1];
      if (e[0] == 0) return 0;
    }
    return 0;
  }

  std::uint64_t upsert(HeapAccess& h, std::uint64_t key, std::uint64_t value) {
    const Bytes base = root(h, 0);
    const std::uint64_t buckets = root(h, 1);
    for (std::uint64_t i = 0, b = key % buckets; i < buckets; ++i, b = (b + 1) % buckets) {
      std::array<std::uint64_t, 2> e{};
      h.read(base + b * kBucket, std::as_writable_bytes(std::span(e)));
      if (e[0] == key || e[0] == 0) {
        if (e[0] == 0) {
          const std::uint64_t live = root(h, 2);
          if (live + 1 >= buckets) throw Error(ErrorCode::OutOfEnclaveMemory, "probe table full");
          set_root(h, 2, live + 1);
        }
        const std::uint64_t old = e[1];
        e = {key, value};
        h.write(base + b * kBucket, std::as_bytes(std::span(e)));
        return mix64(old ^ value);
      }
    }
    throw Error(ErrorCode::OutOfEnclaveMemory, "probe table full");
  }
};

class GraphTraversal final : public Workload {
 public:
  using Workload::Workload;

  static constexpr std::uint64_t kDegree = 8;
  // offsets (8) + edges (4 x degree) + visit tag (8) + queue slot (4)
  static constexpr Bytes kPerVertex = 8 + 4 * kDegree + 8 + 4;

  // roots: offsets, edges, tags, queue, V, head, tail, epoch
  void setup(HeapAccess& h) override {
    const std::uint64_t v = std::max<std::uint64_t>(spec_.resolved_working_set() / kPerVertex, 16);
    const Allocation offs = h.malloc((v + 1) * 8);
    const Allocation edges = h.malloc(v * kDegree * 4);
    const Allocation tags = h.malloc(v * 8);
    const Allocation queue = h.malloc(v * 4);
    set_root(h, 0, offs.offset);
    set_root(h, 1, edges.offset);
    set_root(h, 2, tags.offset);
    set_root(h, 3, queue.offset);
    set_root(h, 4, v);
    set_root(h, 5, 0);
    set_root(h, 6, 0);
    set_root(h, 7, 0);

    constexpr std::uint64_t kChunk = 512;
    std::vector<std::uint64_t> ob;
    std::vector<std::uint32_t> eb;
    for (std::uint64_t first = 0; first <= v; first += kChunk) {
      const std::uint64_t last = std::min(v + 1, first + kChunk);
      ob.clear();
      for (std::uint64_t u = first; u < last; ++u) ob.push_back(u * kDegree);
      h.write(offs.offset + first * 8, std::as_bytes(std::span(ob)));
      eb.clear();
      for (std::uint64_t u = first; u < std::min(last, v); ++u) {
        eb.push_back(static_cast<std::uint32_t>((u + 1) % v));
        for (std::uint64_t j = 1; j < kDegree; ++j) {
          eb.push_back(static_cast<std::uint32_t>(mix64(spec_.seed ^ (u * kDegree + j)) % v));
        }
      }
      if (!eb.empty()) h.write(edges.offset + first * kDegree * 4, std::as_bytes(std::span(eb)));
    }
  }

  std::uint64_t step(HeapAccess& h, std::uint64_t op) override {
    const Bytes offs = root(h, 0), edges = root(h, 1), tags = root(h, 2), queue = root(h, 3);
    const std::uint64_t v = root(h, 4);
    std::uint64_t head = root(h, 5), tail = root(h, 6), epoch = root(h, 7);
    if (head == tail) {
      // Frontier exhausted: start a new traversal from a fresh root.
      ++epoch;
      const auto src = static_cast<std::uint32_t>(rand(op) % v);
      h.store(tags + std::uint64_t{src} * 8, epoch);
      h.store(queue, src);
      head = 0;
      tail = 1;
    }
    const std::uint64_t u = h.load<std::uint32_t>(queue + head * 4);
    ++head;
    const std::uint64_t begin = h.load<std::uint64_t>(offs + u * 8);
    std::array<std::uint32_t, kDegree> nbr{};
    h.read(edges + begin * 4, std::as_writable_bytes(std::span(nbr)));
    std::uint64_t acc = mix64(u ^ epoch);
    for (std::uint32_t w : nbr) {
      const Bytes tag_at = tags + std::uint64_t{w} * 8;
      if (h.load<std::uint64_t>(tag_at) != epoch) {
        h.store(tag_at, epoch);
        h.store(queue + tail * 4, w);
        ++tail;
        acc = mix64(acc ^ w);
      }
    }
    set_root(h, 5, head);
    set_root(h, 6, tail);
    set_root(h, 7, epoch);
    return acc;
  }

  std::uint64_t digest(HeapAccess& h) override {
    const std::uint64_t v = root(h, 4);
    std::uint64_t d = hash_roots(h, 8);
    d = hash_region(h, root(h, 0), (v + 1) * 8, d);
    d = hash_region(h, root(h, 1), v * kDegree * 4, d);
    d = hash_region(h, root(h, 2), v * 8, d);
    return hash_region(h, root(h, 3), v * 4, d);
  }
};

class TwoRegionAB final : public Workload {
 public:
  explicit TwoRegionAB(WorkloadSpec spec) : Workload(spec) {
    if (spec_.hot_region != 'A' && spec_.hot_region != 'B') {
      throw Error(ErrorCode::ConfigInvalid, "hot_region must be 'A' or 'B'");
    }
    if (spec_.region_a_bytes < 8 || spec_.region_b_bytes < 8) {
      throw Error(ErrorCode::ConfigInvalid, "TwoRegionAB regions must hold at least 8 bytes");
    }
  }

  // roots: A offset, B offset
  void setup(HeapAccess& h) override {
    const Allocation a = h.malloc(spec_.region_a_bytes);
    const Allocation b = h.malloc(spec_.region_b_bytes);
    set_root(h, 0, a.offset);
    set_root(h, 1, b.offset);
    fill_region(h, a.offset, spec_.region_a_bytes, spec_.seed);
    fill_region(h, b.offset, spec_.region_b_bytes, spec_.seed + 1);
  }

  std::uint64_t step(HeapAccess& h, std::uint64_t op) override {
    const bool hot_b = spec_.hot_region == 'B';
    const Bytes base = root(h, hot_b ? 1 : 0);
    const Bytes size = hot_b ? spec_.region_b_bytes : spec_.region_a_bytes;
    const std::uint64_t r = rand(op);
    const Bytes at = base + (r % (size / 8)) * 8;
    const auto v = h.load<std::uint64_t>(at);
    h.store(at, v + r);
    return mix64(v ^ r);
  }

  std::uint64_t digest(HeapAccess& h) override {
    const std::uint64_t d = hash_region(h, root(h, 0), spec_.region_a_bytes, hash_roots(h, 2));
    return hash_region(h, root(h, 1), spec_.region_b_bytes, d);
  }
};

}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

std::uint64_t hash_bytes(std::span<const std::byte> bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = seed ^ (bytes.size() * kP1);
  std::size_t i = 0;
  for (; i + 8 <= bytes.size(); i += 8) {
    std::uint64_t w = 0;
    std::memcpy(&w, bytes.data() + i, 8);
    h = rotl(h ^ (w * kP2), 31) * kP1;
  }
  std::uint64_t tail = 0;
  if (i < bytes.size()) {
    std::memcpy(&tail, bytes.data() + i, bytes.size() - i);
    h = rotl(h ^ (tail * kP2), 31) * kP1;
  }
  return mix64(h);
}

std::uint64_t Workload::rand(std::uint64_t op, std::uint64_t salt) const noexcept {
  return mix64(spec_.seed * kP1 + mix64(op ^ (salt << 56)));
}

std::string_view to_string(WorkloadKind kind) noexcept {
  switch (kind) {
    case WorkloadKind::EcallLoop: return "ecall-loop";
    case WorkloadKind::KeyValue: return "kvs";
    case WorkloadKind::SequentialScan: return "sequential-scan";
    case WorkloadKind::RandomProbe: return "random-probe";
    case WorkloadKind::GraphTraversal: return "graph-traversal";
    case WorkloadKind::TwoRegionAB: return "two-region-ab";
  }
  return "?";
}

WorkloadKind workload_from_string(std::string_view s) {
  for (auto k : {WorkloadKind::EcallLoop, WorkloadKind::KeyValue, WorkloadKind::SequentialScan,
                 WorkloadKind::RandomProbe, WorkloadKind::GraphTraversal,
                 WorkloadKind::TwoRegionAB}) {
    if (s == to_string(k)) return k;
  }
  if (s == "EcallLoop") return WorkloadKind::EcallLoop;
  if (s == "KeyValue" || s == "kv") return WorkloadKind::KeyValue;
  if (s == "SequentialScan") return WorkloadKind::SequentialScan;
  if (s == "RandomProbe") return WorkloadKind::RandomProbe;
  if (s == "GraphTraversal") return WorkloadKind::GraphTraversal;
  if (s == "TwoRegionAB" || s == "ab") return WorkloadKind::TwoRegionAB;
  throw Error(ErrorCode::ConfigInvalid, "unknown workload '" + std::string(s) + "'");
}

Bytes WorkloadSpec::resolved_working_set() const noexcept {
  if (working_set_bytes > 0) return working_set_bytes;
  switch (kind) {
    case WorkloadKind::EcallLoop:
      // A resident region filling the rest of the heap.
      return heap_bytes > kPageSize ? heap_bytes - kPageSize : 0;
    case WorkloadKind::KeyValue: return keys * (16 + value_size);
    case WorkloadKind::TwoRegionAB: return region_a_bytes + region_b_bytes;
    default: return std::min<Bytes>(8 * MiB, heap_bytes / 2);
  }
}

Nanos WorkloadSpec::resolved_op_cost() const noexcept {
  if (op_cost.count() > 0) return op_cost;
  switch (kind) {
    case WorkloadKind::EcallLoop: return Nanos{10'000};
    case WorkloadKind::KeyValue: return Nanos{25'000};
    default: return Nanos{20'000};
  }
}

std::unique_ptr<Workload> make_workload(const WorkloadSpec& spec) {
  if (spec.ops == 0) throw Error(ErrorCode::ConfigInvalid, "workload needs at least one op");
  switch (spec.kind) {
    case WorkloadKind::EcallLoop: return std::make_unique<EcallLoop>(spec);
    case WorkloadKind::KeyValue: return std::make_unique<KeyValue>(spec);
    case WorkloadKind::SequentialScan: return std::make_unique<SequentialScan>(spec);
    case WorkloadKind::RandomProbe: return std::make_unique<RandomProbe>(spec);
    case WorkloadKind::GraphTraversal: return std::make_unique<GraphTraversal>(spec);
    case WorkloadKind::TwoRegionAB: return std::make_unique<TwoRegionAB>(spec);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown workload kind");
}

}  // namespace optmig
