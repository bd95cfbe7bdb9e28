#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "stwo/errors.hpp"
#include "stwo/training.hpp"

// Layout, all integers little-endian:
//   "STWO" | u32 version | u32 len, config JSON | u64 step | u32 len, RNG state text
//   | u32 entry count | entries | u64 payload size | payload | u32 CRC-32 of payload
// entry: u16 len, name | u8 dtype (0 = f32) | u8 ndim | i64 dims... | u64 offset | u64 nbytes | u64 aux
// Parameters of the generator and discriminator appear as "name", "name#adam_m",
// "name#adam_v" (aux = Adam step count); EMA copies as "ema.name".

namespace stwo {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'T', 'W', 'O'};

class Writer {
 public:
  template <typename V>
  void put(V v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(V));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string32(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  template <typename V>
  V get() {
    V v;
    std::memcpy(&v, take(sizeof(V)), sizeof(V));
    return v;
  }
  std::string get_string(std::size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > b_.size() - pos_) throw FormatError("checkpoint is truncated");
    const auto* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::string name;
  Shape shape;
  const float* data = nullptr;
  std::uint64_t nbytes = 0, aux = 0;
};

std::vector<Entry> collect(const TrainState& s) {
  std::vector<Entry> out;
  auto add = [&](std::string name, const Shape& shape, const float* data, std::size_t count, std::uint64_t aux) {
    out.push_back({std::move(name), shape, data, count * sizeof(float), aux});
  };
  for (const auto* set : {&s.g_params, &s.d_params})
    for (const auto& p : set->items()) {
      add(p.name, p.tensor.shape(), p.tensor.ptr(), static_cast<std::size_t>(p.tensor.numel()), p.step_count);
      add(p.name + "#adam_m", p.tensor.shape(), p.adam_m.data(), p.adam_m.size(), p.step_count);
      add(p.name + "#adam_v", p.tensor.shape(), p.adam_v.data(), p.adam_v.size(), p.step_count);
    }
  for (const auto& p : s.ema_params.items())
    add("ema." + p.name, p.tensor.shape(), p.tensor.ptr(), static_cast<std::size_t>(p.tensor.numel()), 0);
  return out;
}

struct Loaded {
  Shape shape;
  const std::uint8_t* data = nullptr;
  std::uint64_t offset = 0, nbytes = 0, aux = 0;
};

bool same_bits(const float* a, const float* b, std::size_t n) { return std::memcmp(a, b, n * sizeof(float)) == 0; }

void restore(std::vector<float>& dst, const Loaded& src, const std::string& name) {
  if (src.nbytes != dst.size() * sizeof(float))
    throw FormatError("checkpoint entry '" + name + "' has " + std::to_string(src.nbytes) + " bytes, expected " +
                      std::to_string(dst.size() * sizeof(float)));
  std::memcpy(dst.data(), src.data, src.nbytes);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& s) {
  const auto entries = collect(s);
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(kCheckpointVersion);
  w.put_string32(to_json(s.cfg));
  w.put(static_cast<std::uint64_t>(s.step));
  std::ostringstream rng_text;
  rng_text << s.rng;
  w.put_string32(rng_text.str());
  w.put(static_cast<std::uint32_t>(entries.size()));
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    w.put(static_cast<std::uint16_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put(std::uint8_t{0});
    w.put(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.put(static_cast<std::int64_t>(d));
    w.put(offset);
    w.put(e.nbytes);
    w.put(e.aux);
    offset += e.nbytes;
  }
  w.put(offset);
  const auto payload_start = w.bytes().size();
  for (const auto& e : entries) w.put_bytes(e.data, e.nbytes);
  const auto crc = crc32(0L, w.bytes().data() + payload_start, static_cast<uInt>(offset));
  w.put(static_cast<std::uint32_t>(crc));
  return std::move(w.bytes());
}

std::unique_ptr<TrainState> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(4), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const auto cfg_text = r.get_string(r.get<std::uint32_t>());
  const auto step = r.get<std::uint64_t>();
  const auto rng_text = r.get_string(r.get<std::uint32_t>());
  const auto count = r.get<std::uint32_t>();
  std::vector<std::pair<std::string, Loaded>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string(r.get<std::uint16_t>());
    if (r.get<std::uint8_t>() != 0) throw FormatError("checkpoint entry '" + name + "' has an unknown dtype");
    Loaded e;
    e.shape.resize(r.get<std::uint8_t>());
    for (auto& d : e.shape) d = r.get<std::int64_t>();
    e.offset = r.get<std::uint64_t>();
    e.nbytes = r.get<std::uint64_t>();
    e.aux = r.get<std::uint64_t>();
    table.emplace_back(std::move(name), e);
  }
  const auto payload_size = r.get<std::uint64_t>();
  if (payload_size + 4 != r.remaining()) throw FormatError("checkpoint is truncated or has trailing bytes");
  const auto* payload = r.take(payload_size);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, r.take(4), 4);
  if (crc32(0L, payload, static_cast<uInt>(payload_size)) != stored_crc) throw FormatError("checkpoint checksum mismatch");
  std::map<std::string, Loaded> by_name;
  for (auto& [name, e] : table) {
    if (e.offset > payload_size || e.nbytes > payload_size - e.offset)
      throw FormatError("checkpoint entry '" + name + "' lies outside the payload");
    e.data = payload + e.offset;
    by_name[name] = e;
  }

  TrainConfig cfg;
  try {
    cfg = parse_train_config(cfg_text);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  auto state = std::make_unique<TrainState>(cfg);
  auto find = [&](const std::string& name, const Shape& shape) -> const Loaded& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape != shape)
      throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(it->second.shape) + ", expected " +
                        shape_str(shape));
    return it->second;
  };
  auto restore_tensor = [&](Tensor<float>& t, const Loaded& e, const std::string& name) {
    if (e.nbytes != static_cast<std::uint64_t>(t.numel()) * sizeof(float))
      throw FormatError("checkpoint entry '" + name + "' has the wrong size");
    std::memcpy(t.mutable_ptr(), e.data, e.nbytes);
  };
  for (auto* set : {&state->g_params, &state->d_params})
    for (auto& p : set->items()) {
      const auto& v = find(p.name, p.tensor.shape());
      restore_tensor(p.tensor, v, p.name);
      restore(p.adam_m, find(p.name + "#adam_m", p.tensor.shape()), p.name + "#adam_m");
      restore(p.adam_v, find(p.name + "#adam_v", p.tensor.shape()), p.name + "#adam_v");
      p.step_count = v.aux;
    }
  for (auto& p : state->ema_params.items()) restore_tensor(p.tensor, find("ema." + p.name, p.tensor.shape()), "ema." + p.name);
  std::istringstream rng_in(rng_text);
  rng_in >> state->rng;
  if (!rng_in) throw FormatError("checkpoint RNG state is malformed");
  state->step = step;
  return state;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(state);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

bool states_equal(const TrainState& a, const TrainState& b) {
  if (to_json(a.cfg) != to_json(b.cfg) || a.step != b.step || a.rng != b.rng) return false;
  auto same = [](const ParameterSet<float>& x, const ParameterSet<float>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& p = x.items()[i];
      const auto& q = y.items()[i];
      if (p.name != q.name || p.step_count != q.step_count || p.tensor.shape() != q.tensor.shape()) return false;
      const auto n = static_cast<std::size_t>(p.tensor.numel());
      if (!same_bits(p.tensor.ptr(), q.tensor.ptr(), n) || !same_bits(p.adam_m.data(), q.adam_m.data(), n) ||
          !same_bits(p.adam_v.data(), q.adam_v.data(), n))
        return false;
    }
    return true;
  };
  return same(a.g_params, b.g_params) && same(a.d_params, b.d_params) && same(a.ema_params, b.ema_params);
}

}  // namespace stwo
