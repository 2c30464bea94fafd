#include "andhra/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "andhra/error.hpp"

namespace andhra {

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'A', 'N', 'D', 'H', 'R', 'A', 'C', 'K'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void arrays(const std::vector<NamedArray>& list) {
    u64(list.size());
    for (const auto& a : list) {
      str(a.name);
      u32(static_cast<std::uint32_t>(a.shape.size()));
      for (auto e : a.shape) u64(e);
      for (double v : a.values) f64(v);
    }
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size())
      throw FormatError("checkpoint truncated at offset " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<NamedArray> arrays() {
    const auto count = u64();
    std::vector<NamedArray> out;
    for (std::uint64_t i = 0; i < count; ++i) {
      NamedArray a;
      a.name = str();
      const auto rank = u32();
      if (rank > 8) throw FormatError("checkpoint: implausible rank for '" + a.name + "'");
      for (std::uint32_t r = 0; r < rank; ++r) a.shape.push_back(static_cast<std::size_t>(u64()));
      const std::size_t n = shape_numel(a.shape);
      need(n * 8);
      a.values.resize(n);
      for (auto& v : a.values) v = f64();
      out.push_back(std::move(a));
    }
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

NamedArray snapshot(const std::string& name, const Tensor& t) {
  const auto d = t.data();
  return {name, t.shape(), std::vector<double>(d.begin(), d.end())};
}

}  // namespace

Checkpoint capture_checkpoint(NetworkTree& tree, const Trainer* trainer) {
  Checkpoint ck;
  ck.spec = tree.spec();
  auto plist = tree.parameters();
  for (const auto& p : plist.params) ck.params.push_back(snapshot(p.name, p.tensor));
  for (const auto& b : plist.buffers) {
    const std::size_t c = b.stats->mean.size();
    ck.buffers.push_back({b.name + ".running_mean", {c}, b.stats->mean});
    ck.buffers.push_back({b.name + ".running_var", {c}, b.stats->var});
  }
  if (trainer) {
    const auto& opt = trainer->optimizer();
    ck.momentum = opt.momentum;
    ck.weight_decay = opt.weight_decay;
    for (std::size_t i = 0; i < opt.velocity.size(); ++i)
      if (!opt.velocity[i].empty())
        ck.velocity.push_back({plist.params[i].name, plist.params[i].tensor.shape(), opt.velocity[i]});
    ck.has_trainer = true;
    ck.trainer = trainer->state();
  }
  return ck;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(ck.spec.to_text());
  w.str(ck.metadata);
  w.arrays(ck.params);
  w.arrays(ck.buffers);
  w.f64(ck.momentum);
  w.f64(ck.weight_decay);
  w.arrays(ck.velocity);
  w.u8(ck.has_trainer ? 1 : 0);
  if (ck.has_trainer) {
    const auto& t = ck.trainer;
    w.u64(t.epoch);
    w.u64(t.cursor);
    w.u64(t.permutation.size());
    for (auto i : t.permutation) w.u64(i);
    for (auto s : t.rng) w.u64(s);
    w.f64(t.loss_sum);
    w.u64(t.batches);
    w.u64(t.seen);
    w.u64(t.correct_per_head.size());
    for (auto c : t.correct_per_head) w.u64(c);
    w.u64(t.correct_combined);
  }
  const auto& body = w.bytes();
  w.u64(fnv1a64(body.data(), body.size()));
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("not a checkpoint (bad magic)");
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + i]) << (8 * i);
  if (stored != fnv1a64(bytes.data(), bytes.size() - 8)) throw FormatError("checkpoint checksum mismatch");

  Reader r(bytes);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8();
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.spec = NetworkSpec::from_text(r.str());
  ck.metadata = r.str();
  ck.params = r.arrays();
  ck.buffers = r.arrays();
  ck.momentum = r.f64();
  ck.weight_decay = r.f64();
  ck.velocity = r.arrays();
  ck.has_trainer = r.u8() != 0;
  if (ck.has_trainer) {
    auto& t = ck.trainer;
    t.epoch = static_cast<std::size_t>(r.u64());
    t.cursor = static_cast<std::size_t>(r.u64());
    const auto n = r.u64();
    r.need(n * 8);
    t.permutation.resize(static_cast<std::size_t>(n));
    for (auto& i : t.permutation) i = static_cast<std::size_t>(r.u64());
    for (auto& s : t.rng) s = r.u64();
    t.loss_sum = r.f64();
    t.batches = static_cast<std::size_t>(r.u64());
    t.seen = static_cast<std::size_t>(r.u64());
    const auto h = r.u64();
    r.need(h * 8);
    t.correct_per_head.resize(static_cast<std::size_t>(h));
    for (auto& c : t.correct_per_head) c = static_cast<std::size_t>(r.u64());
    t.correct_combined = static_cast<std::size_t>(r.u64());
  }
  if (r.pos() != bytes.size() - 8) throw FormatError("checkpoint has trailing bytes");
  return ck;
}

void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& file) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed on " + file.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + file.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

NetworkTree restore_tree(const Checkpoint& ck) {
  Rng scratch(0);
  NetworkTree tree = NetworkTree::build(ck.spec, scratch);
  auto plist = tree.parameters();
  if (plist.params.size() != ck.params.size())
    throw FormatError("checkpoint has " + std::to_string(ck.params.size()) + " parameters, spec implies " +
                      std::to_string(plist.params.size()));
  for (std::size_t i = 0; i < plist.params.size(); ++i) {
    auto& p = plist.params[i];
    const auto& a = ck.params[i];
    if (a.name != p.name || a.shape != p.tensor.shape())
      throw FormatError("checkpoint parameter '" + a.name + "' does not match '" + p.name + "'");
    std::copy(a.values.begin(), a.values.end(), p.tensor.data().begin());
  }
  std::map<std::string, const NamedArray*> buffers;
  for (const auto& b : ck.buffers) buffers[b.name] = &b;
  for (auto& b : plist.buffers) {
    const auto m = buffers.find(b.name + ".running_mean");
    const auto v = buffers.find(b.name + ".running_var");
    if (m == buffers.end() || v == buffers.end())
      throw FormatError("checkpoint lacks running statistics for '" + b.name + "'");
    if (m->second->values.size() != b.stats->mean.size() || v->second->values.size() != b.stats->var.size())
      throw FormatError("running statistics for '" + b.name + "' have the wrong size");
    b.stats->mean = m->second->values;
    b.stats->var = v->second->values;
  }
  return tree;
}

void restore_trainer(Trainer& trainer, const Checkpoint& ck) {
  if (!ck.has_trainer) throw FormatError("checkpoint carries no trainer state");
  // The trainer's tree fixes the parameter order; velocities are matched by name.
  OptimizerState opt;
  opt.momentum = ck.momentum;
  opt.weight_decay = ck.weight_decay;
  if (!ck.velocity.empty()) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ck.params.size(); ++i) index[ck.params[i].name] = i;
    opt.velocity.resize(ck.params.size());
    for (const auto& v : ck.velocity) {
      const auto it = index.find(v.name);
      if (it == index.end()) throw FormatError("velocity for unknown parameter '" + v.name + "'");
      opt.velocity[it->second] = v.values;
    }
  }
  trainer.restore(ck.trainer, std::move(opt));
}

Checkpoint detach_checkpoint(const Checkpoint& ck, const HeadId& head) {
  NetworkTree tree = restore_tree(ck);
  const std::size_t head_index = tree.head_index(head);
  if (tree.num_heads() == 1 && ck.spec.branching_factor == 1) return ck;

  std::map<std::string, std::string> lookup;
  for (const auto& [base, src] : tree.head_name_map(head)) lookup[base] = src;
  std::map<std::string, const NamedArray*> params, buffers, velocity;
  for (const auto& a : ck.params) params[a.name] = &a;
  for (const auto& a : ck.buffers) buffers[a.name] = &a;
  for (const auto& a : ck.velocity) velocity[a.name] = &a;

  Checkpoint out;
  out.spec = ck.spec.baseline();
  out.metadata = ck.metadata;
  out.momentum = ck.momentum;
  out.weight_decay = ck.weight_decay;
  Rng scratch(0);
  NetworkTree standalone = NetworkTree::build(out.spec, scratch);
  auto plist = standalone.parameters();
  for (const auto& p : plist.params) {
    const std::string& src = lookup.at(p.name);
    NamedArray a = *params.at(src);
    a.name = p.name;
    out.params.push_back(std::move(a));
    if (const auto v = velocity.find(src); v != velocity.end()) {
      NamedArray va = *v->second;
      va.name = p.name;
      out.velocity.push_back(std::move(va));
    }
  }
  for (const auto& b : plist.buffers) {
    const std::string& src = lookup.at(b.name);
    for (const char* suffix : {".running_mean", ".running_var"}) {
      NamedArray a = *buffers.at(src + suffix);
      a.name = b.name + suffix;
      out.buffers.push_back(std::move(a));
    }
  }
  out.has_trainer = ck.has_trainer;
  if (ck.has_trainer) {
    out.trainer = ck.trainer;
    out.trainer.correct_per_head.clear();
    if (head_index < ck.trainer.correct_per_head.size())
      out.trainer.correct_per_head.push_back(ck.trainer.correct_per_head[head_index]);
  }
  return out;
}

}  // namespace andhra
