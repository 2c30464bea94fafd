#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "andhra/network.hpp"
#include "andhra/tensor.hpp"
#include "andhra/trainer.hpp"

namespace andhra {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;

  bool operator==(const NamedArray&) const = default;
};

// Versioned training snapshot. Binary layout (all integers and doubles
// little-endian):
//   "ANDHRACK" u32 version
//   str spec                      (u32 length + bytes, NetworkSpec::to_text)
//   str metadata                  (free text, e.g. config hash and version)
//   arrays params, arrays buffers (u64 count, then per array: str name,
//                                  u32 rank, u64 extents, f64 values)
//   f64 momentum, f64 weight_decay, arrays velocity
//   u8 has_trainer [u64 epoch, u64 cursor, u64 n, u64 permutation[n],
//                   u64 rng[4], f64 loss_sum, u64 batches, u64 seen,
//                   u64 h, u64 correct[h], u64 correct_combined]
//   u64 FNV-1a of everything before it
// Buffers are named "<batchnorm>.running_mean" / ".running_var".
struct Checkpoint {
  NetworkSpec spec;
  std::string metadata;
  std::vector<NamedArray> params;
  std::vector<NamedArray> buffers;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<NamedArray> velocity;  // empty before the first step
  bool has_trainer = false;
  TrainerState trainer;
};

Checkpoint capture_checkpoint(NetworkTree& tree, const Trainer* trainer = nullptr);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file);
Checkpoint read_checkpoint(const std::filesystem::path& file);

NetworkTree restore_tree(const Checkpoint& ckpt);
void restore_trainer(Trainer& trainer, const Checkpoint& ckpt);

// Baseline-shaped checkpoint holding the route of `head` (parameters,
// buffers and velocities); a single-head checkpoint comes back unchanged.
Checkpoint detach_checkpoint(const Checkpoint& ckpt, const HeadId& head);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace andhra
