#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "andhra/layers.hpp"
#include "andhra/rng.hpp"
#include "andhra/tensor.hpp"

namespace andhra {

inline constexpr std::size_t kHeadPoolKernel = 4;

// Heads after `num_splits` ANDHRA splits with branching factor N: N^splits.
std::size_t count_heads(std::size_t branching_factor, std::size_t num_splits);

// Level segments in a fully split tree up to level index L:
// 1 + N + ... + N^L, i.e. (N^(L+1) - 1) / (N - 1), and L + 1 when N = 1.
std::size_t count_blocks(std::size_t branching_factor, std::size_t level);

struct NetworkSpec {
  std::size_t branching_factor = 2;
  std::size_t levels = 4;
  // One entry per level transition (levels - 1); true places an ANDHRA
  // module at the end of that level.
  std::vector<bool> split_mask{true, true, true};
  std::size_t r_depth = 0;
  nn::ActivationKind activation = nn::ActivationKind::ReLU;
  std::size_t base_width = 64;
  std::size_t num_classes = 10;
  std::size_t in_channels = 3;
  std::size_t image_size = 32;

  void validate() const;

  std::size_t num_splits() const;
  std::size_t num_heads() const;
  std::size_t width(std::size_t level) const { return base_width << level; }
  // Spatial extent entering the head pooling layer.
  std::size_t final_extent() const { return image_size >> (levels - 1); }
  std::size_t classifier_features() const;

  // Same network with every split removed: what a single head looks like.
  NetworkSpec baseline() const;

  // Canonical "key = value" lines, one per field, in fixed order.
  std::string to_text() const;
  static NetworkSpec from_map(const std::map<std::string, std::string>& kv);
  static NetworkSpec from_text(const std::string& text);

  bool operator==(const NetworkSpec&) const = default;
};

std::string format_split_mask(const std::vector<bool>& mask);
std::vector<bool> parse_split_mask(const std::string& text);

// Branch choice at each split, earliest split first.
struct HeadId {
  std::vector<std::size_t> path;

  std::string str() const;  // "010"; "root" for the unsplit head
  bool operator==(const HeadId&) const = default;
};

enum class InitMode { Independent, SymmetricSiblings };

// One resolution level on one root-to-leaf route. Level 0 carries the stem,
// deeper levels begin with a downsampling ResBlockP. A segment ends either in
// an ANDHRA split, a single activation feeding one child, or (at the last
// level) a classifier head.
struct Segment {
  std::size_t level = 0;
  std::string name;                   // "L0", "L1.0", "L2.01", ...
  std::vector<std::size_t> path;      // split digits taken above this segment
  std::optional<nn::Stem> stem;
  std::optional<nn::ResBlockP> down;
  std::vector<nn::ResBlock> blocks;
  std::optional<nn::Andhra> split;
  std::optional<nn::Activation> exit;
  std::optional<nn::Linear> classifier;
  std::vector<std::unique_ptr<Segment>> children;
  std::size_t head_begin = 0;         // heads below are [head_begin, head_end)
  std::size_t head_end = 0;

  bool is_leaf() const { return classifier.has_value(); }
};

class NetworkTree {
 public:
  static NetworkTree build(const NetworkSpec& spec, Rng& rng,
                           InitMode init = InitMode::Independent);

  NetworkTree(NetworkTree&&) noexcept = default;
  NetworkTree& operator=(NetworkTree&&) noexcept = default;

  const NetworkSpec& spec() const { return spec_; }
  std::size_t num_heads() const { return heads_.size(); }
  const std::vector<HeadId>& heads() const { return heads_; }
  std::size_t head_index(const HeadId& id) const;  // throws LookupError
  std::size_t num_segments() const;

  // Logits [B, num_classes] per head in head order. Shared segments are
  // evaluated once and fanned out.
  std::vector<Tensor> forward_all_heads(const Tensor& batch, Mode mode);

  nn::ParameterList parameters();
  // Heads whose loss reaches the parameter (or buffer) with this name.
  std::pair<std::size_t, std::size_t> heads_under(const std::string& param_name) const;

  // Standalone baseline-shaped network holding the root-to-leaf path of `id`.
  NetworkTree detach_head(const HeadId& id);

  // Baseline parameter/buffer name -> name of the same tensor in this tree
  // along the route of `id`.
  std::vector<std::pair<std::string, std::string>> head_name_map(const HeadId& id);

  Segment& root() { return *root_; }
  const Segment& root() const { return *root_; }

 private:
  NetworkTree() = default;
  std::unique_ptr<Segment> build_segment(std::size_t level, std::vector<std::size_t> path,
                                         Rng& rng, InitMode init, std::size_t& next_head);
  void forward_segment(Segment& seg, Tensor x, Mode mode, std::vector<Tensor>& out);

  NetworkSpec spec_;
  std::unique_ptr<Segment> root_;
  std::vector<HeadId> heads_;
  std::map<std::string, const Segment*> by_name_;
};

}  // namespace andhra
