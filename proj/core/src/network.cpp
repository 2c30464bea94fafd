#include "andhra/network.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "andhra/error.hpp"
#include "andhra/ops.hpp"

namespace andhra {

std::size_t count_heads(std::size_t branching_factor, std::size_t num_splits) {
  std::size_t h = 1;
  for (std::size_t i = 0; i < num_splits; ++i) h *= branching_factor;
  return h;
}

std::size_t count_blocks(std::size_t branching_factor, std::size_t level) {
  if (branching_factor == 1) return level + 1;
  std::size_t power = 1;
  for (std::size_t i = 0; i <= level; ++i) power *= branching_factor;
  return (power - 1) / (branching_factor - 1);
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("network." + key + ": expected a non-negative integer, got '" + value + "'");
  return out;
}

}  // namespace

std::string format_split_mask(const std::vector<bool>& mask) {
  std::string s;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (i) s += ',';
    s += mask[i] ? '1' : '0';
  }
  return s;
}

std::vector<bool> parse_split_mask(const std::string& text) {
  std::vector<bool> mask;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char c) { return std::isspace(c); }),
              tok.end());
    if (tok.empty()) continue;
    if (tok == "1" || tok == "true" || tok == "T")
      mask.push_back(true);
    else if (tok == "0" || tok == "false" || tok == "F")
      mask.push_back(false);
    else
      throw ConfigError("split_mask: bad entry '" + tok + "'");
  }
  return mask;
}

void NetworkSpec::validate() const {
  if (branching_factor < 1) throw ConfigError("branching_factor must be >= 1");
  if (levels < 1) throw ConfigError("levels must be >= 1");
  if (split_mask.size() != levels - 1)
    throw ConfigError("split_mask needs " + std::to_string(levels - 1) + " entries, got " +
                      std::to_string(split_mask.size()));
  if (base_width < 1) throw ConfigError("base_width must be >= 1");
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  const std::size_t shrink = std::size_t{1} << (levels - 1);
  if (image_size % (shrink * kHeadPoolKernel) != 0)
    throw ConfigError("image_size " + std::to_string(image_size) + " cannot be halved " +
                      std::to_string(levels - 1) + " times and pooled by " +
                      std::to_string(kHeadPoolKernel));
}

std::size_t NetworkSpec::num_splits() const {
  if (branching_factor < 2) return 0;
  return static_cast<std::size_t>(std::count(split_mask.begin(), split_mask.end(), true));
}

std::size_t NetworkSpec::num_heads() const { return count_heads(branching_factor, num_splits()); }

std::size_t NetworkSpec::classifier_features() const {
  const std::size_t pooled = final_extent() / kHeadPoolKernel;
  return width(levels - 1) * pooled * pooled;
}

NetworkSpec NetworkSpec::baseline() const {
  NetworkSpec b = *this;
  b.branching_factor = 1;
  std::fill(b.split_mask.begin(), b.split_mask.end(), false);
  return b;
}

std::string NetworkSpec::to_text() const {
  std::ostringstream os;
  os << "branching_factor = " << branching_factor << '\n'
     << "levels = " << levels << '\n'
     << "split_mask = " << format_split_mask(split_mask) << '\n'
     << "r_depth = " << r_depth << '\n'
     << "activation = " << nn::to_string(activation) << '\n'
     << "base_width = " << base_width << '\n'
     << "num_classes = " << num_classes << '\n'
     << "in_channels = " << in_channels << '\n'
     << "image_size = " << image_size << '\n';
  return os.str();
}

NetworkSpec NetworkSpec::from_map(const std::map<std::string, std::string>& kv) {
  NetworkSpec s;
  bool mask_given = false;
  for (const auto& [key, value] : kv) {
    if (key == "branching_factor") s.branching_factor = parse_size(key, value);
    else if (key == "levels") s.levels = parse_size(key, value);
    else if (key == "split_mask") { s.split_mask = parse_split_mask(value); mask_given = true; }
    else if (key == "r_depth") s.r_depth = parse_size(key, value);
    else if (key == "activation") s.activation = nn::parse_activation(value);
    else if (key == "base_width") s.base_width = parse_size(key, value);
    else if (key == "num_classes") s.num_classes = parse_size(key, value);
    else if (key == "in_channels") s.in_channels = parse_size(key, value);
    else if (key == "image_size") s.image_size = parse_size(key, value);
    else throw ConfigError("unknown network key '" + key + "'");
  }
  // Without an explicit mask every transition splits.
  if (!mask_given) s.split_mask.assign(s.levels > 0 ? s.levels - 1 : 0, true);
  s.validate();
  return s;
}

NetworkSpec NetworkSpec::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return from_map(kv);
}

std::string HeadId::str() const {
  if (path.empty()) return "root";
  std::string s;
  for (auto d : path) s += std::to_string(d);
  return s;
}

namespace {

std::string segment_name(std::size_t level, const std::vector<std::size_t>& path) {
  std::string name = "L" + std::to_string(level);
  if (!path.empty()) {
    name += '.';
    for (auto d : path) name += std::to_string(d);
  }
  return name;
}

// Everything in a segment except its exit activations.
void collect_body(Segment& seg, const std::string& prefix, nn::ParameterList& out) {
  if (seg.stem) seg.stem->collect(prefix + "stem", out);
  if (seg.down) seg.down->collect(prefix + "down", out);
  for (std::size_t i = 0; i < seg.blocks.size(); ++i)
    seg.blocks[i].collect(prefix + "res" + std::to_string(i), out);
  if (seg.classifier) seg.classifier->collect(prefix + "fc", out);
}

void collect_segment(Segment& seg, nn::ParameterList& out) {
  const std::string prefix = seg.name + "/";
  collect_body(seg, prefix, out);
  if (seg.split) seg.split->collect(prefix + "andhra", out);
  if (seg.exit) seg.exit->collect(prefix + "act", out);
  for (auto& child : seg.children) collect_segment(*child, out);
}

std::size_t count_segments(const Segment& seg) {
  std::size_t n = 1;
  for (const auto& child : seg.children) n += count_segments(*child);
  return n;
}

}  // namespace

NetworkTree NetworkTree::build(const NetworkSpec& spec, Rng& rng, InitMode init) {
  spec.validate();
  NetworkTree tree;
  tree.spec_ = spec;
  std::size_t next_head = 0;
  tree.root_ = tree.build_segment(0, {}, rng, init, next_head);
  return tree;
}

std::unique_ptr<Segment> NetworkTree::build_segment(std::size_t level, std::vector<std::size_t> path,
                                                    Rng& rng, InitMode init, std::size_t& next_head) {
  auto seg = std::make_unique<Segment>();
  seg->level = level;
  seg->path = path;
  seg->name = segment_name(level, path);
  seg->head_begin = next_head;
  const std::size_t width = spec_.width(level);

  if (level == 0)
    seg->stem.emplace(spec_.in_channels, width, rng);
  else
    seg->down.emplace(spec_.width(level - 1), width, 2, rng);
  seg->blocks.reserve(spec_.r_depth);
  for (std::size_t i = 0; i < spec_.r_depth; ++i) seg->blocks.emplace_back(width, rng);

  if (level + 1 == spec_.levels) {
    seg->classifier.emplace(spec_.classifier_features(), spec_.num_classes, rng);
    heads_.push_back(HeadId{path});
    ++next_head;
  } else if (spec_.branching_factor >= 2 && spec_.split_mask[level]) {
    seg->split.emplace(spec_.branching_factor, spec_.activation, width);
    const Rng::State snapshot = rng.state();
    for (std::size_t b = 0; b < spec_.branching_factor; ++b) {
      if (init == InitMode::SymmetricSiblings) rng.set_state(snapshot);
      auto child_path = path;
      child_path.push_back(b);
      seg->children.push_back(build_segment(level + 1, std::move(child_path), rng, init, next_head));
    }
  } else {
    seg->exit.emplace(spec_.activation, width);
    seg->children.push_back(build_segment(level + 1, path, rng, init, next_head));
  }
  seg->head_end = next_head;
  by_name_[seg->name] = seg.get();
  return seg;
}

std::size_t NetworkTree::head_index(const HeadId& id) const {
  const auto it = std::find(heads_.begin(), heads_.end(), id);
  if (it == heads_.end()) throw LookupError("no head with id '" + id.str() + "'");
  return static_cast<std::size_t>(it - heads_.begin());
}

std::size_t NetworkTree::num_segments() const { return count_segments(*root_); }

std::vector<Tensor> NetworkTree::forward_all_heads(const Tensor& batch, Mode mode) {
  if (batch.dim() != 4 || batch.size(1) != spec_.in_channels || batch.size(2) != spec_.image_size ||
      batch.size(3) != spec_.image_size)
    throw DimensionError("network expects [B," + std::to_string(spec_.in_channels) + "," +
                         std::to_string(spec_.image_size) + "," + std::to_string(spec_.image_size) +
                         "] input, got " + shape_str(batch.shape()));
  std::vector<Tensor> logits;
  logits.reserve(heads_.size());
  forward_segment(*root_, batch, mode, logits);
  return logits;
}

void NetworkTree::forward_segment(Segment& seg, Tensor x, Mode mode, std::vector<Tensor>& out) {
  x = seg.stem ? seg.stem->forward(x, mode) : seg.down->forward(x, mode);
  for (auto& block : seg.blocks) x = block.forward(x, mode);
  if (seg.classifier) {
    x = flatten(avgpool2d(relu(x), kHeadPoolKernel));
    out.push_back(seg.classifier->forward(x));
    return;
  }
  if (seg.split) {
    auto branches = seg.split->forward(x);
    for (std::size_t b = 0; b < branches.size(); ++b)
      forward_segment(*seg.children[b], std::move(branches[b]), mode, out);
    return;
  }
  forward_segment(*seg.children.front(), seg.exit->forward(x), mode, out);
}

nn::ParameterList NetworkTree::parameters() {
  nn::ParameterList out;
  collect_segment(*root_, out);
  return out;
}

std::pair<std::size_t, std::size_t> NetworkTree::heads_under(const std::string& param_name) const {
  const auto slash = param_name.find('/');
  const auto it = by_name_.find(param_name.substr(0, slash));
  if (slash == std::string::npos || it == by_name_.end())
    throw LookupError("no parameter named '" + param_name + "'");
  const Segment& seg = *it->second;
  const std::string local = param_name.substr(slash + 1);
  if (local.rfind("andhra.", 0) == 0) {
    const std::size_t branch = std::stoul(local.substr(7));
    const Segment& child = *seg.children.at(branch);
    return {child.head_begin, child.head_end};
  }
  return {seg.head_begin, seg.head_end};
}

std::vector<std::pair<std::string, std::string>> NetworkTree::head_name_map(const HeadId& id) {
  head_index(id);
  std::vector<std::pair<std::string, std::string>> map;
  Segment* seg = root_.get();
  std::size_t digit = 0;
  while (seg) {
    const std::string base = "L" + std::to_string(seg->level) + "/";
    nn::ParameterList local;
    collect_body(*seg, "", local);
    for (const auto& p : local.params) map.emplace_back(base + p.name, seg->name + "/" + p.name);
    for (const auto& b : local.buffers) map.emplace_back(base + b.name, seg->name + "/" + b.name);
    Segment* next = nullptr;
    if (seg->split) {
      const std::size_t branch = id.path.at(digit++);
      if (spec_.activation == nn::ActivationKind::PReLU)
        map.emplace_back(base + "act.alpha", seg->name + "/andhra." + std::to_string(branch) + ".alpha");
      next = seg->children[branch].get();
    } else if (seg->exit) {
      if (spec_.activation == nn::ActivationKind::PReLU)
        map.emplace_back(base + "act.alpha", seg->name + "/act.alpha");
      next = seg->children.front().get();
    }
    seg = next;
  }
  return map;
}

NetworkTree NetworkTree::detach_head(const HeadId& id) {
  const auto map = head_name_map(id);
  Rng scratch(0);
  NetworkTree standalone = build(spec_.baseline(), scratch);

  auto src = parameters();
  auto dst = standalone.parameters();
  std::map<std::string, Tensor> src_params;
  std::map<std::string, BatchNormStats*> src_buffers;
  for (auto& p : src.params) src_params.emplace(p.name, p.tensor);
  for (auto& b : src.buffers) src_buffers.emplace(b.name, b.stats);
  std::map<std::string, std::string> lookup(map.begin(), map.end());

  for (auto& p : dst.params) {
    const Tensor& from = src_params.at(lookup.at(p.name));
    auto values = from.data();
    std::copy(values.begin(), values.end(), p.tensor.data().begin());
  }
  for (auto& b : dst.buffers) *b.stats = *src_buffers.at(lookup.at(b.name));
  return standalone;
}

}  // namespace andhra
