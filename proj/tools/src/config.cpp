#include "andhra_cli/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "andhra/checkpoint.hpp"
#include "andhra/error.hpp"

#ifndef ANDHRA_VERSION
#define ANDHRA_VERSION "unknown"
#endif

namespace andhra::cli {

namespace pt = boost::property_tree;

std::string code_version() { return ANDHRA_VERSION; }

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Cifar10: return "cifar10";
    case DatasetKind::Cifar100: return "cifar100";
    case DatasetKind::Synthetic: return "synthetic";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& text) {
  if (text == "cifar10") return DatasetKind::Cifar10;
  if (text == "cifar100") return DatasetKind::Cifar100;
  if (text == "synthetic") return DatasetKind::Synthetic;
  throw ConfigError("unknown dataset kind '" + text + "' (expected cifar10|cifar100|synthetic)");
}

namespace {

std::uint64_t to_u64(const std::string& section, const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || value.front() == '-')
    throw ConfigError(section + "." + key + ": expected a non-negative integer, got '" + value + "'");
  return v;
}

double to_double(const std::string& section, const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size())
    throw ConfigError(section + "." + key + ": expected a number, got '" + value + "'");
  return v;
}

bool to_bool(const std::string& section, const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError(section + "." + key + ": expected a boolean, got '" + value + "'");
}

std::vector<CombinerKind> to_combiners(const std::string& value) {
  std::vector<CombinerKind> out;
  std::stringstream ss(value);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto b = tok.find_first_not_of(" \t");
    const auto e = tok.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    try {
      out.push_back(parse_combiner(tok.substr(b, e - b + 1)));
    } catch (const Error& err) {
      throw ConfigError(std::string("experiment.combiners: ") + err.what());
    }
  }
  if (out.empty()) throw ConfigError("experiment.combiners: empty list");
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  network.validate();
  train.validate();
  if (n_runs < 1) throw ConfigError("experiment.n_runs must be >= 1");
  if (workers < 1) throw ConfigError("experiment.workers must be >= 1");
  if (combiners.empty()) throw ConfigError("experiment.combiners: empty list");
  switch (dataset.kind) {
    case DatasetKind::Cifar10:
    case DatasetKind::Cifar100: {
      const std::size_t k = dataset.kind == DatasetKind::Cifar10 ? 10 : 100;
      if (network.num_classes != k)
        throw ConfigError("network.num_classes = " + std::to_string(network.num_classes) + " but " +
                          to_string(dataset.kind) + " has " + std::to_string(k) + " classes");
      if (dataset.path.empty()) throw ConfigError("dataset.path is required for " + to_string(dataset.kind));
      break;
    }
    case DatasetKind::Synthetic:
      if (dataset.classes < 2) throw ConfigError("dataset.classes must be >= 2");
      if (network.num_classes != dataset.classes)
        throw ConfigError("network.num_classes = " + std::to_string(network.num_classes) +
                          " but dataset.classes = " + std::to_string(dataset.classes));
      if (dataset.train_size < dataset.classes || dataset.test_size < dataset.classes)
        throw ConfigError("synthetic train_size and test_size must be >= dataset.classes");
      break;
  }
  if (network.in_channels != 3 || network.image_size != 32)
    throw ConfigError("datasets provide 3x32x32 images; network.in_channels/image_size must be 3/32");
}

std::string ExperimentConfig::canonical_text() const {
  std::ostringstream os;
  os << "[dataset]\n"
     << "kind = " << to_string(dataset.kind) << '\n'
     << "path = " << dataset.path << '\n'
     << "train_size = " << dataset.train_size << '\n'
     << "test_size = " << dataset.test_size << '\n'
     << "classes = " << dataset.classes << '\n'
     << "seed = " << dataset.seed << '\n'
     << "\n[network]\n"
     << network.to_text()
     << "\n[train]\n"
     << "epochs = " << train.epochs << '\n'
     << "batch_size = " << train.batch_size << '\n'
     << "lr0 = " << fmt_double(train.lr0) << '\n'
     << "t_max = " << train.t_max << '\n'
     << "momentum = " << fmt_double(train.momentum) << '\n'
     << "weight_decay = " << fmt_double(train.weight_decay) << '\n'
     << "seed = " << train.seed << '\n'
     << "deterministic = " << (train.deterministic ? "true" : "false") << '\n'
     << "augment = " << (train.augment ? "true" : "false") << '\n'
     << "eval_combiner = " << to_string(train.eval_combiner) << '\n'
     << "\n[experiment]\n"
     << "n_runs = " << n_runs << '\n'
     << "out_dir = " << out_dir << '\n'
     << "combiners = ";
  for (std::size_t i = 0; i < combiners.size(); ++i) os << (i ? "," : "") << to_string(combiners[i]);
  os << '\n' << "workers = " << workers << '\n';
  return os.str();
}

std::string ExperimentConfig::hash() const {
  // out_dir and workers do not change results, so they stay out of the hash.
  ExperimentConfig c = *this;
  c.out_dir.clear();
  c.workers = 1;
  const std::string text = c.canonical_text();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
  return buf;
}

ExperimentConfig ExperimentConfig::from_string(const std::string& ini) {
  pt::ptree tree;
  std::istringstream is(ini);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config syntax: " + e.message() + " at line " + std::to_string(e.line()));
  }

  ExperimentConfig cfg;
  std::map<std::string, std::string> network;
  static const std::set<std::string> sections{"dataset", "network", "train", "experiment"};
  for (const auto& [section, body] : tree) {
    if (!sections.count(section)) {
      if (body.empty()) throw ConfigError("config key '" + section + "' must live inside a section");
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      const std::string value = node.get_value<std::string>();
      if (section == "network") {
        network[key] = value;
      } else if (section == "dataset") {
        if (key == "kind") cfg.dataset.kind = parse_dataset_kind(value);
        else if (key == "path") cfg.dataset.path = value;
        else if (key == "train_size") cfg.dataset.train_size = to_u64(section, key, value);
        else if (key == "test_size") cfg.dataset.test_size = to_u64(section, key, value);
        else if (key == "classes") cfg.dataset.classes = to_u64(section, key, value);
        else if (key == "seed") cfg.dataset.seed = to_u64(section, key, value);
        else throw ConfigError("unknown key dataset." + key);
      } else if (section == "train") {
        auto& t = cfg.train;
        if (key == "epochs") t.epochs = to_u64(section, key, value);
        else if (key == "batch_size") t.batch_size = to_u64(section, key, value);
        else if (key == "lr0") t.lr0 = to_double(section, key, value);
        else if (key == "t_max") t.t_max = to_u64(section, key, value);
        else if (key == "momentum") t.momentum = to_double(section, key, value);
        else if (key == "weight_decay") t.weight_decay = to_double(section, key, value);
        else if (key == "seed") t.seed = to_u64(section, key, value);
        else if (key == "deterministic") t.deterministic = to_bool(section, key, value);
        else if (key == "augment") t.augment = to_bool(section, key, value);
        else if (key == "eval_combiner") {
          try {
            t.eval_combiner = parse_combiner(value);
          } catch (const Error& e) {
            throw ConfigError(std::string("train.eval_combiner: ") + e.what());
          }
        } else throw ConfigError("unknown key train." + key);
      } else {
        if (key == "n_runs") cfg.n_runs = to_u64(section, key, value);
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "combiners") cfg.combiners = to_combiners(value);
        else if (key == "workers") cfg.workers = to_u64(section, key, value);
        else throw ConfigError("unknown key experiment." + key);
      }
    }
  }
  try {
    cfg.network = NetworkSpec::from_map(network);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

void apply_environment(ExperimentConfig& cfg) {
  if (const char* d = std::getenv("ANDHRA_DATA_DIR"); d && *d) cfg.dataset.path = d;
  if (const char* o = std::getenv("ANDHRA_OUT_DIR"); o && *o) cfg.out_dir = o;
}

}  // namespace andhra::cli
