#include "andhra_cli/experiment.hpp"

#include <chrono>
#include <exception>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

#include "andhra/error.hpp"
#include "andhra/trainer.hpp"

namespace andhra::cli {

using json = nlohmann::ordered_json;

std::string provenance(const std::string& config_hash) {
  return "config_hash=" + config_hash + ";code_version=" + code_version();
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  os.write(b, 8);
}

class ByteReader {
 public:
  ByteReader(const fs::path& file) : file_(file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw FormatError("missing file " + file.string());
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_)
      throw FormatError(file_.string() + ": truncated at offset " + std::to_string(pos_));
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text() {
    const auto n = u32();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void finish() const {
    if (pos_ != bytes_.size())
      throw FormatError(file_.string() + ": unexpected trailing bytes at offset " + std::to_string(pos_));
  }

 private:
  fs::path file_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

std::ofstream open_out(const fs::path& file, bool binary = false) {
  std::ofstream out(file, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  return out;
}

void write_text(const fs::path& file, const std::string& text) {
  auto out = open_out(file);
  out << text;
  if (!out) throw FormatError("write failed on " + file.string());
}

std::string head_key(const std::string& id) { return "head_" + id; }

std::vector<std::string> head_names(const NetworkTree& tree) {
  std::vector<std::string> out;
  for (const auto& h : tree.heads()) out.push_back(h.str());
  return out;
}

std::map<std::string, double> all_combined(const EvalResult& ev) {
  std::map<std::string, double> out;
  for (auto k : all_combiners()) out[to_string(k)] = ev.combined_accuracy(k);
  return out;
}

fs::path run_dir(const fs::path& out_dir, std::size_t i) { return out_dir / ("run_" + std::to_string(i)); }

}  // namespace

void write_prob_dump(const fs::path& file, const HeadPredictions& preds, const std::string& prov) {
  auto out = open_out(file, true);
  put_u64(out, preds.heads);
  put_u64(out, preds.samples);
  put_u64(out, preds.classes);
  for (double p : preds.probs) put_u64(out, std::bit_cast<std::uint64_t>(p));
  put_u32(out, static_cast<std::uint32_t>(prov.size()));
  out.write(prov.data(), static_cast<std::streamsize>(prov.size()));
  if (!out) throw FormatError("write failed on " + file.string());
}

HeadPredictions read_prob_dump(const fs::path& file) {
  ByteReader r(file);
  const auto h = r.u64(), b = r.u64(), k = r.u64();
  if (h == 0 || b == 0 || k == 0) throw FormatError(file.string() + ": empty probability dump");
  if (h > (1u << 20) || k > (1u << 20)) throw FormatError(file.string() + ": implausible header");
  r.need(h * b * k * 8);
  HeadPredictions preds(h, b, k);
  for (auto& p : preds.probs) p = r.f64();
  r.text();
  r.finish();
  return preds;
}

void write_labels(const fs::path& file, const std::vector<int>& labels, const std::string& prov) {
  auto out = open_out(file, true);
  put_u64(out, labels.size());
  for (int l : labels) put_u32(out, static_cast<std::uint32_t>(l));
  put_u32(out, static_cast<std::uint32_t>(prov.size()));
  out.write(prov.data(), static_cast<std::streamsize>(prov.size()));
  if (!out) throw FormatError("write failed on " + file.string());
}

std::vector<int> read_labels(const fs::path& file) {
  ByteReader r(file);
  const auto n = r.u64();
  r.need(n * 4);
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(r.u32());
  r.text();
  r.finish();
  return labels;
}

DatasetPair load_datasets(const ExperimentConfig& cfg) {
  DatasetPair pair;
  switch (cfg.dataset.kind) {
    case DatasetKind::Cifar10:
      pair = load_cifar10(cfg.dataset.path);
      break;
    case DatasetKind::Cifar100:
      pair = load_cifar100(cfg.dataset.path);
      break;
    case DatasetKind::Synthetic: {
      Rng rng(cfg.dataset.seed);
      pair.train = synthetic_dataset(cfg.dataset.train_size, cfg.dataset.classes, rng, Split::Train);
      pair.test = synthetic_dataset(cfg.dataset.test_size, cfg.dataset.classes, rng, Split::Test);
      return pair;
    }
  }
  if (cfg.dataset.train_size) pair.train = pair.train.head(cfg.dataset.train_size);
  if (cfg.dataset.test_size) pair.test = pair.test.head(cfg.dataset.test_size);
  return pair;
}

std::uint64_t run_seed(const ExperimentConfig& cfg, std::size_t run_index) {
  return (cfg.train.seed + run_index) ^ 0x9E3779B97F4A7C15ULL;
}

std::string results_json(const ExperimentConfig& cfg, const std::vector<std::string>& heads,
                         const std::vector<RunResult>& runs) {
  json j;
  j["config_hash"] = cfg.hash();
  j["code_version"] = code_version();
  j["dataset"] = to_string(cfg.dataset.kind);
  j["network"] = cfg.network.to_text();
  j["n_runs"] = runs.size();
  j["heads"] = heads;
  json arr = json::array();
  for (const auto& r : runs) {
    json jr;
    jr["run_index"] = r.run_index;
    jr["seed"] = r.seed;
    json acc;
    for (std::size_t h = 0; h < heads.size(); ++h) acc[head_key(heads[h])] = r.head_accuracy.at(h);
    jr["head_accuracy"] = acc;
    json comb;
    for (const auto& [k, v] : r.combined_accuracy) comb[k] = v;
    jr["combined_accuracy"] = comb;
    arr.push_back(jr);
  }
  j["runs"] = arr;
  return j.dump(2) + "\n";
}

ResultsFile read_results(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "results.json" : path;
  std::ifstream in(file);
  if (!in) throw FormatError("missing results file " + file.string());
  ResultsFile out;
  try {
    const json j = json::parse(in);
    out.config_hash = j.at("config_hash").get<std::string>();
    out.code_version = j.at("code_version").get<std::string>();
    out.spec = NetworkSpec::from_text(j.at("network").get<std::string>());
    out.heads = j.at("heads").get<std::vector<std::string>>();
    for (const auto& jr : j.at("runs")) {
      RunResult r;
      r.run_index = jr.at("run_index").get<std::size_t>();
      r.seed = jr.at("seed").get<std::uint64_t>();
      for (const auto& h : out.heads) r.head_accuracy.push_back(jr.at("head_accuracy").at(head_key(h)).get<double>());
      for (const auto& [k, v] : jr.at("combined_accuracy").items()) r.combined_accuracy[k] = v.get<double>();
      out.runs.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  return out;
}

RunResult train_run(const ExperimentConfig& cfg, const DatasetPair& data, std::size_t run_index,
                    std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = run_dir(cfg.out_dir, run_index);
  fs::create_directories(dir);
  const std::string prov = provenance(cfg.hash());

  Rng build_rng(run_seed(cfg, run_index));
  NetworkTree tree = NetworkTree::build(cfg.network, build_rng);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.train.seed + run_index;
  Trainer trainer(tree, data.train, &data.test, tc);

  auto csv = open_out(dir / "epochs.csv");
  csv << "# " << prov << '\n' << epoch_csv_header(tree.num_heads()) << '\n';
  trainer.run([&](const EpochLog& e) {
    csv << epoch_csv_row(e) << '\n';
    csv.flush();
    Checkpoint ck = capture_checkpoint(tree, &trainer);
    ck.metadata = prov;
    write_checkpoint(ck, dir / "checkpoint.bin");
    if (log) {
      std::ostringstream os;
      os << std::fixed << std::setprecision(4) << "run " << run_index << " epoch " << e.epoch + 1 << "/"
         << tc.epochs << " lr " << e.lr << " loss " << e.train_loss << " train_combined "
         << std::setprecision(2) << e.train_combined_accuracy << " eval_combined " << e.eval_combined_accuracy
         << '\n';
      *log << os.str() << std::flush;
    }
  });

  const EvalResult ev = evaluate(tree, data.test, trainer.normalization());
  write_prob_dump(dir / "eval_probs.bin", ev.predictions, prov);
  write_labels(dir / "eval_labels.bin", ev.labels, prov);

  RunResult r;
  r.run_index = run_index;
  r.seed = tc.seed;
  r.head_accuracy = ev.head_accuracy;
  r.combined_accuracy = all_combined(ev);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<RunResult> cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  const fs::path marker = out / "INCOMPLETE";
  write_text(marker, provenance(cfg.hash()) + "\nstatus=running\n");

  const DatasetPair data = load_datasets(cfg);
  if (data.train.num_classes != cfg.network.num_classes)
    throw ConfigError("dataset has " + std::to_string(data.train.num_classes) + " classes, network.num_classes is " +
                      std::to_string(cfg.network.num_classes));

  std::vector<RunResult> runs(cfg.n_runs);
  std::vector<std::exception_ptr> errors(cfg.n_runs);
  std::mutex log_mutex;
  auto worker = [&](std::size_t w) {
    for (std::size_t i = w; i < cfg.n_runs; i += cfg.workers) {
      try {
        std::ostringstream buffer;
        struct Sink : std::streambuf {
          std::ostream* target;
          std::mutex* m;
          std::string line;
          int overflow(int c) override {
            if (c == EOF) return 0;
            line.push_back(static_cast<char>(c));
            if (c == '\n') {
              std::lock_guard<std::mutex> lock(*m);
              *target << line << std::flush;
              line.clear();
            }
            return c;
          }
        } sink;
        sink.target = &log;
        sink.m = &log_mutex;
        std::ostream run_log(&sink);
        runs[i] = train_run(cfg, data, i, &run_log);
      } catch (...) {
        errors[i] = std::current_exception();
        return;
      }
    }
  };
  const std::size_t workers = std::min(cfg.workers, cfg.n_runs);
  if (workers <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < cfg.n_runs; ++i) {
    if (errors[i]) {
      std::string what = "unknown error";
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      write_text(marker, provenance(cfg.hash()) + "\nstatus=failed\nrun=" + std::to_string(i) + "\nerror=" + what + "\n");
      std::rethrow_exception(errors[i]);
    }
  }

  Rng scratch(0);
  const NetworkTree shape = NetworkTree::build(cfg.network, scratch);
  write_text(out / "results.json", results_json(cfg, head_names(shape), runs));
  json timing;
  timing["config_hash"] = cfg.hash();
  timing["code_version"] = code_version();
  json secs = json::array();
  for (const auto& r : runs) secs.push_back(r.wall_seconds);
  timing["wall_seconds"] = secs;
  write_text(out / "timing.json", timing.dump(2) + "\n");
  write_text(out / "config.ini", cfg.canonical_text());
  fs::remove(marker);
  log << "wrote " << (out / "results.json").string() << '\n';
  return runs;
}

EvalReport cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir,
                    std::ostream& log) {
  cfg.validate();
  const Checkpoint ck = read_checkpoint(checkpoint);
  NetworkTree tree = restore_tree(ck);
  const DatasetPair data = load_datasets(cfg);
  const Normalization norm = compute_normalization(data.train);
  const EvalResult ev = evaluate(tree, data.test, norm);

  EvalReport rep;
  rep.heads = head_names(tree);
  rep.head_accuracy = ev.head_accuracy;
  rep.combined_accuracy = all_combined(ev);
  rep.loss = ev.loss;

  fs::create_directories(out_dir);
  const std::string prov = provenance(cfg.hash());
  json j;
  j["config_hash"] = cfg.hash();
  j["code_version"] = code_version();
  j["checkpoint"] = ck.metadata;
  j["samples"] = data.test.size();
  j["loss"] = rep.loss;
  json acc;
  for (std::size_t h = 0; h < rep.heads.size(); ++h) acc[head_key(rep.heads[h])] = rep.head_accuracy[h];
  j["head_accuracy"] = acc;
  json comb;
  for (const auto& [k, v] : rep.combined_accuracy) comb[k] = v;
  j["combined_accuracy"] = comb;
  write_text(out_dir / "eval.json", j.dump(2) + "\n");
  write_prob_dump(out_dir / "eval_probs.bin", ev.predictions, prov);
  write_labels(out_dir / "eval_labels.bin", ev.labels, prov);

  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  for (std::size_t h = 0; h < rep.heads.size(); ++h)
    os << "head " << rep.heads[h] << ": " << rep.head_accuracy[h] << "%\n";
  for (const auto& [k, v] : rep.combined_accuracy) os << "combined " << k << ": " << v << "%\n";
  log << os.str();
  return rep;
}

ComparisonReport cmd_compare(const fs::path& baseline_results, const fs::path& ab_results,
                             const std::string& combiner, const fs::path& out_dir, std::ostream& log) {
  parse_combiner(combiner);
  const ResultsFile base = read_results(baseline_results);
  const ResultsFile ab = read_results(ab_results);
  if (base.runs.size() != ab.runs.size())
    throw FormatError("run count mismatch: baseline has " + std::to_string(base.runs.size()) + " runs, AB has " +
                      std::to_string(ab.runs.size()));
  const ComparisonReport rep = aggregate_experiment(ab.runs, base.runs, combiner);

  json j;
  j["code_version"] = code_version();
  j["baseline_config_hash"] = base.config_hash;
  j["ab_config_hash"] = ab.config_hash;
  j["top_head"] = ab.heads.at(rep.top_head_index);
  j["report"] = json::parse(rep.to_json());
  const std::string label = "AB-" + std::to_string(ab.spec.branching_factor) + "GR" + std::to_string(ab.spec.r_depth);
  const std::string text = "# " + provenance(ab.config_hash) + "\n" + rep.to_text(label);
  fs::create_directories(out_dir);
  write_text(out_dir / "comparison.json", j.dump(2) + "\n");
  write_text(out_dir / "comparison.txt", text);
  log << rep.to_text(label);
  return rep;
}

std::string ablation_text(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(26) << "Ensemble method" << "Accuracy (%)\n";
  for (const auto& r : rows) {
    std::string name;
    switch (r.combiner) {
      case CombinerKind::MajorityVote: name = "Majority voting"; break;
      case CombinerKind::AverageProb: name = "Average probability"; break;
      case CombinerKind::ProductOfExperts: name = "Product of experts"; break;
      case CombinerKind::RankVote: name = "Rank-based voting"; break;
    }
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(3) << r.mean << " +- " << r.stddev;
    os << std::left << std::setw(26) << name << cell.str() << '\n';
  }
  return os.str();
}

std::vector<AblationRow> cmd_ablate(const fs::path& results_dir, const std::vector<CombinerKind>& combiners,
                                    const fs::path& out_dir, std::ostream& log) {
  const ResultsFile res = read_results(results_dir);
  const fs::path dir = fs::is_directory(results_dir) ? results_dir : results_dir.parent_path();
  std::vector<AblationRow> rows;
  for (auto k : combiners) rows.push_back({k, {}, 0.0, 0.0});
  for (const auto& run : res.runs) {
    const fs::path rd = run_dir(dir, run.run_index);
    const HeadPredictions preds = read_prob_dump(rd / "eval_probs.bin");
    const std::vector<int> labels = read_labels(rd / "eval_labels.bin");
    if (preds.samples != labels.size())
      throw FormatError(rd.string() + ": " + std::to_string(preds.samples) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
    if (preds.heads != res.heads.size())
      throw FormatError(rd.string() + ": dump has " + std::to_string(preds.heads) + " heads, results list " +
                        std::to_string(res.heads.size()));
    for (auto& row : rows) row.per_run.push_back(accuracy_percent(combine(row.combiner, preds), labels));
  }
  if (res.runs.empty()) throw FormatError("no runs listed in " + results_dir.string());
  for (auto& row : rows) {
    if (row.per_run.size() >= 2) {
      const MeanStd ms = mean_std(row.per_run);
      row.mean = ms.mean;
      row.stddev = ms.stddev;
    } else {
      row.mean = row.per_run.front();
    }
  }

  json j;
  j["config_hash"] = res.config_hash;
  j["code_version"] = code_version();
  json arr = json::array();
  for (const auto& r : rows) {
    json jr;
    jr["combiner"] = to_string(r.combiner);
    jr["per_run"] = r.per_run;
    jr["mean"] = r.mean;
    jr["std"] = r.stddev;
    arr.push_back(jr);
  }
  j["rows"] = arr;
  const std::string text = ablation_text(rows);
  fs::create_directories(out_dir);
  write_text(out_dir / "ablation.json", j.dump(2) + "\n");
  write_text(out_dir / "ablation.txt", "# " + provenance(res.config_hash) + "\n" + text);
  log << text;
  return rows;
}

HeadId parse_head(const std::string& text, const NetworkTree& tree) {
  if (text.empty()) throw LookupError("empty head id");
  HeadId id;
  if (text == "root") {
  } else if (text.front() == '#') {
    std::size_t used = 0;
    std::size_t index = 0;
    try {
      index = std::stoull(text.substr(1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used + 1 != text.size() || index >= tree.num_heads())
      throw LookupError("head index '" + text + "' out of range (tree has " + std::to_string(tree.num_heads()) +
                        " heads)");
    return tree.heads()[index];
  } else {
    for (char c : text) {
      if (c < '0' || c > '9') throw LookupError("bad head id '" + text + "'");
      id.path.push_back(static_cast<std::size_t>(c - '0'));
    }
  }
  tree.head_index(id);
  return id;
}

Checkpoint cmd_detach(const fs::path& checkpoint, const std::string& head, const fs::path& out_file,
                      std::ostream& log) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  const NetworkTree tree = restore_tree(ck);
  const HeadId id = parse_head(head, tree);
  const Checkpoint out = detach_checkpoint(ck, id);
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  write_checkpoint(out, out_file);
  std::size_t count = 0;
  for (const auto& p : out.params) count += p.values.size();
  log << "detached head " << id.str() << " -> " << out_file.string() << " (" << count << " parameters)\n";
  return out;
}

void cmd_dataset_stats(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  cfg.validate();
  const DatasetPair data = load_datasets(cfg);
  const Normalization norm = compute_normalization(data.train);
  json j;
  j["config_hash"] = cfg.hash();
  j["code_version"] = code_version();
  j["dataset"] = to_string(cfg.dataset.kind);
  j["num_classes"] = data.train.num_classes;
  j["train_size"] = data.train.size();
  j["test_size"] = data.test.size();
  j["train_class_counts"] = data.train.class_counts();
  j["test_class_counts"] = data.test.class_counts();
  j["mean"] = norm.mean;
  j["std"] = norm.stddev;
  fs::create_directories(out_dir);
  write_text(out_dir / "dataset_stats.json", j.dump(2) + "\n");
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << to_string(cfg.dataset.kind) << ": train " << data.train.size()
     << ", test " << data.test.size() << ", classes " << data.train.num_classes << "\nmean " << norm.mean[0]
     << ' ' << norm.mean[1] << ' ' << norm.mean[2] << "\nstd  " << norm.stddev[0] << ' ' << norm.stddev[1] << ' '
     << norm.stddev[2] << '\n';
  log << os.str();
}

}  // namespace andhra::cli
