// Command-line harness: synth, train, score, eval, sweep-n, ablate.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fghv/errors.hpp"
#include "fghv/harness.hpp"

namespace fs = std::filesystem;
using namespace fghv;

namespace {

std::string dashed(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return key;
}

std::string default_of(const KeyValues& defaults, const std::string& key) {
  const std::string* v = defaults.find(key);
  return v ? *v : "";
}

// Registers one --flag per key of `keys`; values land in `overrides`.
template <typename KeyList>
void add_key_flags(CLI::App* app, const KeyList& keys, const KeyValues& defaults,
                   std::map<std::string, std::string>& overrides) {
  for (const auto& k : keys) {
    app->add_option("--" + dashed(k.name), overrides[k.name],
                    k.help + " [default: " + default_of(defaults, k.name) + ", " +
                        (k.from_paper ? "paper" : "ours") + "]");
  }
}

KeyValues merge(const std::string& config_path, const std::map<std::string, std::string>& overrides,
                const std::vector<std::string>& allowed) {
  KeyValues kv = config_path.empty() ? KeyValues{} : KeyValues::load(config_path);
  kv.require_known(allowed);
  for (const auto& [k, v] : overrides)
    if (!v.empty()) kv.set(k, v);
  return kv;
}

std::vector<std::string> run_keys() {
  std::vector<std::string> out;
  for (const auto& k : RunConfig::keys()) out.push_back(k.name);
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    KeyValues one({{"n", item}});
    out.push_back(static_cast<int>(one.get_int("n", 0)));
  }
  return out;
}

ScoreMode parse_mode(const std::string& s) {
  if (s == "cross-dataset") return ScoreMode::CrossDataset;
  if (s == "cross-type") return ScoreMode::CrossType;
  throw ConfigError("mode must be cross-dataset or cross-type, got '" + s + "'");
}

int exit_code(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ParseError*>(&e)) return 3;
  if (dynamic_cast<const LoadError*>(&e)) return 4;
  if (dynamic_cast<const MetricError*>(&e)) return 5;
  if (dynamic_cast<const DegenerateFeatureError*>(&e) ||
      dynamic_cast<const OptimizationError*>(&e))
    return 6;
  if (dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const ContractError*>(&e)) return 7;
  return 1;
}

struct SynthSpecKey {
  std::string name;
  std::string help;
  bool from_paper = false;
};

std::vector<SynthSpecKey> synth_keys() {
  return {{"d_in", "input dimension"},
          {"n_domains", "number of domains"},
          {"samples_per_class_per_domain", "samples per class per domain"},
          {"real_coherence", "weight of the shared real direction, in [0, 1]"},
          {"attack_spread", "distance of attack centers from the real center"},
          {"noise_sigma", "isotropic noise std"},
          {"attack_types", "attack clusters per domain"},
          {"held_out_domain", "test domain (-1 = last)"},
          {"seed", "generator seed"}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature generation and hypothesis verification experiments"};
  app.require_subcommand(1);

  const KeyValues run_defaults = RunConfig{}.to_key_values();
  const KeyValues synth_defaults = SynthSpec{}.to_key_values();

  // synth
  std::string synth_config, out_dir = ".";
  double dev_fraction = 0.1;
  std::map<std::string, std::string> synth_over;
  auto* synth = app.add_subcommand("synth", "Generate train/dev/test synthetic datasets");
  synth->add_option("--config", synth_config, "key=value spec file");
  synth->add_option("--out-dir", out_dir, "output directory")->capture_default_str();
  synth->add_option("--dev-fraction", dev_fraction, "fraction of training domains held for dev")
      ->capture_default_str();
  add_key_flags(synth, synth_keys(), synth_defaults, synth_over);

  // train
  std::string train_config;
  std::map<std::string, std::string> train_over;
  auto* train_cmd = app.add_subcommand("train", "Train extractor and generators");
  train_cmd->add_option("--config", train_config, "key=value run config file");
  add_key_flags(train_cmd, RunConfig::keys(), run_defaults, train_over);

  // score
  std::string ckpt_path, data_path, scores_out = "scores.csv", mode_str = "cross-dataset";
  int score_n = 0, score_m = -1, threads = 1;
  double score_alpha = 0.0;
  long long score_seed = 11;
  auto* score = app.add_subcommand("score", "Score a dataset with a checkpoint");
  score->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  score->add_option("--data", data_path, "dataset file")->required();
  score->add_option("--out", scores_out, "score file to write")->capture_default_str();
  score->add_option("--mode", mode_str, "cross-dataset or cross-type")->capture_default_str();
  score->add_option("--hypotheses", score_n, "override N (default: from checkpoint)");
  score->add_option("--ghvm-iterations", score_m, "override M (default: from checkpoint)");
  score->add_option("--ghvm-step", score_alpha, "override alpha (default: from checkpoint)");
  score->add_option("--seed", score_seed, "latent sampling seed")->capture_default_str();
  score->add_option("--threads", threads, "worker threads")->capture_default_str();

  // eval
  std::string eval_scores, eval_dev, eval_out = ".";
  int bins = 20;
  auto* eval_cmd = app.add_subcommand("eval", "Compute metrics and histograms from a score file");
  eval_cmd->add_option("--scores", eval_scores, "test score file")->required();
  eval_cmd->add_option("--dev", eval_dev, "dev score file for threshold fitting (default: test)");
  eval_cmd->add_option("--out-dir", eval_out, "directory for report and histograms")
      ->capture_default_str();
  eval_cmd->add_option("--bins", bins, "histogram bins")->capture_default_str();

  // sweep-n
  std::string sweep_config, sweep_test, n_values = "2,6,10,14", sweep_out;
  int repeats = 5;
  std::map<std::string, std::string> sweep_over;
  auto* sweep = app.add_subcommand("sweep-n", "Repeat training across hypothesis counts");
  sweep->add_option("--config", sweep_config, "key=value run config file");
  sweep->add_option("--test-data", sweep_test, "held-out dataset")->required();
  sweep->add_option("--n-values", n_values, "comma-separated N values")->capture_default_str();
  sweep->add_option("--repeats", repeats, "runs per N")->capture_default_str();
  sweep->add_option("--threads", threads, "worker threads")->capture_default_str();
  sweep->add_option("--out", sweep_out, "write the table here as well as stdout");
  add_key_flags(sweep, RunConfig::keys(), run_defaults, sweep_over);

  // ablate
  std::string ablate_config, ablate_dev, ablate_test, which = "all", ablate_out;
  std::map<std::string, std::string> ablate_over;
  auto* ablate = app.add_subcommand("ablate", "Constraint and generator ablation tables");
  ablate->add_option("--config", ablate_config, "key=value run config file");
  ablate->add_option("--dev-data", ablate_dev, "dev dataset for HTER thresholds");
  ablate->add_option("--test-data", ablate_test, "held-out dataset")->required();
  ablate->add_option("--table", which, "constraints, generators or all")->capture_default_str();
  ablate->add_option("--threads", threads, "worker threads")->capture_default_str();
  ablate->add_option("--out", ablate_out, "write the table here as well as stdout");
  add_key_flags(ablate, RunConfig::keys(), run_defaults, ablate_over);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      std::vector<std::string> allowed = SynthSpec::keys();
      const KeyValues kv = merge(synth_config, synth_over, allowed);
      const SynthSpec spec = SynthSpec::from(kv);
      const SynthSplit split = generate(spec);
      auto [train_part, dev_part] = split_dev(split.train, dev_fraction, spec.seed);
      fs::create_directories(out_dir);
      write_dataset(train_part, fs::path(out_dir) / "train.csv");
      write_dataset(dev_part, fs::path(out_dir) / "dev.csv");
      write_dataset(split.test, fs::path(out_dir) / "test.csv");
      std::cout << "train=" << train_part.size() << " dev=" << dev_part.size()
                << " test=" << split.test.size() << '\n';
    } else if (train_cmd->parsed()) {
      const RunConfig config = RunConfig::from(merge(train_config, train_over, run_keys()));
      config.validate();
      if (config.train_data.empty()) throw ConfigError("--train-data is required");
      const auto samples = read_dataset(config.train_data);
      std::ofstream log(config.log, std::ios::trunc);
      if (!log) throw Error("cannot open log " + config.log);
      const TrainResult result = train(config, samples, &log);
      save_checkpoint(result.checkpoint, config.checkpoint);
      const auto& last = result.history.back();
      std::cout << "epochs=" << last.epoch << " overall=" << format_double(last.overall)
                << " checkpoint=" << config.checkpoint << '\n';
    } else if (score->parsed()) {
      const ScoreMode mode = parse_mode(mode_str);
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const RunConfig stored = config_of(ckpt);
      ScoreOptions opts;
      opts.hypotheses = score_n > 0 ? score_n : stored.hypotheses;
      opts.ghvm = stored.ghvm();
      if (score_m >= 0) opts.ghvm.iterations = score_m;
      if (score_alpha > 0) opts.ghvm.step = score_alpha;
      opts.seed = static_cast<std::uint64_t>(score_seed);
      opts.threads = threads;
      const auto scored = score_samples(ckpt, read_dataset(data_path), opts);
      write_scores(scored, mode, scores_out);
      std::cout << "scored=" << scored.size() << " out=" << scores_out << '\n';
    } else if (eval_cmd->parsed()) {
      const ScoreFile test = read_scores(eval_scores);
      const ScoreFile dev = eval_dev.empty() ? test : read_scores(eval_dev);
      const MetricsReport report = evaluate(test.rows, dev.rows, test.mode);
      fs::create_directories(eval_out);
      std::ofstream(fs::path(eval_out) / "report.txt") << report.to_key_values();
      std::vector<LabeledScore> var, dkl;
      for (const auto& r : test.rows) {
        var.push_back({r.scores.var, r.label});
        dkl.push_back({r.scores.delta_kl, r.label});
      }
      write_histogram(histogram(var, bins), fs::path(eval_out) / "hist_var.csv");
      write_histogram(histogram(dkl, bins), fs::path(eval_out) / "hist_delta_kl.csv");
      std::cout << report.to_table();
    } else if (sweep->parsed()) {
      const RunConfig config = RunConfig::from(merge(sweep_config, sweep_over, run_keys()));
      if (config.train_data.empty()) throw ConfigError("--train-data is required");
      const auto result =
          sweep_hypotheses(config, read_dataset(config.train_data), read_dataset(sweep_test),
                           parse_int_list(n_values), repeats, threads);
      const std::string table = sweep_table(result);
      if (!sweep_out.empty()) std::ofstream(sweep_out) << table;
      std::cout << table;
    } else if (ablate->parsed()) {
      const RunConfig config = RunConfig::from(merge(ablate_config, ablate_over, run_keys()));
      if (config.train_data.empty()) throw ConfigError("--train-data is required");
      std::vector<AblationRow> rows;
      if (which == "constraints" || which == "all") rows = constraint_ablations(config);
      if (which == "generators" || which == "all") {
        for (auto& r : generator_ablations(config)) rows.push_back(std::move(r));
      }
      if (rows.empty()) throw ConfigError("--table must be constraints, generators or all");
      const auto dev = ablate_dev.empty() ? std::vector<Sample>{} : read_dataset(ablate_dev);
      run_ablations(rows, read_dataset(config.train_data), dev, read_dataset(ablate_test),
                    threads);
      const std::string table = ablation_table(rows);
      if (!ablate_out.empty()) std::ofstream(ablate_out) << table;
      std::cout << table;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
