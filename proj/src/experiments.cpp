#include <algorithm>
#include <cstdio>
#include <numeric>
#include <thread>

#include "fghv/errors.hpp"
#include "fghv/harness.hpp"

namespace fghv {

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers, rethrowing the
// first failure.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

ScoreOptions score_options(const RunConfig& c, bool with_ghvm) {
  ScoreOptions o;
  o.hypotheses = c.hypotheses;
  o.ghvm = c.ghvm();
  o.seed = derive_seed(c.seed, 0x5c0e);
  o.with_ghvm = with_ghvm;
  return o;
}

}  // namespace

SweepResult sweep_hypotheses(const RunConfig& base, const std::vector<Sample>& train_set,
                             const std::vector<Sample>& test_set,
                             const std::vector<int>& n_values, int repeats, int threads) {
  if (repeats < 2) throw ConfigError("sweep needs at least 2 repeats");
  if (n_values.empty()) throw ConfigError("sweep needs at least one N value");

  SweepResult result;
  for (int n : n_values)
    for (int r = 0; r < repeats; ++r) result.cells.push_back({n, r, 0.0});

  parallel_for(result.cells.size(), threads, [&](std::size_t i) {
    SweepCell& cell = result.cells[i];
    RunConfig c = base;
    c.hypotheses = cell.hypotheses;
    c.seed = derive_seed(base.seed, static_cast<std::uint64_t>(cell.repeat));
    const TrainResult trained = train(c, train_set);
    cell.auc = roc_auc(softmax_scores(
        score_samples(trained.checkpoint, test_set, score_options(c, false))));
  });

  for (int n : n_values) {
    SweepRow row{n, 0.0, 1.0, 0.0};
    int count = 0;
    for (const auto& cell : result.cells) {
      if (cell.hypotheses != n) continue;
      row.mean_auc += cell.auc;
      row.min_auc = std::min(row.min_auc, cell.auc);
      row.max_auc = std::max(row.max_auc, cell.auc);
      ++count;
    }
    row.mean_auc /= count;
    result.rows.push_back(row);
  }
  return result;
}

std::string sweep_table(const SweepResult& result) {
  std::string out = "N,mean_auc,min_auc,max_auc\n";
  for (const auto& r : result.rows) {
    out += std::to_string(r.hypotheses) + ',' + format_double(r.mean_auc) + ',' +
           format_double(r.min_auc) + ',' + format_double(r.max_auc) + '\n';
  }
  return out;
}

std::vector<AblationRow> constraint_ablations(const RunConfig& base) {
  struct Subset {
    const char* name;
    bool rcc, var, ddc;
  };
  static constexpr Subset subsets[] = {
      {"rcc", true, false, false},     {"var", false, true, false},
      {"ddc", false, false, true},     {"rcc+var", true, true, false},
      {"rcc+ddc", true, false, true},  {"var+ddc", false, true, true},
      {"rcc+var+ddc", true, true, true},
  };
  std::vector<AblationRow> rows;
  for (const auto& s : subsets) {
    RunConfig c = base;
    c.real_generator = c.attack_generator = true;
    c.use_rcc = s.rcc;
    c.use_var = s.var;
    c.use_ddc = s.ddc;
    rows.push_back({s.name, c});
  }
  return rows;
}

std::vector<AblationRow> generator_ablations(const RunConfig& base) {
  std::vector<AblationRow> rows;
  auto add = [&](const char* name, bool real, bool attack) {
    RunConfig c = base;
    c.real_generator = real;
    c.attack_generator = attack;
    c.use_var = real;
    c.use_rcc = real && attack;
    c.use_ddc = real && attack;
    rows.push_back({name, c});
  };
  add("no-generators", false, false);
  add("real-only", true, false);
  add("attack-only", false, true);
  add("both", true, true);
  return rows;
}

void run_ablations(std::vector<AblationRow>& rows, const std::vector<Sample>& train_set,
                   const std::vector<Sample>& dev_set, const std::vector<Sample>& test_set,
                   int threads) {
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    AblationRow& row = rows[i];
    const TrainResult trained = train(row.config, train_set);
    const ScoreOptions opts = score_options(row.config, false);
    const auto test = score_samples(trained.checkpoint, test_set, opts);
    const auto scores = softmax_scores(test);
    row.auc = roc_auc(scores);
    const double threshold =
        dev_set.empty()
            ? eer(scores).threshold
            : eer(softmax_scores(score_samples(trained.checkpoint, dev_set, opts))).threshold;
    row.hter = hter(scores, threshold);
  });
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "name,constraints,generators,hter,auc\n";
  for (const auto& r : rows) {
    out += r.name + ",\"" + r.config.constraints_string() + "\",\"" +
           r.config.generators_string() + "\"," + format_double(r.hter) + ',' +
           format_double(r.auc) + '\n';
  }
  return out;
}

}  // namespace fghv
