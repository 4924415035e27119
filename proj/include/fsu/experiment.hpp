#pragma once

// Experiment orchestration: configuration, seed fan-out, pretraining,
// unlearning runs with evaluation, grid sweeps and the comparison table.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "fsu/attacks.hpp"
#include "fsu/data.hpp"
#include "fsu/error.hpp"
#include "fsu/metrics.hpp"
#include "fsu/model.hpp"
#include "fsu/rng.hpp"
#include "fsu/training.hpp"
#include "fsu/unlearning.hpp"

namespace fsu {

/// (i) train on train, evaluate on val; (ii) train on train+val, evaluate on test.
enum class Setting { i, ii };

inline std::string_view to_string(Setting s) { return s == Setting::i ? "i" : "ii"; }

inline Setting parse_setting(std::string_view s) {
  if (s == "i") return Setting::i;
  if (s == "ii") return Setting::ii;
  throw ConfigError("unknown setting '" + std::string(s) + "' (expected i or ii)");
}

struct DataConfig {
  std::optional<SynthSpec> synth = SynthSpec{};
  std::optional<std::string> csv;  // whole dataset, split by group
  std::size_t class_count = 7;     // used for csv input
};

struct ModelConfig {
  std::vector<std::size_t> hidden{64, 64};
};

struct PretrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  Setting setting = Setting::i;
};

struct SweepConfig {
  std::vector<double> taus{0.1, 0.3, 0.5, 0.7};
  std::vector<std::size_t> forget_counts{10, 30, 50, 100};
  std::vector<Strategy> strategies{Strategy::remain_involved, Strategy::random_label, Strategy::adv,
                                   Strategy::adv_ela};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  void validate() const {
    if (taus.empty() || forget_counts.empty() || strategies.empty() || seeds.empty())
      throw ConfigError("sweep: every grid (taus, forget_counts, strategies, seeds) must be nonempty");
  }
};

struct ExperimentConfig {
  std::uint64_t seed = 1;  // master seed
  DataConfig data;
  SplitSpec split;
  ModelConfig model;
  PretrainConfig pretrain;
  UnlearnConfig unlearn;
  SweepConfig sweep;
};

/// Named sub-seeds fanned out from the master seed.
struct SeedPlan {
  std::uint64_t data, split, init, pretrain_shuffle, forget, unlearn, attack;

  static SeedPlan from(std::uint64_t master) {
    return {derive_seed(master, "data"),    derive_seed(master, "split"),
            derive_seed(master, "init"),    derive_seed(master, "shuffle"),
            derive_seed(master, "forget"),  derive_seed(master, "relabel"),
            derive_seed(master, "attack")};
  }
};

// ---------------------------------------------------------------------------
// Data preparation

inline Splits prepare_splits(const ExperimentConfig& cfg) {
  const SeedPlan seeds = SeedPlan::from(cfg.seed);
  LabeledDataset all = [&] {
    if (cfg.data.csv) return load_csv(*cfg.data.csv, cfg.data.class_count);
    if (!cfg.data.synth) throw ConfigError("data: need either a synth block or a csv path");
    SynthSpec spec = *cfg.data.synth;
    spec.seed = seeds.data;
    return synth_generate(spec);
  }();
  SplitSpec split = cfg.split;
  split.seed = seeds.split;
  return split_by_group(all, split);
}

/// Training pool and evaluation split for one setting.
struct Partition {
  LabeledDataset train;
  LabeledDataset eval;
  std::string eval_name;
};

inline Partition partition(const Splits& s, Setting setting) {
  if (setting == Setting::i) return {s.train, s.val, "val"};
  return {concat(s.train, s.val), s.test, "test"};
}

// ---------------------------------------------------------------------------
// Pretraining

struct PretrainOutcome {
  Classifier model;
  EvalReport eval;
  double final_train_loss = 0.0;
};

inline PretrainOutcome pretrain(const ExperimentConfig& cfg, const Partition& part) {
  const SeedPlan seeds = SeedPlan::from(cfg.seed);
  Classifier model = Classifier::initialized(part.train.feature_dim(), cfg.model.hidden,
                                             part.train.class_count(), seeds.init);
  const TrainOptions opt{cfg.pretrain.epochs, cfg.pretrain.batch_size, cfg.pretrain.lr,
                         seeds.pretrain_shuffle};
  const double loss = train_classifier(model, part.train, opt);
  EvalReport rep = evaluate(model, part.eval, part.eval_name);
  return {std::move(model), std::move(rep), loss};
}

// ---------------------------------------------------------------------------
// Unlearning run

/// cfg.unlearn with seeds filled in from the master seed.
inline UnlearnConfig resolved_unlearn_config(const ExperimentConfig& cfg) {
  const SeedPlan seeds = SeedPlan::from(cfg.seed);
  UnlearnConfig u = cfg.unlearn;
  u.seed = seeds.unlearn;
  u.attack.seed = seeds.attack;
  return u;
}

struct RunOutcome {
  UnlearnResult result;
  EvalReport forget_before;  // true labels
  EvalReport forget_after;   // true labels: forgetting shows as low UAR
  EvalReport eval_before;
  EvalReport eval_after;
};

inline RunOutcome run_unlearning(const ExperimentConfig& cfg, const Classifier& pretrained,
                                 const Partition& part,
                                 std::optional<std::vector<AdversarialSample>> adversarial = std::nullopt) {
  const UnlearnConfig u = resolved_unlearn_config(cfg);
  u.validate();
  const ForgetSplit fs = select_forget(part.train, u.forget_count, SeedPlan::from(cfg.seed).forget);
  std::optional<LabeledDataset> remain;
  if (u.strategy == Strategy::remain_involved) remain = fs.remain;
  UnlearnResult res = unlearn(pretrained, fs.forget, u, remain, std::move(adversarial));
  RunOutcome out{std::move(res),
                 evaluate(pretrained, fs.forget, "forget"),
                 {},
                 evaluate(pretrained, part.eval, part.eval_name),
                 {}};
  out.forget_after = evaluate(out.result.model, fs.forget, "forget");
  out.eval_after = evaluate(out.result.model, part.eval, part.eval_name);
  return out;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepRow {
  Strategy strategy = Strategy::adv;
  double tau = 0.0;
  std::size_t forget_count = 0;
  std::uint64_t seed = 0;
  double uar_forget = 0.0;
  double uar_eval = 0.0;
  double uar_eval_pre = 0.0;
  std::size_t n_forget = 0;
  std::size_t n_eval = 0;
  std::string eval_split;
};

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers. The first
/// exception is rethrown after all workers stop.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  pool.clear();
  if (error) std::rethrow_exception(error);
}

/// Cartesian run over seeds x taus x forget counts x strategies. Rows come
/// back in that nesting order regardless of thread scheduling.
///
/// random_label and remain_involved never read tau, so they run once per
/// (seed, N) and that result fills every tau row. adv and adv_ela at the
/// same grid point share one adversarial set.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base, unsigned threads = 1,
                                       const std::function<void(const std::string&)>& log = {}) {
  base.sweep.validate();
  const SweepConfig& grid = base.sweep;
  const std::size_t n_seeds = grid.seeds.size();
  const std::size_t n_tau = grid.taus.size();
  const std::size_t n_n = grid.forget_counts.size();
  const std::size_t n_strat = grid.strategies.size();

  auto config_for = [&](std::size_t si) {
    ExperimentConfig c = base;
    c.seed = grid.seeds[si];
    return c;
  };

  std::vector<Partition> parts;
  for (std::size_t si = 0; si < n_seeds; ++si)
    parts.push_back(partition(prepare_splits(config_for(si)), base.pretrain.setting));
  std::vector<std::optional<PretrainOutcome>> pre(n_seeds);
  parallel_for(n_seeds, threads, [&](std::size_t si) {
    pre[si] = pretrain(config_for(si), parts[si]);
    if (log) log("pretrained seed " + std::to_string(grid.seeds[si]) + ": " + parts[si].eval_name +
                 " UAR " + std::to_string(pre[si]->eval.uar));
  });

  auto uses_tau = [](Strategy s) { return s == Strategy::adv || s == Strategy::adv_ela; };
  std::vector<SweepRow> rows(n_seeds * n_tau * n_n * n_strat);
  auto slot = [&](std::size_t si, std::size_t ti, std::size_t ni, std::size_t ki) {
    return ((si * n_tau + ti) * n_n + ni) * n_strat + ki;
  };

  // One job per (seed, N, tau) for tau-dependent strategies, plus one per
  // (seed, N) for the rest (tau index n_tau marks those).
  struct Job {
    std::size_t si, ni, ti;
  };
  std::vector<Job> jobs;
  for (std::size_t si = 0; si < n_seeds; ++si)
    for (std::size_t ni = 0; ni < n_n; ++ni)
      for (std::size_t ti = 0; ti <= n_tau; ++ti) jobs.push_back({si, ni, ti});

  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const Job job = jobs[j];
    const bool tau_job = job.ti < n_tau;
    ExperimentConfig c = config_for(job.si);
    c.unlearn.forget_count = grid.forget_counts[job.ni];
    if (tau_job) c.unlearn.attack.tau = grid.taus[job.ti];
    const Classifier& model = pre[job.si]->model;
    const Partition& part = parts[job.si];

    std::optional<std::vector<AdversarialSample>> shared_adv;
    for (std::size_t ki = 0; ki < n_strat; ++ki) {
      const Strategy s = grid.strategies[ki];
      if (uses_tau(s) != tau_job) continue;
      c.unlearn.strategy = s;
      std::optional<std::vector<AdversarialSample>> adv;
      if (tau_job && shared_adv) adv = shared_adv;
      RunOutcome run = run_unlearning(c, model, part, std::move(adv));
      if (tau_job && !shared_adv) shared_adv = run.result.adversarial;

      SweepRow row{s,
                   tau_job ? grid.taus[job.ti] : 0.0,
                   c.unlearn.forget_count,
                   grid.seeds[job.si],
                   run.forget_after.uar,
                   run.eval_after.uar,
                   run.eval_before.uar,
                   run.forget_after.n_samples,
                   run.eval_after.n_samples,
                   part.eval_name};
      if (tau_job) {
        rows[slot(job.si, job.ti, job.ni, ki)] = row;
      } else {
        for (std::size_t ti = 0; ti < n_tau; ++ti) {
          row.tau = grid.taus[ti];
          rows[slot(job.si, ti, job.ni, ki)] = row;
        }
      }
      if (log)
        log("seed " + std::to_string(row.seed) + " N=" + std::to_string(row.forget_count) +
            (tau_job ? " tau=" + format_double(row.tau) : std::string{}) + " " +
            std::string(to_string(s)) + ": forget UAR " + std::to_string(row.uar_forget) + ", " +
            part.eval_name + " UAR " + std::to_string(row.uar_eval));
    }
  });

  for (const SweepRow& r : rows)
    if (r.n_eval == 0) throw Error("sweep produced an empty row; grid point missing");
  return rows;
}

// ---------------------------------------------------------------------------
// Results CSV

inline const char* kResultsHeader =
    "strategy,tau,forget_count,seed,uar_forget,uar_eval,uar_eval_pre,n_forget,n_eval,eval_split";

inline void write_results_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << kResultsHeader << '\n';
  for (const SweepRow& r : rows)
    os << to_string(r.strategy) << ',' << format_double(r.tau) << ',' << r.forget_count << ','
       << r.seed << ',' << format_double(r.uar_forget) << ',' << format_double(r.uar_eval) << ','
       << format_double(r.uar_eval_pre) << ',' << r.n_forget << ',' << r.n_eval << ','
       << r.eval_split << '\n';
}

inline std::vector<SweepRow> read_results_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty results file: missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_commas(line);
  const auto expected = detail::split_commas(kResultsHeader);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[std::string(header[i])] = i;
  for (auto name : expected)
    if (!col.count(std::string(name)))
      throw ParseError("results header is missing column '" + std::string(name) + "'", 1);

  std::vector<SweepRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " columns, found " +
                       std::to_string(cells.size()), lineno);
    auto cell = [&](const char* name) { return cells[col.at(name)]; };
    SweepRow r;
    try {
      r.strategy = parse_strategy(cell("strategy"));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), lineno);
    }
    r.tau = detail::parse_number<double>(cell("tau"), lineno, "tau");
    r.forget_count = detail::parse_number<std::size_t>(cell("forget_count"), lineno, "forget_count");
    r.seed = detail::parse_number<std::uint64_t>(cell("seed"), lineno, "seed");
    r.uar_forget = detail::parse_number<double>(cell("uar_forget"), lineno, "uar_forget");
    r.uar_eval = detail::parse_number<double>(cell("uar_eval"), lineno, "uar_eval");
    r.uar_eval_pre = detail::parse_number<double>(cell("uar_eval_pre"), lineno, "uar_eval_pre");
    r.n_forget = detail::parse_number<std::size_t>(cell("n_forget"), lineno, "n_forget");
    r.n_eval = detail::parse_number<std::size_t>(cell("n_eval"), lineno, "n_eval");
    r.eval_split = std::string(cell("eval_split"));
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Best-tau selection and the comparison table

/// Per (strategy, N): the tau with the highest seed-averaged eval UAR.
struct BestRow {
  Strategy strategy = Strategy::adv;
  std::size_t forget_count = 0;
  double best_tau = 0.0;
  double mean_uar_forget = 0.0;
  double mean_uar_eval = 0.0;
  double mean_uar_eval_pre = 0.0;
  std::size_t n_eval_total = 0;  // eval samples summed over seeds
  std::size_t seeds = 0;
};

inline std::vector<BestRow> select_best(const std::vector<SweepRow>& rows) {
  struct Acc {
    double forget = 0, eval = 0, pre = 0;
    std::size_t n_eval = 0, count = 0;
  };
  // (strategy, N, tau) -> accumulated over seeds; std::map keeps output order fixed
  std::map<std::tuple<int, std::size_t, double>, Acc> acc;
  for (const SweepRow& r : rows) {
    Acc& a = acc[{static_cast<int>(r.strategy), r.forget_count, r.tau}];
    a.forget += r.uar_forget;
    a.eval += r.uar_eval;
    a.pre += r.uar_eval_pre;
    a.n_eval += r.n_eval;
    ++a.count;
  }
  std::map<std::pair<int, std::size_t>, BestRow> best;
  for (const auto& [key, a] : acc) {
    const auto [strategy, n, tau] = key;
    const double k = static_cast<double>(a.count);
    BestRow candidate{static_cast<Strategy>(strategy), n, tau, a.forget / k, a.eval / k, a.pre / k,
                      a.n_eval, a.count};
    auto it = best.find({strategy, n});
    if (it == best.end() || candidate.mean_uar_eval > it->second.mean_uar_eval)
      best[{strategy, n}] = candidate;
  }
  std::vector<BestRow> out;
  for (const auto& [key, b] : best) out.push_back(b);
  return out;
}

inline void write_best_csv(std::ostream& os, const std::vector<BestRow>& best) {
  os << "strategy,forget_count,best_tau,mean_uar_forget,mean_uar_eval,mean_uar_eval_pre,n_eval_total,seeds\n";
  for (const BestRow& b : best)
    os << to_string(b.strategy) << ',' << b.forget_count << ',' << format_double(b.best_tau) << ','
       << format_double(b.mean_uar_forget) << ',' << format_double(b.mean_uar_eval) << ','
       << format_double(b.mean_uar_eval_pre) << ',' << b.n_eval_total << ',' << b.seeds << '\n';
}

/// p-value threshold for a significance star.
inline constexpr double kStarThreshold = 0.001;

/// Text table: one row per method, a (forget, eval) column pair per N.
/// The better of adv/adv_ela at each N gets '*' when the one-tailed z-test
/// against random_label gives p < 0.001.
inline std::string render_report(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw ParseError("results contain no rows");
  const std::vector<BestRow> best = select_best(rows);
  std::vector<std::size_t> ns;
  for (const BestRow& b : best)
    if (std::find(ns.begin(), ns.end(), b.forget_count) == ns.end()) ns.push_back(b.forget_count);
  std::sort(ns.begin(), ns.end());

  auto find = [&](Strategy s, std::size_t n) -> const BestRow* {
    for (const BestRow& b : best)
      if (b.strategy == s && b.forget_count == n) return &b;
    return nullptr;
  };

  std::map<std::size_t, Strategy> starred;
  for (std::size_t n : ns) {
    const BestRow* base = find(Strategy::random_label, n);
    const BestRow* a = find(Strategy::adv, n);
    const BestRow* e = find(Strategy::adv_ela, n);
    const BestRow* top = a && e ? (e->mean_uar_eval > a->mean_uar_eval ? e : a) : (a ? a : e);
    if (!base || !top) continue;
    const ZTestResult z =
        one_tailed_z_test(top->mean_uar_eval, base->mean_uar_eval, top->n_eval_total, base->n_eval_total);
    if (!z.degenerate && z.p_value < kStarThreshold) starred[n] = top->strategy;
  }

  const std::string eval_name = rows.front().eval_split;
  auto cell = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };

  std::ostringstream os;
  os << pad("Method", 16);
  for (std::size_t n : ns) os << " | " << pad("N=" + std::to_string(n), 15);
  os << '\n' << pad("", 16);
  for (std::size_t i = 0; i < ns.size(); ++i) os << " | " << pad("D_e", 7) << pad(eval_name, 8);
  os << '\n' << std::string(16 + ns.size() * 18, '-') << '\n';

  os << pad("pretrained", 16);
  for (std::size_t n : ns) {
    double pre = 0.0;
    std::size_t k = 0;
    for (const BestRow& b : best)
      if (b.forget_count == n) {
        pre += b.mean_uar_eval_pre;
        ++k;
      }
    os << " | " << pad("--", 7) << pad(k ? cell(pre / static_cast<double>(k)) : "--", 8);
  }
  os << '\n';

  for (Strategy s : {Strategy::remain_involved, Strategy::random_label, Strategy::adv, Strategy::adv_ela}) {
    bool any = false;
    for (std::size_t n : ns) any = any || find(s, n);
    if (!any) continue;
    os << pad(std::string(to_string(s)), 16);
    for (std::size_t n : ns) {
      const BestRow* b = find(s, n);
      if (!b) {
        os << " | " << pad("--", 7) << pad("--", 8);
        continue;
      }
      const auto it = starred.find(n);
      const bool star = it != starred.end() && it->second == s;
      os << " | " << pad(cell(b->mean_uar_forget), 7) << pad(cell(b->mean_uar_eval) + (star ? "*" : ""), 8);
    }
    os << '\n';
  }
  os << '\n' << "best tau per cell (selected on " << eval_name << " UAR, mean over seeds):\n";
  for (const BestRow& b : best) {
    if (b.strategy != Strategy::adv && b.strategy != Strategy::adv_ela) continue;
    char tau[32];
    std::snprintf(tau, sizeof tau, "%g", b.best_tau);
    os << "  " << pad(std::string(to_string(b.strategy)), 16) << " N=" << pad(std::to_string(b.forget_count), 4)
       << " tau=" << pad(tau, 5) << " seeds=" << b.seeds << '\n';
  }
  os << "* p < 0.001, one-tailed pooled two-proportion z-test against random_label\n";
  return os.str();
}

}  // namespace fsu
