// fsu: pretrain -> unlearn -> evaluate, plus grid sweeps and the
// comparison table. Every output document embeds the resolved config.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "fsu/fsu.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> setting;
};

fsu::ExperimentConfig resolve(const CommonOptions& o) {
  fsu::ExperimentConfig cfg = o.config.empty() ? fsu::ExperimentConfig{} : fsu::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.setting) cfg.pretrain.setting = fsu::parse_setting(*o.setting);
  return cfg;
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw fsu::IoError("cannot create output directory " + out + ": " + ec.message());
  return dir;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool need_config) {
  auto* c = cmd->add_option("--config", o.config, "experiment config (JSON)");
  if (need_config) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--seed", o.seed, "override the master seed");
  cmd->add_option("--setting", o.setting, "i: train on train, eval on val; ii: train+val, eval on test")
      ->check(CLI::IsMember({"i", "ii"}));
}

int cmd_pretrain(const CommonOptions& o) {
  const fsu::ExperimentConfig cfg = resolve(o);
  const fs::path dir = prepare_out_dir(o.out);
  const fsu::Partition part = fsu::partition(fsu::prepare_splits(cfg), cfg.pretrain.setting);
  const fsu::PretrainOutcome res = fsu::pretrain(cfg, part);

  const fsu::json echo = fsu::config_to_json(cfg);
  fsu::save_model(res.model, (dir / "model.json").string(),
                  {{"seed", cfg.seed}, {"setting", fsu::to_string(cfg.pretrain.setting)}, {"config", echo}});
  fsu::write_json({{"config", echo},
                   {"model_checksum", fsu::model_checksum(res.model)},
                   {"train_samples", part.train.size()},
                   {"final_train_loss", res.final_train_loss},
                   {"eval", fsu::to_json(res.eval)}},
                  (dir / "pretrain.json").string());
  std::cout << "pretrained on " << part.train.size() << " samples; " << part.eval_name << " UAR "
            << res.eval.uar << "\nmodel: " << (dir / "model.json").string() << '\n';
  return 0;
}

int cmd_unlearn(const CommonOptions& o, const std::string& model_path,
                const std::optional<std::string>& strategy, const std::optional<std::size_t>& forget_count,
                const std::optional<std::string>& dump_adversarial) {
  fsu::ExperimentConfig cfg = resolve(o);
  if (strategy) cfg.unlearn.strategy = fsu::parse_strategy(*strategy);
  if (forget_count) cfg.unlearn.forget_count = *forget_count;
  const fs::path dir = prepare_out_dir(o.out);

  const fsu::json artifact = fsu::read_json(model_path);
  const fsu::Classifier model = fsu::load_model(model_path);
  if (artifact.contains("meta") && artifact["meta"].contains("seed") &&
      artifact["meta"]["seed"].get<std::uint64_t>() != cfg.seed)
    std::cerr << "warning: model was pretrained with seed " << artifact["meta"]["seed"]
              << " but the run uses seed " << cfg.seed << '\n';

  const fsu::Partition part = fsu::partition(fsu::prepare_splits(cfg), cfg.pretrain.setting);
  if (part.train.feature_dim() != model.input_dim() || part.train.class_count() != model.class_count())
    throw fsu::ConfigError("model shape does not match the configured dataset");
  const fsu::RunOutcome run = fsu::run_unlearning(cfg, model, part);

  const fsu::json echo = fsu::config_to_json(cfg);
  fsu::save_model(run.result.model, (dir / "unlearned_model.json").string(),
                  {{"seed", cfg.seed}, {"setting", fsu::to_string(cfg.pretrain.setting)}, {"config", echo}});
  fsu::write_json({{"config", echo},
                   {"model_checksum_before", fsu::model_checksum(model)},
                   {"model_checksum_after", fsu::model_checksum(run.result.model)},
                   {"unlearn", fsu::to_json(run.result.report)},
                   {"eval",
                    {{"forget_before", fsu::to_json(run.forget_before)},
                     {"forget_after", fsu::to_json(run.forget_after)},
                     {"eval_before", fsu::to_json(run.eval_before)},
                     {"eval_after", fsu::to_json(run.eval_after)}}}},
                  (dir / "unlearn.json").string());
  if (dump_adversarial) {
    if (run.result.adversarial.empty())
      std::cerr << "warning: strategy " << fsu::to_string(cfg.unlearn.strategy)
                << " builds no adversarial set; nothing dumped\n";
    else
      fsu::save_csv(fsu::adversarial_as_dataset(run.result.adversarial, model.input_dim(), model.class_count()),
                    *dump_adversarial);
  }
  std::cout << fsu::to_string(cfg.unlearn.strategy) << " N=" << run.forget_after.n_samples
            << ": forget UAR " << run.forget_before.uar << " -> " << run.forget_after.uar << ", "
            << part.eval_name << " UAR " << run.eval_before.uar << " -> " << run.eval_after.uar << '\n';
  return 0;
}

int cmd_sweep(const CommonOptions& o, unsigned threads, bool quiet) {
  fsu::ExperimentConfig cfg = resolve(o);
  if (o.seed) cfg.sweep.seeds = {*o.seed};
  const fs::path dir = prepare_out_dir(o.out);
  auto log = [quiet](const std::string& line) {
    if (quiet) return;
    static std::mutex m;
    std::lock_guard lock(m);
    std::cerr << line << '\n';
  };
  const std::vector<fsu::SweepRow> rows = fsu::run_sweep(cfg, threads, log);

  {
    std::ofstream os(dir / "results.csv");
    if (!os) throw fsu::IoError("cannot write " + (dir / "results.csv").string());
    fsu::write_results_csv(os, rows);
  }
  {
    std::ofstream os(dir / "best.csv");
    if (!os) throw fsu::IoError("cannot write " + (dir / "best.csv").string());
    fsu::write_best_csv(os, fsu::select_best(rows));
  }
  fsu::write_json({{"config", fsu::config_to_json(cfg)}, {"rows", rows.size()}}, (dir / "sweep.json").string());
  const std::string table = fsu::render_report(rows);
  {
    std::ofstream os(dir / "report.txt");
    os << table;
  }
  std::cout << table;
  return 0;
}

int cmd_report(const std::string& results, const std::optional<std::string>& out) {
  std::ifstream is(results);
  if (!is) throw fsu::IoError("cannot open " + results);
  std::vector<fsu::SweepRow> rows;
  try {
    rows = fsu::read_results_csv(is);
  } catch (const fsu::ParseError& e) {
    throw e.with_context(results);
  }
  const std::string table = fsu::render_report(rows);
  if (out) {
    std::ofstream os(*out);
    if (!os) throw fsu::IoError("cannot write " + *out);
    os << table;
  } else {
    std::cout << table;
  }
  return 0;
}

int cmd_export_data(const CommonOptions& o) {
  const fsu::ExperimentConfig cfg = resolve(o);
  const fsu::Splits s = fsu::prepare_splits(cfg);
  const fs::path dir = prepare_out_dir(o.out);
  fsu::save_csv(s.train, (dir / "train.csv").string());
  fsu::save_csv(s.val, (dir / "val.csv").string());
  fsu::save_csv(s.test, (dir / "test.csv").string());
  std::cout << "train " << s.train.size() << ", val " << s.val.size() << ", test " << s.test.size()
            << " samples written to " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forget-set-only machine unlearning experiments"};
  app.require_subcommand(1);

  CommonOptions pre_opts;
  auto* pre = app.add_subcommand("pretrain", "train the classifier and write model.json + pretrain.json");
  add_common(pre, pre_opts, false);

  CommonOptions un_opts;
  std::string model_path;
  std::optional<std::string> strategy;
  std::optional<std::size_t> forget_count;
  std::optional<std::string> dump_adv;
  auto* un = app.add_subcommand("unlearn", "unlearn a pretrained model and evaluate it");
  add_common(un, un_opts, false);
  un->add_option("--model", model_path, "pretrained model artifact")->required()->check(CLI::ExistingFile);
  un->add_option("--strategy", strategy, "adv | adv_ela | random_label | remain_involved");
  un->add_option("--forget-count", forget_count, "number of training samples to forget (N)");
  un->add_option("--dump-adversarial", dump_adv, "write the adversarial set as dataset CSV");

  CommonOptions sw_opts;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  bool quiet = false;
  auto* sw = app.add_subcommand("sweep", "run the tau x N x strategy x seed grid");
  add_common(sw, sw_opts, false);
  sw->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  sw->add_flag("--quiet", quiet, "no per-run progress on stderr");

  std::string results;
  std::optional<std::string> report_out;
  auto* rep = app.add_subcommand("report", "render the comparison table from results.csv");
  rep->add_option("results", results, "results CSV written by sweep")->required();
  rep->add_option("--out", report_out, "write the table here instead of stdout");

  CommonOptions ex_opts;
  auto* ex = app.add_subcommand("export-data", "write the train/val/test splits as CSV");
  add_common(ex, ex_opts, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pre) return cmd_pretrain(pre_opts);
    if (*un) return cmd_unlearn(un_opts, model_path, strategy, forget_count, dump_adv);
    if (*sw) return cmd_sweep(sw_opts, threads, quiet);
    if (*rep) return cmd_report(results, report_out);
    if (*ex) return cmd_export_data(ex_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
