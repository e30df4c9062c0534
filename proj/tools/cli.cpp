#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "esl/experiment.hpp"
#include "esl/io.hpp"
#include "esl/run_config.hpp"

namespace esl::cli {

namespace fs = std::filesystem;

namespace {

std::shared_ptr<spdlog::logger> logger() {
  static const auto log = [] {
    auto l = spdlog::get("esl");
    if (!l) l = spdlog::stderr_logger_mt("esl");
    l->set_pattern("[%l] %v");
    return l;
  }();
  const char* env = std::getenv("ESL_LOG");
  const std::string level = env ? env : "info";
  if (level == "off") log->set_level(spdlog::level::off);
  else if (level == "debug") log->set_level(spdlog::level::debug);
  else log->set_level(spdlog::level::info);
  return log;
}

struct Common {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run config JSON (defaults when omitted)");
  cmd->add_option("--out", c.out, "Output directory (overrides the config)");
  cmd->add_option("--seed", c.seed, "Master seed (overrides the config)");
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.out) cfg.out = *c.out;
  if (c.seed) cfg.seed = *c.seed;
  cfg.resolve();
  return cfg;
}

fs::path write_resolved(const RunConfig& cfg) {
  const fs::path out(cfg.out);
  write_file_atomic(out / "config.resolved.json", run_config_to_json(cfg).dump(2) + "\n");
  return out;
}

Dataset load_or_generate(const RunConfig& cfg) {
  if (cfg.dataset && !fs::exists(*cfg.dataset)) throw IoError("dataset file not found: " + *cfg.dataset);
  return make_dataset(cfg);
}

int cmd_gen(const Common& c) {
  const auto cfg = resolve_config(c);
  const auto out = write_resolved(cfg);
  GenerateOptions go;
  go.holdout_fraction = cfg.synth.holdout_fraction;
  const auto data = generate_dataset(resolve_specs(cfg.synth), cfg.synth.dim, cfg.synth.concentration, cfg.seed, go);
  save_dataset(out / "dataset.json", data);
  write_file_atomic(out / "audit.json", audit_summary(data).dump(2) + "\n");
  logger()->info("gen: {} training + {} held-out samples, {} classes, noise ratio {:.4f}", data.samples.size(),
                 data.holdout.size(), data.num_classes(), data.noise_ratio);
  return kOk;
}

int cmd_train(const Common& c, const std::optional<std::string>& resume) {
  const auto cfg = resolve_config(c);
  const auto out = write_resolved(cfg);
  const auto data = load_or_generate(cfg);
  auto log = logger();

  std::optional<Trainer> trainer;
  if (resume) {
    trainer.emplace(data, cfg.train, checkpoint_from_json(json::parse(read_file(*resume)), cfg.train));
    log->info("train: resumed at epoch {}", trainer->state().epoch);
  } else {
    trainer.emplace(data, cfg.train);
  }

  std::string stats_lines;
  try {
    while (!trainer->done()) {
      const auto& m = trainer->run_epoch();
      log->info("epoch {:2d} lr {:.4g} loss {:.5f} active {} produced {} dropped {} merged {}", m.epoch, m.lr, m.loss,
                m.active_subcenters, m.produced, m.dropped_subcenters, m.merges);
      const auto& st = trainer->state();
      stats_lines += json{{"epoch", m.epoch}, {"stats", stats_snapshot(*st.last_stats, st.bank)}}.dump() + "\n";
    }
  } catch (const DivergenceError& e) {
    write_file_atomic(out / "metrics.csv", metrics_csv(trainer->state().history));
    throw;
  }

  const auto& st = trainer->state();
  write_file_atomic(out / "checkpoint.json", checkpoint_to_json(st, cfg.train).dump() + "\n");
  write_file_atomic(out / "events.jsonl", events_jsonl(st.events));
  write_file_atomic(out / "metrics.csv", metrics_csv(st.history));
  write_file_atomic(out / "stats.jsonl", stats_lines);
  log->info("train: {} epochs, {} active sub-centers, {} dropped samples", st.epoch, st.bank.total_active(),
            st.labels.dropped_count());
  return kOk;
}

int cmd_eval(const Common& c, const std::optional<std::string>& checkpoint) {
  const auto cfg = resolve_config(c);
  const auto out = write_resolved(cfg);
  const auto data = load_or_generate(cfg);
  const fs::path ckpt = checkpoint ? fs::path(*checkpoint) : out / "checkpoint.json";
  if (!fs::exists(ckpt)) throw IoError("checkpoint not found: " + ckpt.string());
  const auto state = checkpoint_from_json(json::parse(read_file(ckpt)), cfg.train);
  const auto report = evaluate(data, state, cfg.train.encoder, cfg.eval);
  write_file_atomic(out / "report.json", report_to_json(report).dump(2) + "\n");
  write_file_atomic(out / "report.csv", report_summary_csv(report));
  for (const auto& p : report.verification.points) {
    if (p.tar) logger()->info("eval: TAR@FAR={:g} = {:.4f}", p.far, *p.tar);
    else logger()->info("eval: TAR@FAR={:g} unreachable ({} negative pairs)", p.far, report.verification.negative_pairs);
  }
  return kOk;
}

int cmd_sweep(const Common& c, const std::string& ratios_text, int parallel, bool svg) {
  const auto ratios = parse_ratio_list(ratios_text);
  if (ratios.empty()) throw std::invalid_argument("--noise-ratios: at least one ratio is required");
  const auto cfg = resolve_config(c);
  const auto out = write_resolved(cfg);
  const auto rows = run_sweep(cfg, ratios, parallel);
  write_file_atomic(out / "sweep.csv", sweep_csv(rows));
  if (svg) write_file_atomic(out / "sweep.svg", sweep_svg(rows, 1e-2));
  for (const auto& r : rows)
    logger()->info("sweep: ratio {:g} {:8s} TAR@1e-2 {}", r.ratio, r.method,
                   r.report.verification.tar(1e-2) ? std::to_string(*r.report.verification.tar(1e-2)) : "n/a");
  return kOk;
}

}  // namespace

std::vector<double> parse_ratio_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    item = item.substr(b, e - b + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("--noise-ratios: '" + item + "' is not a number");
    }
    if (used != item.size()) throw std::invalid_argument("--noise-ratios: '" + item + "' is not a number");
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("--noise-ratios: ratios must lie in [0, 1]");
    out.push_back(v);
  }
  return out;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Evolving sub-centers learning on synthetic noisy datasets"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, eval_opts, sweep_opts;
  auto* gen = app.add_subcommand("gen", "Generate a dataset and its audit");
  add_common(gen, gen_opts);

  auto* train = app.add_subcommand("train", "Train and write checkpoint, events and metrics");
  add_common(train, train_opts);
  std::optional<std::string> resume;
  train->add_option("--resume", resume, "Checkpoint to resume from (epoch boundary)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against ground truth");
  add_common(eval, eval_opts);
  std::optional<std::string> checkpoint;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/checkpoint.json)");

  auto* sweep = app.add_subcommand("sweep", "ESL vs baseline across noise ratios");
  add_common(sweep, sweep_opts);
  std::string ratios;
  int parallel = 1;
  bool svg = false;
  sweep->add_option("--noise-ratios", ratios, "Comma-separated ratios in [0, 1]")->required();
  sweep->add_option("--parallel", parallel, "Concurrent jobs")->check(CLI::PositiveNumber);
  sweep->add_flag("--svg", svg, "Also write sweep.svg");

  std::vector<const char*> argv{"esl"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInputError;
  }

  try {
    if (*gen) return cmd_gen(gen_opts);
    if (*train) return cmd_train(train_opts, resume);
    if (*eval) return cmd_eval(eval_opts, checkpoint);
    if (*sweep) return cmd_sweep(sweep_opts, ratios, parallel, svg);
  } catch (const DivergenceError& e) {
    logger()->error("divergence: {}", e.what());
    return kDivergence;
  } catch (const std::invalid_argument& e) {
    logger()->error("{}", e.what());
    return kInputError;
  } catch (const IoError& e) {
    logger()->error("{}", e.what());
    return kInputError;
  } catch (const json::exception& e) {
    logger()->error("malformed JSON: {}", e.what());
    return kInputError;
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return kFailure;
  }
  return kFailure;
}

}  // namespace esl::cli
