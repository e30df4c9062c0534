#include "esl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "esl/io.hpp"

namespace esl {

Dataset make_dataset(const RunConfig& cfg) {
  if (cfg.dataset) return load_dataset(*cfg.dataset);
  GenerateOptions go;
  go.holdout_fraction = cfg.synth.holdout_fraction;
  return generate_dataset(resolve_specs(cfg.synth), cfg.synth.dim, cfg.synth.concentration, cfg.seed, go);
}

RunResult run_experiment(const Dataset& data, const TrainConfig& train, const VerificationOptions& eval,
                         const std::function<void(const EpochMetrics&)>& on_epoch) {
  Trainer trainer(data, train);
  trainer.run(on_epoch);
  RunResult r;
  r.report = evaluate(data, trainer.state(), train.encoder, eval);
  r.state = trainer.state();
  return r;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, std::span<const double> ratios, int parallel) {
  if (ratios.empty()) throw std::invalid_argument("sweep: the noise ratio list is empty");
  for (double r : ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("sweep: noise ratios must lie in [0, 1]");
  if (base.dataset) throw std::invalid_argument("sweep: generates its own datasets; drop the 'dataset' field");

  const std::size_t jobs = ratios.size() * 2;
  std::vector<SweepRow> rows(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t k = next++; k < jobs; k = next++) {
      try {
        RunConfig cfg = base;
        cfg.synth.noise_ratio = ratios[k / 2];
        const bool esl = k % 2 == 0;
        const Dataset data = make_dataset(cfg);
        const TrainConfig train = esl ? cfg.train : cfg.train.plain_baseline();
        auto res = run_experiment(data, train, cfg.eval);
        rows[k] = {ratios[k / 2], esl ? "esl" : "baseline", data.noise_ratio, std::move(res.report)};
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };

  const int threads = std::clamp(parallel, 1, static_cast<int>(jobs));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "ratio,method,metric,value\n";
  for (const auto& r : rows) {
    const std::string prefix = format_double(r.ratio) + ',' + r.method + ',';
    auto add = [&](const std::string& metric, const std::string& value) { out += prefix + metric + ',' + value + '\n'; };
    add("measured_noise", format_double(r.measured_noise));
    for (const auto& p : r.report.verification.points) {
      char far[32];
      std::snprintf(far, sizeof far, "%g", p.far);
      add(std::string("tar@") + far, p.tar ? format_double(*p.tar) : "");
    }
    add("drop_precision", format_double(r.report.cleaning.drop.precision()));
    add("drop_recall", format_double(r.report.cleaning.drop.recall()));
    add("merge_precision", format_double(r.report.cleaning.merge.precision()));
    add("merge_recall", format_double(r.report.cleaning.merge.recall()));
    add("purity", format_double(r.report.purity));
    add("nmi", format_double(r.report.nmi));
  }
  return out;
}

std::string sweep_svg(std::span<const SweepRow> rows, double far) {
  const double W = 480, H = 320, L = 60, R = 20, T = 20, B = 50;
  double xmax = 0.0;
  for (const auto& r : rows) xmax = std::max(xmax, r.ratio);
  if (xmax <= 0.0) xmax = 1.0;
  auto px = [&](double x) { return L + (W - L - R) * x / xmax; };
  auto py = [&](double y) { return H - B - (H - T - B) * y; };
  char buf[256];
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\" font-family=\"sans-serif\" "
                    "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                L, py(0), W - R, py(0), L, py(0), L, py(1));
  svg += buf;
  for (int t = 0; t <= 4; ++t) {
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.2f</text>\n", L - 6, py(t / 4.0) + 4,
                  t / 4.0);
    svg += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">noise ratio</text>\n"
                "<text x=\"14\" y=\"%g\" transform=\"rotate(-90 14 %g)\" text-anchor=\"middle\">TAR@FAR=%g</text>\n",
                (L + W - R) / 2, H - 12, (T + H - B) / 2, (T + H - B) / 2, far);
  svg += buf;

  const char* colors[] = {"#1f77b4", "#d62728"};
  int idx = 0;
  for (const char* method : {"esl", "baseline"}) {
    std::string pts;
    for (const auto& r : rows) {
      if (r.method != method) continue;
      const auto tar = r.report.verification.tar(far);
      if (!tar) continue;
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", pts.empty() ? "" : " ", px(r.ratio), py(*tar));
      pts += buf;
      std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%g</text>\n", px(r.ratio),
                    H - B + 16, r.ratio);
      if (idx == 0) svg += buf;
    }
    svg += std::string("<polyline fill=\"none\" stroke=\"") + colors[idx] + "\" stroke-width=\"2\" points=\"" + pts +
           "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" fill=\"%s\">%s</text>\n", W - R - 70, T + 14.0 * (idx + 1),
                  colors[idx], method);
    svg += buf;
    ++idx;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace esl
