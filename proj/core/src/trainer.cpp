#include "esl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace esl {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t kBankStream = 1;
constexpr std::uint64_t kEncoderStream = 2;
constexpr std::uint64_t kShuffleStream = 3;

}  // namespace

std::string to_string(EncoderMode mode) { return mode == EncoderMode::linear ? "linear" : "frozen"; }

EncoderMode encoder_mode_from_string(const std::string& name) {
  if (name == "linear" || name == "linear-encoder") return EncoderMode::linear;
  if (name == "frozen" || name == "frozen-features") return EncoderMode::frozen;
  throw std::invalid_argument("unknown encoder mode '" + name + "'");
}

std::string to_string(EncoderInit init) { return init == EncoderInit::identity ? "identity" : "random"; }

EncoderInit encoder_init_from_string(const std::string& name) {
  if (name == "identity") return EncoderInit::identity;
  if (name == "random") return EncoderInit::random;
  throw std::invalid_argument("unknown encoder init '" + name + "'");
}

double TrainConfig::lr_at(int epoch) const {
  double lr_e = lr;
  for (const auto& s : lr_schedule)
    if (s.epoch <= epoch) lr_e *= s.multiplier;
  return lr_e;
}

void TrainConfig::validate(int input_dim) const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (!(lr_schedule[i].multiplier > 0.0))
      throw std::invalid_argument("train: lr_schedule multipliers must be > 0");
    if (i > 0 && lr_schedule[i].epoch <= lr_schedule[i - 1].epoch)
      throw std::invalid_argument("train: lr_schedule epochs must be strictly increasing");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (embedding_dim < 2) throw std::invalid_argument("train: embedding_dim must be >= 2");
  if (encoder == EncoderMode::frozen && embedding_dim != input_dim)
    throw std::invalid_argument("train: frozen-features mode needs embedding_dim == input dim");
  margin.validate();
  auto evo = evolution;
  evo.total_epochs = epochs;
  evo.validate();
}

TrainConfig TrainConfig::plain_baseline() const {
  TrainConfig b = *this;
  b.mask = false;
  b.evolution.m_init = 1;
  b.evolution.produce = b.evolution.drop = b.evolution.merge = false;
  return b;
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double lr, double momentum, double weight_decay) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw std::invalid_argument("sgd_step: shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + (grads[i] + weight_decay * params[i]);
    params[i] -= lr * velocity[i];
  }
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const Dataset& data, TrainConfig cfg) : data_(data), cfg_(std::move(cfg)) {
  cfg_.evolution.total_epochs = cfg_.epochs;
  cfg_.validate(data_.dim);
  if (data_.samples.empty()) throw std::invalid_argument("train: dataset has no training samples");

  const int d = data_.dim, D = cfg_.embedding_dim;
  if (cfg_.encoder == EncoderMode::frozen || cfg_.encoder_init == EncoderInit::identity) {
    state_.encoder = Matrix::Identity(d, D);
  } else {
    std::mt19937_64 rng(mix_seed(cfg_.seed, kEncoderStream));
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
    state_.encoder.resize(d, D);
    for (int c = 0; c < D; ++c)
      for (int r = 0; r < d; ++r) state_.encoder(r, c) = normal(rng);
  }
  state_.encoder_velocity = Matrix::Zero(d, D);
  state_.bank = SubCenterBank::random(data_.num_classes(), cfg_.evolution.m_init, D,
                                      mix_seed(cfg_.seed, kBankStream));
  const auto labels = data_.labels();
  state_.labels = LabelMap(data_.num_classes(), labels);
  sync_velocity();
}

Trainer::Trainer(const Dataset& data, TrainConfig cfg, TrainState resume)
    : data_(data), cfg_(std::move(cfg)), state_(std::move(resume)) {
  cfg_.evolution.total_epochs = cfg_.epochs;
  cfg_.validate(data_.dim);
  if (state_.labels.num_samples() != data_.samples.size())
    throw std::invalid_argument("resume: checkpoint does not match the dataset size");
  if (state_.encoder.rows() != data_.dim || state_.encoder.cols() != cfg_.embedding_dim)
    throw std::invalid_argument("resume: encoder shape does not match the config");
  if (state_.encoder_velocity.size() == 0) state_.encoder_velocity = Matrix::Zero(data_.dim, cfg_.embedding_dim);
  sync_velocity();
  if (state_.last_stats) thresholds_ = state_.last_stats->thresholds(state_.bank);
}

const ThresholdTable* Trainer::mask_thresholds() const {
  return cfg_.mask && state_.last_stats ? &thresholds_ : nullptr;
}

Vector Trainer::feature(const Vector& x) const {
  if (cfg_.encoder == EncoderMode::frozen) return x;
  return state_.encoder.transpose() * x;
}

void Trainer::sync_velocity() {
  auto& vel = state_.weight_velocity;
  const auto& bank = state_.bank;
  vel.resize(bank.num_classes());
  for (int j = 0; j < bank.num_classes(); ++j) {
    vel[j].resize(bank.num_slots(j), Vector::Zero(bank.dim()));
    for (int m = 0; m < bank.num_slots(j); ++m)
      if (bank.at(j, m).fresh || vel[j][m].size() != bank.dim()) vel[j][m] = Vector::Zero(bank.dim());
  }
}

std::vector<std::size_t> Trainer::epoch_order(int epoch) const {
  std::vector<std::size_t> order;
  order.reserve(data_.samples.size());
  for (std::size_t i = 0; i < data_.samples.size(); ++i)
    if (!state_.labels.dropped(i) && state_.bank.num_active(state_.labels.label(i)) > 0) order.push_back(i);

  std::mt19937_64 rng(mix_seed(cfg_.seed ^ mix_seed(static_cast<std::uint64_t>(epoch), kShuffleStream),
                               kShuffleStream));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

double Trainer::step(std::span<const std::size_t> batch, double lr) {
  std::vector<Vector> feats;
  std::vector<int> labels;
  feats.reserve(batch.size());
  labels.reserve(batch.size());
  for (std::size_t idx : batch) {
    feats.push_back(feature(data_.samples.at(idx).x));
    labels.push_back(state_.labels.label(idx));
    const double n = feats.back().norm();
    if (!std::isfinite(n) || n == 0.0)
      throw DivergenceError("epoch " + std::to_string(state_.epoch) + ": feature of sample " + std::to_string(idx) +
                            " has norm " + std::to_string(n));
  }

  EslResult res;
  try {
    res = esl_loss_and_grads(feats, labels, state_.bank, mask_thresholds(), cfg_.margin);
  } catch (const NumericError& e) {
    throw DivergenceError(std::string("epoch ") + std::to_string(state_.epoch) + ": " + e.what());
  }
  for (int m : res.masked_negatives) masked_total_ += m;

  if (cfg_.encoder == EncoderMode::linear) {
    Matrix grad = Matrix::Zero(state_.encoder.rows(), state_.encoder.cols());
    for (std::size_t i = 0; i < batch.size(); ++i)
      grad.noalias() += data_.samples[batch[i]].x * res.grad_features[i].transpose();
    sgd_step({state_.encoder.data(), static_cast<std::size_t>(state_.encoder.size())},
             {grad.data(), static_cast<std::size_t>(grad.size())},
             {state_.encoder_velocity.data(), static_cast<std::size_t>(state_.encoder_velocity.size())}, lr,
             cfg_.momentum, cfg_.weight_decay);
  }
  for (const auto& r : state_.bank.active_refs()) {
    auto& w = state_.bank.at(r).weight;
    auto& v = state_.weight_velocity[r.cls][r.slot];
    const auto& g = res.grad_weights[r.cls][r.slot];
    const auto n = static_cast<std::size_t>(w.size());
    sgd_step({w.data(), n}, {g.data(), n}, {v.data(), n}, lr, cfg_.momentum, cfg_.weight_decay);
    if (!w.allFinite())
      throw DivergenceError("epoch " + std::to_string(state_.epoch) + ": sub-center (" + std::to_string(r.cls) +
                            ", " + std::to_string(r.slot) + ") left the finite range");
  }
  if (!state_.encoder.allFinite())
    throw DivergenceError("epoch " + std::to_string(state_.epoch) + ": encoder left the finite range");

  if (observer_) observer_({state_.epoch, steps_, batch, labels, res.loss});
  ++steps_;
  return res.loss;
}

std::vector<EvolutionSample> Trainer::sweep(StatsAccumulator& acc) const {
  std::vector<EvolutionSample> out;
  out.reserve(data_.samples.size());
  for (std::size_t i = 0; i < data_.samples.size(); ++i) {
    if (state_.labels.dropped(i)) continue;
    const int label = state_.labels.label(i);
    const Vector f = feature(data_.samples[i].x);
    const auto slot = assign_subcenter(f, label, state_.bank);
    if (!slot) continue;
    const Vector u = f.normalized();
    const double c = u.dot(state_.bank.at(label, *slot).weight.normalized());
    acc.add(label, *slot, c);
    out.push_back({i, u, label, *slot, c});
  }
  return out;
}

const EpochMetrics& Trainer::run_epoch() {
  if (done()) throw std::logic_error("run_epoch: training already finished");
  const int e = state_.epoch;
  const double lr = cfg_.lr_at(e);
  const auto order = epoch_order(e);
  masked_total_ = 0;

  double loss_sum = 0.0;
  int steps = 0;
  const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
  for (std::size_t begin = 0; begin < order.size(); begin += bs) {
    const std::size_t end = std::min(order.size(), begin + bs);
    const std::span<const std::size_t> batch(order.data() + begin, end - begin);
    loss_sum += step(batch, lr) * static_cast<double>(batch.size());
    ++steps;
  }
  const double loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
  if (!std::isfinite(loss))
    throw DivergenceError("epoch " + std::to_string(e) + ": mean training loss is not finite");

  StatsAccumulator acc(state_.bank);
  auto live = sweep(acc);
  auto stats = acc.finalize(cfg_.evolution.lambda1);
  state_.bank.settle_all();

  std::vector<EvolutionEvent> events;
  if (cfg_.evolves() && e > cfg_.evolution.epsilon_start)
    events = evolve_epoch(state_.bank, stats, live, cfg_.evolution, state_.labels, e);
  sync_velocity();
  thresholds_ = stats.thresholds(state_.bank);
  state_.last_stats = std::move(stats);

  EpochMetrics m;
  m.epoch = e;
  m.lr = lr;
  m.loss = loss;
  m.steps = steps;
  m.samples_used = static_cast<int>(order.size());
  m.dropped_samples = static_cast<int>(state_.labels.dropped_count());
  m.active_subcenters = state_.bank.total_active();
  for (int j = 0; j < state_.bank.num_classes(); ++j)
    if (state_.bank.num_active(j) > 0) ++m.classes_alive;
  for (const auto& ev : events) {
    switch (ev.kind) {
      case EventKind::produce: ++m.produced; break;
      case EventKind::drop: ++m.dropped_subcenters; break;
      case EventKind::merge:
        ++m.merges;
        m.relabeled += ev.count;
        break;
    }
  }
  m.masked_per_sample = order.empty() ? 0.0 : static_cast<double>(masked_total_) / order.size();

  state_.events.insert(state_.events.end(), events.begin(), events.end());
  state_.history.push_back(m);
  ++state_.epoch;
  return state_.history.back();
}

void Trainer::run(const std::function<void(const EpochMetrics&)>& on_epoch) {
  while (!done()) {
    const auto& m = run_epoch();
    if (on_epoch) on_epoch(m);
  }
}

TrainState train(const Dataset& data, const TrainConfig& cfg,
                 const std::function<void(const EpochMetrics&)>& on_epoch) {
  Trainer trainer(data, cfg);
  trainer.run(on_epoch);
  return trainer.state();
}

}  // namespace esl
