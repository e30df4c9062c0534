#include "esl/io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace esl {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Dataset

namespace {

void append_samples(std::string& out, const std::vector<Sample>& samples) {
  out += '[';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    out += i ? ",\n  {\"x\":[" : "\n  {\"x\":[";
    for (Eigen::Index k = 0; k < s.x.size(); ++k) {
      if (k) out += ',';
      out += format_double(s.x[k]);
    }
    out += "],\"label\":" + std::to_string(s.label) + ",\"identity\":" + std::to_string(s.identity) + '}';
  }
  out += samples.empty() ? "]" : "\n]";
}

std::vector<Sample> parse_samples(const json& arr, int dim, const char* field) {
  std::vector<Sample> out;
  out.reserve(arr.size());
  for (const auto& js : arr) {
    Sample s;
    const auto x = js.at("x").get<std::vector<double>>();
    if (static_cast<int>(x.size()) != dim)
      throw IoError(std::string("dataset: ") + field + " entry has wrong dimension");
    s.x = Eigen::Map<const Vector>(x.data(), dim);
    s.label = js.at("label").get<int>();
    s.identity = js.at("identity").get<int>();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::string dataset_to_json(const Dataset& data) {
  std::string out = "{\"dim\":" + std::to_string(data.dim) + ",\"seed\":" + std::to_string(data.seed) +
                    ",\"concentration\":" + format_double(data.concentration) +
                    ",\"noise_ratio\":" + format_double(data.noise_ratio) + ",\n\"classes\":[";
  for (std::size_t i = 0; i < data.class_specs.size(); ++i) {
    const auto& c = data.class_specs[i];
    if (i) out += ',';
    out += "\n  {\"class_label\":" + std::to_string(c.class_label) + ",\"n_identities\":" +
           std::to_string(c.n_identities) + ",\"k_clusters\":" + std::to_string(c.k_clusters) +
           ",\"c_conflicts\":" + std::to_string(c.c_conflicts) +
           ",\"samples_per_cluster\":" + std::to_string(c.samples_per_cluster) + '}';
  }
  out += "\n],\n\"samples\":";
  append_samples(out, data.samples);
  out += ",\n\"holdout\":";
  append_samples(out, data.holdout);
  out += "}\n";
  return out;
}

Dataset dataset_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    Dataset d;
    d.dim = j.at("dim").get<int>();
    d.seed = j.at("seed").get<std::uint64_t>();
    d.concentration = j.value("concentration", 0.0);
    d.noise_ratio = j.at("noise_ratio").get<double>();
    for (const auto& jc : j.at("classes")) {
      NkcClassSpec c;
      c.class_label = jc.at("class_label").get<int>();
      c.n_identities = jc.at("n_identities").get<int>();
      c.k_clusters = jc.at("k_clusters").get<int>();
      c.c_conflicts = jc.at("c_conflicts").get<int>();
      c.samples_per_cluster = jc.at("samples_per_cluster").get<int>();
      d.class_specs.push_back(c);
    }
    d.samples = parse_samples(j.at("samples"), d.dim, "samples");
    d.holdout = parse_samples(j.value("holdout", json::array()), d.dim, "holdout");
    const int S = d.num_classes();
    for (const auto* set : {&d.samples, &d.holdout})
      for (const auto& s : *set)
        if (s.label < 0 || s.label >= S) throw IoError("dataset: sample label out of range");
    return d;
  } catch (const json::exception& e) {
    throw IoError(std::string("dataset: malformed JSON: ") + e.what());
  }
}

void save_dataset(const fs::path& path, const Dataset& data) { write_file_atomic(path, dataset_to_json(data)); }

Dataset load_dataset(const fs::path& path) { return dataset_from_json(read_file(path)); }

json audit_summary(const Dataset& data) {
  const auto audit = audit_dataset(data.samples, data.num_classes());
  json classes = json::array();
  for (const auto& c : audit.classes) {
    const auto cell = classify_noise_cell(c.n_identities, c.k_clusters, c.c_conflicts);
    const auto& spec = data.class_specs.at(c.class_label);
    classes.push_back({{"class", c.class_label},
                       {"N", c.n_identities},
                       {"K", c.k_clusters},
                       {"C", c.c_conflicts},
                       {"cell", cell.symbols()},
                       {"samples", c.samples},
                       {"corrupted", c.corrupted},
                       {"matches_spec", spec.n_identities == c.n_identities && spec.k_clusters == c.k_clusters &&
                                            spec.c_conflicts == c.c_conflicts}});
  }
  return {{"classes", classes},
          {"corrupted", audit.corrupted},
          {"total", audit.total},
          {"noise_ratio", audit.noise_ratio()},
          {"holdout", data.holdout.size()}};
}

json stats_snapshot(const SubCenterStats& stats, const SubCenterBank& bank) {
  json out = json::array();
  for (const auto& r : bank.active_refs()) {
    const auto st = stats.at(r);
    json d = std::isfinite(st.threshold) ? json(st.threshold) : json(nullptr);
    out.push_back({{"j", r.cls}, {"m", r.slot}, {"n", st.n}, {"mu", st.mu}, {"sigma", st.sigma}, {"D", d}});
  }
  return out;
}

std::string events_jsonl(std::span<const EvolutionEvent> events) {
  std::string out;
  for (const auto& ev : events) {
    json detail;
    switch (ev.kind) {
      case EventKind::produce:
        detail = {{"slot", ev.slot}, {"new_slot", ev.new_slot}, {"T", ev.count}, {"mu", ev.mu}, {"n", ev.n}};
        break;
      case EventKind::drop:
        detail = {{"slot", ev.slot}, {"samples", ev.count}, {"mu", ev.mu}, {"n", ev.n}};
        break;
      case EventKind::merge: {
        json members = json::array();
        for (const auto& m : ev.members) members.push_back({m.cls, m.slot});
        detail = {{"slot", ev.slot}, {"relabeled", ev.count}, {"members", members}};
        break;
      }
    }
    out += json{{"epoch", ev.epoch}, {"op", to_string(ev.kind)}, {"class", ev.cls}, {"detail", detail}}.dump();
    out += '\n';
  }
  return out;
}

std::string metrics_csv(std::span<const EpochMetrics> history) {
  std::string out =
      "epoch,lr,loss,steps,samples_used,dropped_samples,active_subcenters,classes_alive,produced,"
      "dropped_subcenters,merges,relabeled,masked_per_sample\n";
  for (const auto& m : history) {
    out += std::to_string(m.epoch) + ',' + format_double(m.lr) + ',' + format_double(m.loss) + ',' +
           std::to_string(m.steps) + ',' + std::to_string(m.samples_used) + ',' +
           std::to_string(m.dropped_samples) + ',' + std::to_string(m.active_subcenters) + ',' +
           std::to_string(m.classes_alive) + ',' + std::to_string(m.produced) + ',' +
           std::to_string(m.dropped_subcenters) + ',' + std::to_string(m.merges) + ',' +
           std::to_string(m.relabeled) + ',' + format_double(m.masked_per_sample) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config

json train_config_to_json(const TrainConfig& cfg) {
  json schedule = json::array();
  for (const auto& s : cfg.lr_schedule) schedule.push_back({s.epoch, s.multiplier});
  const auto& e = cfg.evolution;
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"lr_schedule", schedule},
          {"momentum", cfg.momentum},
          {"weight_decay", cfg.weight_decay},
          {"seed", cfg.seed},
          {"embedding_dim", cfg.embedding_dim},
          {"encoder", to_string(cfg.encoder)},
          {"encoder_init", to_string(cfg.encoder_init)},
          {"margin", {{"s", cfg.margin.s}, {"m1", cfg.margin.m1}, {"m2", cfg.margin.m2}, {"m3", cfg.margin.m3}}},
          {"mask", cfg.mask},
          {"evolution",
           {{"lambda1", e.lambda1},
            {"lambda2", e.lambda2},
            {"lambda3", e.lambda3},
            {"lambda4", e.lambda4},
            {"m_init", e.m_init},
            {"epsilon_start", e.epsilon_start},
            {"produce", e.produce},
            {"drop", e.drop},
            {"merge", e.merge}}}};
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
}

template <typename T>
void read_opt(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(where + "." + key + ": wrong type");
  }
}

}  // namespace

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  TrainConfig c = base;
  const std::string w = "train";
  reject_unknown(j,
                 {"epochs", "batch_size", "lr", "lr_schedule", "momentum", "weight_decay", "seed", "embedding_dim",
                  "encoder", "encoder_init", "margin", "mask", "evolution"},
                 w);
  read_opt(j, "epochs", c.epochs, w);
  read_opt(j, "batch_size", c.batch_size, w);
  read_opt(j, "lr", c.lr, w);
  read_opt(j, "momentum", c.momentum, w);
  read_opt(j, "weight_decay", c.weight_decay, w);
  read_opt(j, "seed", c.seed, w);
  read_opt(j, "embedding_dim", c.embedding_dim, w);
  read_opt(j, "mask", c.mask, w);
  if (j.contains("lr_schedule")) {
    c.lr_schedule.clear();
    for (const auto& s : j.at("lr_schedule")) {
      if (!s.is_array() || s.size() != 2) throw std::invalid_argument("train.lr_schedule: entries are [epoch, multiplier]");
      c.lr_schedule.push_back({s[0].get<int>(), s[1].get<double>()});
    }
  }
  if (j.contains("encoder")) c.encoder = encoder_mode_from_string(j.at("encoder").get<std::string>());
  if (j.contains("encoder_init")) c.encoder_init = encoder_init_from_string(j.at("encoder_init").get<std::string>());
  if (j.contains("margin")) {
    const auto& m = j.at("margin");
    reject_unknown(m, {"s", "m1", "m2", "m3"}, "train.margin");
    read_opt(m, "s", c.margin.s, "train.margin");
    read_opt(m, "m1", c.margin.m1, "train.margin");
    read_opt(m, "m2", c.margin.m2, "train.margin");
    read_opt(m, "m3", c.margin.m3, "train.margin");
  }
  if (j.contains("evolution")) {
    const auto& e = j.at("evolution");
    const std::string we = "train.evolution";
    reject_unknown(e, {"lambda1", "lambda2", "lambda3", "lambda4", "m_init", "epsilon_start", "produce", "drop", "merge"},
                   we);
    read_opt(e, "lambda1", c.evolution.lambda1, we);
    read_opt(e, "lambda2", c.evolution.lambda2, we);
    read_opt(e, "lambda3", c.evolution.lambda3, we);
    read_opt(e, "lambda4", c.evolution.lambda4, we);
    read_opt(e, "m_init", c.evolution.m_init, we);
    read_opt(e, "epsilon_start", c.evolution.epsilon_start, we);
    read_opt(e, "produce", c.evolution.produce, we);
    read_opt(e, "drop", c.evolution.drop, we);
    read_opt(e, "merge", c.evolution.merge, we);
  }
  c.evolution.total_epochs = c.epochs;
  return c;
}

std::string config_hash(const TrainConfig& cfg) {
  const std::string canon = train_config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw IoError("checkpoint: matrix size mismatch");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json metrics_to_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},
          {"lr", m.lr},
          {"loss", m.loss},
          {"steps", m.steps},
          {"samples_used", m.samples_used},
          {"dropped_samples", m.dropped_samples},
          {"active_subcenters", m.active_subcenters},
          {"classes_alive", m.classes_alive},
          {"produced", m.produced},
          {"dropped_subcenters", m.dropped_subcenters},
          {"merges", m.merges},
          {"relabeled", m.relabeled},
          {"masked_per_sample", m.masked_per_sample}};
}

EpochMetrics metrics_from_json(const json& j) {
  EpochMetrics m;
  m.epoch = j.at("epoch");
  m.lr = j.at("lr");
  m.loss = j.at("loss");
  m.steps = j.at("steps");
  m.samples_used = j.at("samples_used");
  m.dropped_samples = j.at("dropped_samples");
  m.active_subcenters = j.at("active_subcenters");
  m.classes_alive = j.at("classes_alive");
  m.produced = j.at("produced");
  m.dropped_subcenters = j.at("dropped_subcenters");
  m.merges = j.at("merges");
  m.relabeled = j.at("relabeled");
  m.masked_per_sample = j.at("masked_per_sample");
  return m;
}

json event_to_json(const EvolutionEvent& ev) {
  json members = json::array();
  for (const auto& m : ev.members) members.push_back({m.cls, m.slot});
  return {{"epoch", ev.epoch}, {"op", to_string(ev.kind)}, {"class", ev.cls}, {"slot", ev.slot},
          {"new_slot", ev.new_slot}, {"count", ev.count}, {"mu", ev.mu}, {"n", ev.n}, {"members", members}};
}

EvolutionEvent event_from_json(const json& j) {
  EvolutionEvent ev;
  ev.epoch = j.at("epoch");
  const auto op = j.at("op").get<std::string>();
  if (op == "produce") ev.kind = EventKind::produce;
  else if (op == "drop") ev.kind = EventKind::drop;
  else if (op == "merge") ev.kind = EventKind::merge;
  else throw IoError("checkpoint: unknown event op '" + op + "'");
  ev.cls = j.at("class");
  ev.slot = j.at("slot");
  ev.new_slot = j.at("new_slot");
  ev.count = j.at("count");
  ev.mu = j.at("mu");
  ev.n = j.at("n");
  for (const auto& m : j.at("members")) ev.members.push_back({m[0].get<int>(), m[1].get<int>()});
  return ev;
}

}  // namespace

json checkpoint_to_json(const TrainState& state, const TrainConfig& cfg) {
  json bank = json::array();
  for (int c = 0; c < state.bank.num_classes(); ++c) {
    json slots = json::array();
    for (int m = 0; m < state.bank.num_slots(c); ++m) {
      const auto& sc = state.bank.at(c, m);
      slots.push_back({{"w", vector_to_json(sc.weight)}, {"active", sc.active}, {"fresh", sc.fresh}});
    }
    bank.push_back(std::move(slots));
  }
  json wvel = json::array();
  for (const auto& row : state.weight_velocity) {
    json r = json::array();
    for (const auto& v : row) r.push_back(vector_to_json(v));
    wvel.push_back(std::move(r));
  }
  json stats = nullptr;
  if (state.last_stats) {
    stats = json::array();
    for (const auto& row : state.last_stats->table()) {
      json r = json::array();
      for (const auto& st : row)
        r.push_back({st.n, st.mu, st.sigma, std::isfinite(st.threshold) ? json(st.threshold) : json(nullptr)});
      stats.push_back(std::move(r));
    }
  }
  json history = json::array();
  for (const auto& m : state.history) history.push_back(metrics_to_json(m));
  json events = json::array();
  for (const auto& ev : state.events) events.push_back(event_to_json(ev));
  std::vector<int> dropped(state.labels.dropped_flags().begin(), state.labels.dropped_flags().end());

  return {{"config_hash", config_hash(cfg)},
          {"config", train_config_to_json(cfg)},
          {"epoch", state.epoch},
          {"dim", state.bank.dim()},
          {"encoder", matrix_to_json(state.encoder)},
          {"encoder_velocity", matrix_to_json(state.encoder_velocity)},
          {"bank", bank},
          {"weight_velocity", wvel},
          {"class_map", state.labels.class_map()},
          {"labels", state.labels.labels()},
          {"dropped", dropped},
          {"stats", stats},
          {"history", history},
          {"events", events}};
}

TrainState checkpoint_from_json(const json& j, const TrainConfig& cfg) {
  try {
    if (j.at("config_hash").get<std::string>() != config_hash(cfg))
      throw IoError("checkpoint: config hash does not match the current config");
    TrainState s;
    s.epoch = j.at("epoch");
    s.encoder = matrix_from_json(j.at("encoder"));
    s.encoder_velocity = matrix_from_json(j.at("encoder_velocity"));
    const auto& jb = j.at("bank");
    s.bank = SubCenterBank(static_cast<int>(jb.size()), j.at("dim").get<int>());
    for (int c = 0; c < static_cast<int>(jb.size()); ++c) {
      for (const auto& slot : jb[c]) {
        const int m = s.bank.add(c, vector_from_json(slot.at("w")), slot.at("fresh").get<bool>());
        if (!slot.at("active").get<bool>()) s.bank.deactivate(c, m);
      }
    }
    for (const auto& row : j.at("weight_velocity")) {
      s.weight_velocity.emplace_back();
      for (const auto& v : row) s.weight_velocity.back().push_back(vector_from_json(v));
    }
    std::vector<char> dropped;
    for (int d : j.at("dropped").get<std::vector<int>>()) dropped.push_back(static_cast<char>(d != 0));
    s.labels = LabelMap::from_parts(j.at("class_map").get<std::vector<int>>(), j.at("labels").get<std::vector<int>>(),
                                    std::move(dropped));
    if (!j.at("stats").is_null()) {
      std::vector<std::vector<SubCenterStat>> table;
      for (const auto& row : j.at("stats")) {
        table.emplace_back();
        for (const auto& e : row) {
          SubCenterStat st;
          st.n = e[0];
          st.mu = e[1];
          st.sigma = e[2];
          st.threshold = e[3].is_null() ? std::numeric_limits<double>::infinity() : e[3].get<double>();
          table.back().push_back(st);
        }
      }
      s.last_stats = SubCenterStats(std::move(table));
    }
    for (const auto& m : j.at("history")) s.history.push_back(metrics_from_json(m));
    for (const auto& ev : j.at("events")) s.events.push_back(event_from_json(ev));
    return s;
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

namespace {

json confusion_to_json(const Confusion& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}, {"precision", c.precision()}, {"recall", c.recall()}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string optional_csv(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

json report_to_json(const MetricReport& r) {
  json recovery = json::array();
  for (const auto& c : r.recovery) recovery.push_back({{"class", c.cls}, {"true_k", c.true_k}, {"active", c.active}});
  json points = json::array();
  for (const auto& p : r.verification.points)
    points.push_back({{"far", p.far}, {"tar", optional_json(p.tar)}, {"threshold", optional_json(p.threshold)}});
  return {{"recovery", recovery},
          {"k_recovery_rate", r.k_recovery_rate},
          {"drop", confusion_to_json(r.cleaning.drop)},
          {"merge", confusion_to_json(r.cleaning.merge)},
          {"singleton_classes", r.singleton_classes},
          {"singleton_classes_emptied", r.singleton_classes_emptied},
          {"merges", r.merges},
          {"merges_to_min_label", r.merges_to_min_label},
          {"purity", r.purity},
          {"nmi", r.nmi},
          {"verification",
           {{"positive_pairs", r.verification.positive_pairs},
            {"negative_pairs", r.verification.negative_pairs},
            {"points", points}}}};
}

std::string report_summary_csv(const MetricReport& r) {
  std::string header =
      "k_recovery_rate,drop_precision,drop_recall,merge_precision,merge_recall,singleton_empty_rate,"
      "relabel_exact_rate,purity,nmi,positive_pairs,negative_pairs";
  std::string row = format_double(r.k_recovery_rate) + ',' + format_double(r.cleaning.drop.precision()) + ',' +
                    format_double(r.cleaning.drop.recall()) + ',' + format_double(r.cleaning.merge.precision()) +
                    ',' + format_double(r.cleaning.merge.recall()) + ',' + format_double(r.singleton_empty_rate()) +
                    ',' + format_double(r.relabel_exact_rate()) + ',' + format_double(r.purity) + ',' +
                    format_double(r.nmi) + ',' + std::to_string(r.verification.positive_pairs) + ',' +
                    std::to_string(r.verification.negative_pairs);
  for (const auto& p : r.verification.points) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", p.far);
    header += std::string(",tar@") + buf;
    row += ',' + optional_csv(p.tar);
  }
  return header + '\n' + row + '\n';
}

}  // namespace esl
