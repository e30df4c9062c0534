#include "esl/run_config.hpp"

#include <set>
#include <stdexcept>

#include "esl/io.hpp"

namespace esl {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(where + "." + key + ": wrong type");
  }
}

}  // namespace

void RunConfig::resolve() {
  train.seed = seed;
  eval.seed = seed;
  train.evolution.total_epochs = train.epochs;
  if (synth.num_classes < 1) throw std::invalid_argument("synth.num_classes must be >= 1");
  if (synth.dim < 2) throw std::invalid_argument("synth.dim must be >= 2");
  if (synth.samples_per_cluster < 2) throw std::invalid_argument("synth.samples_per_cluster must be >= 2");
  if (!(synth.concentration > 0.0)) throw std::invalid_argument("synth.concentration must be > 0");
  if (!(synth.noise_ratio >= 0.0 && synth.noise_ratio <= 1.0))
    throw std::invalid_argument("synth.noise_ratio must lie in [0, 1]");
  if (!(synth.holdout_fraction >= 0.0 && synth.holdout_fraction < 1.0))
    throw std::invalid_argument("synth.holdout_fraction must lie in [0, 1)");
  if (synth.classes.empty()) preset_from_string(synth.preset);
  if (eval.far_grid.empty()) throw std::invalid_argument("eval.far_grid must not be empty");
  for (double f : eval.far_grid)
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("eval.far_grid entries must lie in (0, 1]");
  if (eval.max_pairs < 1) throw std::invalid_argument("eval.max_pairs must be >= 1");
  if (out.empty()) throw std::invalid_argument("out must not be empty");
  const int input_dim = synth.dim;
  train.validate(input_dim);
}

json run_config_to_json(const RunConfig& cfg) {
  json classes = json::array();
  for (const auto& c : cfg.synth.classes)
    classes.push_back({{"class_label", c.class_label},
                       {"n_identities", c.n_identities},
                       {"k_clusters", c.k_clusters},
                       {"c_conflicts", c.c_conflicts},
                       {"samples_per_cluster", c.samples_per_cluster}});
  const auto& s = cfg.synth;
  return {{"seed", cfg.seed},
          {"synth",
           {{"preset", s.preset},
            {"num_classes", s.num_classes},
            {"dim", s.dim},
            {"samples_per_cluster", s.samples_per_cluster},
            {"concentration", s.concentration},
            {"noise_ratio", s.noise_ratio},
            {"outlier_fraction", s.outlier_fraction},
            {"shared_identity_fraction", s.shared_identity_fraction},
            {"holdout_fraction", s.holdout_fraction},
            {"classes", classes}}},
          {"dataset", cfg.dataset ? json(*cfg.dataset) : json(nullptr)},
          {"train", train_config_to_json(cfg.train)},
          {"eval", {{"far_grid", cfg.eval.far_grid}, {"max_pairs", cfg.eval.max_pairs}, {"seed", cfg.eval.seed}}},
          {"out", cfg.out}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  check_keys(j, {"seed", "synth", "dataset", "train", "eval", "out"}, "config");
  get_if(j, "seed", c.seed, "config");
  get_if(j, "out", c.out, "config");
  if (j.contains("dataset") && !j.at("dataset").is_null()) c.dataset = j.at("dataset").get<std::string>();
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    const std::string w = "synth";
    check_keys(s,
               {"preset", "num_classes", "dim", "samples_per_cluster", "concentration", "noise_ratio",
                "outlier_fraction", "shared_identity_fraction", "holdout_fraction", "classes"},
               w);
    get_if(s, "preset", c.synth.preset, w);
    get_if(s, "num_classes", c.synth.num_classes, w);
    get_if(s, "dim", c.synth.dim, w);
    get_if(s, "samples_per_cluster", c.synth.samples_per_cluster, w);
    get_if(s, "concentration", c.synth.concentration, w);
    get_if(s, "noise_ratio", c.synth.noise_ratio, w);
    get_if(s, "outlier_fraction", c.synth.outlier_fraction, w);
    get_if(s, "shared_identity_fraction", c.synth.shared_identity_fraction, w);
    get_if(s, "holdout_fraction", c.synth.holdout_fraction, w);
    if (s.contains("classes")) {
      int idx = 0;
      for (const auto& jc : s.at("classes")) {
        const std::string wc = "synth.classes[" + std::to_string(idx) + "]";
        check_keys(jc, {"class_label", "n_identities", "k_clusters", "c_conflicts", "samples_per_cluster"}, wc);
        NkcClassSpec spec;
        spec.class_label = idx;
        spec.samples_per_cluster = c.synth.samples_per_cluster;
        get_if(jc, "class_label", spec.class_label, wc);
        get_if(jc, "n_identities", spec.n_identities, wc);
        get_if(jc, "k_clusters", spec.k_clusters, wc);
        get_if(jc, "c_conflicts", spec.c_conflicts, wc);
        get_if(jc, "samples_per_cluster", spec.samples_per_cluster, wc);
        c.synth.classes.push_back(spec);
        ++idx;
      }
    }
  }
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"far_grid", "max_pairs", "seed"}, "eval");
    get_if(e, "far_grid", c.eval.far_grid, "eval");
    get_if(e, "max_pairs", c.eval.max_pairs, "eval");
    get_if(e, "seed", c.eval.seed, "eval");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::vector<NkcClassSpec> resolve_specs(const SynthConfig& synth) {
  if (!synth.classes.empty()) return synth.classes;
  PresetOptions po;
  po.num_classes = synth.num_classes;
  po.samples_per_cluster = synth.samples_per_cluster;
  po.holdout_fraction = synth.holdout_fraction;
  po.noise_ratio = synth.noise_ratio;
  po.outlier_fraction = synth.outlier_fraction;
  po.shared_identity_fraction = synth.shared_identity_fraction;
  return make_preset(preset_from_string(synth.preset), po);
}

}  // namespace esl
