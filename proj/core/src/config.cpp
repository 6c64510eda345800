#include "adnet/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

namespace adnet {

namespace {

using nlohmann::json;

// Rejects keys outside `allowed`, naming the full dotted path.
void check_keys(const json& obj, const std::string& prefix,
                const std::set<std::string>& allowed) {
  if (!obj.is_object())
    throw ConfigError("config: '" + prefix + "' must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" +
                        (prefix.empty() ? key : prefix + "." + key) + "'");
}

template <class T>
void get_to(const json& obj, const char* key, const std::string& prefix, T& out) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + prefix + "." + key + "'");
  }
}

ShapeFamily family_from(const std::string& name, const std::string& where) {
  if (name == "ellipsoid") return ShapeFamily::kEllipsoid;
  if (name == "box") return ShapeFamily::kBox;
  if (name == "tube") return ShapeFamily::kTube;
  throw ConfigError("config: unknown shape family '" + name + "' in " + where);
}

std::string family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::kEllipsoid: return "ellipsoid";
    case ShapeFamily::kBox: return "box";
    case ShapeFamily::kTube: return "tube";
  }
  return "ellipsoid";
}

void parse_synthetic(const json& j, SyntheticSpec& spec) {
  check_keys(j, "synthetic",
             {"volumes", "dims", "spacing", "classes", "contrast",
              "noise_sigma", "seed"});
  get_to(j, "volumes", "synthetic", spec.volumes);
  get_to(j, "dims", "synthetic", spec.dims);
  get_to(j, "spacing", "synthetic", spec.spacing);
  if (j.contains("classes")) {
    std::vector<std::string> names;
    get_to(j, "classes", "synthetic", names);
    spec.classes.clear();
    for (const auto& n : names)
      spec.classes.push_back(family_from(n, "synthetic.classes"));
  }
  get_to(j, "contrast", "synthetic", spec.contrast);
  get_to(j, "noise_sigma", "synthetic", spec.noise_sigma);
  get_to(j, "seed", "synthetic", spec.seed);
}

}  // namespace

int64_t ExperimentConfig::resolved_rho(int64_t num_voxels) const {
  if (supervoxel.rho > 0) return supervoxel.rho;
  return std::max<int64_t>(1, num_voxels / 200);
}

void ExperimentConfig::validate() const {
  synthetic.validate();
  if (supervoxel.rho < 0)
    throw ConfigError("config: supervoxel.rho must be >= 0 (0 = auto)");
  if (supervoxel.scale_k <= 0)
    throw ConfigError("config: supervoxel.scale_k must be > 0");
  if (supervoxel.presmooth_sigma < 0)
    throw ConfigError("config: supervoxel.presmooth_sigma must be >= 0");
  sampler.validate();
  transforms.validate();
  encoder.validate();
  head.validate();
  sgd.validate();
  if (iterations < 0) throw ConfigError("config: iterations must be >= 0");
  if (w_fg <= 0 || w_bg < 0) throw ConfigError("config: bad class weights");
  if (protocol != "EP1" && protocol != "EP2")
    throw ConfigError("config: protocol must be EP1 or EP2");
  if (n_folds < 1) throw ConfigError("config: n_folds must be >= 1");
  if (runs_per_fold < 1) throw ConfigError("config: runs_per_fold must be >= 1");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  check_keys(j, "",
             {"dataset", "synthetic", "supervoxel", "sampler", "transforms",
              "encoder", "head", "sgd", "iterations", "loss", "protocol",
              "split_seed", "n_folds", "runs_per_fold", "seed"});

  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    check_keys(j["dataset"], "dataset", {"path"});
    std::string path;
    get_to(j["dataset"], "path", "dataset", path);
    if (path.empty())
      throw ConfigError("config: dataset.path must be a nonempty string");
    cfg.dataset_path = path;
  }
  if (j.contains("synthetic")) parse_synthetic(j["synthetic"], cfg.synthetic);

  if (j.contains("supervoxel")) {
    const auto& s = j["supervoxel"];
    check_keys(s, "supervoxel", {"rho", "scale_k", "presmooth_sigma"});
    get_to(s, "rho", "supervoxel", cfg.supervoxel.rho);
    get_to(s, "scale_k", "supervoxel", cfg.supervoxel.scale_k);
    get_to(s, "presmooth_sigma", "supervoxel", cfg.supervoxel.presmooth_sigma);
  }
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    check_keys(s, "sampler", {"min_pixels", "max_attempts", "transform_target", "seed"});
    get_to(s, "min_pixels", "sampler", cfg.sampler.min_pixels);
    get_to(s, "max_attempts", "sampler", cfg.sampler.max_attempts);
    if (s.contains("transform_target")) {
      std::string t;
      get_to(s, "transform_target", "sampler", t);
      if (t == "query")
        cfg.sampler.target = TransformTarget::kQuery;
      else if (t == "support")
        cfg.sampler.target = TransformTarget::kSupport;
      else
        throw ConfigError("config: sampler.transform_target must be query or support");
    }
    get_to(s, "seed", "sampler", cfg.sampler.seed);
  }
  if (j.contains("transforms")) {
    const auto& t = j["transforms"];
    check_keys(t, "transforms",
               {"rotation_deg", "scale", "translate_frac", "shear_deg", "gamma"});
    get_to(t, "rotation_deg", "transforms", cfg.transforms.rotation_deg);
    if (t.contains("scale")) {
      std::array<double, 2> r{};
      get_to(t, "scale", "transforms", r);
      cfg.transforms.scale_lo = r[0];
      cfg.transforms.scale_hi = r[1];
    }
    get_to(t, "translate_frac", "transforms", cfg.transforms.translate_frac);
    get_to(t, "shear_deg", "transforms", cfg.transforms.shear_deg);
    if (t.contains("gamma")) {
      std::array<double, 2> r{};
      get_to(t, "gamma", "transforms", r);
      cfg.transforms.gamma_lo = r[0];
      cfg.transforms.gamma_hi = r[1];
    }
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    check_keys(e, "encoder", {"in_channels", "widths", "feature_dim", "downsample"});
    get_to(e, "in_channels", "encoder", cfg.encoder.in_channels);
    get_to(e, "widths", "encoder", cfg.encoder.widths);
    get_to(e, "feature_dim", "encoder", cfg.encoder.feature_dim);
    get_to(e, "downsample", "encoder", cfg.encoder.downsample);
  }
  if (j.contains("head")) {
    const auto& h = j["head"];
    check_keys(h, "head", {"alpha", "kappa", "t_init"});
    get_to(h, "alpha", "head", cfg.head.alpha);
    get_to(h, "kappa", "head", cfg.head.kappa);
    if (h.contains("t_init")) {
      double t = 0;
      get_to(h, "t_init", "head", t);
      cfg.head.t_init = t;
    }
  }
  if (j.contains("sgd")) {
    const auto& s = j["sgd"];
    check_keys(s, "sgd", {"learning_rate", "momentum", "weight_decay", "decay_per_1k"});
    get_to(s, "learning_rate", "sgd", cfg.sgd.learning_rate);
    get_to(s, "momentum", "sgd", cfg.sgd.momentum);
    get_to(s, "weight_decay", "sgd", cfg.sgd.weight_decay);
    get_to(s, "decay_per_1k", "sgd", cfg.sgd.decay_per_1k);
  }
  get_to(j, "iterations", "", cfg.iterations);
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    check_keys(l, "loss", {"threshold_term", "alignment_term", "w_fg", "w_bg"});
    get_to(l, "threshold_term", "loss", cfg.loss.threshold_term);
    get_to(l, "alignment_term", "loss", cfg.loss.alignment_term);
    get_to(l, "w_fg", "loss", cfg.w_fg);
    get_to(l, "w_bg", "loss", cfg.w_bg);
  }
  get_to(j, "protocol", "", cfg.protocol);
  get_to(j, "split_seed", "", cfg.split_seed);
  get_to(j, "n_folds", "", cfg.n_folds);
  get_to(j, "runs_per_fold", "", cfg.runs_per_fold);
  get_to(j, "seed", "", cfg.seed);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.dataset_path) j["dataset"]["path"] = *cfg.dataset_path;
  auto& syn = j["synthetic"];
  syn["volumes"] = cfg.synthetic.volumes;
  syn["dims"] = cfg.synthetic.dims;
  syn["spacing"] = cfg.synthetic.spacing;
  {
    std::vector<std::string> names;
    for (auto f : cfg.synthetic.classes) names.push_back(family_name(f));
    syn["classes"] = names;
  }
  syn["contrast"] = cfg.synthetic.contrast;
  syn["noise_sigma"] = cfg.synthetic.noise_sigma;
  syn["seed"] = cfg.synthetic.seed;

  j["supervoxel"]["rho"] = cfg.supervoxel.rho;
  j["supervoxel"]["scale_k"] = cfg.supervoxel.scale_k;
  j["supervoxel"]["presmooth_sigma"] = cfg.supervoxel.presmooth_sigma;

  j["sampler"]["min_pixels"] = cfg.sampler.min_pixels;
  j["sampler"]["max_attempts"] = cfg.sampler.max_attempts;
  j["sampler"]["transform_target"] =
      cfg.sampler.target == TransformTarget::kQuery ? "query" : "support";
  j["sampler"]["seed"] = cfg.sampler.seed;

  j["transforms"]["rotation_deg"] = cfg.transforms.rotation_deg;
  j["transforms"]["scale"] = {cfg.transforms.scale_lo, cfg.transforms.scale_hi};
  j["transforms"]["translate_frac"] = cfg.transforms.translate_frac;
  j["transforms"]["shear_deg"] = cfg.transforms.shear_deg;
  j["transforms"]["gamma"] = {cfg.transforms.gamma_lo, cfg.transforms.gamma_hi};

  j["encoder"]["in_channels"] = cfg.encoder.in_channels;
  j["encoder"]["widths"] = cfg.encoder.widths;
  j["encoder"]["feature_dim"] = cfg.encoder.feature_dim;
  j["encoder"]["downsample"] = cfg.encoder.downsample;

  j["head"]["alpha"] = cfg.head.alpha;
  j["head"]["kappa"] = cfg.head.kappa;
  j["head"]["t_init"] = cfg.head.initial_t();

  j["sgd"]["learning_rate"] = cfg.sgd.learning_rate;
  j["sgd"]["momentum"] = cfg.sgd.momentum;
  j["sgd"]["weight_decay"] = cfg.sgd.weight_decay;
  j["sgd"]["decay_per_1k"] = cfg.sgd.decay_per_1k;

  j["iterations"] = cfg.iterations;
  j["loss"]["threshold_term"] = cfg.loss.threshold_term;
  j["loss"]["alignment_term"] = cfg.loss.alignment_term;
  j["loss"]["w_fg"] = cfg.w_fg;
  j["loss"]["w_bg"] = cfg.w_bg;
  j["protocol"] = cfg.protocol;
  j["split_seed"] = cfg.split_seed;
  j["n_folds"] = cfg.n_folds;
  j["runs_per_fold"] = cfg.runs_per_fold;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << experiment_config_to_json(cfg);
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace adnet
