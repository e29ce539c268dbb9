#include "cyclesense/run_config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "cyclesense/seed.hpp"

namespace cyclesense {

using nlohmann::json;

namespace {

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigInvalid(label() + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigInvalid(label(key) + ": " + e.what());
    }
  }

  template <typename T, typename Parse>
  void get_with(const char* key, T& out, Parse&& parse) {
    std::string text;
    get(key, text);
    if (!j_.contains(key)) return;
    try {
      out = parse(text);
    } catch (const std::invalid_argument& e) {
      throw ConfigInvalid(label(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  std::string label(const char* key = nullptr) const {
    std::string l = path_.empty() ? "config" : path_;
    if (key) l += (path_.empty() ? std::string(" key '") : std::string(".")) + key + (path_.empty() ? "'" : "");
    return l;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigInvalid("unknown key '" + (path_.empty() ? key : path_ + "." + key) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

DatasetPartition partition_from(const std::string& text) {
  const auto p = parse_partition(text);
  if (!p) throw std::invalid_argument("unknown partition '" + text + "' (expected android-old, android-new or ios)");
  return *p;
}

SpectralMode mode_from(const std::string& text) {
  if (text == "dft") return SpectralMode::Dft;
  if (text == "identity") return SpectralMode::Identity;
  throw std::invalid_argument("unknown spectral mode '" + text + "' (expected dft or identity)");
}

void read_train(const json& j, const std::string& path, TrainConfig& c) {
  ObjectReader r(j, path);
  r.get("epochs", c.epochs);
  r.get("lr", c.lr);
  r.get("batch_size", c.batch_size);
  r.get("patience", c.patience);
  r.get("class_weights", c.use_class_weights);
  r.get("augmentation", c.augmentation);
  r.get("stacking", c.stacking);
  r.get("pretrain_epochs", c.pretrain_epochs);
  r.finish();
}

json write_train(const TrainConfig& c) {
  return {{"epochs", c.epochs},          {"lr", c.lr},
          {"batch_size", c.batch_size},  {"patience", c.patience},
          {"class_weights", c.use_class_weights}, {"augmentation", c.augmentation},
          {"stacking", c.stacking},      {"pretrain_epochs", c.pretrain_epochs}};
}

}  // namespace

TrainConfig RunConfig::default_fcn_train() {
  TrainConfig c;
  c.lr = 1e-3;
  c.batch_size = 16;
  c.augmentation = false;
  c.stacking = false;
  return c;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  ObjectReader r(j, "");
  r.get("seed", c.seed);
  r.get("threads", c.threads);
  if (const json* v = r.child("region")) {
    if (v->is_null()) {
      c.region.reset();
    } else if (v->is_string()) {
      c.region = v->get<std::string>();
    } else {
      throw ConfigInvalid("config key 'region' must be a string or null");
    }
  }
  if (const json* v = r.child("partition")) {
    if (v->is_null()) {
      c.partition.reset();
    } else if (v->is_string()) {
      try {
        c.partition = partition_from(v->get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw ConfigInvalid(std::string("config key 'partition': ") + e.what());
      }
    } else {
      throw ConfigInvalid("config key 'partition' must be a string or null");
    }
  }
  if (const json* v = r.child("columns")) {
    if (!v->is_string()) throw ConfigInvalid("config key 'columns' must be a path string");
    c.columns = v->get<std::string>();
  }
  r.get("normalize", c.normalize);
  r.get_with("spectral_mode", c.spectral_mode, mode_from);
  if (const json* v = r.child("split")) {
    ObjectReader s(*v, "split");
    s.get("train", c.split.train);
    s.get("val", c.split.val);
    s.finish();
  }
  if (const json* v = r.child("model")) {
    ObjectReader m(*v, "model");
    m.get("f", c.model.spectral.f);
    m.get("subnet_filters", c.model.subnet_filters);
    m.get("fusion_filters", c.model.fusion_filters);
    m.get("rnn_layers", c.model.rnn_layers);
    m.get("rnn_units", c.model.rnn_units);
    m.get_with("cell", c.model.cell, [](const std::string& t) { return nn::parse_cell(t); });
    m.get("dropout", c.model.dropout);
    m.finish();
  }
  if (const json* v = r.child("train")) read_train(*v, "train", c.train);
  if (const json* v = r.child("fcn_train")) read_train(*v, "fcn_train", c.fcn_train);
  if (const json* v = r.child("gan")) {
    ObjectReader g(*v, "gan");
    GanConfig& gan = c.train.gan;
    g.get("latent", gan.latent);
    g.get("generator_width", gan.generator_width);
    g.get("discriminator_width", gan.discriminator_width);
    g.get("lr", gan.lr);
    g.get("beta1", gan.beta1);
    g.get("batch_size", gan.batch_size);
    g.get("steps", gan.steps);
    g.get("gap_fraction", gan.gap_fraction);
    g.finish();
  }
  if (const json* v = r.child("heuristic")) {
    ObjectReader h(*v, "heuristic");
    h.get("window", c.heuristic.window);
    h.get("top_jumps", c.heuristic.top_jumps);
    h.finish();
  }
  if (const json* v = r.child("synth")) {
    ObjectReader s(*v, "synth");
    SynthSpec& sp = c.synth;
    s.get("n_rides", sp.n_rides);
    s.get("min_duration_s", sp.min_duration_s);
    s.get("max_duration_s", sp.max_duration_s);
    s.get("sigma_acc", sp.sigma_acc);
    s.get("sigma_gyro", sp.sigma_gyro);
    s.get("noise_ar", sp.noise_ar);
    s.get("incident_rate", sp.incident_rate);
    s.get("amplitude", sp.amplitude);
    s.get("swerve_fraction", sp.swerve_fraction);
    s.get("brake_decay_s", sp.brake_decay_s);
    s.get("sample_period_ms", sp.sample_period_ms);
    s.get("sample_jitter_ms", sp.sample_jitter_ms);
    s.get("gps_every", sp.gps_every);
    s.get("gps_outlier_rate", sp.gps_outlier_rate);
    s.get("region", sp.region);
    s.get_with("partition", sp.partition, partition_from);
    s.finish();
  }
  if (const json* v = r.child("grid")) {
    ObjectReader g(*v, "grid");
    g.get("f", c.grid.space.f);
    g.get("rnn_units", c.grid.space.rnn_units);
    std::vector<std::string> cells;
    g.get("cells", cells);
    if (v->contains("cells")) {
      c.grid.space.cells.clear();
      try {
        for (const auto& cell : cells) c.grid.space.cells.push_back(nn::parse_cell(cell));
      } catch (const std::invalid_argument& e) {
        throw ConfigInvalid(std::string("grid.cells: ") + e.what());
      }
    }
    g.get("lr", c.grid.space.lr);
    g.get("budget", c.grid.budget);
    g.get("epochs", c.grid.epochs);
    g.finish();
  }
  r.finish();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigInvalid("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return from_json_text(text.str());
}

std::string RunConfig::to_json_text() const {
  json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["region"] = region ? json(*region) : json(nullptr);
  j["partition"] = partition ? json(std::string(to_string(*partition))) : json(nullptr);
  if (columns) j["columns"] = columns->string();
  j["normalize"] = normalize;
  j["spectral_mode"] = spectral_mode == SpectralMode::Dft ? "dft" : "identity";
  j["split"] = {{"train", split.train}, {"val", split.val}};
  j["model"] = json::parse(model.to_json_text());
  j["model"].erase("spectral_mode");
  j["train"] = write_train(train);
  j["fcn_train"] = write_train(fcn_train);
  const GanConfig& g = train.gan;
  j["gan"] = {{"latent", g.latent},           {"generator_width", g.generator_width},
              {"discriminator_width", g.discriminator_width}, {"lr", g.lr},
              {"beta1", g.beta1},             {"batch_size", g.batch_size},
              {"steps", g.steps},             {"gap_fraction", g.gap_fraction}};
  j["heuristic"] = {{"window", heuristic.window}, {"top_jumps", heuristic.top_jumps}};
  const SynthSpec& s = synth;
  j["synth"] = {{"n_rides", s.n_rides},
                {"min_duration_s", s.min_duration_s},
                {"max_duration_s", s.max_duration_s},
                {"sigma_acc", s.sigma_acc},
                {"sigma_gyro", s.sigma_gyro},
                {"noise_ar", s.noise_ar},
                {"incident_rate", s.incident_rate},
                {"amplitude", s.amplitude},
                {"swerve_fraction", s.swerve_fraction},
                {"brake_decay_s", s.brake_decay_s},
                {"sample_period_ms", s.sample_period_ms},
                {"sample_jitter_ms", s.sample_jitter_ms},
                {"gps_every", s.gps_every},
                {"gps_outlier_rate", s.gps_outlier_rate},
                {"region", s.region},
                {"partition", std::string(to_string(s.partition))}};
  std::vector<std::string> cells;
  for (auto cell : grid.space.cells) cells.push_back(nn::to_string(cell));
  j["grid"] = {{"f", grid.space.f},   {"rnn_units", grid.space.rnn_units}, {"cells", cells},
               {"lr", grid.space.lr}, {"budget", grid.budget},            {"epochs", grid.epochs}};
  return j.dump(2);
}

std::uint64_t RunConfig::seed_for(std::string_view name) const { return derive_seed(seed, name); }

void RunConfig::validate() const {
  try {
    model.spectral.validate();
    train.validate();
    fcn_train.validate();
    train.gan.validate();
    heuristic.validate();
    synth.validate();
    if (split.train <= 0 || split.val <= 0 || split.train + split.val >= 1.0) {
      throw std::invalid_argument("split ratios must be positive and sum to less than 1");
    }
    if (model.dropout < 0.0 || model.dropout >= 1.0) throw std::invalid_argument("model.dropout must lie in [0, 1)");
    if (grid.budget == 0 || grid.epochs == 0) throw std::invalid_argument("grid budget and epochs must be positive");
    for (std::size_t f : grid.space.f) FrequencySpec{f}.validate();
  } catch (const ConfigInvalid&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigInvalid(e.what());
  }
}

}  // namespace cyclesense
