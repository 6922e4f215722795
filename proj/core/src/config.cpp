#include "xdecode/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "xdecode/error.hpp"

namespace xdecode {

using nlohmann::json;

namespace {

int line_of(const std::string& text, size_t byte) {
  int line = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

std::string join_key(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Wraps one JSON object for strict reading: typed fetches mark their
// key, finish() rejects whatever was never asked for.
class ObjReader {
 public:
  ObjReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object())
      throw Error(Errc::type_mismatch,
                  (path_.empty() ? std::string("config root") : path_) +
                      " must be an object");
  }

  bool fetch(const char* key, std::string& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_string()) fail(key, "a string");
    out = v->get<std::string>();
    return true;
  }

  bool fetch(const char* key, bool& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_boolean()) fail(key, "a boolean");
    out = v->get<bool>();
    return true;
  }

  bool fetch(const char* key, int& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_number_integer()) fail(key, "an integer");
    out = v->get<int>();
    return true;
  }

  bool fetch(const char* key, uint64_t& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_number_integer()) fail(key, "a non-negative integer");
    if (!v->is_number_unsigned() && v->get<int64_t>() < 0)
      fail(key, "a non-negative integer");
    out = v->get<uint64_t>();
    return true;
  }

  bool fetch(const char* key, double& out) {
    const json* v = find(key);
    if (!v) return false;
    if (!v->is_number()) fail(key, "a number");
    out = v->get<double>();
    return true;
  }

  // Nested object; nullptr when absent.
  const json* object(const char* key) {
    const json* v = find(key);
    if (!v) return nullptr;
    if (!v->is_object()) fail(key, "an object");
    return v;
  }

  const json* array(const char* key) {
    const json* v = find(key);
    if (!v) return nullptr;
    if (!v->is_array()) fail(key, "an array");
    return v;
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key()))
        throw Error(Errc::unknown_key,
                    "unknown key \"" + join_key(path_, item.key()) + "\"");
  }

  std::string path_for(const char* key) const { return join_key(path_, key); }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  [[noreturn]] void fail(const char* key, const char* want) const {
    throw Error(Errc::type_mismatch,
                "key \"" + join_key(path_, key) + "\" must be " + want);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

int fetch_blur_level(ObjReader& r, const char* key, int fallback) {
  int v = fallback;
  r.fetch(key, v);
  return v;
}

void read_schedule(const json& j, const std::string& path, ScheduleConfig& cfg) {
  ObjReader r(j, path);
  std::string s;
  if (r.fetch("kind", s)) cfg.kind = schedule_kind_from_string(s);
  cfg.b_min.value = fetch_blur_level(r, "b_min", cfg.b_min.value);
  cfg.b_max.value = fetch_blur_level(r, "b_max", cfg.b_max.value);
  r.fetch("k_growth", cfg.k_growth);
  r.fetch("midpoint", cfg.midpoint);
  r.fetch("ratio", cfg.ratio);
  r.fetch("step_interval", cfg.step_interval);
  cfg.b0.value = fetch_blur_level(r, "b0", cfg.b0.value);
  if (r.fetch("epoch_base", s)) {
    if (s == "zero")
      cfg.epoch_base = EpochBase::zero;
    else if (s == "one")
      cfg.epoch_base = EpochBase::one;
    else
      throw Error(Errc::type_mismatch,
                  "key \"" + r.path_for("epoch_base") + "\" must be \"zero\" or \"one\"");
  }
  r.finish();
}

void read_train(const json& j, const std::string& path, TrainConfig& cfg) {
  ObjReader r(j, path);
  r.fetch("epochs", cfg.epochs);
  r.fetch("batch_size", cfg.batch_size);
  r.fetch("lr", cfg.lr);
  std::string s;
  if (r.fetch("lr_mode", s)) cfg.lr_mode = lr_mode_from_string(s);
  r.fetch("mixed_precision", cfg.mixed_precision);
  if (const json* sub = r.object("schedule"))
    read_schedule(*sub, r.path_for("schedule"), cfg.schedule);
  if (const json* sub = r.object("mixing")) {
    ObjReader m(*sub, r.path_for("mixing"));
    m.fetch("blur_percentage", cfg.mixing.blur_percentage);
    m.finish();
  }
  if (const json* sub = r.object("weights")) {
    ObjReader w(*sub, r.path_for("weights"));
    w.fetch("lambda_perc", cfg.weights.lambda_perc);
    w.fetch("lambda_l1", cfg.weights.lambda_l1);
    w.fetch("lambda_g", cfg.weights.lambda_g);
    w.finish();
  }
  r.fetch("seed", cfg.seed);
  r.fetch("image_size", cfg.image_size);
  r.fetch("base_width", cfg.base_width);
  if (r.fetch("adversarial", s)) cfg.adversarial = adv_loss_from_string(s);
  r.fetch("blur_floor", cfg.blur_floor);
  r.fetch("loss_scale", cfg.loss_scale);
  r.fetch("thin_features", cfg.thin_features);
  r.fetch("keep_all_checkpoints", cfg.keep_all_checkpoints);
  r.finish();
}

void read_corpus(const json& j, const std::string& path, DatasetSpec& out,
                 int image_size) {
  ObjReader r(j, path);
  std::string root, kind = "flat_folder", split = "train";
  r.fetch("root", root);
  r.fetch("kind", kind);
  if (r.fetch("split", split) && split != "train" && split != "test")
    throw Error(Errc::type_mismatch,
                "key \"" + r.path_for("split") + "\" must be \"train\" or \"test\"");
  r.finish();
  out = DatasetSpec::with_defaults(root, dataset_kind_from_string(kind),
                                   split == "train" ? Split::train : Split::test,
                                   image_size);
}

json schedule_to_json(const ScheduleConfig& cfg) {
  json j;
  j["kind"] = to_string(cfg.kind);
  j["b_min"] = cfg.b_min.value;
  j["b_max"] = cfg.b_max.value;
  j["k_growth"] = cfg.k_growth;
  j["midpoint"] = cfg.midpoint;
  j["ratio"] = cfg.ratio;
  j["step_interval"] = cfg.step_interval;
  j["b0"] = cfg.b0.value;
  j["epoch_base"] = cfg.epoch_base == EpochBase::zero ? "zero" : "one";
  return j;
}

json train_to_json(const TrainConfig& cfg) {
  json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["lr_mode"] = to_string(cfg.lr_mode);
  j["mixed_precision"] = cfg.mixed_precision;
  j["schedule"] = schedule_to_json(cfg.schedule);
  j["mixing"] = json{{"blur_percentage", cfg.mixing.blur_percentage}};
  j["weights"] = json{{"lambda_perc", cfg.weights.lambda_perc},
                      {"lambda_l1", cfg.weights.lambda_l1},
                      {"lambda_g", cfg.weights.lambda_g}};
  j["seed"] = cfg.seed;
  j["image_size"] = cfg.image_size;
  j["base_width"] = cfg.base_width;
  j["adversarial"] = to_string(cfg.adversarial);
  j["blur_floor"] = cfg.blur_floor;
  j["loss_scale"] = cfg.loss_scale;
  j["thin_features"] = cfg.thin_features;
  j["keep_all_checkpoints"] = cfg.keep_all_checkpoints;
  return j;
}

json parse_json_or_throw(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::config_parse, origin + ":" +
                                        std::to_string(line_of(text, e.byte)) +
                                        ": " + e.what());
  }
}

}  // namespace

void ExperimentSpec::validate() const {
  if (name.empty())
    throw Error(Errc::invalid_config, "experiment name must not be empty");
  if (name.find('/') != std::string::npos || name.find('\\') != std::string::npos)
    throw Error(Errc::invalid_config, "experiment name must not contain path separators");
  if (train_corpus.root.empty())
    throw Error(Errc::invalid_config, "train_corpus.root must be set");
  train.validate();
}

ExperimentSpec parse_config_text(const std::string& text, const std::string& origin) {
  const json root = parse_json_or_throw(text, origin);
  ObjReader r(root, "");

  ExperimentSpec spec;
  std::string profile;
  if (r.fetch("profile", profile)) {
    if (profile == "desk")
      spec.train = TrainConfig::desk_profile();
    else if (profile == "paper")
      spec.train = TrainConfig::paper_profile();
    else
      throw Error(Errc::type_mismatch, "key \"profile\" must be \"desk\" or \"paper\"");
  }
  r.fetch("name", spec.name);
  if (const json* sub = r.object("train"))
    read_train(*sub, "train", spec.train);
  const json* corpus = r.object("train_corpus");
  if (!corpus)
    throw Error(Errc::invalid_config, "config needs a \"train_corpus\" object");
  read_corpus(*corpus, "train_corpus", spec.train_corpus, spec.train.image_size);
  if (const json* arr = r.array("test_manifests")) {
    for (const json& item : *arr) {
      if (!item.is_string())
        throw Error(Errc::type_mismatch, "test_manifests entries must be strings");
      spec.test_manifests.emplace_back(item.get<std::string>());
    }
  }
  r.finish();

  try {
    spec.validate();
  } catch (const Error& e) {
    // Whatever a config file gets wrong is a config error, even when
    // the underlying check lives in another module.
    throw Error(Errc::invalid_config, std::string(e.what()));
  }
  return spec;
}

ExperimentSpec parse_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is)
    throw Error(Errc::config_parse, "cannot read config file " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

std::string serialize(const ExperimentSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["train_corpus"] = json{
      {"root", spec.train_corpus.root.generic_string()},
      {"kind", to_string(spec.train_corpus.kind)},
      {"split", spec.train_corpus.split == Split::train ? "train" : "test"}};
  json manifests = json::array();
  for (const auto& m : spec.test_manifests) manifests.push_back(m.generic_string());
  j["test_manifests"] = manifests;
  j["train"] = train_to_json(spec.train);
  return j.dump(2) + "\n";
}

std::string train_config_to_json(const TrainConfig& cfg) {
  return train_to_json(cfg).dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  const json j = parse_json_or_throw(text, "checkpoint config");
  TrainConfig cfg;
  read_train(j, "train", cfg);
  return cfg;
}

}  // namespace xdecode
