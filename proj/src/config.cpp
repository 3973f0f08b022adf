#include "dsibh/config.hpp"

#include <fstream>
#include <set>

#include "dsibh/error.hpp"

namespace dsibh::config {

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + ": expected a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.contains(item.key())) throw InvalidArgument(where + ": unknown key \"" + item.key() + "\"");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(where + "." + key + ": " + e.what());
  }
}

// Counts and seeds must be non-negative JSON integers; negatives would wrap.
bool non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

void read_count(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!non_negative_integer(v)) {
    throw InvalidArgument(where + "." + key + ": expected a non-negative integer");
  }
  out = v.get<std::size_t>();
}

void read_seed(const json& j, const char* key, std::uint64_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!non_negative_integer(v)) {
    throw InvalidArgument(where + "." + key + ": expected a non-negative integer");
  }
  out = v.get<std::uint64_t>();
}

NetLayout layout_from_json(const json& j, const std::string& where) {
  reject_unknown(j, {"hidden_dims", "init_scale", "init_seed"}, where);
  NetLayout l;
  if (j.contains("hidden_dims")) {
    const json& dims = j.at("hidden_dims");
    if (!dims.is_array()) throw InvalidArgument(where + ".hidden_dims: expected an array");
    l.hidden_dims.clear();
    for (const json& d : dims) {
      if (!non_negative_integer(d)) throw InvalidArgument(where + ".hidden_dims: entries must be integers >= 1");
      l.hidden_dims.push_back(d.get<std::size_t>());
    }
  }
  read(j, "init_scale", l.init_scale, where);
  if (j.contains("init_seed")) {
    std::uint64_t s = 0;
    read_seed(j, "init_seed", s, where);
    l.init_seed = s;
  }
  return l;
}

json to_json(const NetLayout& l) {
  json j;
  j["hidden_dims"] = l.hidden_dims;
  j["init_scale"] = l.init_scale;
  if (l.init_seed) j["init_seed"] = *l.init_seed;
  return j;
}

}  // namespace

const char* direction_name(Direction d) noexcept {
  return d == Direction::image_to_text ? "x2r" : "r2x";
}

Direction parse_direction(const std::string& s) {
  if (s == "x2r") return Direction::image_to_text;
  if (s == "r2x") return Direction::text_to_image;
  throw InvalidArgument("unknown retrieval direction \"" + s + "\" (expected x2r or r2x)");
}

json to_json(const trainer::TrainConfig& c) {
  json j;
  j["code_bits"] = c.code_bits;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["gamma"] = c.gamma;
  j["eta"] = c.eta;
  j["batch_size"] = c.batch_size;
  j["lr_lab"] = c.lr_lab;
  j["lr_img"] = c.lr_img;
  j["lr_txt"] = c.lr_txt;
  j["iters_lab"] = c.iters_lab;
  j["iters_img"] = c.iters_img;
  j["iters_txt"] = c.iters_txt;
  j["outer_rounds"] = c.outer_rounds;
  j["convergence_tol"] = c.convergence_tol;
  j["seed"] = c.seed;
  j["optimizer"] = c.optimizer == trainer::OptimizerKind::adam ? "adam" : "sgd";
  j["checkpoint_dir"] = c.checkpoint_dir.generic_string();
  j["checkpoint_every"] = c.checkpoint_every;
  return j;
}

trainer::TrainConfig train_config_from_json(const json& j) {
  const std::string where = "train";
  reject_unknown(j,
                 {"code_bits", "alpha", "beta", "gamma", "eta", "batch_size", "lr_lab", "lr_img",
                  "lr_txt", "iters_lab", "iters_img", "iters_txt", "outer_rounds", "convergence_tol",
                  "seed", "optimizer", "checkpoint_dir", "checkpoint_every"},
                 where);
  trainer::TrainConfig c;
  read_count(j, "code_bits", c.code_bits, where);
  read(j, "alpha", c.alpha, where);
  read(j, "beta", c.beta, where);
  read(j, "gamma", c.gamma, where);
  read(j, "eta", c.eta, where);
  read_count(j, "batch_size", c.batch_size, where);
  read(j, "lr_lab", c.lr_lab, where);
  read(j, "lr_img", c.lr_img, where);
  read(j, "lr_txt", c.lr_txt, where);
  read_count(j, "iters_lab", c.iters_lab, where);
  read_count(j, "iters_img", c.iters_img, where);
  read_count(j, "iters_txt", c.iters_txt, where);
  read_count(j, "outer_rounds", c.outer_rounds, where);
  read(j, "convergence_tol", c.convergence_tol, where);
  read_seed(j, "seed", c.seed, where);
  if (j.contains("optimizer")) {
    std::string opt;
    read(j, "optimizer", opt, where);
    if (opt == "adam") {
      c.optimizer = trainer::OptimizerKind::adam;
    } else if (opt == "sgd") {
      c.optimizer = trainer::OptimizerKind::sgd;
    } else {
      throw InvalidArgument("train.optimizer: expected \"adam\" or \"sgd\"");
    }
  }
  if (j.contains("checkpoint_dir")) {
    std::string dir;
    read(j, "checkpoint_dir", dir, where);
    c.checkpoint_dir = dir;
  }
  read_count(j, "checkpoint_every", c.checkpoint_every, where);
  c.validate();
  return c;
}

json to_json(const dataio::SynthSpec& s) {
  json j;
  j["classes"] = s.class_count;
  j["per_class"] = s.samples_per_class;
  j["d1"] = s.d1;
  j["d2"] = s.d2;
  j["label_dim"] = s.label_dim;
  j["noise"] = s.noise_sigma;
  j["multilabel_rate"] = s.multilabel_rate;
  j["seed"] = s.seed;
  return j;
}

dataio::SynthSpec synth_spec_from_json(const json& j) {
  const std::string where = "data.synth";
  reject_unknown(j, {"classes", "per_class", "d1", "d2", "label_dim", "noise", "multilabel_rate", "seed"},
                 where);
  dataio::SynthSpec s;
  read_count(j, "classes", s.class_count, where);
  s.label_dim = s.class_count;
  read_count(j, "per_class", s.samples_per_class, where);
  read_count(j, "d1", s.d1, where);
  read_count(j, "d2", s.d2, where);
  read_count(j, "label_dim", s.label_dim, where);
  read(j, "noise", s.noise_sigma, where);
  read(j, "multilabel_rate", s.multilabel_rate, where);
  read_seed(j, "seed", s.seed, where);
  s.validate();
  return s;
}

json to_json(const ExperimentConfig& c) {
  json j;
  json data;
  if (c.data.synth) {
    data["synth"] = to_json(*c.data.synth);
  } else {
    data["x1"] = c.data.x1.generic_string();
    data["x2"] = c.data.x2.generic_string();
    data["labels"] = c.data.labels.generic_string();
  }
  j["data"] = data;
  json split;
  split["query_count"] = c.split.query_count;
  if (c.split.train_count) split["train_count"] = *c.split.train_count;
  split["seed"] = c.split.seed;
  j["split"] = split;
  j["train"] = to_json(c.train);
  j["nets"] = json{{"labnet", to_json(c.labnet)}, {"imgnet", to_json(c.imgnet)}, {"txtnet", to_json(c.txtnet)}};
  j["output_dir"] = c.output_dir.generic_string();
  json dirs = json::array();
  for (Direction d : c.directions) dirs.push_back(direction_name(d));
  j["directions"] = dirs;
  j["report"] = c.report == ReportFormat::table ? "table" : "csv";
  return j;
}

void ExperimentConfig::validate() const {
  if (!data.synth && (data.x1.empty() || data.x2.empty() || data.labels.empty())) {
    throw InvalidArgument("data: either \"synth\" or all of \"x1\", \"x2\", \"labels\" are required");
  }
  if (data.synth) data.synth->validate();
  train.validate();
  for (const NetLayout* l : {&labnet, &imgnet, &txtnet}) {
    if (l->hidden_dims.empty()) throw InvalidArgument("nets: hidden_dims must be non-empty");
    for (std::size_t d : l->hidden_dims)
      if (d == 0) throw InvalidArgument("nets: hidden_dims entries must be >= 1");
    if (!(l->init_scale >= 0.0)) throw InvalidArgument("nets: init_scale must be >= 0");
  }
  if (directions.empty()) throw InvalidArgument("directions: at least one direction required");
  if (output_dir.empty()) throw InvalidArgument("output_dir: must be set");
}

ExperimentConfig experiment_from_json(const json& j) {
  reject_unknown(j, {"data", "split", "train", "nets", "output_dir", "directions", "report"}, "config");
  ExperimentConfig c;
  if (!j.contains("data")) throw InvalidArgument("config: \"data\" is required");
  const json& data = j.at("data");
  reject_unknown(data, {"synth", "x1", "x2", "labels"}, "data");
  if (data.contains("synth")) {
    if (data.contains("x1") || data.contains("x2") || data.contains("labels")) {
      throw InvalidArgument("data: \"synth\" cannot be combined with file paths");
    }
    c.data.synth = synth_spec_from_json(data.at("synth"));
  } else {
    std::string x1, x2, labels;
    read(data, "x1", x1, "data");
    read(data, "x2", x2, "data");
    read(data, "labels", labels, "data");
    c.data.x1 = x1;
    c.data.x2 = x2;
    c.data.labels = labels;
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    reject_unknown(s, {"query_count", "train_count", "seed"}, "split");
    read_count(s, "query_count", c.split.query_count, "split");
    if (s.contains("train_count")) {
      std::size_t t = 0;
      read_count(s, "train_count", t, "split");
      c.split.train_count = t;
    }
    read_seed(s, "seed", c.split.seed, "split");
  }
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("nets")) {
    const json& n = j.at("nets");
    reject_unknown(n, {"labnet", "imgnet", "txtnet"}, "nets");
    if (n.contains("labnet")) c.labnet = layout_from_json(n.at("labnet"), "nets.labnet");
    if (n.contains("imgnet")) c.imgnet = layout_from_json(n.at("imgnet"), "nets.imgnet");
    if (n.contains("txtnet")) c.txtnet = layout_from_json(n.at("txtnet"), "nets.txtnet");
  }
  if (j.contains("output_dir")) {
    std::string out;
    read(j, "output_dir", out, "config");
    c.output_dir = out;
  }
  if (j.contains("directions")) {
    std::vector<std::string> dirs;
    read(j, "directions", dirs, "config");
    c.directions.clear();
    for (const auto& d : dirs) c.directions.push_back(parse_direction(d));
  }
  if (j.contains("report")) {
    std::string r;
    read(j, "report", r, "config");
    if (r == "table") {
      c.report = ReportFormat::table;
    } else if (r == "csv") {
      c.report = ReportFormat::csv;
    } else {
      throw InvalidArgument("report: expected \"table\" or \"csv\"");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

trainer::NetSpecs net_specs(const ExperimentConfig& c, const trainer::TrainingData& data) {
  auto spec = [&](const NetLayout& l, std::size_t input_dim, std::uint64_t salt) {
    nets::NetSpec s;
    s.input_dim = input_dim;
    s.hidden_dims = l.hidden_dims;
    s.code_bits = c.train.code_bits;
    s.init_scale = l.init_scale;
    s.init_seed = l.init_seed.value_or(trainer::derive_seed(c.train.seed, salt));
    return s;
  };
  return {spec(c.labnet, data.y.cols(), 0), spec(c.imgnet, data.x1.cols(), 1),
          spec(c.txtnet, data.x2.cols(), 2)};
}

}  // namespace dsibh::config
