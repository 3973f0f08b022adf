#include "dsibh/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "dsibh/dataio.hpp"
#include "dsibh/error.hpp"
#include "dsibh/trainer.hpp"

namespace dsibh::cli {

using numkit::Matrix;

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

dataio::DatasetBundle load_bundle(const config::DataSource& src) {
  if (src.synth) return dataio::generate_synthetic(*src.synth);
  dataio::DatasetBundle b{dataio::load_features(src.x1), dataio::load_features(src.x2),
                          dataio::load_labels(src.labels), {}};
  return b;
}

std::vector<std::uint64_t> as_ids(const std::vector<std::size_t>& rows) {
  return {rows.begin(), rows.end()};
}

config::json map_json(const hamming::MapReport& r) {
  return config::json{{"map", r.map}, {"evaluated", r.evaluated}, {"skipped", r.skipped}};
}

double bit_agreement(const Matrix& a, const Matrix& b) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += nets::sign(a.data()[i]) == nets::sign(b.data()[i]);
  return a.size() == 0 ? 0.0 : static_cast<double>(same) / static_cast<double>(a.size());
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const UndefinedMetric& e) {
    err << "error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    // Format errors, unreadable files and incompatible inputs.
    err << "error: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag) return std::max(1u, *flag);
  if (const char* env = std::getenv("DSIBH_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

void cmd_synth(const dataio::SynthSpec& spec, const std::filesystem::path& out_dir) {
  const dataio::DatasetBundle b = dataio::generate_synthetic(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw FormatError("cannot create " + out_dir.string() + ": " + ec.message());
  dataio::save_features(b.x1, out_dir / "x1.dsibf");
  dataio::save_features(b.x2, out_dir / "x2.dsibf");
  dataio::save_labels(b.y, out_dir / "labels.dsibl");
  std::ofstream echo(out_dir / "synth.json");
  echo << config::to_json(spec).dump(2) << '\n';
  if (!echo) throw FormatError("cannot write synth.json in " + out_dir.string());
}

TrainArtifacts cmd_train(const config::ExperimentConfig& cfg, unsigned threads, std::ostream& log) {
  cfg.validate();
  dataio::DatasetBundle bundle = load_bundle(cfg.data);
  bundle.validate();
  const std::size_t n = bundle.size();
  if (cfg.split.query_count >= n) {
    throw UsageError("split.query_count " + std::to_string(cfg.split.query_count) + " leaves no retrieval rows");
  }
  const std::size_t train_count = cfg.split.train_count.value_or(n - cfg.split.query_count);
  try {
    bundle = dataio::split(std::move(bundle), cfg.split.query_count, train_count, cfg.split.seed);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const trainer::TrainingData data = trainer::training_data(bundle);
  const trainer::NetSpecs specs = config::net_specs(cfg, data);

  trainer::TrainHooks hooks;
  hooks.on_round_end = [&](const trainer::TrainState& s) {
    log << "round " << s.rounds << "  labnet " << fixed(s.history.labnet.back(), 4) << "  imgnet "
        << fixed(s.history.imgnet.back(), 4) << "  txtnet " << fixed(s.history.txtnet.back(), 4) << '\n';
  };
  const trainer::TrainState state = trainer::train(data, cfg.train, specs, hooks);

  const auto query_rows = bundle.query_rows();
  const auto retrieval_rows = bundle.retrieval_rows();
  const LabelMatrix q_labels = bundle.y.select_rows(query_rows);
  const LabelMatrix r_labels = bundle.y.select_rows(retrieval_rows);
  const auto q_img = hamming::encode(state.imgnet, bundle.x1.select_rows(query_rows), q_labels, as_ids(query_rows));
  const auto q_txt = hamming::encode(state.txtnet, bundle.x2.select_rows(query_rows), q_labels, as_ids(query_rows));
  const auto r_img =
      hamming::encode(state.imgnet, bundle.x1.select_rows(retrieval_rows), r_labels, as_ids(retrieval_rows));
  const auto r_txt =
      hamming::encode(state.txtnet, bundle.x2.select_rows(retrieval_rows), r_labels, as_ids(retrieval_rows));

  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw FormatError("cannot create " + cfg.output_dir.string() + ": " + ec.message());
  TrainArtifacts out;
  out.labnet_model = cfg.output_dir / "labnet.dsibm";
  out.imgnet_model = cfg.output_dir / "imgnet.dsibm";
  out.txtnet_model = cfg.output_dir / "txtnet.dsibm";
  out.retrieval_img_db = cfg.output_dir / "retrieval_img.dsibc";
  out.retrieval_txt_db = cfg.output_dir / "retrieval_txt.dsibc";
  out.query_img_db = cfg.output_dir / "query_img.dsibc";
  out.query_txt_db = cfg.output_dir / "query_txt.dsibc";
  out.metrics = cfg.output_dir / "metrics.json";
  nets::save_model(state.labnet, out.labnet_model);
  nets::save_model(state.imgnet, out.imgnet_model);
  nets::save_model(state.txtnet, out.txtnet_model);
  hamming::save_db(r_img, out.retrieval_img_db);
  hamming::save_db(r_txt, out.retrieval_txt_db);
  hamming::save_db(q_img, out.query_img_db);
  hamming::save_db(q_txt, out.query_txt_db);

  config::json m;
  m["config"] = config::to_json(cfg);
  m["data"] = {{"rows", n},
               {"train", data.size()},
               {"query", query_rows.size()},
               {"retrieval", retrieval_rows.size()},
               {"d1", bundle.x1.cols()},
               {"d2", bundle.x2.cols()},
               {"label_dim", bundle.y.cols()}};
  m["rounds"] = state.rounds;
  m["converged"] = state.converged;
  m["losses"] = {{"labnet", state.history.labnet},
                 {"imgnet", state.history.imgnet},
                 {"txtnet", state.history.txtnet},
                 {"total", state.history.total}};
  config::json maps = config::json::object();
  if (!query_rows.empty()) {
    for (config::Direction d : cfg.directions) {
      const bool x2r = d == config::Direction::image_to_text;
      try {
        maps[config::direction_name(d)] =
            map_json(hamming::mean_average_precision(x2r ? q_img : q_txt, x2r ? r_txt : r_img, std::nullopt, threads));
      } catch (const UndefinedMetric&) {
        maps[config::direction_name(d)] = nullptr;
      }
    }
  }
  m["map"] = maps;

  // Held-out compression estimate on one query minibatch.
  const std::size_t held = std::min(query_rows.size(), cfg.train.batch_size);
  if (held >= 2) {
    const std::vector<std::size_t> rows(query_rows.begin(), query_rows.begin() + static_cast<std::ptrdiff_t>(held));
    m["held_out_mi"] = {{"rows", held},
                        {"imgnet", trainer::code_information(state.imgnet, bundle.x1.select_rows(rows))},
                        {"txtnet", trainer::code_information(state.txtnet, bundle.x2.select_rows(rows))}};
  } else {
    m["held_out_mi"] = nullptr;
  }
  m["train_code_agreement"] =
      bit_agreement(nets::forward(state.imgnet, data.x1), nets::forward(state.txtnet, data.x2));

  std::ofstream mf(out.metrics);
  mf << m.dump(2) << '\n';
  if (!mf) throw FormatError("cannot write " + out.metrics.string());
  out.metrics_json = std::move(m);
  return out;
}

EvalRow cmd_eval(const std::filesystem::path& query_db, const std::filesystem::path& retrieval_db,
                 const std::string& direction, std::optional<std::size_t> radius, unsigned threads) {
  const auto q = hamming::load_db(query_db);
  const auto r = hamming::load_db(retrieval_db);
  if (q.code_bits() != r.code_bits()) {
    throw FormatError("bit length mismatch: query DB has " + std::to_string(q.code_bits()) +
                      " bits, retrieval DB has " + std::to_string(r.code_bits()));
  }
  return {direction, q.code_bits(), hamming::mean_average_precision(q, r, radius, threads)};
}

void print_eval_table(const std::vector<EvalRow>& rows, std::ostream& out) {
  out << std::left << std::setw(10) << "direction" << std::setw(6) << "bits" << std::setw(10) << "MAP"
      << "skipped\n";
  for (const auto& row : rows) {
    out << std::left << std::setw(10) << row.direction << std::setw(6) << row.bits << std::setw(10)
        << fixed(row.report.map, 4) << row.report.skipped << '\n';
  }
}

void append_eval_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw FormatError("cannot open " + path.string());
  if (fresh) out << "direction,bits,map,evaluated,skipped\n";
  for (const auto& row : rows) {
    out << row.direction << ',' << row.bits << ',' << fixed(row.report.map, 6) << ',' << row.report.evaluated
        << ',' << row.report.skipped << '\n';
  }
}

std::vector<hamming::RankedResult> cmd_retrieve(const std::filesystem::path& query_features,
                                                const std::filesystem::path& model,
                                                const std::filesystem::path& db, std::size_t k) {
  const auto params = nets::load_model(model);
  const auto x = dataio::load_features(query_features);
  const auto database = hamming::load_db(db);
  if (params.code_bits() != database.code_bits()) {
    throw FormatError("model emits " + std::to_string(params.code_bits()) + "-bit codes, database holds " +
                      std::to_string(database.code_bits()) + "-bit codes");
  }
  if (params.input_dim() != x.cols()) {
    throw FormatError("query features have " + std::to_string(x.cols()) + " columns, model expects " +
                      std::to_string(params.input_dim()));
  }
  const auto queries = hamming::encode(params, x, LabelMatrix(x.rows(), 0));
  std::vector<hamming::RankedResult> out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto r = hamming::retrieve(queries.code(i), database, k);
    r.query_id = queries.ids()[i];
    out.push_back(std::move(r));
  }
  return out;
}

hamming::PackedCodeDB cmd_encode(const std::filesystem::path& model, const std::filesystem::path& features,
                                 const std::optional<std::filesystem::path>& labels,
                                 const std::filesystem::path& out) {
  const auto params = nets::load_model(model);
  const auto x = dataio::load_features(features);
  if (params.input_dim() != x.cols()) {
    throw FormatError("features have " + std::to_string(x.cols()) + " columns, model expects " +
                      std::to_string(params.input_dim()));
  }
  LabelMatrix y = labels ? dataio::load_labels(*labels) : LabelMatrix(x.rows(), 0);
  if (y.rows() != x.rows()) {
    throw FormatError("label rows " + std::to_string(y.rows()) + " != feature rows " + std::to_string(x.rows()));
  }
  auto db = hamming::encode(params, x, std::move(y));
  hamming::save_db(db, out);
  return db;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep supervised information-bottleneck hashing for cross-modal retrieval", "dsibh"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> global_seed;
  std::optional<unsigned> threads_flag;
  bool json_out = false;
  app.add_option("--config", config_path, "Experiment config (JSON)");
  app.add_option("--seed", global_seed, "Seed override");
  app.add_option("--threads", threads_flag, "Worker threads (fallback: DSIBH_THREADS)");
  app.add_flag("--json", json_out, "Machine-readable output");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired dataset");
  dataio::SynthSpec spec;
  std::optional<std::size_t> label_dim;
  std::optional<std::uint64_t> synth_seed;
  std::string synth_out;
  synth->add_option("--classes", spec.class_count, "Number of classes")->capture_default_str();
  synth->add_option("--per-class", spec.samples_per_class, "Samples per class")->capture_default_str();
  synth->add_option("--d1", spec.d1, "Modality-1 feature dimension")->capture_default_str();
  synth->add_option("--d2", spec.d2, "Modality-2 feature dimension")->capture_default_str();
  synth->add_option("--label-dim", label_dim, "Label width (default: classes)");
  synth->add_option("--noise", spec.noise_sigma, "Feature noise sigma")->capture_default_str();
  synth->add_option("--multilabel-rate", spec.multilabel_rate, "Probability of a second label")
      ->capture_default_str();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out-dir", synth_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train the three encoders and write models, code DBs, metrics");
  std::string train_out;
  train->add_option("--out-dir", train_out, "Override output_dir from the config");

  auto* encode = app.add_subcommand("encode", "Encode a feature file into a code DB");
  std::string enc_model, enc_features, enc_labels, enc_out;
  encode->add_option("--model", enc_model, "Model file")->required();
  encode->add_option("--features", enc_features, "Feature file")->required();
  encode->add_option("--labels", enc_labels, "Label file (binary or CSV)");
  encode->add_option("--out", enc_out, "Output code DB")->required();

  auto* retrieve = app.add_subcommand("retrieve", "Top-k Hamming retrieval for query features");
  std::string ret_queries, ret_model, ret_db;
  std::size_t ret_k = 10;
  retrieve->add_option("--queries", ret_queries, "Query feature file")->required();
  retrieve->add_option("--model", ret_model, "Model for the query modality")->required();
  retrieve->add_option("--db", ret_db, "Database code DB")->required();
  retrieve->add_option("--k", ret_k, "Results per query")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "MAP of a query DB against a retrieval DB");
  std::string ev_query, ev_db, ev_direction = "x2r", ev_csv;
  std::optional<std::size_t> ev_radius;
  eval->add_option("--query-db", ev_query, "Query code DB")->required();
  eval->add_option("--retrieval-db", ev_db, "Retrieval code DB")->required();
  eval->add_option("--direction", ev_direction, "Direction label for the report")->capture_default_str();
  eval->add_option("--radius", ev_radius, "Retrieval radius (default: database size)");
  eval->add_option("--csv", ev_csv, "Append a CSV row to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  const unsigned threads = resolve_threads(threads_flag);

  if (*synth) {
    return guarded(err, [&] {
      if (label_dim) {
        spec.label_dim = *label_dim;
      } else {
        spec.label_dim = spec.class_count;
      }
      spec.seed = synth_seed.value_or(global_seed.value_or(0));
      try {
        spec.validate();
      } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
      }
      cmd_synth(spec, synth_out);
      if (json_out) {
        out << config::json{{"out_dir", synth_out}, {"rows", spec.class_count * spec.samples_per_class}}.dump()
            << '\n';
      } else {
        out << "wrote " << spec.class_count * spec.samples_per_class << " pairs to " << synth_out << '\n';
      }
      return kOk;
    });
  }

  if (*train) {
    return guarded(err, [&] {
      if (config_path.empty()) throw UsageError("train requires --config");
      config::ExperimentConfig cfg;
      try {
        cfg = config::load_experiment(config_path);
        if (global_seed) cfg.train.seed = *global_seed;
        if (!train_out.empty()) cfg.output_dir = train_out;
        cfg.validate();
      } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
      }
      std::ostringstream sink;
      const auto artifacts = cmd_train(cfg, threads, json_out ? static_cast<std::ostream&>(sink) : err);
      if (json_out) {
        out << artifacts.metrics_json.dump() << '\n';
        return kOk;
      }
      std::vector<EvalRow> rows;
      const auto& maps = artifacts.metrics_json["map"];
      for (const auto& item : maps.items()) {
        if (item.value().is_null()) continue;
        hamming::MapReport r{item.value()["map"].get<double>(), item.value()["evaluated"].get<std::size_t>(),
                             item.value()["skipped"].get<std::size_t>()};
        rows.push_back({item.key(), cfg.train.code_bits, r});
      }
      if (cfg.report == config::ReportFormat::csv) {
        out << "direction,bits,map,evaluated,skipped\n";
        for (const auto& r : rows)
          out << r.direction << ',' << r.bits << ',' << fixed(r.report.map, 6) << ',' << r.report.evaluated << ','
              << r.report.skipped << '\n';
      } else {
        print_eval_table(rows, out);
      }
      out << "artifacts in " << cfg.output_dir.string() << '\n';
      return kOk;
    });
  }

  if (*encode) {
    return guarded(err, [&] {
      std::optional<std::filesystem::path> labels;
      if (!enc_labels.empty()) labels = enc_labels;
      const auto db = cmd_encode(enc_model, enc_features, labels, enc_out);
      if (json_out) {
        out << config::json{{"out", enc_out}, {"items", db.size()}, {"bits", db.code_bits()}}.dump() << '\n';
      } else {
        out << "encoded " << db.size() << " items (" << db.code_bits() << " bits) to " << enc_out << '\n';
      }
      return kOk;
    });
  }

  if (*retrieve) {
    return guarded(err, [&] {
      const auto results = cmd_retrieve(ret_queries, ret_model, ret_db, ret_k);
      if (json_out) {
        config::json arr = config::json::array();
        for (const auto& r : results) {
          config::json hits = config::json::array();
          for (const auto& h : r.hits) hits.push_back({{"id", h.id}, {"distance", h.distance}});
          arr.push_back({{"query", r.query_id}, {"hits", hits}});
        }
        out << arr.dump() << '\n';
      } else {
        for (const auto& r : results) {
          out << "query " << r.query_id << '\n';
          for (std::size_t rank = 0; rank < r.hits.size(); ++rank) {
            out << "  " << rank + 1 << "  id " << r.hits[rank].id << "  distance " << r.hits[rank].distance << '\n';
          }
        }
      }
      return kOk;
    });
  }

  if (*eval) {
    return guarded(err, [&] {
      const EvalRow row = cmd_eval(ev_query, ev_db, ev_direction, ev_radius, threads);
      if (!ev_csv.empty()) append_eval_csv({row}, ev_csv);
      if (json_out) {
        out << config::json{{"direction", row.direction},
                            {"bits", row.bits},
                            {"map", row.report.map},
                            {"evaluated", row.report.evaluated},
                            {"skipped", row.report.skipped}}
                   .dump()
            << '\n';
      } else {
        print_eval_table({row}, out);
      }
      return kOk;
    });
  }
  return kUsage;
}

}  // namespace dsibh::cli
