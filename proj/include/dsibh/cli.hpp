#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dsibh/config.hpp"
#include "dsibh/hamming.hpp"

namespace dsibh::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

/// Bad flags or an invalid experiment config.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thread count from --threads, else DSIBH_THREADS, else 1.
unsigned resolve_threads(std::optional<unsigned> flag);

void cmd_synth(const dataio::SynthSpec& spec, const std::filesystem::path& out_dir);

struct TrainArtifacts {
  std::filesystem::path labnet_model;
  std::filesystem::path imgnet_model;
  std::filesystem::path txtnet_model;
  std::filesystem::path retrieval_img_db;
  std::filesystem::path retrieval_txt_db;
  std::filesystem::path query_img_db;
  std::filesystem::path query_txt_db;
  std::filesystem::path metrics;
  config::json metrics_json;
};

/// Loads or generates data, splits, trains, encodes both modalities and
/// writes models, code DBs and metrics.json into config.output_dir.
TrainArtifacts cmd_train(const config::ExperimentConfig& config, unsigned threads, std::ostream& log);

struct EvalRow {
  std::string direction;
  std::size_t bits = 0;
  hamming::MapReport report;
};

EvalRow cmd_eval(const std::filesystem::path& query_db, const std::filesystem::path& retrieval_db,
                 const std::string& direction, std::optional<std::size_t> radius, unsigned threads);
void print_eval_table(const std::vector<EvalRow>& rows, std::ostream& out);
void append_eval_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path);

std::vector<hamming::RankedResult> cmd_retrieve(const std::filesystem::path& query_features,
                                                const std::filesystem::path& model,
                                                const std::filesystem::path& db, std::size_t k);

hamming::PackedCodeDB cmd_encode(const std::filesystem::path& model, const std::filesystem::path& features,
                                 const std::optional<std::filesystem::path>& labels,
                                 const std::filesystem::path& out);

/// Full command line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dsibh::cli
