#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsibh/dataio.hpp"
#include "dsibh/trainer.hpp"

// JSON experiment configuration. Every object rejects unknown keys, and
// the echo written into output artifacts has all defaults filled in.
namespace dsibh::config {

using json = nlohmann::ordered_json;

struct NetLayout {
  std::vector<std::size_t> hidden_dims{256};
  double init_scale = 1.0;
  std::optional<std::uint64_t> init_seed;  // derived from train.seed when absent
};

struct DataSource {
  std::optional<dataio::SynthSpec> synth;
  std::filesystem::path x1;
  std::filesystem::path x2;
  std::filesystem::path labels;
};

struct SplitSpec {
  std::size_t query_count = 100;
  std::optional<std::size_t> train_count;  // all retrieval rows when absent
  std::uint64_t seed = 0;
};

enum class Direction { image_to_text, text_to_image };
const char* direction_name(Direction d) noexcept;  // "x2r" / "r2x"
Direction parse_direction(const std::string& s);

enum class ReportFormat { table, csv };

struct ExperimentConfig {
  DataSource data;
  SplitSpec split;
  trainer::TrainConfig train;
  NetLayout labnet;
  NetLayout imgnet;
  NetLayout txtnet;
  std::filesystem::path output_dir = "dsibh_out";
  std::vector<Direction> directions{Direction::image_to_text, Direction::text_to_image};
  ReportFormat report = ReportFormat::table;

  void validate() const;
};

json to_json(const trainer::TrainConfig& c);
trainer::TrainConfig train_config_from_json(const json& j);
json to_json(const dataio::SynthSpec& s);
dataio::SynthSpec synth_spec_from_json(const json& j);
json to_json(const ExperimentConfig& c);

/// Parses and validates; throws InvalidArgument naming the offending key.
ExperimentConfig experiment_from_json(const json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Net specs with input dims from the data and seeds from the layouts.
trainer::NetSpecs net_specs(const ExperimentConfig& c, const trainer::TrainingData& data);

}  // namespace dsibh::config
