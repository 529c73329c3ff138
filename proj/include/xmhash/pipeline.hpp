#pragma once

#include "xmhash/anchor_graph.hpp"
#include "xmhash/dataset.hpp"
#include "xmhash/hash_model.hpp"
#include "xmhash/joint_codes.hpp"
#include "xmhash/retrieval.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace xmh {

using Json = nlohmann::json;

/// Bad configuration: unknown key, wrong type, violated constraint. Maps to exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// A pipeline stage failed. Maps to exit code 3.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& message)
      : Error("stage " + stage + " failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

struct DatasetSource {
  std::vector<std::string> features;
  FeatureFormat format = FeatureFormat::Csv;
  std::optional<std::string> labels;
  std::optional<SynthesisSpec> synthetic;
  bool normalize = true;
};

struct PipelineConfig {
  DatasetSource dataset;
  double query_fraction = 0.1;
  Index anchors = 500;
  GraphParams graph;
  int kmeans_max_iters = 100;
  bool dump_graph = false;
  JointCodeConfig codes;
  Architecture arch;
  Stage2Config train;
  int radius = 2;
  Index top_k = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path output = "xmhash_out";
  Json resolved;  // fully merged configuration, echoed into the manifest
};

/// Every accepted key with its default value.
Json default_config();

/// Recursively overlays `overlay` onto `base`. Unknown keys and type changes are ConfigErrors.
void merge_config(Json& base, const Json& overlay, const std::string& where = "");

/// XMHASH_<SECTION>__<KEY>[__<SUBKEY>]=value. Values are parsed as JSON when
/// possible, otherwise taken as strings.
void apply_env_overrides(Json& config, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> xmhash_environment();

/// Shrinks the anchor count for small datasets.
void apply_desk_scale(Json& config);

/// Typed view with every constraint checked. Throws ConfigError.
PipelineConfig parse_config(const Json& config);

/// file (optional) -> env -> explicit overrides, then parse.
PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::map<std::string, std::string>& env, const Json& cli_overrides = Json::object());

std::string content_hash(const Json& value);

/// Hashes of the configuration slices feeding each stage.
struct StageHashes {
  std::string graph;
  std::string codes;
  std::string train;
  std::string eval;
};
StageHashes stage_hashes(const PipelineConfig& config);

/// Dataset split into query and database parts after normalisation.
struct PreparedData {
  MultiModalDataset query;
  MultiModalDataset database;
  std::vector<Index> query_rows;
  std::vector<Index> database_rows;
  std::vector<double> divisors;
};
PreparedData prepare_data(const PipelineConfig& config);

/// Writes the synthetic fixture described by dataset.synthetic to `dir`.
std::vector<std::filesystem::path> write_synthetic(const PipelineConfig& config, const std::filesystem::path& dir);

void stage_graph(const PipelineConfig& config);
void stage_codes(const PipelineConfig& config);
void stage_train(const PipelineConfig& config);
std::vector<RetrievalResult> stage_eval(const PipelineConfig& config);

/// Evaluates hand-supplied code files (one per modality for queries and database).
std::vector<RetrievalResult> evaluate_code_files(const std::vector<std::string>& query_codes,
                                                 const std::vector<std::string>& database_codes,
                                                 const std::string& query_labels, const std::string& database_labels,
                                                 const std::filesystem::path& out_dir, int radius, int threads);

Json metrics_json(const std::vector<RetrievalResult>& results);

/// graph -> codes -> train -> eval, reusing stage outputs whose configuration
/// hash matches unless `force`. Writes manifest.json.
std::vector<RetrievalResult> run_pipeline(const PipelineConfig& config, bool force = false);

/// Artifact locations inside the output directory.
namespace paths {
std::filesystem::path graph_dir(const PipelineConfig& c);
std::filesystem::path codes_file(const PipelineConfig& c);
std::filesystem::path relaxed_file(const PipelineConfig& c);
std::filesystem::path trace_file(const PipelineConfig& c);
std::filesystem::path model_file(const PipelineConfig& c, std::size_t modality);
std::filesystem::path metrics_file(const PipelineConfig& c);
std::filesystem::path plot_file(const PipelineConfig& c);
std::filesystem::path manifest_file(const PipelineConfig& c);
}  // namespace paths

}  // namespace xmh
