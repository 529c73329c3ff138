#include "xmhash/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;

namespace {

void print_results(const std::vector<xmh::RetrievalResult>& results) {
  for (const auto& r : results)
    std::printf("%-6s map=%.4f prec@r2=%.4f baseline=%.4f queries=%ld skipped=%ld\n", r.task.c_str(), r.map,
                r.prec_at_r2, r.baseline_map, static_cast<long>(r.num_queries), static_cast<long>(r.skipped_queries));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised cross-modal hashing: anchor graphs, joint binary codes, hash functions, retrieval"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(xmh::kVersion));

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  bool desk_scale = false;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  auto* out_opt = app.add_option("--out", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed, "global random seed");
  app.add_option("--threads", threads, "worker thread cap")->check(CLI::PositiveNumber);
  app.add_flag("--desk-scale", desk_scale, "small-data preset (32 anchors)");

  auto* synth = app.add_subcommand("synth", "write the configured synthetic fixture as CSV files");
  auto* graph = app.add_subcommand("graph", "learn anchors and build the anchor graphs");
  auto* codes = app.add_subcommand("codes", "optimise the joint binary codes from the cached graph");
  auto* train = app.add_subcommand("train", "train per-modality hash functions against the cached codes");
  auto* eval = app.add_subcommand("eval", "evaluate retrieval for every ordered modality pair");
  auto* run = app.add_subcommand("run", "run graph, codes, train and eval in order");

  std::vector<std::string> query_codes;
  std::vector<std::string> db_codes;
  std::string query_labels;
  std::string db_labels;
  eval->add_option("--query-codes", query_codes, "code files of the queries, one per modality");
  eval->add_option("--db-codes", db_codes, "code files of the database, one per modality");
  eval->add_option("--query-labels", query_labels, "label file of the queries");
  eval->add_option("--db-labels", db_labels, "label file of the database");
  bool force = false;
  run->add_flag("--force", force, "recompute every stage even when cached outputs match");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    xmh::Json overrides = xmh::Json::object();
    if (*out_opt) overrides["output"] = out_dir;
    if (*seed_opt) overrides["seed"] = seed;
    if (threads > 0) overrides["threads"] = threads;
    if (desk_scale) overrides["graph"] = {{"anchors", 32}};
    const auto file = config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path);

    if (synth->parsed()) {
      auto base = xmh::default_config();
      if (file) xmh::merge_config(base, xmh::Json::parse(xmh::io::read_text(*file)));
      if (!base["dataset"]["synthetic"].is_object()) xmh::merge_config(base, {{"dataset", {{"synthetic", xmh::Json::object()}}}});
      xmh::apply_env_overrides(base, xmh::xmhash_environment());
      xmh::merge_config(base, overrides);
      const auto cfg = xmh::parse_config(base);
      const auto dir = *out_opt ? fs::path(out_dir) : cfg.output / "data";
      for (const auto& p : xmh::write_synthetic(cfg, dir)) std::cout << p.string() << "\n";
      return 0;
    }

    const auto cfg = xmh::load_config(file, xmh::xmhash_environment(), overrides);
    if (graph->parsed()) {
      xmh::stage_graph(cfg);
    } else if (codes->parsed()) {
      xmh::stage_codes(cfg);
    } else if (train->parsed()) {
      xmh::stage_train(cfg);
    } else if (eval->parsed()) {
      if (!query_codes.empty() || !db_codes.empty()) {
        if (query_codes.size() != db_codes.size() || query_labels.empty() || db_labels.empty())
          throw xmh::ConfigError(
              "code evaluation needs --query-codes and --db-codes for the same modalities plus --query-labels and "
              "--db-labels");
        print_results(xmh::evaluate_code_files(query_codes, db_codes, query_labels, db_labels,
                                               cfg.output / "eval", cfg.radius, cfg.threads));
      } else {
        print_results(xmh::stage_eval(cfg));
      }
    } else if (run->parsed()) {
      print_results(xmh::run_pipeline(cfg, force));
    }
  } catch (const xmh::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
