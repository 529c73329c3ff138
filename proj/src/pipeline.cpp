#include "xmhash/pipeline.hpp"

#include "xmhash/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

extern char** environ;

namespace xmh {

namespace fs = std::filesystem;

Json default_config() {
  return Json::parse(R"({
    "dataset": {"features": [], "format": "csv", "labels": null, "normalize": true, "synthetic": null},
    "split": {"query_fraction": 0.1},
    "graph": {"anchors": 500, "k": 3, "k_a": 2, "sigma": "auto", "kmeans_max_iters": 100, "dump": false},
    "codes": {
      "code_length": 16, "alpha": 1.0, "lambda1": 1.0, "lambda2": 1.0,
      "outer_max_iters": 20, "outer_tol": 1e-5, "warm_start": true, "keep_best": true,
      "epm": {"rho0": 0.1, "rho_growth": 1.05, "eta": 0.01, "inner_max_iters": 100, "max_outer_iters": 1000,
              "binary_tol": 1e-4, "inner_tol": 1e-6, "init_scale": 1e-3},
      "al": {"mu0": 0.01, "mu_growth": 2.0, "eps": 1e-3, "max_outer_iters": 40, "inner_max_iters": 500,
             "inner_grad_tol": 1e-6, "feasibility_tol": 1e-3},
      "init": {"max_rounds": 50, "rel_tol": 1e-7}
    },
    "train": {"architecture": "linear", "hidden": [128, 64], "gamma1": 100.0, "gamma2": 100.0, "epochs": 60,
              "batch_size": 64, "learning_rate": 0.03, "momentum": 0.9, "mode": "joint", "pretrain_epochs": 20,
              "include_diagonal": true},
    "eval": {"radius": 2, "top_k": 0},
    "seed": 0,
    "threads": 1,
    "output": "xmhash_out"
  })");
}

namespace {

Json synthetic_defaults() {
  return Json::parse(R"({"n_clusters": 3, "per_cluster": 200, "dims": [16, 24], "spread": 1.0, "elongation": 1.0})");
}

std::string join_path(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

}  // namespace

void merge_config(Json& base, const Json& overlay, const std::string& where) {
  if (!overlay.is_object()) throw ConfigError("configuration " + (where.empty() ? "root" : where) + " must be an object");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const auto path = join_path(where, it.key());
    if (!base.contains(it.key())) throw ConfigError("unknown configuration key '" + path + "'");
    auto& slot = base[it.key()];
    const auto& value = it.value();
    if (path == "dataset.synthetic") {
      if (value.is_null()) {
        slot = nullptr;
        continue;
      }
      Json merged = slot.is_object() ? slot : synthetic_defaults();
      merge_config(merged, value, path);
      slot = merged;
    } else if (path == "dataset.labels") {
      if (!value.is_null() && !value.is_string()) throw ConfigError("'" + path + "' must be a path or null");
      slot = value;
    } else if (path == "graph.sigma") {
      if (!(value.is_string() && value == "auto") && !value.is_number())
        throw ConfigError("'" + path + "' must be \"auto\" or a positive number");
      slot = value;
    } else if (slot.is_object()) {
      merge_config(slot, value, path);
    } else {
      if (!same_kind(slot, value))
        throw ConfigError("'" + path + "' expects " + std::string(slot.type_name()) + ", got " + value.type_name());
      slot = value;
    }
  }
}

std::map<std::string, std::string> xmhash_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    auto key = entry.substr(0, eq);
    if (key.rfind("XMHASH_", 0) == 0) env[key] = entry.substr(eq + 1);
  }
  return env;
}

void apply_env_overrides(Json& config, const std::map<std::string, std::string>& env) {
  for (const auto& [name, text] : env) {
    if (name.rfind("XMHASH_", 0) != 0) continue;
    std::string rest = name.substr(7);
    std::transform(rest.begin(), rest.end(), rest.begin(), [](unsigned char c) { return std::tolower(c); });
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      const auto pos = rest.find("__", start);
      parts.push_back(rest.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 2;
    }
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    Json overlay = value;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) overlay = Json{{*it, overlay}};
    try {
      merge_config(config, overlay);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (from environment variable " + name + ")");
    }
  }
}

void apply_desk_scale(Json& config) { config["graph"]["anchors"] = 32; }

namespace {

template <typename T>
T number(const Json& j, const char* path) {
  if (!j.is_number()) throw ConfigError(std::string("'") + path + "' must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer() && !j.is_number_unsigned())
      throw ConfigError(std::string("'") + path + "' must be an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (j.is_number_integer() && j.get<long long>() < 0)
        throw ConfigError(std::string("'") + path + "' must be non-negative");
    }
  }
  return j.get<T>();
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

PipelineConfig parse_config(const Json& j) {
  PipelineConfig c;
  c.resolved = j;
  const auto& ds = j.at("dataset");
  for (const auto& p : ds.at("features")) {
    require(p.is_string(), "'dataset.features' must list file paths");
    c.dataset.features.push_back(p.get<std::string>());
  }
  try {
    c.dataset.format = parse_feature_format(ds.at("format").get<std::string>());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (ds.at("labels").is_string()) c.dataset.labels = ds.at("labels").get<std::string>();
  c.dataset.normalize = ds.at("normalize").get<bool>();
  if (ds.at("synthetic").is_object()) {
    const auto& s = ds.at("synthetic");
    SynthesisSpec spec;
    spec.n_clusters = number<int>(s.at("n_clusters"), "dataset.synthetic.n_clusters");
    spec.per_cluster = number<int>(s.at("per_cluster"), "dataset.synthetic.per_cluster");
    spec.dims.clear();
    for (const auto& d : s.at("dims")) spec.dims.push_back(number<int>(d, "dataset.synthetic.dims"));
    spec.spread = number<double>(s.at("spread"), "dataset.synthetic.spread");
    spec.elongation = number<double>(s.at("elongation"), "dataset.synthetic.elongation");
    require(spec.n_clusters >= 2, "dataset.synthetic.n_clusters must be >= 2");
    require(spec.per_cluster >= 1, "dataset.synthetic.per_cluster must be >= 1");
    require(!spec.dims.empty(), "dataset.synthetic.dims must list at least one modality");
    for (int d : spec.dims) require(d >= 1, "dataset.synthetic.dims must be positive");
    require(spec.spread > 0.0, "dataset.synthetic.spread must be > 0");
    require(spec.elongation >= 1.0, "dataset.synthetic.elongation must be >= 1");
    c.dataset.synthetic = spec;
  }
  require(c.dataset.synthetic || !c.dataset.features.empty(),
          "dataset needs either 'features' paths or a 'synthetic' section");
  require(!(c.dataset.synthetic && !c.dataset.features.empty()),
          "dataset.features and dataset.synthetic are mutually exclusive");

  c.query_fraction = number<double>(j.at("split").at("query_fraction"), "split.query_fraction");
  require(c.query_fraction > 0.0 && c.query_fraction < 1.0, "split.query_fraction must be in (0, 1)");

  const auto& g = j.at("graph");
  c.anchors = number<Index>(g.at("anchors"), "graph.anchors");
  c.graph.k = number<Index>(g.at("k"), "graph.k");
  c.graph.k_a = number<Index>(g.at("k_a"), "graph.k_a");
  if (g.at("sigma").is_number()) {
    const double s = g.at("sigma").get<double>();
    require(s > 0.0, "graph.sigma must be > 0");
    c.graph.sigma = Bandwidth::fixed(s);
  }
  c.kmeans_max_iters = number<int>(g.at("kmeans_max_iters"), "graph.kmeans_max_iters");
  c.dump_graph = g.at("dump").get<bool>();
  require(c.anchors >= 1, "graph.anchors must be >= 1");
  require(c.graph.k >= 1 && c.graph.k <= c.anchors, "graph.k must be in [1, anchors]");
  require(c.graph.k_a >= 0, "graph.k_a must be >= 0");
  require(c.graph.k_a < c.anchors, "graph.k_a (" + std::to_string(c.graph.k_a) + ") must be smaller than graph.anchors (" +
                                       std::to_string(c.anchors) + ")");
  require(c.kmeans_max_iters >= 1, "graph.kmeans_max_iters must be >= 1");

  const auto& cd = j.at("codes");
  auto& cc = c.codes;
  cc.code_length = number<Index>(cd.at("code_length"), "codes.code_length");
  cc.alpha = number<double>(cd.at("alpha"), "codes.alpha");
  cc.lambda1 = number<double>(cd.at("lambda1"), "codes.lambda1");
  cc.lambda2 = number<double>(cd.at("lambda2"), "codes.lambda2");
  cc.outer_max_iters = number<int>(cd.at("outer_max_iters"), "codes.outer_max_iters");
  cc.outer_tol = number<double>(cd.at("outer_tol"), "codes.outer_tol");
  cc.warm_start_codes = cd.at("warm_start").get<bool>();
  cc.keep_best = cd.at("keep_best").get<bool>();
  const auto& e = cd.at("epm");
  cc.epm.rho0 = number<double>(e.at("rho0"), "codes.epm.rho0");
  cc.epm.rho_growth = number<double>(e.at("rho_growth"), "codes.epm.rho_growth");
  cc.epm.eta = number<double>(e.at("eta"), "codes.epm.eta");
  cc.epm.inner_max_iters = number<int>(e.at("inner_max_iters"), "codes.epm.inner_max_iters");
  cc.epm.max_outer_iters = number<int>(e.at("max_outer_iters"), "codes.epm.max_outer_iters");
  cc.epm.binary_tol = number<double>(e.at("binary_tol"), "codes.epm.binary_tol");
  cc.epm.inner_tol = number<double>(e.at("inner_tol"), "codes.epm.inner_tol");
  cc.epm.init_scale = number<double>(e.at("init_scale"), "codes.epm.init_scale");
  const auto& a = cd.at("al");
  cc.al.mu0 = number<double>(a.at("mu0"), "codes.al.mu0");
  cc.al.mu_growth = number<double>(a.at("mu_growth"), "codes.al.mu_growth");
  cc.al.eps = number<double>(a.at("eps"), "codes.al.eps");
  cc.al.max_outer_iters = number<int>(a.at("max_outer_iters"), "codes.al.max_outer_iters");
  cc.al.inner_max_iters = number<int>(a.at("inner_max_iters"), "codes.al.inner_max_iters");
  cc.al.inner_grad_tol = number<double>(a.at("inner_grad_tol"), "codes.al.inner_grad_tol");
  cc.al.feasibility_tol = number<double>(a.at("feasibility_tol"), "codes.al.feasibility_tol");
  cc.init.max_rounds = number<int>(cd.at("init").at("max_rounds"), "codes.init.max_rounds");
  cc.init.rel_tol = number<double>(cd.at("init").at("rel_tol"), "codes.init.rel_tol");

  const auto& t = j.at("train");
  std::vector<Index> hidden;
  for (const auto& h : t.at("hidden")) hidden.push_back(number<Index>(h, "train.hidden"));
  auto& tc = c.train;
  tc.gamma1 = number<double>(t.at("gamma1"), "train.gamma1");
  tc.gamma2 = number<double>(t.at("gamma2"), "train.gamma2");
  tc.epochs = number<int>(t.at("epochs"), "train.epochs");
  tc.batch_size = number<Index>(t.at("batch_size"), "train.batch_size");
  tc.learning_rate = number<double>(t.at("learning_rate"), "train.learning_rate");
  tc.momentum = number<double>(t.at("momentum"), "train.momentum");
  const auto mode = t.at("mode").get<std::string>();
  require(mode == "joint" || mode == "pretrain", "train.mode must be \"joint\" or \"pretrain\"");
  tc.mode = mode == "joint" ? Stage2Config::Mode::Joint : Stage2Config::Mode::Pretrain;
  tc.pretrain_epochs = number<int>(t.at("pretrain_epochs"), "train.pretrain_epochs");
  tc.include_diagonal = t.at("include_diagonal").get<bool>();

  c.radius = number<int>(j.at("eval").at("radius"), "eval.radius");
  c.top_k = number<Index>(j.at("eval").at("top_k"), "eval.top_k");
  require(c.radius >= 0, "eval.radius must be >= 0");
  require(c.top_k >= 0, "eval.top_k must be >= 0");
  c.seed = number<std::uint64_t>(j.at("seed"), "seed");
  c.threads = number<int>(j.at("threads"), "threads");
  require(c.threads >= 1, "threads must be >= 1");
  c.output = j.at("output").get<std::string>();

  try {
    c.arch = parse_architecture(t.at("architecture").get<std::string>(), hidden);
    cc.seed = c.seed;
    cc.threads = c.threads;
    cc.validate();
    tc.seed = c.seed;
    tc.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& err) {
    throw ConfigError(err.what());
  }
  return c;
}

PipelineConfig load_config(const std::optional<fs::path>& file, const std::map<std::string, std::string>& env,
                           const Json& cli_overrides) {
  Json config = default_config();
  if (file) {
    Json parsed;
    try {
      parsed = Json::parse(io::read_text(*file));
    } catch (const Json::parse_error& e) {
      throw ConfigError("cannot parse " + file->string() + ": " + e.what());
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    merge_config(config, parsed);
  }
  apply_env_overrides(config, env);
  if (!cli_overrides.empty()) merge_config(config, cli_overrides);
  return parse_config(config);
}

// FNV-1a over the canonical (sorted-key) JSON text.
std::string content_hash(const Json& value) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : value.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

StageHashes stage_hashes(const PipelineConfig& c) {
  const auto& j = c.resolved;
  StageHashes h;
  Json graph_in = {{"dataset", j.at("dataset")}, {"split", j.at("split")}, {"seed", j.at("seed")}};
  Json graph_cfg = j.at("graph");
  graph_cfg.erase("dump");
  graph_in["graph"] = graph_cfg;
  h.graph = content_hash(graph_in);
  h.codes = content_hash({{"upstream", h.graph}, {"codes", j.at("codes")}});
  h.train = content_hash({{"upstream", h.codes}, {"train", j.at("train")}});
  h.eval = content_hash({{"upstream", h.train}, {"eval", j.at("eval")}});
  return h;
}

namespace paths {
fs::path graph_dir(const PipelineConfig& c) { return c.output / "graph"; }
fs::path codes_file(const PipelineConfig& c) { return c.output / "codes" / "codes.txt"; }
fs::path relaxed_file(const PipelineConfig& c) { return c.output / "codes" / "relaxed_b.f32"; }
fs::path trace_file(const PipelineConfig& c) { return c.output / "codes" / "objective_trace.csv"; }
fs::path model_file(const PipelineConfig& c, std::size_t m) {
  return c.output / "models" / ("model_" + std::to_string(m) + ".xmhm");
}
fs::path metrics_file(const PipelineConfig& c) { return c.output / "eval" / "metrics.json"; }
fs::path plot_file(const PipelineConfig& c) { return c.output / "eval" / "plot.csv"; }
fs::path manifest_file(const PipelineConfig& c) { return c.output / "manifest.json"; }
}  // namespace paths

namespace {

// Sub-seeds so that every consumer of the global seed draws its own stream.
enum class Stream : std::uint64_t { Synth = 0, Split = 1, Anchors = 2, Codes = 3, Train = 4 };
std::uint64_t sub_seed(std::uint64_t seed, Stream s) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(s) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

MultiModalDataset load_source(const PipelineConfig& c) {
  if (c.dataset.synthetic) {
    auto spec = *c.dataset.synthetic;
    spec.seed = sub_seed(c.seed, Stream::Synth);
    return synthesize_clustered(spec);
  }
  return load_dataset(c.dataset.features, c.dataset.format, c.dataset.labels);
}

Json read_meta(const fs::path& dir, const std::string& stage) {
  const auto file = dir / "meta.json";
  if (!fs::exists(file))
    throw StageError(stage, "missing upstream artifacts in " + dir.string() + ": run " + dir.filename().string() +
                                " first");
  return Json::parse(io::read_text(file));
}

void require_upstream(const fs::path& dir, const std::string& expected_hash, const std::string& upstream,
                      const std::string& stage) {
  const auto meta = read_meta(dir, stage);
  if (meta.value("hash", "") != expected_hash)
    throw StageError(stage, upstream + " artifacts in " + dir.string() +
                                " were produced with a different configuration: run " + upstream + " first");
}

bool up_to_date(const fs::path& dir, const std::string& hash) {
  const auto file = dir / "meta.json";
  if (!fs::exists(file)) return false;
  const auto meta = Json::parse(io::read_text(file), nullptr, false);
  return !meta.is_discarded() && meta.value("hash", "") == hash && meta.value("complete", false);
}

void write_json(const fs::path& file, const Json& j) { io::write_text(file, j.dump(2) + "\n"); }

template <typename Fn>
auto guarded(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

PreparedData prepare_data(const PipelineConfig& c) {
  const auto full = load_source(c);
  const Index n = full.instance_count();
  if (!full.has_labels()) throw Error("dataset has no labels; evaluation needs them");
  const auto n_query = static_cast<Index>(std::llround(c.query_fraction * static_cast<double>(n)));
  if (n_query < 1 || n_query >= n)
    throw ConfigError("split.query_fraction leaves an empty query or database set for N = " + std::to_string(n));
  if (c.anchors > n - n_query)
    throw ConfigError("graph.anchors (" + std::to_string(c.anchors) + ") exceeds the database size (" +
                      std::to_string(n - n_query) + ")");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(sub_seed(c.seed, Stream::Split));
  std::shuffle(order.begin(), order.end(), rng);
  PreparedData p;
  p.query_rows.assign(order.begin(), order.begin() + n_query);
  p.database_rows.assign(order.begin() + n_query, order.end());
  std::sort(p.query_rows.begin(), p.query_rows.end());
  std::sort(p.database_rows.begin(), p.database_rows.end());

  auto db = full.subset(p.database_rows);
  auto q = full.subset(p.query_rows);
  // the normalising scale comes from the database (training) part only
  std::vector<Matrix> qm;
  std::vector<Matrix> dm;
  for (std::size_t m = 0; m < full.modality_count(); ++m) {
    double s = 1.0;
    if (c.dataset.normalize) {
      s = total_std(db.modality(m));
      if (!(s > 0.0)) throw Error("modality " + std::to_string(m) + " has zero total variance");
    }
    p.divisors.push_back(s);
    qm.push_back(q.modality(m) / s);
    dm.push_back(db.modality(m) / s);
  }
  p.query = MultiModalDataset(std::move(qm), q.labels());
  p.database = MultiModalDataset(std::move(dm), db.labels());
  return p;
}

std::vector<fs::path> write_synthetic(const PipelineConfig& c, const fs::path& dir) {
  if (!c.dataset.synthetic) throw ConfigError("synth needs a dataset.synthetic section");
  const auto data = load_source(c);
  std::vector<std::string> files;
  for (std::size_t m = 0; m < data.modality_count(); ++m)
    files.push_back((dir / ("modality_" + std::to_string(m) + ".csv")).string());
  const auto labels = (dir / "labels.txt").string();
  save_dataset(data, files, FeatureFormat::Csv, labels);
  std::vector<fs::path> out(files.begin(), files.end());
  out.emplace_back(labels);
  return out;
}

void stage_graph(const PipelineConfig& c) {
  guarded("graph", [&] {
    const auto hashes = stage_hashes(c);
    const auto data = prepare_data(c);
    const auto anchors =
        learn_joint_anchors(data.database, c.anchors, sub_seed(c.seed, Stream::Anchors), c.kmeans_max_iters);
    const auto graph = build_graph(data.database, anchors, c.graph, c.threads);
    const auto dir = paths::graph_dir(c);
    fs::create_directories(dir);
    fs::remove(dir / "meta.json");
    Json meta = {{"hash", hashes.graph},
                 {"modalities", graph.modalities.size()},
                 {"instances", graph.instance_count()},
                 {"anchors", c.anchors},
                 {"query_rows", data.query_rows},
                 {"database_rows", data.database_rows},
                 {"divisors", data.divisors}};
    Json sigmas = Json::array();
    for (std::size_t m = 0; m < graph.modalities.size(); ++m) {
      const auto& g = graph.modalities[m];
      io::write_raw_f64(dir / ("zhat_" + std::to_string(m) + ".xmsd"), g.z_hat);
      sigmas.push_back({{"data", g.sigma_data}, {"anchor", g.sigma_anchor}});
      if (c.dump_graph) {
        const auto tag = std::to_string(m);
        io::write_raw_f32(dir / ("z_" + tag + ".f32"), g.z);
        io::write_raw_f32(dir / ("s_" + tag + ".f32"), g.s);
        io::write_raw_f32(dir / ("a_" + tag + ".f32"), g.a);
        io::write_raw_f32(dir / ("lap_" + tag + ".f32"), g.lap.dense());
      }
    }
    meta["sigma"] = sigmas;
    meta["complete"] = true;
    write_json(dir / "meta.json", meta);
    return 0;
  });
}

namespace {

std::vector<Laplacian> load_laplacians(const PipelineConfig& c, const Json& meta) {
  std::vector<Laplacian> laps;
  const auto count = meta.at("modalities").get<std::size_t>();
  for (std::size_t m = 0; m < count; ++m)
    laps.push_back(Laplacian::from_expanded_affinity(
        io::read_raw_f64(paths::graph_dir(c) / ("zhat_" + std::to_string(m) + ".xmsd"))));
  return laps;
}

void write_trace(const fs::path& file, const BinaryCodes& codes) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,J_total";
  const std::size_t m = codes.trace.empty() ? 0 : codes.trace.front().per_modality.size();
  for (std::size_t i = 0; i < m; ++i) out << ",J_" << i;
  out << ",surrogate,epm_iterations,al_residual\n";
  for (const auto& r : codes.trace) {
    out << r.iteration << ',' << r.total;
    for (double v : r.per_modality) out << ',' << v;
    out << ',' << r.surrogate << ',' << r.epm_iterations << ',' << r.al_residual << '\n';
  }
  io::write_text(file, out.str());
}

}  // namespace

void stage_codes(const PipelineConfig& c) {
  guarded("codes", [&] {
    const auto hashes = stage_hashes(c);
    require_upstream(paths::graph_dir(c), hashes.graph, "graph", "codes");
    const auto gmeta = read_meta(paths::graph_dir(c), "codes");
    const auto laps = load_laplacians(c, gmeta);
    auto cfg = c.codes;
    cfg.seed = sub_seed(c.seed, Stream::Codes);
    const auto res = run_joint_codes(laps, cfg);
    const auto dir = paths::codes_file(c).parent_path();
    fs::create_directories(dir);
    fs::remove(dir / "meta.json");
    io::write_codes(paths::codes_file(c), res.codes.b);
    io::write_raw_f32(paths::relaxed_file(c), res.codes.relaxed);
    write_trace(paths::trace_file(c), res.codes);
    const auto& b = res.codes.b;
    const auto n = static_cast<double>(b.rows());
    Json meta = {{"hash", hashes.codes},
                 {"upstream", hashes.graph},
                 {"instances", b.rows()},
                 {"code_length", b.cols()},
                 {"outer_iterations", res.codes.trace.size()},
                 {"epm_iterations", res.codes.epm_iterations},
                 {"al_iterations", res.codes.al_iterations},
                 {"warning", res.codes.warning},
                 {"balance_max", b.colwise().sum().cwiseAbs().maxCoeff()},
                 {"independence_residual",
                  (b.transpose() * b - n * Matrix::Identity(b.cols(), b.cols())).norm() /
                      (n * std::sqrt(static_cast<double>(b.cols())))},
                 {"complete", true}};
    write_json(dir / "meta.json", meta);
    return 0;
  });
}

void stage_train(const PipelineConfig& c) {
  guarded("train", [&] {
    const auto hashes = stage_hashes(c);
    require_upstream(paths::codes_file(c).parent_path(), hashes.codes, "codes", "train");
    const auto b = io::read_codes(paths::codes_file(c));
    const auto data = prepare_data(c);
    auto cfg = c.train;
    cfg.seed = sub_seed(c.seed, Stream::Train);
    const auto res = train_hash_models(data.database, b, c.arch, cfg);
    const auto dir = paths::model_file(c, 0).parent_path();
    fs::create_directories(dir);
    fs::remove(dir / "meta.json");
    for (std::size_t m = 0; m < res.models.size(); ++m) res.models[m].save(paths::model_file(c, m));
    std::ostringstream curve;
    curve.precision(17);
    curve << "phase,epoch,loss\n";
    for (std::size_t e = 0; e < res.pretrain_curve.size(); ++e)
      curve << "pretrain," << e + 1 << ',' << res.pretrain_curve[e] << '\n';
    for (std::size_t e = 0; e < res.loss_curve.size(); ++e) curve << "joint," << e + 1 << ',' << res.loss_curve[e] << '\n';
    io::write_text(dir / "loss.csv", curve.str());
    Json meta = {{"hash", hashes.train},
                 {"upstream", hashes.codes},
                 {"modalities", res.models.size()},
                 {"architecture", c.arch.name()},
                 {"complete", true}};
    write_json(dir / "meta.json", meta);
    return 0;
  });
}

Json metrics_json(const std::vector<RetrievalResult>& results) {
  Json arr = Json::array();
  for (const auto& r : results)
    arr.push_back({{"task", r.task},
                   {"query_modality", r.query_modality},
                   {"database_modality", r.database_modality},
                   {"map", r.map},
                   {"prec_at_r2", r.prec_at_r2},
                   {"num_queries", r.num_queries},
                   {"skipped_queries", r.skipped_queries},
                   {"baseline_map", r.baseline_map}});
  return arr;
}

namespace {

void write_metrics(const fs::path& dir, const std::vector<RetrievalResult>& results, Index code_length) {
  fs::create_directories(dir);
  write_json(dir / "metrics.json", metrics_json(results));
  std::ostringstream plot;
  plot.precision(17);
  plot << "code_length,task,map,prec_at_r2\n";
  for (const auto& r : results) plot << code_length << ',' << r.task << ',' << r.map << ',' << r.prec_at_r2 << '\n';
  io::write_text(dir / "plot.csv", plot.str());
}

std::vector<RetrievalResult> evaluate_with_radius(const std::vector<CodeMatrix>& qc,
                                                  const std::vector<CodeMatrix>& dc, const io::LabelSets& ql,
                                                  const io::LabelSets& dl, int radius, Index top_k, int threads) {
  auto results = evaluate_codes(qc, dc, ql, dl, threads);
  if (radius != 2 || top_k != 0) {
    const auto rel = relevance_from_labels(ql, dl);
    for (auto& r : results) {
      const auto d = hamming_distances(qc[r.query_modality], dc[r.database_modality], threads);
      r.prec_at_r2 = precision_at_radius(d, rel, radius);
      if (top_k != 0) {
        const auto s = mean_average_precision(d, rel, top_k);
        r.map = s.map;
        r.per_query_ap = s.per_query_ap;
        r.skipped_queries = s.skipped;
      }
    }
  }
  return results;
}

}  // namespace

std::vector<RetrievalResult> stage_eval(const PipelineConfig& c) {
  return guarded("eval", [&] {
    const auto hashes = stage_hashes(c);
    const auto model_dir = paths::model_file(c, 0).parent_path();
    require_upstream(model_dir, hashes.train, "train", "eval");
    const auto tmeta = read_meta(model_dir, "eval");
    const auto data = prepare_data(c);
    std::vector<HashModel> models;
    for (std::size_t m = 0; m < tmeta.at("modalities").get<std::size_t>(); ++m)
      models.push_back(HashModel::load(paths::model_file(c, m)));
    if (models.size() != data.query.modality_count()) throw Error("model count does not match the dataset");
    std::vector<CodeMatrix> qc;
    std::vector<CodeMatrix> dc;
    const auto dir = paths::metrics_file(c).parent_path();
    fs::create_directories(dir);
    fs::remove(dir / "meta.json");
    for (std::size_t m = 0; m < models.size(); ++m) {
      qc.push_back(encode(models[m], data.query.modality(m)));
      dc.push_back(encode(models[m], data.database.modality(m)));
      io::write_codes(dir / ("query_codes_" + std::to_string(m) + ".txt"), qc.back());
      io::write_codes(dir / ("database_codes_" + std::to_string(m) + ".txt"), dc.back());
    }
    auto results = evaluate_with_radius(qc, dc, data.query.labels(), data.database.labels(), c.radius, c.top_k,
                                        c.threads);
    write_metrics(dir, results, models.front().output_dim());
    write_json(dir / "meta.json", {{"hash", hashes.eval}, {"upstream", hashes.train}, {"complete", true}});
    return results;
  });
}

std::vector<RetrievalResult> evaluate_code_files(const std::vector<std::string>& query_codes,
                                                 const std::vector<std::string>& database_codes,
                                                 const std::string& query_labels, const std::string& database_labels,
                                                 const fs::path& out_dir, int radius, int threads) {
  return guarded("eval", [&] {
    std::vector<CodeMatrix> qc;
    std::vector<CodeMatrix> dc;
    for (const auto& f : query_codes) qc.push_back(io::read_codes(f));
    for (const auto& f : database_codes) dc.push_back(io::read_codes(f));
    auto results = evaluate_with_radius(qc, dc, io::read_labels(query_labels), io::read_labels(database_labels),
                                        radius, 0, threads);
    write_metrics(out_dir, results, qc.empty() ? 0 : qc.front().cols());
    return results;
  });
}

std::vector<RetrievalResult> run_pipeline(const PipelineConfig& c, bool force) {
  const auto h = stage_hashes(c);
  fs::create_directories(c.output);
  if (force || !up_to_date(paths::graph_dir(c), h.graph)) stage_graph(c);
  if (force || !up_to_date(paths::codes_file(c).parent_path(), h.codes)) stage_codes(c);
  if (force || !up_to_date(paths::model_file(c, 0).parent_path(), h.train)) stage_train(c);
  auto results = stage_eval(c);
  Json manifest = {{"version", kVersion},
                   {"seed", c.seed},
                   {"threads", c.threads},
                   {"config", c.resolved},
                   {"stages", {{"graph", h.graph}, {"codes", h.codes}, {"train", h.train}, {"eval", h.eval}}},
                   {"artifacts",
                    {{"codes", paths::codes_file(c).lexically_relative(c.output).string()},
                     {"relaxed_codes", paths::relaxed_file(c).lexically_relative(c.output).string()},
                     {"objective_trace", paths::trace_file(c).lexically_relative(c.output).string()},
                     {"metrics", paths::metrics_file(c).lexically_relative(c.output).string()},
                     {"plot", paths::plot_file(c).lexically_relative(c.output).string()}}}};
  Json models = Json::array();
  for (std::size_t m = 0; fs::exists(paths::model_file(c, m)); ++m)
    models.push_back(paths::model_file(c, m).lexically_relative(c.output).string());
  manifest["artifacts"]["models"] = models;
  write_json(paths::manifest_file(c), manifest);
  return results;
}

}  // namespace xmh
