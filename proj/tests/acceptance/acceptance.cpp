// Acceptance suite: one PASS/FAIL line per criterion, plus INFO diagnostics.
#include "xmhash/anchor_graph.hpp"
#include "xmhash/binary_update.hpp"
#include "xmhash/embedding_update.hpp"
#include "xmhash/hash_model.hpp"
#include "xmhash/joint_codes.hpp"
#include "xmhash/pipeline.hpp"
#include "xmhash/spectral.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

using namespace xmh;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void report(int id, const std::string& name, bool ok, const std::string& detail, double secs) {
  std::printf("[%s] %2d %s: %s (%.1f s)\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++failures;
}

void info(const std::string& text) {
  std::printf("[INFO]    %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

Matrix random_binary(Index r, Index c, std::mt19937_64& rng) {
  std::bernoulli_distribution b(0.5);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = b(rng) ? 1.0 : -1.0;
  return m;
}

Matrix random_orthogonal(Index n, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(n, n, rng));
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < n; ++i)
    if (r(i, i) < 0) q.col(i) *= -1.0;
  return q;
}

Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix p = x;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) {
      const double keep = p(i, j);
      p(i, j) = keep + h;
      const double up = f(p);
      p(i, j) = keep - h;
      const double down = f(p);
      p(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * h);
    }
  return g;
}

double rel_err(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-12); }

std::vector<Laplacian> synthetic_laplacians(std::uint64_t seed, int per_cluster, Index anchors, int modalities = 2) {
  SynthesisSpec spec;
  spec.per_cluster = per_cluster;
  spec.spread = 0.8;
  spec.dims.assign(static_cast<std::size_t>(modalities), 6);
  spec.seed = seed;
  const auto d = unit_variance_normalize(synthesize_clustered(spec));
  return build_graph(d, learn_joint_anchors(d, anchors, seed), GraphParams{}).laplacians();
}

// ---------------------------------------------------------------------------

void criterion_graph() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> n_dist(50, 500), m_dist(1, 3), dim_dist(2, 20), c_dist(2, 5);
  std::uniform_real_distribution<double> spread_dist(0.2, 2.0);
  double worst_row = 0.0, worst_sym = 0.0, worst_eig = 0.0, worst_lap1 = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    SynthesisSpec spec;
    spec.n_clusters = c_dist(rng);
    spec.per_cluster = std::max(1, n_dist(rng) / spec.n_clusters);
    spec.dims.clear();
    for (int m = m_dist(rng); m > 0; --m) spec.dims.push_back(dim_dist(rng));
    spec.spread = spread_dist(rng);
    spec.seed = rng();
    const auto d = unit_variance_normalize(synthesize_clustered(spec));
    const Index n = d.instance_count();
    const Index p = std::uniform_int_distribution<Index>(10, std::min<Index>(60, n))(rng);
    const auto g = build_graph(d, learn_joint_anchors(d, p, spec.seed), GraphParams{});
    for (const auto& mg : g.modalities) {
      const Vector ones = Vector::Ones(n);
      worst_row = std::max(worst_row, (mg.a * ones - ones).cwiseAbs().maxCoeff());
      worst_sym = std::max(worst_sym, (mg.a - mg.a.transpose()).cwiseAbs().maxCoeff());
      worst_lap1 = std::max(worst_lap1, (mg.lap.dense() * ones).cwiseAbs().maxCoeff());
      Eigen::SelfAdjointEigenSolver<Matrix> es(mg.lap.dense(), Eigen::EigenvaluesOnly);
      worst_eig = std::min(worst_eig, es.eigenvalues()(0));
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_row < 1e-8 && worst_sym < 1e-8 && worst_lap1 < 1e-8 && worst_eig >= -1e-8 && secs < 30.0;
  char buf[256];
  std::snprintf(buf, sizeof buf, "max|A1-1|=%.1e max|A-At|=%.1e max|Lap1|=%.1e min eig=%.1e over 50 datasets", worst_row,
                worst_sym, worst_lap1, worst_eig);
  report(1, "graph invariants", ok, buf, secs);
}

void criterion_procrustes() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<Index> l_dist(1, 8);
  double worst = 0.0;
  int dominated = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Index l = l_dist(rng);
    const Matrix m = random_matrix(l, l, rng);
    const Matrix r = procrustes(m);
    const double best = (m * r).trace();
    Eigen::JacobiSVD<Matrix> svd(m);
    worst = std::max(worst, std::abs(best - svd.singularValues().sum()));
    for (int probe = 0; probe < 100; ++probe)
      if ((m * random_orthogonal(l, rng)).trace() > best + 1e-12) ++dominated;
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "max|Tr(MR)-sum sigma|=%.1e, probes beating R: %d of 20000", worst, dominated);
  report(2, "procrustes optimality", worst < 1e-8 && dominated == 0 && secs < 5.0, buf, secs);
}

void criterion_init() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  bool monotone = true;
  bool bounded = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int modalities = 2 + trial % 2;
    const Index l = 2 + trial % 7;
    const auto laps = synthetic_laplacians(rng(), 20 + trial % 4 * 10, 15, modalities);
    const auto init = init_embeddings(laps, l);
    const auto& obj = init.rotations.update_objectives;
    double prev = init.rotations.round_objectives.front();
    for (double v : obj) {
      if (v < prev - 1e-9 * std::max(1.0, std::abs(prev))) monotone = false;
      prev = v;
    }
    const double n = static_cast<double>(laps[0].size());
    const double bound = modalities * (modalities - 1.0) * n * static_cast<double>(l);
    if (init.rotations.alignment_objective > bound * (1.0 + 1e-12)) bounded = false;
  }
  double worst_ratio = 1e300;
  for (int trial = 0; trial < 5; ++trial) {
    const auto laps = synthetic_laplacians(rng(), 30, 15, 1);
    const Index l = 4 + trial;
    const auto init = init_embeddings({laps[0], laps[0]}, l);
    const double n = static_cast<double>(laps[0].size());
    const double corr = (init.embeddings[0].y.transpose() * init.embeddings[1].y).trace();
    worst_ratio = std::min(worst_ratio, corr / (n * static_cast<double>(l)));
  }
  const double secs = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "monotone=%s bounded=%s on 20 cases; duplicated min Tr(Y1'Y2)/(NL)=%.6f", monotone ? "yes" : "no",
                bounded ? "yes" : "no", worst_ratio);
  report(3, "initialization alignment", monotone && bounded && worst_ratio >= 0.999, buf, secs);
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  double worst_q = 0.0, worst_al = 0.0, worst_lin = 0.0, worst_mlp = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 4 + trial % 5;
    const Index l = 1 + trial % 4;
    const Matrix b = random_matrix(n, l, rng, 0.6);
    const std::vector<Matrix> ys{random_matrix(n, l, rng), random_matrix(n, l, rng)};
    const Matrix v = random_matrix(n, l, rng);
    auto q = [&](const Matrix& x) { return epm_surrogate(x, ys, 1.0, 1.0, 0.3, v); };
    worst_q = std::max(worst_q, rel_err(grad_q(b, ys, 1.0, 1.0, 0.3, v), numeric_gradient(q, b)));

    Matrix a = random_matrix(n, n, rng);
    const Laplacian lap(Matrix(a * a.transpose()));
    const Matrix y = random_matrix(n, l, rng);
    const Matrix bin = random_binary(n, l, rng);
    const Matrix gamma = random_matrix(l, l, rng);
    auto al = [&](const Matrix& x) { return al_function(lap, bin, 1.0, x, gamma, 0.1); };
    worst_al = std::max(worst_al, rel_err(al_gradient(lap, bin, 1.0, y, gamma, 0.1), numeric_gradient(al, y)));

    for (bool mlp : {false, true}) {
      const Architecture arch = mlp ? Architecture::mlp({5, 4}) : Architecture::linear();
      std::vector<HashModel> models{HashModel(arch, 3, l, rng()), HashModel(arch, 4, l, rng())};
      const std::vector<Matrix> xs{random_matrix(6, 3, rng), random_matrix(6, 4, rng)};
      const Matrix codes = random_binary(6, l, rng);
      for (std::size_t m = 0; m < 2; ++m) {
        auto loss = [&](const Matrix& theta) {
          auto probe = models;
          probe[m].set_parameters(theta);
          return stage2_loss({probe[0].forward(xs[0]), probe[1].forward(xs[1])}, codes, 1.0, 1.0);
        };
        const auto grads =
            stage2_output_gradients({models[0].forward(xs[0]), models[1].forward(xs[1])}, codes, 1.0, 1.0);
        const Matrix analytic = models[m].backprop(xs[m], grads[m]);
        const double e = rel_err(analytic, numeric_gradient(loss, Matrix(models[m].parameters())));
        (mlp ? worst_mlp : worst_lin) = std::max(mlp ? worst_mlp : worst_lin, e);
      }
    }
  }
  const double secs = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "max rel err: grad_Q %.1e, grad_Y L_AL %.1e, linear backprop %.1e, mlp backprop %.1e",
                worst_q, worst_al, worst_lin, worst_mlp);
  report(4, "gradient oracles", worst_q < 1e-4 && worst_al < 1e-4 && worst_lin < 1e-4 && worst_mlp < 1e-3, buf,
         secs);
}

void criterion_epm() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(505);
  bool all_binary = true;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = std::uniform_int_distribution<Index>(2, 64)(rng);
    const Index l = std::uniform_int_distribution<Index>(1, 8)(rng);
    EpmConfig cfg;
    cfg.seed = rng();
    const auto res = update_b_epm({random_matrix(n, l, rng), random_matrix(n, l, rng)}, cfg, 1.0, 1.0);
    if (!is_binary(res.codes) || res.codes.cwiseAbs().maxCoeff() != 1.0) all_binary = false;
  }
  const std::vector<std::pair<Index, Index>> shapes{{4, 2}, {6, 2}, {4, 3}, {3, 4}, {12, 1}, {6, 1}, {2, 6}, {3, 3}};
  int total = 0, top5 = 0, optimal = 0;
  for (int trial = 0; trial < 48; ++trial) {
    const auto [n, l] = shapes[static_cast<std::size_t>(trial) % shapes.size()];
    const std::vector<Matrix> ys{random_matrix(n, l, rng, 1.5), random_matrix(n, l, rng, 1.5)};
    const int bits = static_cast<int>(n * l);
    std::vector<double> all;
    for (long mask = 0; mask < (1L << bits); ++mask) {
      Matrix b(n, l);
      for (int e = 0; e < bits; ++e) b(e / l, e % l) = (mask >> e) & 1 ? 1.0 : -1.0;
      all.push_back(penalized_code_loss(b, ys, 1.0, 1.0));
    }
    EpmConfig cfg;
    cfg.seed = rng();
    const double got = penalized_code_loss(update_b_epm(ys, cfg, 1.0, 1.0).codes, ys, 1.0, 1.0);
    const auto better = std::count_if(all.begin(), all.end(), [&](double v) { return v < got - 1e-9; });
    ++total;
    if (static_cast<double>(better) <= 0.05 * static_cast<double>(all.size())) ++top5;
    if (better == 0) ++optimal;
  }
  const double secs = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "binary on 50/50=%s; exhaustive: top-5%% %d/%d, global optimum %d/%d (%.0f%%)",
                all_binary ? "yes" : "no", top5, total, optimal, total, 100.0 * optimal / total);
  report(5, "EPM exactness", all_binary && top5 == total && optimal >= 0.8 * total && secs < 60.0, buf, secs);
}

void criterion_al() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(606);
  double worst_feas = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const auto laps = synthetic_laplacians(rng(), 15 + trial % 5 * 5, 12, 1);
    const Index n = laps[0].size();
    const Index l = 2 + trial % 5;
    const auto res = update_y_al(laps[0], random_binary(n, l, rng), 1.0, random_matrix(n, l, rng));
    worst_feas = std::max(worst_feas, res.residual / static_cast<double>(n));
  }
  double worst_oracle = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto laps = synthetic_laplacians(rng(), 20, 12, 1);
    const Index n = laps[0].size();
    const Index l = 2 + trial % 4;
    const auto pairs = smallest_positive_eigenpairs(laps[0].dense(), l);
    const double oracle = static_cast<double>(n) * pairs.values.sum();
    const Matrix y0 = init_embeddings({laps[0]}, l).embeddings[0].y;
    const auto res = update_y_al(laps[0], random_binary(n, l, rng), 0.0, y0);
    worst_oracle = std::max(worst_oracle, std::abs(res.objective - oracle) / std::abs(oracle));
  }
  const double secs = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "max ||Y'Y-NI||/N=%.1e on 30 instances; alpha=0 max rel gap to N*sum(lambda)=%.1e",
                worst_feas, worst_oracle);
  report(6, "AL feasibility", worst_feas <= 1e-3 && worst_oracle <= 1e-3, buf, secs);
}

// ---------------------------------------------------------------------------

Json fixture_config(const fs::path& out, std::uint64_t seed) {
  Json c = default_config();
  merge_config(c, Json::parse(io::read_text(fs::path(XMHASH_SOURCE_DIR) / "configs" / "synthetic.json")));
  apply_desk_scale(c);
  merge_config(c, Json{{"seed", seed}, {"output", out.string()}});
  return c;
}

struct RunSummary {
  std::vector<RetrievalResult> results;
  double mean_map = 0.0;
  double seconds = 0.0;
};

RunSummary run(const Json& config) {
  const auto t0 = Clock::now();
  RunSummary s;
  s.results = run_pipeline(parse_config(config), true);
  for (const auto& r : s.results) s.mean_map += r.map / static_cast<double>(s.results.size());
  s.seconds = seconds_since(t0);
  return s;
}

std::string describe(const RunSummary& s) {
  std::string out;
  for (const auto& r : s.results) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s map=%.3f (base %.3f) ", r.task.c_str(), r.map, r.baseline_map);
    out += buf;
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("xmhash_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

void criterion_end_to_end() {
  const auto t0 = Clock::now();
  const auto s = run(fixture_config(scratch("e2e"), 7));
  bool ok = s.seconds < 120.0;
  for (const auto& r : s.results) ok = ok && r.map >= 0.85 && r.map >= 2.0 * r.baseline_map;
  report(7, "end-to-end retrieval (N=600, L=16, linear)", ok, describe(s) + fmt("run %.1f s", s.seconds),
         seconds_since(t0));

  Json small = fixture_config(scratch("e2e_small"), 7);
  merge_config(small, Json{{"dataset", {{"synthetic", {{"per_cluster", 34}}}}}});
  info("N=100 check of the same pipeline: " + describe(run(small)));
  Json no_penalty = fixture_config(scratch("e2e_nopen"), 7);
  merge_config(no_penalty, Json{{"codes", {{"lambda1", 0.0}, {"lambda2", 0.0}}}});
  info("diagnostic, lambda1=lambda2=0 (not counted): " + describe(run(no_penalty)));
  Json no_gamma = fixture_config(scratch("e2e_nogamma"), 7);
  merge_config(no_gamma, Json{{"train", {{"gamma1", 0.0}, {"gamma2", 0.0}}}});
  info("diagnostic, gamma1=gamma2=0 (not counted): " + describe(run(no_gamma)));
}

void criterion_anchor_ablation() {
  const auto t0 = Clock::now();
  double with = 0.0, without = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (int k_a : {0, 2}) {
      Json c = fixture_config(scratch("ablation"), seed);
      merge_config(c, Json{{"dataset", {{"synthetic", {{"elongation", 3.0}}}}}, {"graph", {{"k_a", k_a}}}});
      (k_a == 2 ? with : without) += run(c).mean_map / 5.0;
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "mean mAP over 5 seeds: k_a=2 %.4f vs k_a=0 %.4f", with, without);
  report(8, "anchor-to-anchor ablation direction", with >= without, buf, seconds_since(t0));
}

void criterion_alpha() {
  const auto t0 = Clock::now();
  const std::vector<double> grid{0.1, 1.0, 10.0};
  std::vector<double> means(grid.size(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Json c = fixture_config(scratch("alpha"), seed);
      merge_config(c, Json{{"codes", {{"alpha", grid[i]}}}});
      means[i] += run(c).mean_map / 5.0;
    }
  const auto best = static_cast<std::size_t>(std::max_element(means.begin(), means.end()) - means.begin());
  char buf[160];
  std::snprintf(buf, sizeof buf, "mean mAP alpha=0.1 %.4f, alpha=1 %.4f, alpha=10 %.4f; argmax alpha=%g", means[0],
                means[1], means[2], grid[best]);
  // grid index 1 is alpha = 1; one grid step either side is allowed
  report(9, "alpha sensitivity direction", std::abs(static_cast<int>(best) - 1) <= 1, buf, seconds_since(t0));
}

void criterion_determinism() {
  const auto t0 = Clock::now();
  Json base = fixture_config(scratch("det_a"), 11);
  merge_config(base, Json{{"dataset", {{"synthetic", {{"per_cluster", 50}}}}}});
  Json other = base;
  other["output"] = scratch("det_b").string();
  const auto ca = parse_config(base);
  const auto cb = parse_config(other);
  run_pipeline(ca, true);
  run_pipeline(cb, true);
  const bool codes = io::read_text(paths::codes_file(ca)) == io::read_text(paths::codes_file(cb));
  const bool metrics = io::read_text(paths::metrics_file(ca)) == io::read_text(paths::metrics_file(cb));
  bool eval_codes = true;
  for (const auto& entry : fs::directory_iterator(paths::metrics_file(ca).parent_path()))
    if (entry.path().extension() == ".txt")
      eval_codes = eval_codes && io::read_text(entry.path()) ==
                                     io::read_text(paths::metrics_file(cb).parent_path() / entry.path().filename());
  char buf[128];
  std::snprintf(buf, sizeof buf, "codes identical=%s, encoded code files identical=%s, metrics JSON identical=%s",
                codes ? "yes" : "no", eval_codes ? "yes" : "no", metrics ? "yes" : "no");
  report(10, "determinism", codes && metrics && eval_codes, buf, seconds_since(t0));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const std::vector<std::function<void()>> criteria{criterion_graph,       criterion_procrustes, criterion_init,
                                                    criterion_gradients,   criterion_epm,        criterion_al,
                                                    criterion_end_to_end,  criterion_anchor_ablation,
                                                    criterion_alpha,       criterion_determinism};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), "criterion", false, std::string("threw: ") + e.what(), 0.0);
    }
  }
  std::printf("%d of %zu criteria failed (%.1f s total)\n", failures, criteria.size(), seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
