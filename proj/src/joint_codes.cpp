#include "xmhash/joint_codes.hpp"

#include "xmhash/parallel.hpp"

#include <cmath>

namespace xmh {

void JointCodeConfig::validate() const {
  if (code_length < 1) throw Error("code length must be >= 1");
  if (!(alpha > 0.0)) throw Error("alpha must be > 0");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw Error("lambda1 and lambda2 must be >= 0");
  if (outer_max_iters < 1) throw Error("outer_max_iters must be >= 1");
  epm.validate();
  al.validate();
}

double total_objective(const CodeMatrix& b, const std::vector<Matrix>& ys, const std::vector<Laplacian>& laps,
                       double alpha) {
  double total = 0.0;
  for (std::size_t m = 0; m < ys.size(); ++m) total += objective_j(b, ys[m], laps[m], alpha);
  return total;
}

namespace {

double code_penalties(const CodeMatrix& b, double lambda1, double lambda2) {
  const auto n = static_cast<double>(b.rows());
  const Matrix gram = b.transpose() * b - n * Matrix::Identity(b.cols(), b.cols());
  return 0.25 * lambda1 * gram.squaredNorm() + 0.5 * lambda2 * b.colwise().sum().squaredNorm();
}

}  // namespace

JointCodeResult run_joint_codes(const std::vector<Laplacian>& laps, const JointCodeConfig& config) {
  config.validate();
  if (laps.empty()) throw Error("joint codes: no modalities");
  const Index n = laps.front().size();
  const Index l = config.code_length;
  const std::size_t modalities = laps.size();

  JointCodeResult res;
  InitConfig init_cfg = config.init;
  init_cfg.threads = config.threads;
  res.init = init_embeddings(laps, l, init_cfg);
  std::vector<Matrix> ys;
  for (const auto& e : res.init.embeddings) ys.push_back(e.y);

  auto& codes = res.codes;
  Matrix relaxed;
  CodeMatrix b;
  double prev_total = 0.0;
  const double tol = config.outer_tol * static_cast<double>(n * l);

  for (int it = 0; it < config.outer_max_iters; ++it) {
    EpmConfig epm = config.epm;
    epm.seed = config.seed + static_cast<std::uint64_t>(it);
    const bool warm = config.warm_start_codes && relaxed.size() > 0;
    auto bin = update_b_epm(ys, epm, config.lambda1, config.lambda2, warm ? &relaxed : nullptr);
    codes.epm_iterations += bin.outer_iterations;
    if (!bin.converged) codes.warning = true;
    if (config.keep_best && b.size() > 0 &&
        penalized_code_loss(bin.codes, ys, config.lambda1, config.lambda2) >
            penalized_code_loss(b, ys, config.lambda1, config.lambda2)) {
      // the previous codes remain the better binary point for the current embeddings
    } else {
      b = std::move(bin.codes);
      relaxed = std::move(bin.relaxed);
    }

    std::vector<AlResult> updates(modalities);
    parallel_for(modalities, config.threads,
                 [&](std::size_t m) { updates[m] = update_y_al(laps[m], b, config.alpha, ys[m], config.al); });
    double worst_residual = 0.0;
    for (std::size_t m = 0; m < modalities; ++m) {
      codes.al_iterations += updates[m].outer_iterations;
      if (!updates[m].converged) codes.warning = true;
      const bool better = updates[m].objective <= objective_j(b, ys[m], laps[m], config.alpha);
      if (!config.keep_best || better) ys[m] = std::move(updates[m].y);
      worst_residual = std::max(worst_residual, orthogonality_residual(ys[m]));
    }

    TraceRow row;
    row.iteration = it + 1;
    for (std::size_t m = 0; m < modalities; ++m) row.per_modality.push_back(objective_j(b, ys[m], laps[m], config.alpha));
    for (double v : row.per_modality) row.total += v;
    row.surrogate = row.total + config.alpha * code_penalties(b, config.lambda1, config.lambda2);
    row.epm_iterations = bin.outer_iterations;
    row.al_residual = worst_residual;
    codes.trace.push_back(row);

    if (it > 0 && std::abs(row.total - prev_total) < tol) break;
    prev_total = row.total;
  }

  codes.b = std::move(b);
  codes.relaxed = std::move(relaxed);
  res.embeddings = std::move(ys);
  return res;
}

}  // namespace xmh
