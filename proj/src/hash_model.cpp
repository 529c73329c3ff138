#include "xmhash/hash_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace xmh {

Architecture parse_architecture(const std::string& name, const std::vector<Index>& hidden) {
  if (name == "linear") return Architecture::linear();
  if (name == "mlp") {
    if (hidden.empty()) throw Error("mlp architecture needs at least one hidden layer");
    for (auto h : hidden)
      if (h < 1) throw Error("hidden layer sizes must be positive");
    return Architecture::mlp(hidden);
  }
  throw Error("unknown architecture '" + name + "' (expected linear or mlp)");
}

HashModel::HashModel(const Architecture& arch, Index input_dim, Index code_length, std::uint64_t seed)
    : arch_(arch) {
  if (input_dim < 1 || code_length < 1) throw Error("hash model: dimensions must be positive");
  in_mean_ = Vector::Zero(input_dim);
  in_scale_ = Vector::Ones(input_dim);
  std::vector<Index> dims{input_dim};
  if (arch.kind == Architecture::Kind::Mlp) dims.insert(dims.end(), arch.hidden.begin(), arch.hidden.end());
  dims.push_back(code_length);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer layer{Matrix(dims[i + 1], dims[i]), Vector(dims[i + 1])};
    for (Index r = 0; r < layer.w.rows(); ++r)
      for (Index c = 0; c < layer.w.cols(); ++c) layer.w(r, c) = u(rng);
    for (Index r = 0; r < layer.b.size(); ++r) layer.b(r) = u(rng);
    layers_.push_back(std::move(layer));
  }
}

void HashModel::fit_input_scaling(const Matrix& features) {
  check_input(features);
  const auto n = static_cast<double>(features.rows());
  in_mean_ = features.colwise().mean().transpose();
  in_scale_.resize(features.cols());
  for (Index j = 0; j < features.cols(); ++j) {
    const double var = (features.col(j).array() - in_mean_(j)).square().sum() / n;
    in_scale_(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
}

void HashModel::check_input(const Matrix& features) const {
  if (features.cols() != input_dim())
    throw Error("hash model: expected " + std::to_string(input_dim()) + " input features, got " +
                std::to_string(features.cols()));
}

Matrix HashModel::standardise(const Matrix& features) const {
  check_input(features);
  return (features.rowwise() - in_mean_.transpose()).array().rowwise() / in_scale_.transpose().array();
}

Matrix HashModel::forward(const Matrix& features) const {
  Matrix h = standardise(features);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = (h * layers_[i].w.transpose()).rowwise() + layers_[i].b.transpose();
    if (i + 1 < layers_.size()) h = h.cwiseMax(0.0);
  }
  return h;
}

Index HashModel::parameter_count() const {
  Index count = 0;
  for (const auto& l : layers_) count += l.w.size() + l.b.size();
  return count;
}

// Parameter order: per layer, W row-major then b.
Vector HashModel::parameters() const {
  Vector theta(parameter_count());
  Index k = 0;
  for (const auto& l : layers_) {
    for (Index r = 0; r < l.w.rows(); ++r)
      for (Index c = 0; c < l.w.cols(); ++c) theta(k++) = l.w(r, c);
    for (Index r = 0; r < l.b.size(); ++r) theta(k++) = l.b(r);
  }
  return theta;
}

void HashModel::set_parameters(const Vector& theta) {
  if (theta.size() != parameter_count()) throw Error("hash model: parameter vector has wrong length");
  Index k = 0;
  for (auto& l : layers_) {
    for (Index r = 0; r < l.w.rows(); ++r)
      for (Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = theta(k++);
    for (Index r = 0; r < l.b.size(); ++r) l.b(r) = theta(k++);
  }
}

bool HashModel::finite() const {
  for (const auto& l : layers_)
    if (!l.w.allFinite() || !l.b.allFinite()) return false;
  return in_mean_.allFinite() && in_scale_.allFinite();
}

Vector HashModel::backprop(const Matrix& features, const Matrix& d_out) const {
  std::vector<Matrix> acts{standardise(features)};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix h = (acts.back() * layers_[i].w.transpose()).rowwise() + layers_[i].b.transpose();
    if (i + 1 < layers_.size()) h = h.cwiseMax(0.0);
    acts.push_back(std::move(h));
  }
  if (d_out.rows() != features.rows() || d_out.cols() != output_dim())
    throw Error("hash model: output gradient has wrong shape");

  std::vector<Layer> grads(layers_.size());
  Matrix delta = d_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    grads[i].w = delta.transpose() * acts[i];
    grads[i].b = delta.colwise().sum().transpose();
    if (i > 0) {
      delta = delta * layers_[i].w;
      delta = delta.cwiseProduct((acts[i].array() > 0.0).cast<double>().matrix());
    }
  }
  Vector g(parameter_count());
  Index k = 0;
  for (const auto& l : grads) {
    for (Index r = 0; r < l.w.rows(); ++r)
      for (Index c = 0; c < l.w.cols(); ++c) g(k++) = l.w(r, c);
    for (Index r = 0; r < l.b.size(); ++r) g(k++) = l.b(r);
  }
  return g;
}

// Model blob: "XMHM", u32 version, u32 arch (0 linear, 1 mlp), u32 layer count,
// u32 dims[layers + 1], then float32 mean, scale and per layer W (row-major), b.
void HashModel::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  auto put = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto putf = [&](double v) {
    const auto f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof f);
  };
  out.write("XMHM", 4);
  put(1);
  put(arch_.kind == Architecture::Kind::Linear ? 0 : 1);
  put(static_cast<std::uint32_t>(layers_.size()));
  put(static_cast<std::uint32_t>(input_dim()));
  for (const auto& l : layers_) put(static_cast<std::uint32_t>(l.w.rows()));
  for (Index j = 0; j < in_mean_.size(); ++j) putf(in_mean_(j));
  for (Index j = 0; j < in_scale_.size(); ++j) putf(in_scale_(j));
  for (const auto& l : layers_) {
    for (Index r = 0; r < l.w.rows(); ++r)
      for (Index c = 0; c < l.w.cols(); ++c) putf(l.w(r, c));
    for (Index r = 0; r < l.b.size(); ++r) putf(l.b(r));
  }
  if (!out) throw Error("write failed: " + path.string());
}

HashModel HashModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("unreadable file: " + path.string());
  auto get = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw Error("truncated model file: " + path.string());
    return v;
  };
  auto getf = [&]() {
    float f = 0;
    in.read(reinterpret_cast<char*>(&f), sizeof f);
    if (!in) throw Error("truncated model file: " + path.string());
    return static_cast<double>(f);
  };
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "XMHM", 4) != 0) throw Error("bad magic in model file: " + path.string());
  if (get() != 1) throw Error("unsupported model version in " + path.string());
  const auto kind = get();
  if (kind > 1) throw Error("unknown architecture tag in " + path.string());
  const auto n_layers = get();
  if (n_layers < 1 || n_layers > 64) throw Error("bad layer count in " + path.string());
  std::vector<Index> dims;
  for (std::uint32_t i = 0; i <= n_layers; ++i) dims.push_back(get());

  HashModel m;
  m.arch_.kind = kind == 0 ? Architecture::Kind::Linear : Architecture::Kind::Mlp;
  if (kind == 0 && n_layers != 1) throw Error("linear model with several layers in " + path.string());
  for (std::uint32_t i = 1; i < n_layers; ++i) m.arch_.hidden.push_back(dims[i]);
  m.in_mean_.resize(dims[0]);
  m.in_scale_.resize(dims[0]);
  for (Index j = 0; j < dims[0]; ++j) m.in_mean_(j) = getf();
  for (Index j = 0; j < dims[0]; ++j) m.in_scale_(j) = getf();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    Layer l{Matrix(dims[i + 1], dims[i]), Vector(dims[i + 1])};
    for (Index r = 0; r < l.w.rows(); ++r)
      for (Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = getf();
    for (Index r = 0; r < l.b.size(); ++r) l.b(r) = getf();
    m.layers_.push_back(std::move(l));
  }
  in.peek();
  if (!in.eof()) throw Error("trailing bytes in model file: " + path.string());
  return m;
}

namespace {

void check_outputs(const std::vector<Matrix>& outputs, const CodeMatrix& b) {
  if (outputs.empty()) throw Error("stage 2 loss: no modalities");
  for (const auto& f : outputs)
    if (f.rows() != b.rows() || f.cols() != b.cols()) throw Error("stage 2 loss: dimension mismatch");
}

}  // namespace

double stage2_loss(const std::vector<Matrix>& outputs, const CodeMatrix& b, double gamma1, double gamma2,
                   bool include_diagonal) {
  check_outputs(outputs, b);
  const auto n = static_cast<double>(b.rows());
  const Matrix target = n * Matrix::Identity(b.cols(), b.cols());
  double fidelity = 0.0;
  double cross = 0.0;
  double indep = 0.0;
  for (std::size_t m = 0; m < outputs.size(); ++m) {
    fidelity += (outputs[m] - b).squaredNorm();
    for (std::size_t t = 0; t < outputs.size(); ++t) {
      const Matrix g = outputs[m].transpose() * outputs[t];
      if (m != t) cross += g.trace();
      if (m != t || include_diagonal) indep += (g - target).squaredNorm();
    }
  }
  return 0.5 * fidelity - gamma1 * cross + gamma2 * indep;
}

std::vector<Matrix> stage2_output_gradients(const std::vector<Matrix>& outputs, const CodeMatrix& b, double gamma1,
                                            double gamma2, bool include_diagonal) {
  check_outputs(outputs, b);
  const auto n = static_cast<double>(b.rows());
  const Matrix target = n * Matrix::Identity(b.cols(), b.cols());
  std::vector<Matrix> grads;
  for (std::size_t m = 0; m < outputs.size(); ++m) {
    Matrix g = outputs[m] - b;
    for (std::size_t t = 0; t < outputs.size(); ++t) {
      if (m != t) g -= 2.0 * gamma1 * outputs[t];
      if (m != t || include_diagonal)
        g += 4.0 * gamma2 * outputs[t] * (outputs[m].transpose() * outputs[t] - target).transpose();
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

void Stage2Config::validate() const {
  if (gamma1 < 0.0 || gamma2 < 0.0) throw Error("gamma1 and gamma2 must be >= 0");
  if (epochs < 0 || pretrain_epochs < 0) throw Error("epoch counts must be >= 0");
  if (batch_size < 1) throw Error("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error("learning rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw Error("momentum must be in [0, 1)");
}

namespace {

Matrix take_rows(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = x.row(rows[r]);
  return out;
}

// Nearly equal batch sizes so every batch contributes on the same scale.
std::vector<std::vector<Index>> make_batches(const std::vector<Index>& order, Index batch_size) {
  const auto n = static_cast<Index>(order.size());
  const Index count = (n + batch_size - 1) / batch_size;
  std::vector<std::vector<Index>> batches;
  Index start = 0;
  for (Index i = 0; i < count; ++i) {
    const Index size = n / count + (i < n % count ? 1 : 0);
    batches.emplace_back(order.begin() + start, order.begin() + start + size);
    start += size;
  }
  return batches;
}

// Upper estimate of the output-space curvature of the batch loss near the
// g2 target, where ||F||_2^2 is about n.
double curvature_scale(double n, std::size_t modalities, double g1, double g2, bool diag) {
  const auto others = static_cast<double>(modalities - 1);
  return 1.0 + 2.0 * g1 * others + g2 * n * ((diag ? 12.0 : 0.0) + 4.0 * others);
}

struct Trainer {
  const std::vector<Matrix>& xs;
  const CodeMatrix& b;
  std::vector<HashModel>& models;
  std::vector<Vector> velocity;
  std::mt19937_64 rng;

  Trainer(const std::vector<Matrix>& x, const CodeMatrix& codes, std::vector<HashModel>& m, std::uint64_t seed)
      : xs(x), b(codes), models(m), rng(seed) {
    for (const auto& model : models) velocity.push_back(Vector::Zero(model.parameter_count()));
  }

  std::vector<std::vector<Index>> shuffled_batches(Index batch_size) {
    std::vector<Index> order(static_cast<std::size_t>(b.rows()));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    return make_batches(order, batch_size);
  }

  // One epoch over `active` modalities; returns the mean batch loss.
  double epoch(const std::vector<std::size_t>& active, double g1, double g2, bool diag, const Stage2Config& cfg) {
    double total = 0.0;
    const auto batches = shuffled_batches(cfg.batch_size);
    for (const auto& rows : batches) {
      const CodeMatrix bb = take_rows(b, rows);
      std::vector<Matrix> xb;
      std::vector<Matrix> outs;
      for (auto m : active) {
        xb.push_back(take_rows(xs[m], rows));
        outs.push_back(models[m].forward(xb.back()));
      }
      const double loss = stage2_loss(outs, bb, g1, g2, diag);
      if (!std::isfinite(loss)) return loss;
      total += loss;
      const auto grads = stage2_output_gradients(outs, bb, g1, g2, diag);
      const auto n = static_cast<double>(rows.size());
      const double step = cfg.learning_rate / (n * curvature_scale(n, active.size(), g1, g2, diag));
      for (std::size_t i = 0; i < active.size(); ++i) {
        auto& model = models[active[i]];
        auto& v = velocity[active[i]];
        v = cfg.momentum * v - step * model.backprop(xb[i], grads[i]);
        model.set_parameters(model.parameters() + v);
      }
    }
    return total / static_cast<double>(batches.size());
  }

  // Mean batch loss of the current parameters over a fixed, unshuffled
  // partition, so successive epochs are compared on the same batches.
  double evaluate(const std::vector<std::size_t>& active, double g1, double g2, bool diag, Index batch_size) const {
    std::vector<Index> order(static_cast<std::size_t>(b.rows()));
    std::iota(order.begin(), order.end(), Index{0});
    const auto batches = make_batches(order, batch_size);
    double total = 0.0;
    for (const auto& rows : batches) {
      std::vector<Matrix> outs;
      for (auto m : active) outs.push_back(models[m].forward(take_rows(xs[m], rows)));
      total += stage2_loss(outs, take_rows(b, rows), g1, g2, diag);
    }
    return total / static_cast<double>(batches.size());
  }
};

}  // namespace

Stage2Result train_hash_models(const MultiModalDataset& data, const CodeMatrix& b, const Architecture& arch,
                               const Stage2Config& config) {
  config.validate();
  if (b.rows() != data.instance_count())
    throw Error("stage 2: code rows (" + std::to_string(b.rows()) + ") do not match dataset instances (" +
                std::to_string(data.instance_count()) + ")");
  if (!is_binary(b)) throw Error("stage 2: codes must be exactly +-1");

  Stage2Result res;
  const std::size_t modalities = data.modality_count();
  for (std::size_t m = 0; m < modalities; ++m) {
    HashModel model(arch, data.modality(m).cols(), b.cols(), config.seed * 1000003ULL + m);
    model.fit_input_scaling(data.modality(m));
    res.models.push_back(std::move(model));
  }
  Trainer trainer(data.modalities(), b, res.models, config.seed);

  auto diverged = [](int epoch) {
    return Error("stage 2 diverged at epoch " + std::to_string(epoch) + " (last finite epoch " +
                 std::to_string(epoch - 1) + ")");
  };

  if (config.mode == Stage2Config::Mode::Pretrain) {
    for (int e = 0; e < config.pretrain_epochs; ++e) {
      double sum = 0.0;
      for (std::size_t m = 0; m < modalities; ++m) {
        if (!std::isfinite(trainer.epoch({m}, 0.0, 0.0, true, config))) throw diverged(e + 1);
        const double loss = trainer.evaluate({m}, 0.0, 0.0, true, config.batch_size);
        if (!std::isfinite(loss)) throw diverged(e + 1);
        sum += loss;
      }
      res.pretrain_curve.push_back(sum);
    }
    for (auto& v : trainer.velocity) v.setZero();
  }

  std::vector<std::size_t> all(modalities);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (int e = 0; e < config.epochs; ++e) {
    if (!std::isfinite(trainer.epoch(all, config.gamma1, config.gamma2, config.include_diagonal, config)))
      throw diverged(e + 1);
    const double loss = trainer.evaluate(all, config.gamma1, config.gamma2, config.include_diagonal, config.batch_size);
    if (!std::isfinite(loss)) throw diverged(e + 1);
    res.loss_curve.push_back(loss);
  }
  for (const auto& m : res.models)
    if (!m.finite()) throw Error("stage 2 produced non-finite parameters");
  return res;
}

CodeMatrix encode(const HashModel& model, const Matrix& features) { return sign_matrix(model.forward(features)); }

}  // namespace xmh
