#pragma once

#include "xmhash/common.hpp"
#include "xmhash/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace xmh {

struct Architecture {
  enum class Kind { Linear, Mlp };
  Kind kind = Kind::Linear;
  std::vector<Index> hidden;  // Mlp only; ReLU after every hidden layer

  static Architecture linear() { return {}; }
  static Architecture mlp(std::vector<Index> hidden_sizes) { return {Kind::Mlp, std::move(hidden_sizes)}; }
  std::string name() const { return kind == Kind::Linear ? "linear" : "mlp"; }
};

Architecture parse_architecture(const std::string& name, const std::vector<Index>& hidden);

struct Layer {
  Matrix w;  // out x in
  Vector b;  // out
};

/// Per-modality encoder F(x) = layers(standardise(x)). Inputs are shifted
/// and scaled per feature with statistics stored in the model.
class HashModel {
public:
  HashModel() = default;
  HashModel(const Architecture& arch, Index input_dim, Index code_length, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  Index input_dim() const { return in_mean_.size(); }
  Index output_dim() const { return layers_.empty() ? 0 : layers_.back().w.rows(); }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Sets the standardisation statistics from training features.
  void fit_input_scaling(const Matrix& features);
  const Vector& input_mean() const { return in_mean_; }
  const Vector& input_scale() const { return in_scale_; }

  Matrix forward(const Matrix& features) const;
  /// Flat gradient of sum(d_out .* forward(features)) with respect to the parameters.
  Vector backprop(const Matrix& features, const Matrix& d_out) const;

  Index parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& theta);
  bool finite() const;

  void save(const std::filesystem::path& path) const;
  static HashModel load(const std::filesystem::path& path);

private:
  Matrix standardise(const Matrix& features) const;
  void check_input(const Matrix& features) const;

  Architecture arch_;
  Vector in_mean_;
  Vector in_scale_;
  std::vector<Layer> layers_;
};

/// 1/2 sum_m ||F_m - B||^2 - g1 sum_{m != t} Tr(F_m^T F_t) + g2 sum_{m,t} ||F_m^T F_t - n I||^2
/// over ordered pairs, n = number of rows. `include_diagonal` = false drops the m = t terms of the g2 sum.
double stage2_loss(const std::vector<Matrix>& outputs, const CodeMatrix& b, double gamma1, double gamma2,
                   bool include_diagonal = true);

/// d loss / d F_m for every modality.
std::vector<Matrix> stage2_output_gradients(const std::vector<Matrix>& outputs, const CodeMatrix& b, double gamma1,
                                            double gamma2, bool include_diagonal = true);

struct Stage2Config {
  double gamma1 = 100.0;
  double gamma2 = 100.0;
  int epochs = 60;
  Index batch_size = 64;
  // step size relative to the output-space curvature of the loss at the g2 target
  double learning_rate = 0.03;
  double momentum = 0.9;
  enum class Mode { Joint, Pretrain };
  // Pretrain: fidelity-only epochs per modality first, then joint fine-tuning
  Mode mode = Mode::Joint;
  int pretrain_epochs = 20;
  bool include_diagonal = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Stage2Result {
  std::vector<HashModel> models;
  std::vector<double> loss_curve;  // end-of-epoch mean loss over a fixed batch partition
  std::vector<double> pretrain_curve;
};

Stage2Result train_hash_models(const MultiModalDataset& data, const CodeMatrix& b, const Architecture& arch,
                               const Stage2Config& config);

/// sign(F(x)) with sign(0) = +1.
CodeMatrix encode(const HashModel& model, const Matrix& features);

}  // namespace xmh
