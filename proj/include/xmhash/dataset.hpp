#pragma once

#include "xmhash/common.hpp"
#include "xmhash/io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace xmh {

/// M aligned feature matrices (N x D^m). Row i of every modality describes
/// the same instance. Immutable once constructed.
class MultiModalDataset {
public:
  MultiModalDataset() = default;
  explicit MultiModalDataset(std::vector<Matrix> modalities, std::optional<io::LabelSets> labels = std::nullopt);

  Index instance_count() const { return modalities_.empty() ? 0 : modalities_.front().rows(); }
  std::size_t modality_count() const { return modalities_.size(); }
  const Matrix& modality(std::size_t m) const { return modalities_.at(m); }
  const std::vector<Matrix>& modalities() const { return modalities_; }

  bool has_labels() const { return labels_.has_value(); }
  const io::LabelSets& labels() const;

  /// Instances selected by `rows`, in that order, labels included.
  MultiModalDataset subset(const std::vector<Index>& rows) const;

private:
  std::vector<Matrix> modalities_;
  std::optional<io::LabelSets> labels_;
};

enum class FeatureFormat { Csv, RawF32 };

FeatureFormat parse_feature_format(const std::string& name);

MultiModalDataset load_dataset(const std::vector<std::string>& paths, FeatureFormat format,
                               const std::optional<std::string>& labels_path = std::nullopt);

void save_dataset(const MultiModalDataset& data, const std::vector<std::string>& paths, FeatureFormat format,
                  const std::optional<std::string>& labels_path = std::nullopt);

/// sqrt(tr(Cov)) of one modality with the 1/(N-1) covariance estimator.
double total_std(const Matrix& features);

/// Divides every modality by sqrt(tr(Cov)) so each has unit total variance.
/// Throws on N < 2 or a constant modality.
MultiModalDataset unit_variance_normalize(const MultiModalDataset& data);

struct SynthesisSpec {
  int n_clusters = 3;
  int per_cluster = 10;
  std::vector<int> dims{5, 7};
  double spread = 0.1;
  // >1 stretches each cluster along its own random axis by this factor
  double elongation = 1.0;
  std::uint64_t seed = 0;
};

/// Paired Gaussian clusters: instance i carries one cluster label and is drawn
/// around that cluster's centroid in every modality. Centroids are standard
/// normal per modality. Instance i belongs to cluster i % n_clusters, so
/// index-ordered ties never favour one cluster. Deterministic given the seed.
MultiModalDataset synthesize_clustered(const SynthesisSpec& spec);

/// Same as above, also returning the generating centroids (one K x D^m matrix per modality).
MultiModalDataset synthesize_clustered(const SynthesisSpec& spec, std::vector<Matrix>* centroids);

}  // namespace xmh
