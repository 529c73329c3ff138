#include "xmhash/dataset.hpp"

#include <cmath>
#include <random>

namespace xmh {

MultiModalDataset::MultiModalDataset(std::vector<Matrix> modalities, std::optional<io::LabelSets> labels)
    : modalities_(std::move(modalities)), labels_(std::move(labels)) {
  if (modalities_.empty()) throw Error("dataset needs at least one modality");
  const Index n = modalities_.front().rows();
  if (n < 1) throw Error("dataset needs at least one instance");
  for (std::size_t m = 0; m < modalities_.size(); ++m) {
    const auto& x = modalities_[m];
    if (x.rows() != n)
      throw Error("row-count mismatch: modality " + std::to_string(m) + " has " + std::to_string(x.rows()) +
                  " rows, expected " + std::to_string(n));
    if (x.cols() < 1) throw Error("modality " + std::to_string(m) + " has no columns");
    for (Index j = 0; j < x.cols(); ++j)
      for (Index i = 0; i < n; ++i)
        if (!std::isfinite(x(i, j)))
          throw Error("non-finite value at (" + std::to_string(i) + "," + std::to_string(j) + ") in modality " +
                      std::to_string(m));
  }
  if (labels_ && static_cast<Index>(labels_->size()) != n)
    throw Error("label row count " + std::to_string(labels_->size()) + " does not match " + std::to_string(n) +
                " instances");
}

const io::LabelSets& MultiModalDataset::labels() const {
  if (!labels_) throw Error("dataset has no labels");
  return *labels_;
}

MultiModalDataset MultiModalDataset::subset(const std::vector<Index>& rows) const {
  std::vector<Matrix> parts;
  for (const auto& x : modalities_) {
    Matrix part(static_cast<Index>(rows.size()), x.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) part.row(static_cast<Index>(r)) = x.row(rows[r]);
    parts.push_back(std::move(part));
  }
  std::optional<io::LabelSets> lab;
  if (labels_) {
    lab.emplace();
    for (auto r : rows) lab->push_back(labels_->at(static_cast<std::size_t>(r)));
  }
  return MultiModalDataset(std::move(parts), std::move(lab));
}

FeatureFormat parse_feature_format(const std::string& name) {
  if (name == "csv") return FeatureFormat::Csv;
  if (name == "raw-f32") return FeatureFormat::RawF32;
  throw Error("unknown feature format '" + name + "' (expected csv or raw-f32)");
}

MultiModalDataset load_dataset(const std::vector<std::string>& paths, FeatureFormat format,
                               const std::optional<std::string>& labels_path) {
  if (paths.empty()) throw Error("load_dataset: no modality paths");
  std::vector<Matrix> parts;
  for (const auto& p : paths)
    parts.push_back(format == FeatureFormat::Csv ? io::read_csv(p) : io::read_raw_f32(p));
  std::optional<io::LabelSets> labels;
  if (labels_path) labels = io::read_labels(*labels_path);
  return MultiModalDataset(std::move(parts), std::move(labels));
}

void save_dataset(const MultiModalDataset& data, const std::vector<std::string>& paths, FeatureFormat format,
                  const std::optional<std::string>& labels_path) {
  if (paths.size() != data.modality_count()) throw Error("save_dataset: one path per modality required");
  for (std::size_t m = 0; m < paths.size(); ++m) {
    if (format == FeatureFormat::Csv)
      io::write_csv(paths[m], data.modality(m));
    else
      io::write_raw_f32(paths[m], data.modality(m));
  }
  if (labels_path) io::write_labels(*labels_path, data.labels());
}

double total_std(const Matrix& x) {
  if (x.rows() < 2) throw Error("covariance needs at least 2 instances");
  const Vector mean = x.colwise().mean().transpose();
  const double trace = (x.rowwise() - mean.transpose()).squaredNorm() / static_cast<double>(x.rows() - 1);
  return std::sqrt(trace);
}

MultiModalDataset unit_variance_normalize(const MultiModalDataset& data) {
  std::vector<Matrix> parts;
  for (std::size_t m = 0; m < data.modality_count(); ++m) {
    const double s = total_std(data.modality(m));
    if (!(s > 0.0)) throw Error("modality " + std::to_string(m) + " has zero total variance");
    parts.push_back(data.modality(m) / s);
  }
  std::optional<io::LabelSets> labels;
  if (data.has_labels()) labels = data.labels();
  return MultiModalDataset(std::move(parts), std::move(labels));
}

MultiModalDataset synthesize_clustered(const SynthesisSpec& spec) { return synthesize_clustered(spec, nullptr); }

MultiModalDataset synthesize_clustered(const SynthesisSpec& spec, std::vector<Matrix>* centroids) {
  if (spec.n_clusters < 2) throw Error("synthesize_clustered: n_clusters must be >= 2");
  if (spec.per_cluster < 1) throw Error("synthesize_clustered: per_cluster must be >= 1");
  if (!(spec.spread > 0.0)) throw Error("synthesize_clustered: spread must be > 0");
  if (!(spec.elongation >= 1.0)) throw Error("synthesize_clustered: elongation must be >= 1");
  if (spec.dims.empty()) throw Error("synthesize_clustered: at least one modality");
  for (int d : spec.dims)
    if (d < 1) throw Error("synthesize_clustered: dimensions must be positive");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index k = spec.n_clusters;
  const Index n = k * spec.per_cluster;

  // all centroids and axes are drawn before any noise so that a given seed
  // yields the same cluster geometry at every spread
  std::vector<Matrix> centers;
  std::vector<Matrix> axes;
  for (int d : spec.dims) {
    Matrix c(k, d);
    Matrix a(k, d);
    for (Index i = 0; i < k; ++i)
      for (Index j = 0; j < d; ++j) c(i, j) = normal(rng);
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < d; ++j) a(i, j) = normal(rng);
      a.row(i).normalize();
    }
    centers.push_back(std::move(c));
    axes.push_back(std::move(a));
  }

  std::vector<Matrix> parts;
  for (std::size_t m = 0; m < spec.dims.size(); ++m) {
    const Index d = spec.dims[m];
    Matrix x(n, d);
    for (Index i = 0; i < n; ++i) {
      const Index c = i % k;
      Vector z(d);
      for (Index j = 0; j < d; ++j) z(j) = normal(rng);
      const Vector u = axes[m].row(c).transpose();
      z += (spec.elongation - 1.0) * u.dot(z) * u;
      x.row(i) = centers[m].row(c) + spec.spread * z.transpose();
    }
    parts.push_back(std::move(x));
  }

  io::LabelSets labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = {static_cast<int>(i % k)};
  if (centroids) *centroids = centers;
  return MultiModalDataset(std::move(parts), std::move(labels));
}

}  // namespace xmh
