#pragma once

#include "xmhash/common.hpp"
#include "xmhash/hash_model.hpp"
#include "xmhash/io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace xmh {

using DistanceMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;
using RelevanceMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Codes packed 64 bits per word, bit set for +1. Padding bits stay zero.
struct PackedCodes {
  Index rows = 0;
  Index bits = 0;
  Index words = 0;
  std::vector<std::uint64_t> data;

  const std::uint64_t* row(Index i) const { return data.data() + i * words; }
};

PackedCodes pack_codes(const CodeMatrix& codes);

/// Q x N matrix of differing-bit counts.
DistanceMatrix hamming_distances(const CodeMatrix& queries, const CodeMatrix& database, int threads = 1);

/// Relevant when the two instances share at least one label.
RelevanceMatrix relevance_from_labels(const io::LabelSets& query_labels, const io::LabelSets& database_labels);

/// AP of one ranked list (ascending distance, ties by database index), or
/// nullopt when nothing is relevant. `top_k` > 0 truncates the list.
std::optional<double> average_precision(const DistanceMatrix& distances, const RelevanceMatrix& relevance, Index query,
                                        Index top_k = 0);

struct MapSummary {
  double map = 0.0;
  std::vector<double> per_query_ap;  // evaluated queries only, in query order
  Index evaluated = 0;
  Index skipped = 0;  // queries without any relevant item
};

MapSummary mean_average_precision(const DistanceMatrix& distances, const RelevanceMatrix& relevance,
                                  Index top_k = 0);

/// Mean over all queries of the fraction of relevant items among those within
/// `radius`; a query with nothing inside the radius contributes 0.
double precision_at_radius(const DistanceMatrix& distances, const RelevanceMatrix& relevance, int radius = 2);

/// Expected AP of a uniformly random ranking of N items with R relevant.
double random_ranking_ap(Index n, Index relevant);

/// Mean random-ranking AP over the queries that have a relevant item.
double label_prior_baseline(const RelevanceMatrix& relevance);

struct RetrievalResult {
  std::size_t query_modality = 0;
  std::size_t database_modality = 0;
  std::string task;
  double map = 0.0;
  double prec_at_r2 = 0.0;
  std::vector<double> per_query_ap;
  Index num_queries = 0;
  Index skipped_queries = 0;
  double baseline_map = 0.0;
};

std::string task_name(std::size_t query_modality, std::size_t database_modality);

/// Every ordered (query modality, database modality) pair from precomputed codes.
std::vector<RetrievalResult> evaluate_codes(const std::vector<CodeMatrix>& query_codes,
                                            const std::vector<CodeMatrix>& database_codes,
                                            const io::LabelSets& query_labels, const io::LabelSets& database_labels,
                                            int threads = 1);

/// Encodes both sets with the per-modality models, then evaluate_codes.
std::vector<RetrievalResult> evaluate_all_tasks(const std::vector<HashModel>& models,
                                                const MultiModalDataset& queries, const MultiModalDataset& database,
                                                int threads = 1);

}  // namespace xmh
