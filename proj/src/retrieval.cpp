#include "xmhash/retrieval.hpp"

#include "xmhash/parallel.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <set>

namespace xmh {

PackedCodes pack_codes(const CodeMatrix& codes) {
  if (!is_binary(codes)) throw Error("pack_codes: codes must be exactly +-1");
  PackedCodes p;
  p.rows = codes.rows();
  p.bits = codes.cols();
  p.words = (p.bits + 63) / 64;
  p.data.assign(static_cast<std::size_t>(p.rows * p.words), 0);
  for (Index i = 0; i < p.rows; ++i)
    for (Index j = 0; j < p.bits; ++j)
      if (codes(i, j) > 0) p.data[static_cast<std::size_t>(i * p.words + j / 64)] |= std::uint64_t{1} << (j % 64);
  return p;
}

DistanceMatrix hamming_distances(const CodeMatrix& queries, const CodeMatrix& database, int threads) {
  if (queries.cols() != database.cols())
    throw Error("hamming_distances: code lengths differ (" + std::to_string(queries.cols()) + " vs " +
                std::to_string(database.cols()) + ")");
  const auto q = pack_codes(queries);
  const auto db = pack_codes(database);
  DistanceMatrix d(q.rows, db.rows);
  parallel_for(static_cast<std::size_t>(q.rows), threads, [&](std::size_t qi) {
    const auto* a = q.row(static_cast<Index>(qi));
    for (Index j = 0; j < db.rows; ++j) {
      const auto* b = db.row(j);
      int count = 0;
      for (Index w = 0; w < q.words; ++w) count += std::popcount(a[w] ^ b[w]);
      d(static_cast<Index>(qi), j) = count;
    }
  });
  return d;
}

RelevanceMatrix relevance_from_labels(const io::LabelSets& query_labels, const io::LabelSets& database_labels) {
  RelevanceMatrix rel(static_cast<Index>(query_labels.size()), static_cast<Index>(database_labels.size()));
  std::vector<std::set<int>> db_sets;
  for (const auto& s : database_labels) db_sets.emplace_back(s.begin(), s.end());
  for (std::size_t i = 0; i < query_labels.size(); ++i)
    for (std::size_t j = 0; j < database_labels.size(); ++j) {
      bool shared = false;
      for (int l : query_labels[i])
        if (db_sets[j].count(l)) {
          shared = true;
          break;
        }
      rel(static_cast<Index>(i), static_cast<Index>(j)) = shared;
    }
  return rel;
}

namespace {

void check_pair(const DistanceMatrix& d, const RelevanceMatrix& r) {
  if (d.rows() != r.rows() || d.cols() != r.cols()) throw Error("retrieval: distance and relevance shapes differ");
}

}  // namespace

std::optional<double> average_precision(const DistanceMatrix& distances, const RelevanceMatrix& relevance, Index query,
                                        Index top_k) {
  check_pair(distances, relevance);
  const Index n = distances.cols();
  if (n == 0) throw Error("retrieval: empty database");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return distances(query, a) < distances(query, b); });
  const Index depth = top_k > 0 ? std::min(top_k, n) : n;
  double sum = 0.0;
  Index hits = 0;
  for (Index k = 0; k < depth; ++k) {
    if (relevance(query, order[static_cast<std::size_t>(k)])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (top_k > 0) {
    if (hits == 0) return relevance.row(query).any() ? std::optional<double>(0.0) : std::nullopt;
    return sum / static_cast<double>(hits);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

MapSummary mean_average_precision(const DistanceMatrix& distances, const RelevanceMatrix& relevance, Index top_k) {
  check_pair(distances, relevance);
  if (distances.cols() == 0) throw Error("retrieval: empty database");
  MapSummary s;
  double total = 0.0;
  for (Index q = 0; q < distances.rows(); ++q) {
    const auto ap = average_precision(distances, relevance, q, top_k);
    if (!ap) {
      ++s.skipped;
      continue;
    }
    s.per_query_ap.push_back(*ap);
    total += *ap;
    ++s.evaluated;
  }
  s.map = s.evaluated ? total / static_cast<double>(s.evaluated) : 0.0;
  return s;
}

double precision_at_radius(const DistanceMatrix& distances, const RelevanceMatrix& relevance, int radius) {
  check_pair(distances, relevance);
  if (distances.rows() == 0) return 0.0;
  double total = 0.0;
  for (Index q = 0; q < distances.rows(); ++q) {
    Index inside = 0;
    Index hits = 0;
    for (Index j = 0; j < distances.cols(); ++j) {
      if (distances(q, j) <= radius) {
        ++inside;
        if (relevance(q, j)) ++hits;
      }
    }
    if (inside) total += static_cast<double>(hits) / static_cast<double>(inside);
  }
  return total / static_cast<double>(distances.rows());
}

// E[AP] = (1/R) sum_k E[rel_k * prec@k]; for a random permutation this
// collapses to H_N / N + (R - 1)/(N - 1) * (1 - H_N / N).
double random_ranking_ap(Index n, Index relevant) {
  if (n < 1 || relevant < 1 || relevant > n) throw Error("random_ranking_ap: need 1 <= R <= N");
  double harmonic = 0.0;
  for (Index k = 1; k <= n; ++k) harmonic += 1.0 / static_cast<double>(k);
  const double first = harmonic / static_cast<double>(n);
  if (n == 1) return 1.0;
  return first + static_cast<double>(relevant - 1) / static_cast<double>(n - 1) * (1.0 - first);
}

double label_prior_baseline(const RelevanceMatrix& relevance) {
  double total = 0.0;
  Index count = 0;
  for (Index q = 0; q < relevance.rows(); ++q) {
    const Index r = relevance.row(q).count();
    if (r == 0) continue;
    total += random_ranking_ap(relevance.cols(), r);
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

std::string task_name(std::size_t query_modality, std::size_t database_modality) {
  return std::to_string(query_modality) + "->" + std::to_string(database_modality);
}

std::vector<RetrievalResult> evaluate_codes(const std::vector<CodeMatrix>& query_codes,
                                            const std::vector<CodeMatrix>& database_codes,
                                            const io::LabelSets& query_labels, const io::LabelSets& database_labels,
                                            int threads) {
  if (query_codes.size() != database_codes.size() || query_codes.empty())
    throw Error("evaluate: need the same non-zero number of query and database modalities");
  for (const auto& c : query_codes)
    if (c.rows() != static_cast<Index>(query_labels.size())) throw Error("evaluate: query labels do not match codes");
  for (const auto& c : database_codes)
    if (c.rows() != static_cast<Index>(database_labels.size()))
      throw Error("evaluate: database labels do not match codes");
  const auto rel = relevance_from_labels(query_labels, database_labels);
  const double baseline = label_prior_baseline(rel);
  std::vector<RetrievalResult> out;
  for (std::size_t qm = 0; qm < query_codes.size(); ++qm)
    for (std::size_t dm = 0; dm < database_codes.size(); ++dm) {
      const auto d = hamming_distances(query_codes[qm], database_codes[dm], threads);
      const auto s = mean_average_precision(d, rel);
      RetrievalResult r;
      r.query_modality = qm;
      r.database_modality = dm;
      r.task = task_name(qm, dm);
      r.map = s.map;
      r.prec_at_r2 = precision_at_radius(d, rel, 2);
      r.per_query_ap = s.per_query_ap;
      r.num_queries = d.rows();
      r.skipped_queries = s.skipped;
      r.baseline_map = baseline;
      out.push_back(std::move(r));
    }
  return out;
}

std::vector<RetrievalResult> evaluate_all_tasks(const std::vector<HashModel>& models,
                                                const MultiModalDataset& queries, const MultiModalDataset& database,
                                                int threads) {
  if (!queries.has_labels() || !database.has_labels()) throw Error("evaluate: labels are required");
  if (models.size() != queries.modality_count() || models.size() != database.modality_count())
    throw Error("evaluate: one model per modality required");
  std::vector<CodeMatrix> qc;
  std::vector<CodeMatrix> dc;
  for (std::size_t m = 0; m < models.size(); ++m) {
    qc.push_back(encode(models[m], queries.modality(m)));
    dc.push_back(encode(models[m], database.modality(m)));
  }
  return evaluate_codes(qc, dc, queries.labels(), database.labels(), threads);
}

}  // namespace xmh
