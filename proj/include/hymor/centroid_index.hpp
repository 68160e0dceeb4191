#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hymor/category.hpp"
#include "hymor/embedding.hpp"

namespace hymor {

// One build-time input record.
struct LabeledEmbedding {
  std::string label;
  Category category = Category::animal;
  EmbeddingVector embedding;
};

struct ClassCentroid {
  std::string label;
  Category category = Category::animal;
  std::vector<double> raw_centroid;
  std::uint32_t sample_count = 0;
  // normalize(raw_centroid - global_mean); all zeros when degenerate.
  std::vector<double> processed;
  // Mean-subtracted centroid was the zero vector. Never matched by search.
  bool degenerate = false;

  friend bool operator==(const ClassCentroid&, const ClassCentroid&) = default;
};

// Unit direction of (x - global_mean), or a degenerate marker when x equals
// the mean exactly.
struct PreprocessedQuery {
  std::vector<double> direction;
  bool degenerate = false;
};

struct Match {
  std::string label;
  Category category = Category::other;
  double similarity = -1.0;
  bool no_match = true;

  static Match none() { return Match{}; }
};

// Finalized, immutable centroid index. Safe for concurrent search.
class CentroidIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  // Assembles an index from stored parts (used by the loader). Validates
  // structure but does not recompute anything.
  static CentroidIndex from_parts(std::size_t dim, std::vector<double> global_mean,
                                  std::vector<ClassCentroid> classes,
                                  std::uint32_t format_version = kFormatVersion);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return classes_.size(); }
  std::uint32_t format_version() const noexcept { return format_version_; }
  std::span<const double> global_mean() const noexcept { return global_mean_; }
  // Sorted by label bytes.
  const std::vector<ClassCentroid>& classes() const noexcept { return classes_; }
  std::size_t degenerate_count() const noexcept;

  const ClassCentroid* find(std::string_view label) const;

  PreprocessedQuery preprocess_query(std::span<const double> query) const;
  PreprocessedQuery preprocess_query(const EmbeddingVector& query) const {
    return preprocess_query(query.values());
  }

  // Highest dot product between the preprocessed query and every
  // non-degenerate processed centroid. Ties go to the smallest label.
  Match search(std::span<const double> query) const;
  Match search(const EmbeddingVector& query) const { return search(query.values()); }

  // Copy with every stored value rounded through f32, i.e. exactly what a
  // save/load cycle yields.
  CentroidIndex rounded_to_storage() const;

  friend bool operator==(const CentroidIndex&, const CentroidIndex&) = default;

 private:
  friend class IndexBuilder;
  CentroidIndex() = default;

  std::size_t dim_ = 0;
  std::uint32_t format_version_ = kFormatVersion;
  std::vector<double> global_mean_;
  std::vector<ClassCentroid> classes_;
};

// Single-writer accumulator of per-class running sums. Means are only
// materialized by finalize().
class IndexBuilder {
 public:
  IndexBuilder& accumulate(std::string_view label, Category category,
                           std::span<const double> embedding);
  IndexBuilder& accumulate(const LabeledEmbedding& sample) {
    return accumulate(sample.label, sample.category, sample.embedding.values());
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t class_count() const noexcept { return sums_.size(); }
  std::size_t sample_count() const noexcept { return samples_; }

  CentroidIndex finalize() const;

 private:
  struct RunningSum {
    Category category = Category::animal;
    std::vector<double> sum;
    std::uint64_t count = 0;
  };

  std::size_t dim_ = 0;
  std::size_t samples_ = 0;
  std::map<std::string, RunningSum, std::less<>> sums_;
};

// normalize(x - mean) computed in double precision. Shared by centroid
// preprocessing and query preprocessing so both follow the same arithmetic.
PreprocessedQuery mean_subtract_normalize(std::span<const double> x, std::span<const double> mean);

}  // namespace hymor
