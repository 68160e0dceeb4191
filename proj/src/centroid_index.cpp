#include "hymor/centroid_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hymor/errors.hpp"

namespace hymor {

PreprocessedQuery mean_subtract_normalize(std::span<const double> x, std::span<const double> mean) {
  if (x.size() != mean.size()) throw DimensionMismatch(mean.size(), x.size());
  PreprocessedQuery out;
  out.direction.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.direction[i] = x[i] - mean[i];
  const double norm = l2_norm(out.direction);
  if (norm == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (double& v : out.direction) v /= norm;
  return out;
}

IndexBuilder& IndexBuilder::accumulate(std::string_view label, Category category,
                                       std::span<const double> embedding) {
  if (label.empty()) throw DataError("class label must be non-empty");
  if (category == Category::other) {
    throw DataError("class '" + std::string(label) + "' has category other; only animal/plant are indexed");
  }
  if (embedding.empty()) throw DataError("embedding has dimension zero");
  if (dim_ != 0 && embedding.size() != dim_) throw DimensionMismatch(dim_, embedding.size());
  require_finite(embedding);

  auto it = sums_.find(label);
  if (it == sums_.end()) {
    it = sums_.emplace(std::string(label), RunningSum{category, std::vector<double>(embedding.size(), 0.0), 0}).first;
  } else if (it->second.category != category) {
    throw DataError("class '" + std::string(label) + "' seen with conflicting categories");
  }
  if (dim_ == 0) dim_ = embedding.size();

  auto& acc = it->second;
  for (std::size_t i = 0; i < dim_; ++i) acc.sum[i] += embedding[i];
  ++acc.count;
  ++samples_;
  return *this;
}

CentroidIndex IndexBuilder::finalize() const {
  if (sums_.empty()) throw EmptyIndexError("cannot finalize an index with no accumulated classes");

  CentroidIndex index;
  index.dim_ = dim_;
  index.classes_.reserve(sums_.size());
  // std::map iterates in byte-lexicographic label order.
  for (const auto& [label, acc] : sums_) {
    if (acc.count > std::numeric_limits<std::uint32_t>::max()) {
      throw DataError("class '" + label + "' exceeds the u32 sample count");
    }
    ClassCentroid c;
    c.label = label;
    c.category = acc.category;
    c.sample_count = static_cast<std::uint32_t>(acc.count);
    c.raw_centroid.resize(dim_);
    const double n = static_cast<double>(acc.count);
    for (std::size_t i = 0; i < dim_; ++i) c.raw_centroid[i] = acc.sum[i] / n;
    index.classes_.push_back(std::move(c));
  }

  // Every class weighs the same in the global mean.
  index.global_mean_.assign(dim_, 0.0);
  for (const auto& c : index.classes_) {
    for (std::size_t i = 0; i < dim_; ++i) index.global_mean_[i] += c.raw_centroid[i];
  }
  const double classes = static_cast<double>(index.classes_.size());
  for (double& v : index.global_mean_) v /= classes;

  for (auto& c : index.classes_) {
    auto pre = mean_subtract_normalize(c.raw_centroid, index.global_mean_);
    c.degenerate = pre.degenerate;
    c.processed = std::move(pre.direction);
    if (c.degenerate) std::fill(c.processed.begin(), c.processed.end(), 0.0);
  }
  return index;
}

CentroidIndex CentroidIndex::from_parts(std::size_t dim, std::vector<double> global_mean,
                                        std::vector<ClassCentroid> classes,
                                        std::uint32_t format_version) {
  if (dim == 0) throw DataError("index dimension must be positive");
  if (classes.empty()) throw EmptyIndexError("index has no classes");
  if (global_mean.size() != dim) throw DimensionMismatch(dim, global_mean.size());
  require_finite(global_mean);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& c = classes[k];
    if (c.label.empty()) throw DataError("empty class label");
    if (k > 0 && !(classes[k - 1].label < c.label)) {
      throw DataError("class labels must be unique and sorted: '" + c.label + "'");
    }
    if (c.category == Category::other) throw DataError("class '" + c.label + "' has category other");
    if (c.sample_count == 0) throw DataError("class '" + c.label + "' has zero samples");
    if (c.raw_centroid.size() != dim) throw DimensionMismatch(dim, c.raw_centroid.size());
    if (c.processed.size() != dim) throw DimensionMismatch(dim, c.processed.size());
    require_finite(c.raw_centroid);
    require_finite(c.processed);
  }
  CentroidIndex index;
  index.dim_ = dim;
  index.format_version_ = format_version;
  index.global_mean_ = std::move(global_mean);
  index.classes_ = std::move(classes);
  return index;
}

std::size_t CentroidIndex::degenerate_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(classes_.begin(), classes_.end(), [](const ClassCentroid& c) { return c.degenerate; }));
}

const ClassCentroid* CentroidIndex::find(std::string_view label) const {
  auto it = std::lower_bound(classes_.begin(), classes_.end(), label,
                             [](const ClassCentroid& c, std::string_view l) { return c.label < l; });
  if (it == classes_.end() || it->label != label) return nullptr;
  return &*it;
}

PreprocessedQuery CentroidIndex::preprocess_query(std::span<const double> query) const {
  if (query.size() != dim_) throw DimensionMismatch(dim_, query.size());
  require_finite(query);
  return mean_subtract_normalize(query, global_mean_);
}

Match CentroidIndex::search(std::span<const double> query) const {
  if (classes_.empty()) throw EmptyIndexError("search on an empty index");
  const auto pre = preprocess_query(query);
  if (pre.degenerate) return Match::none();

  const ClassCentroid* best = nullptr;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (const auto& c : classes_) {
    if (c.degenerate) continue;
    const double sim = dot(pre.direction, c.processed);
    // Strict comparison keeps the earliest (smallest) label on ties.
    if (sim > best_sim) {
      best_sim = sim;
      best = &c;
    }
  }
  if (best == nullptr) return Match::none();
  return Match{best->label, best->category, std::clamp(best_sim, -1.0, 1.0), false};
}

CentroidIndex CentroidIndex::rounded_to_storage() const {
  auto round = [](std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  };
  CentroidIndex copy = *this;
  round(copy.global_mean_);
  for (auto& c : copy.classes_) {
    round(c.raw_centroid);
    round(c.processed);
  }
  return copy;
}

}  // namespace hymor
