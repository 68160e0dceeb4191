#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hymor {

// Fixed-dimension real vector. Construction rejects empty or non-finite input,
// so every live instance satisfies dim >= 1 and all entries finite.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<double> values);
  EmbeddingVector(std::initializer_list<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

// Throws NonFiniteValue on the first NaN/Inf.
void require_finite(std::span<const double> values);

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double l2_norm(std::span<const double> v) noexcept;

// Cosine similarity clamped to [-1, 1]; throws DataError for a zero-norm operand.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace hymor
