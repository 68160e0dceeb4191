#include <doctest.h>

#include <cmath>
#include <limits>

#include "hymor/embedding.hpp"
#include "hymor/errors.hpp"

using namespace hymor;

TEST_CASE("embedding vectors reject empty and non-finite input") {
  CHECK_THROWS_AS(EmbeddingVector(std::vector<double>{}), DataError);
  CHECK_THROWS_AS(EmbeddingVector({1.0, std::numeric_limits<double>::quiet_NaN()}), NonFiniteValue);
  try {
    EmbeddingVector({0.0, 1.0, std::numeric_limits<double>::infinity()});
    FAIL("expected NonFiniteValue");
  } catch (const NonFiniteValue& e) {
    CHECK(e.position() == 2);
  }
  EmbeddingVector v{0.1, 0.2, 0.3};
  CHECK(v.dim() == 3);
  CHECK(v[1] == 0.2);
}

TEST_CASE("cosine similarity") {
  const std::vector<double> a{1, 0}, b{0, 1}, c{2, 0}, d{-3, 0};
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(a, c) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(a, d) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_similarity(a, std::vector<double>{0, 0}), DataError);
  CHECK_THROWS_AS(cosine_similarity(a, std::vector<double>{1, 0, 0}), DimensionMismatch);
  CHECK(l2_norm(std::vector<double>{3, 4}) == 5.0);
}
