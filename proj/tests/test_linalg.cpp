#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>

#include "presnet/linalg.hpp"
#include "presnet/rng.hpp"

using namespace presnet;

namespace {

Matrix make(std::size_t r, std::size_t c, std::initializer_list<double> vals) {
  Matrix m(r, c);
  std::size_t k = 0;
  for (double v : vals) m.data()[k++] = v;
  return m;
}

Vec random_vec(RngStream& rng, std::size_t n, double lo = -2.0,
               double hi = 2.0) {
  Vec v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("linalg: matvec identity and zero", "[linalg]") {
  Matrix id = make(2, 2, {1, 0, 0, 1});
  Vec v{3, 4};
  CHECK(matvec(id, v) == Vec{3, 4});

  Matrix zero(2, 2, 0.0);
  CHECK(matvec(zero, v) == Vec{0, 0});
}

TEST_CASE("linalg: matvec hand-multiplied case", "[linalg]") {
  Matrix m = make(2, 2, {1, 2, 3, 4});
  Vec v{1, 1};
  Vec out = matvec(m, v);
  CHECK(out[0] == 3.0);
  CHECK(out[1] == 7.0);
}

TEST_CASE("linalg: matvec rejects dimension mismatch", "[linalg]") {
  Matrix m(2, 3, 1.0);
  Vec v{1, 2};
  CHECK_THROWS_AS(matvec(m, v), Error);
}

TEST_CASE("linalg: matvec distributes over vector addition", "[linalg]") {
  RngStream rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix m(5, 7);
    for (std::size_t k = 0; k < m.size(); ++k)
      m.data()[k] = rng.uniform(-3.0, 3.0);
    Vec a = random_vec(rng, 7), b = random_vec(rng, 7);
    Vec ab(7);
    for (std::size_t i = 0; i < 7; ++i) ab[i] = a[i] + b[i];
    Vec lhs = matvec(m, ab), ra = matvec(m, a), rb = matvec(m, b);
    for (std::size_t i = 0; i < 5; ++i) {
      double scale = std::abs(ra[i]) + std::abs(rb[i]) + 1.0;
      CHECK(std::abs(lhs[i] - ra[i] - rb[i]) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("linalg: matvec_transpose agrees with explicit transpose",
          "[linalg]") {
  RngStream rng(7);
  Matrix m(4, 6);
  for (std::size_t k = 0; k < m.size(); ++k)
    m.data()[k] = rng.uniform(-1.0, 1.0);
  Vec v = random_vec(rng, 4);
  Matrix mt(6, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) mt(j, i) = m(i, j);
  Vec a = matvec_transpose(m, v), b = matvec(mt, v);
  for (std::size_t j = 0; j < 6; ++j)
    CHECK(a[j] == Catch::Approx(b[j]).margin(1e-15));
}

TEST_CASE("linalg: frobenius_norm single matrices", "[linalg]") {
  CHECK(frobenius_norm(make(1, 2, {3, 4})) == 5.0);
  CHECK(frobenius_norm(Matrix(3, 3, 0.0)) == 0.0);
}

TEST_CASE("linalg: frobenius_norm over a sequence", "[linalg]") {
  std::vector<Matrix> seq{make(1, 1, {1}), make(1, 1, {2})};
  CHECK(frobenius_norm(seq) == Catch::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK_THROWS_AS(frobenius_norm(std::vector<Matrix>{}), Error);
}

TEST_CASE("linalg: frobenius_norm absolute homogeneity", "[linalg]") {
  RngStream rng(11);
  Matrix m(6, 5);
  for (std::size_t k = 0; k < m.size(); ++k)
    m.data()[k] = rng.uniform(-2.0, 2.0);
  const double base = frobenius_norm(m);
  for (double c : {-3.5, -1.0, 0.25, 2.0, 10.0}) {
    Matrix cm = m;
    for (std::size_t k = 0; k < cm.size(); ++k) cm.data()[k] *= c;
    CHECK(frobenius_norm(cm) ==
          Catch::Approx(std::abs(c) * base).epsilon(1e-12));
  }
}

TEST_CASE("linalg: glorot bound with fan 3x3 is [-1,1]", "[linalg]") {
  RngStream rng(1);
  Matrix w = glorot_uniform_init(3, 3, rng);
  REQUIRE(w.rows() == 3);
  REQUIRE(w.cols() == 3);
  for (std::size_t k = 0; k < w.size(); ++k) {
    CHECK(w.data()[k] >= -1.0);
    CHECK(w.data()[k] <= 1.0);
  }
}

TEST_CASE("linalg: glorot determinism per seed", "[linalg]") {
  RngStream a(123), b(123);
  Matrix wa = glorot_uniform_init(5, 4, a);
  Matrix wb = glorot_uniform_init(5, 4, b);
  CHECK(wa == wb);
}

TEST_CASE("linalg: glorot sample mean within 3 sigma", "[linalg]") {
  // 10^4 entries, each uniform on [-a,a]; the sample mean has standard
  // deviation a/sqrt(3)/100.
  RngStream rng(2024);
  const std::size_t fan = 50;
  Matrix w = glorot_uniform_init(fan, fan, rng);
  RngStream rng2 = rng.child(1);
  Matrix w2 = glorot_uniform_init(fan, fan, rng2);
  Matrix w3 = glorot_uniform_init(fan, fan, rng);
  Matrix w4 = glorot_uniform_init(fan, fan, rng);
  const double a = std::sqrt(6.0 / (50.0 + 50.0));
  double sum = 0.0;
  std::size_t n = 0;
  for (const Matrix* m : {&w, &w2, &w3, &w4}) {
    for (std::size_t k = 0; k < m->size(); ++k) sum += m->data()[k];
    n += m->size();
  }
  REQUIRE(n == 10000);
  const double mean = sum / static_cast<double>(n);
  const double sigma_mean = a / std::sqrt(3.0) / 100.0;
  CHECK(std::abs(mean) <= 3.0 * sigma_mean);
}

TEST_CASE("linalg: glorot rejects zero fan", "[linalg]") {
  RngStream rng(5);
  CHECK_THROWS_AS(glorot_uniform_init(0, 3, rng), Error);
}

TEST_CASE("rng: equal seeds give equal draw sequences", "[rng]") {
  RngStream a(987654321), b(987654321);
  for (int i = 0; i < 100000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: uniform stays in [0,1)", "[rng]") {
  RngStream rng(3);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("rng: child streams differ from parent and each other", "[rng]") {
  RngStream parent(55);
  RngStream c0 = parent.child(0);
  RngStream c1 = parent.child(1);
  CHECK(c0.next_u64() != c1.next_u64());
  // Child derivation ignores the parent's draw position.
  RngStream parent2(55);
  parent2.next_u64();
  RngStream c0_again = parent2.child(0);
  RngStream c0_ref = parent.child(0);
  CHECK(c0_again.next_u64() == c0_ref.next_u64());
}

TEST_CASE("rng: shuffle is a permutation and seed-deterministic", "[rng]") {
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i;
  std::vector<int> w = v;
  RngStream a(9), b(9);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("rng: bounded draw is within range", "[rng]") {
  RngStream rng(17);
  for (int i = 0; i < 1000; ++i) CHECK(rng.bounded(7) < 7);
}
