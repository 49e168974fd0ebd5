#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "policysim/error.hpp"
#include "policysim/graph.hpp"
#include "policysim/rng.hpp"

using namespace policysim;

namespace {

SocialGraph graph_of(std::vector<UserId> ids, std::vector<std::pair<const char*, const char*>> edges) {
  SocialGraph g(std::move(ids));
  for (auto [a, b] : edges) g.apply(a, b, RelationKind::kFollow, 0);
  return g;
}

SocialGraph undirected(std::vector<UserId> ids, std::vector<std::pair<const char*, const char*>> edges) {
  SocialGraph g(std::move(ids));
  for (auto [a, b] : edges) {
    g.apply(a, b, RelationKind::kFollow, 0);
    g.apply(b, a, RelationKind::kFollow, 0);
  }
  return g;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

TEST_CASE("follow inserts an edge, unfollow of a missing edge is a no-op") {
  SocialGraph g({"a", "b", "c"});
  auto g1 = apply_relationship_action(g, "a", "b", RelationKind::kFollow, 1);
  CHECK(g1.has_edge("a", "b"));
  CHECK_FALSE(g1.has_edge("b", "a"));
  CHECK(g1.edge_count() == 1);

  auto g2 = apply_relationship_action(g, "a", "b", RelationKind::kUnfollow, 1);
  CHECK(g2 == g);

  auto g3 = apply_relationship_action(g1, "a", "b", RelationKind::kUnfollow, 2);
  CHECK(g3 == g);
  CHECK(g1.edges().front().created_round == 1);
}

TEST_CASE("follow is idempotent and rejects bad ids") {
  SocialGraph g({"a", "b"});
  CHECK(g.apply("a", "b", RelationKind::kFollow, 0));
  CHECK_FALSE(g.apply("a", "b", RelationKind::kFollow, 1));
  CHECK(g.edge_count() == 1);
  CHECK_THROWS_AS(g.apply("a", "a", RelationKind::kFollow, 0), Error);
  try {
    g.apply("a", "zz", RelationKind::kFollow, 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownId);
  }
}

TEST_CASE("node order is sorted regardless of input order") {
  SocialGraph g({"c", "a", "b"});
  CHECK(g.node(0) == "a");
  CHECK(g.node(2) == "c");
  CHECK(g.require_index("b") == 1);
}

TEST_CASE("propagate with gamma 1 or zero hops is the identity") {
  Rng rng(3);
  auto g = random_follow_graph(8, 0.3, 11);
  const Matrix x = random_matrix(8, 4, rng);
  CHECK(propagate(g, x, {1.0, 5}) == x);
  CHECK(propagate(g, x, {0.3, 0}) == x);
}

TEST_CASE("propagate on a mutual pair averages the two rows") {
  auto g = undirected({"a", "b"}, {{"a", "b"}});
  Matrix x(2, 1);
  x(0, 0) = 1.0;
  const Matrix y = propagate(g, x, {0.5, 1});
  CHECK(y(0, 0) == 0.5);
  CHECK(y(1, 0) == 0.5);
}

TEST_CASE("propagate matches the dense matrix power") {
  Rng rng(7);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto g = random_follow_graph(10, 0.25, seed);
    const Matrix x = random_matrix(10, 3, rng);
    const double gamma = 0.2 * static_cast<double>(seed);
    const auto p = oracle::follow_operator(g);
    oracle::Dense step(10, std::vector<double>(10));
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j) step[i][j] = (i == j ? gamma : 0.0) + (1.0 - gamma) * p[i][j];
    // Zero-degree rows: gamma I + (1 - gamma) I = I, as the operator keeps them.
    const auto m3 = oracle::multiply(oracle::multiply(step, step), step);
    oracle::Dense xd(10, std::vector<double>(3));
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t c = 0; c < 3; ++c) xd[i][c] = x(i, c);
    const auto expect = oracle::multiply(m3, xd);
    const Matrix y = propagate(g, x, {gamma, 3});
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t c = 0; c < 3; ++c) CHECK(y(i, c) == doctest::Approx(expect[i][c]).epsilon(1e-12));
  }
}

TEST_CASE("propagate hops compose and stay within column bounds") {
  Rng rng(9);
  auto g = random_follow_graph(12, 0.2, 4);
  const Matrix x = random_matrix(12, 5, rng);
  Matrix iter = x;
  for (int k = 0; k < 4; ++k) iter = propagate(g, iter, {0.4, 1});
  const Matrix direct = propagate(g, x, {0.4, 4});
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(std::abs(iter(i, c) - direct(i, c)) < 1e-12);
      double lo = x(0, c), hi = x(0, c);
      for (std::size_t r = 0; r < 12; ++r) {
        lo = std::min(lo, x(r, c));
        hi = std::max(hi, x(r, c));
      }
      CHECK(direct(i, c) >= lo - 1e-15);
      CHECK(direct(i, c) <= hi + 1e-15);
    }
}

TEST_CASE("propagate rejects a row count mismatch and bad config") {
  SocialGraph g({"a", "b", "c"});
  try {
    (void)propagate(g, Matrix(2, 4), {});
    FAIL("expected shape error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShape);
  }
  CHECK_THROWS_AS((void)propagate(g, Matrix(3, 4), {1.5, 1}), Error);
  CHECK_THROWS_AS((void)propagate(g, Matrix(3, 4), {0.5, -1}), Error);
}

TEST_CASE("isolated node keeps its row under propagation") {
  auto g = graph_of({"a", "b", "c"}, {{"a", "b"}, {"b", "a"}});
  Matrix x(3, 2);
  x(2, 0) = 0.3;
  x(2, 1) = -0.7;
  const Matrix y = propagate(g, x, {0.5, 3});
  CHECK(y(2, 0) == 0.3);
  CHECK(y(2, 1) == -0.7);
}

TEST_CASE("abm_step examples") {
  auto pair = graph_of({"a", "b"}, {{"a", "b"}});  // symmetrized in the ABM view
  auto r = abm_step(pair, std::vector<double>{1.0, 0.0});
  CHECK(r.beliefs == std::vector<double>{0.5, 0.5});
  CHECK_FALSE(r.disconnected);

  auto uniform = abm_step(random_follow_graph(6, 0.5, 2), std::vector<double>(6, 0.5));
  for (double v : uniform.beliefs) CHECK(v == 0.5);

  auto path = undirected({"a", "b", "c"}, {{"a", "b"}, {"b", "c"}});
  auto p = abm_step(path, std::vector<double>{1.0, 0.0, 0.0});
  CHECK(p.beliefs[0] == 0.5);
  CHECK(p.beliefs[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(p.beliefs[2] == 0.0);

  SocialGraph apart({"a", "b"});
  CHECK(abm_step(apart, std::vector<double>{1.0, 0.0}).disconnected);
}

TEST_CASE("abm_step keeps beliefs in range and preserves the pi-weighted mean") {
  Rng rng(21);
  auto g = random_follow_graph(15, 0.2, 8);
  AbmOperator op(g);
  REQUIRE(op.connected());
  const auto pi = oracle::stationary(oracle::abm_operator(g));
  std::vector<double> x(15);
  for (double& v : x) v = rng.uniform();
  double before = 0.0;
  for (std::size_t i = 0; i < 15; ++i) before += pi[i] * x[i];
  const auto y = abm_step(g, x).beliefs;
  double after = 0.0;
  for (std::size_t i = 0; i < 15; ++i) after += pi[i] * y[i];
  CHECK(std::abs(before - after) < 1e-12);
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  for (double v : y) {
    CHECK(v >= *lo);
    CHECK(v <= *hi);
  }
}

TEST_CASE("abm_step rejects beliefs outside [0,1]") {
  SocialGraph g({"a", "b"});
  CHECK_THROWS_AS(abm_step(g, std::vector<double>{1.5, 0.0}), Error);
  CHECK_THROWS_AS(abm_step(g, std::vector<double>{0.5}), Error);
}

TEST_CASE("abm_converge on a consensus input stops immediately") {
  auto g = random_follow_graph(5, 0.5, 1);
  auto r = abm_converge(g, std::vector<double>(5, 0.25), 1e-9, 100);
  CHECK(r.iterations == 0);
  CHECK(r.spread == 0.0);
  CHECK(r.converged);
}

TEST_CASE("abm_converge reaches pi . x0 on connected random graphs") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto g = random_follow_graph(50, 0.1, seed);
    if (!AbmOperator(g).connected()) continue;
    Rng rng(seed * 31);
    std::vector<double> x0(50);
    for (double& v : x0) v = rng.uniform();
    const auto pi = oracle::stationary(oracle::abm_operator(g));
    double predicted = 0.0;
    for (std::size_t i = 0; i < 50; ++i) predicted += pi[i] * x0[i];
    auto r = abm_converge(g, x0, 1e-6, 500);
    CHECK(r.converged);
    CHECK(r.spread < 1e-6);
    CHECK(std::abs(r.beliefs[0] - predicted) < 1e-6);
  }
}

TEST_CASE("abm_converge spread never increases") {
  auto g = random_follow_graph(20, 0.15, 5);
  Rng rng(2);
  std::vector<double> x(20);
  for (double& v : x) v = rng.uniform();
  double prev = 2.0;
  for (int it = 0; it < 40; ++it) {
    auto r = abm_converge(g, x, 1e-300, it);
    CHECK(r.spread <= prev + 1e-15);
    prev = r.spread;
  }
}

TEST_CASE("two disconnected cliques settle on separate values") {
  auto g = undirected({"a", "b", "c", "d"}, {{"a", "b"}, {"c", "d"}});
  auto r = abm_converge(g, std::vector<double>{1.0, 0.8, 0.0, 0.2}, 1e-9, 200);
  CHECK(r.disconnected);
  CHECK_FALSE(r.converged);
  CHECK(r.beliefs[0] == doctest::Approx(0.9));
  CHECK(r.beliefs[2] == doctest::Approx(0.1));
  CHECK_THROWS_AS(abm_converge(g, std::vector<double>(4, 0.5), 0.0, 10), Error);
}

TEST_CASE("stationary distribution examples") {
  // Cycle C5 is 2-regular: uniform.
  auto cycle = undirected({"a", "b", "c", "d", "e"}, {{"a", "b"}, {"b", "c"}, {"c", "d"}, {"d", "e"}, {"e", "a"}});
  for (double p : stationary_distribution(cycle)) CHECK(p == doctest::Approx(0.2).epsilon(1e-10));

  // Star K1,3 with self-loops: degrees 4,2,2,2.
  auto star = undirected({"a", "b", "c", "d"}, {{"a", "b"}, {"a", "c"}, {"a", "d"}});
  const auto pi = stationary_distribution(star);
  const auto ref = oracle::stationary(oracle::abm_operator(star));
  const double expect[] = {0.4, 0.2, 0.2, 0.2};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(pi[i] - expect[i]) < 1e-10);
    CHECK(std::abs(ref[i] - expect[i]) < 1e-10);
  }

  SocialGraph apart({"a", "b"});
  try {
    (void)stationary_distribution(apart);
    FAIL("expected component error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kComponent);
  }
}

TEST_CASE("stationary distribution is a fixed point of the averaging operator") {
  auto g = random_follow_graph(25, 0.15, 12);
  REQUIRE(AbmOperator(g).connected());
  const auto pi = stationary_distribution(g);
  const auto p = oracle::abm_operator(g);
  double total = 0.0;
  for (std::size_t j = 0; j < 25; ++j) {
    double v = 0.0;
    for (std::size_t i = 0; i < 25; ++i) v += pi[i] * p[i][j];
    CHECK(std::abs(v - pi[j]) < 1e-10);
    total += pi[j];
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("abm_trials report agrees with the oracle") {
  const auto trials = abm_trials(30, 0.15, 5, 3);
  REQUIRE(trials.size() == 3);
  for (const auto& t : trials) {
    CHECK(t.converged);
    CHECK(t.error < 1e-6);
    CHECK(t.iterations <= 500);
  }
  CHECK(abm_trials(30, 0.15, 5, 3)[2].consensus == trials[2].consensus);
}

TEST_CASE("random follow graph is seeded and has no self-edges") {
  auto a = random_follow_graph(20, 0.3, 99);
  auto b = random_follow_graph(20, 0.3, 99);
  CHECK(a == b);
  CHECK_FALSE(a == random_follow_graph(20, 0.3, 100));
  for (const auto& e : a.edges()) CHECK(e.follower != e.followee);
  CHECK(a.node(0) == "n000");
}
