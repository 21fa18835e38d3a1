#include "doctest.h"

#include "gssc/graph.hpp"
#include "gssc/rng.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>

using namespace gssc;
using gssc::test::TempDir;
using gssc::test::make_graph;

TEST_CASE("minimal graph has both CSR directions") {
  auto g = make_graph(3, 2, {0, 1, 0}, {{0, 1}});
  CHECK(g.n_edges() == 1);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 0));
  CHECK(g.degree(0) == 1);
  CHECK(g.degree(1) == 1);
  CHECK(g.degree(2) == 0);
}

TEST_CASE("build rejects invariant violations") {
  CHECK_THROWS_WITH_AS(make_graph(3, 2, {0, 1, 0}, {{1, 1}}),
                       doctest::Contains("self-loop"), GsscError);
  CHECK_THROWS_WITH_AS(make_graph(3, 2, {0, 1, 0}, {{0, 1}, {1, 0}}),
                       doctest::Contains("duplicate"), GsscError);
  CHECK_THROWS_WITH_AS(make_graph(3, 2, {0, 1, 0}, {{0, 5}}),
                       doctest::Contains("out of range"), GsscError);
  CHECK_THROWS_WITH_AS(make_graph(3, 2, {0, 3, 0}, {{0, 1}}),
                       doctest::Contains("label"), GsscError);
}

TEST_CASE("homophily ratio on enumerated cases") {
  SUBCASE("5-cycle with labels 0,0,1,1,0") {
    auto g = make_graph(5, 2, {0, 0, 1, 1, 0}, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}});
    CHECK(homophily_ratio(g).value == doctest::Approx(0.6).epsilon(1e-12));
  }
  SUBCASE("all nodes same class") {
    auto g = make_graph(4, 2, {0, 0, 0, 0}, {{0, 1}, {1, 2}, {2, 3}});
    CHECK(homophily_ratio(g).value == 1.0);
  }
  SUBCASE("bipartite split by class") {
    auto g = make_graph(4, 2, {0, 0, 1, 1}, {{0, 2}, {0, 3}, {1, 2}, {1, 3}});
    CHECK(homophily_ratio(g).value == 0.0);
  }
  SUBCASE("empty edge set warns") {
    auto g = make_graph(3, 2, {0, 1, 0}, {});
    auto r = homophily_ratio(g);
    CHECK(r.value == 0.0);
    CHECK(r.empty_edge_set);
  }
  SUBCASE("invariant under class relabeling") {
    auto g = make_graph(6, 3, {0, 1, 2, 0, 1, 2},
                        {{0, 1}, {0, 3}, {1, 4}, {2, 5}, {3, 4}, {4, 5}});
    const double base = homophily_ratio(g).value;
    // permutation 0->2, 1->0, 2->1
    std::vector<int> relabeled;
    for (int y : g.labels) relabeled.push_back((y + 2) % 3);
    CHECK(homophily_ratio(g, relabeled).value == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("generate_sbm matches the pair-count homophily formula") {
  SUBCASE("p_out = 0 gives homophily exactly 1") {
    auto g = generate_sbm(200, 4, 0.1, 0.0, 8, 0.5, 7);
    CHECK(g.n_edges() > 0);
    CHECK(homophily_ratio(g).value == 1.0);
  }
  SUBCASE("p_in = p_out approaches (n/C-1)/(n-1)") {
    auto g = generate_sbm(1000, 5, 0.01, 0.01, 8, 0.5, 3);
    const double expected = 199.0 / 999.0;
    CHECK(homophily_ratio(g).value == doctest::Approx(expected).epsilon(0.25));
  }
  SUBCASE("closed-form ratio for the benchmark setting") {
    // p_in (n/C - 1) / (p_in (n/C - 1) + p_out n (C-1)/C) = 3.98 / 5.58
    const double expected = 3.98 / 5.58;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
      auto g = generate_sbm(1000, 5, 0.02, 0.002, 64, 1.0, seed);
      CHECK(std::abs(homophily_ratio(g).value - expected) < 0.02);
    }
  }
  SUBCASE("deterministic given seed") {
    auto a = generate_sbm(100, 5, 0.1, 0.02, 8, 0.5, 11);
    auto b = generate_sbm(100, 5, 0.1, 0.02, 8, 0.5, 11);
    CHECK(a == b);
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(generate_sbm(101, 5, 0.1, 0.02, 8, 0.5, 1), GsscError);
    CHECK_THROWS_AS(generate_sbm(100, 5, 0.02, 0.1, 8, 0.5, 1), GsscError);
    CHECK_THROWS_AS(generate_sbm(100, 5, 1.5, 0.1, 8, 0.5, 1), GsscError);
  }
}

TEST_CASE("label noise protocols") {
  auto g = generate_sbm(500, 5, 0.05, 0.01, 8, 0.5, 21);
  SUBCASE("zero ratio keeps labels") {
    auto noisy = inject_label_noise(g, {NoiseKind::LabelSymmetric, 0.0, 9});
    CHECK(noisy.labels == g.labels);
  }
  SUBCASE("asymmetric ratio 1 shifts every train label") {
    auto noisy = inject_label_noise(g, {NoiseKind::LabelAsymmetric, 1.0, 9});
    for (int v : g.splits.train) CHECK(noisy.labels[v] == (g.labels[v] + 1) % 5);
  }
  SUBCASE("val and test labels untouched") {
    auto noisy = inject_label_noise(g, {NoiseKind::LabelSymmetric, 0.9, 9});
    for (int v : g.splits.val) CHECK(noisy.labels[v] == g.labels[v]);
    for (int v : g.splits.test) CHECK(noisy.labels[v] == g.labels[v]);
  }
  SUBCASE("symmetric flip frequency matches the ratio") {
    // Big train split via a dedicated graph: every node in train.
    const int n = 10000;
    Matrix X = Matrix::Zero(n, 4);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i % 4;
    Splits splits;
    splits.train.resize(n);
    std::iota(splits.train.begin(), splits.train.end(), 0);
    auto big = Graph::build(std::move(X), std::move(labels), 4, {}, std::move(splits));
    auto noisy = inject_label_noise(big, {NoiseKind::LabelSymmetric, 0.4, 5});
    int flips = 0;
    for (int i = 0; i < n; ++i) flips += noisy.labels[i] != big.labels[i];
    CHECK(std::abs(flips / double(n) - 0.4) < 0.02);
  }
  SUBCASE("kind mismatch") {
    CHECK_THROWS_AS(inject_label_noise(g, {NoiseKind::EdgePerturb, 0.1, 1}), GsscError);
  }
}

TEST_CASE("edge perturbation bookkeeping") {
  auto g = generate_sbm(250, 5, 0.15, 0.01, 8, 0.5, 33);
  SUBCASE("zero ratio is identity") {
    CHECK(perturb_edges(g, {NoiseKind::EdgePerturb, 0.0, 4}) == g);
  }
  SUBCASE("half split removes and adds r|E|/2 each") {
    const auto m = g.n_edges();
    auto p = perturb_edges(g, {NoiseKind::EdgePerturb, 0.2, 4});
    CHECK(p.n_edges() == m);
    std::size_t shared = 0;
    for (const auto& e : p.edges) shared += std::binary_search(g.edges.begin(), g.edges.end(), e);
    CHECK(m - shared == m / 10);  // floor(0.2 m / 2)
  }
  SUBCASE("each split doubles the budget") {
    const auto m = g.n_edges();
    auto p = perturb_edges(g, {NoiseKind::EdgePerturb, 0.2, 4}, EdgeNoiseSplit::Each);
    CHECK(p.n_edges() == m);
    std::size_t shared = 0;
    for (const auto& e : p.edges) shared += std::binary_search(g.edges.begin(), g.edges.end(), e);
    CHECK(m - shared == m / 5);
  }
  SUBCASE("random additions lower homophily on a homophilous graph") {
    auto base = generate_sbm(500, 5, 0.08, 0.002, 8, 0.5, 70);
    const double before = homophily_ratio(base).value;
    double after_sum = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      after_sum += homophily_ratio(perturb_edges(base, {NoiseKind::EdgePerturb, 0.4, s})).value;
    }
    CHECK(after_sum / 5.0 < before);
  }
  SUBCASE("too dense to add") {
    auto k4 = make_graph(4, 2, {0, 1, 0, 1},
                         {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
    CHECK_THROWS_WITH_AS(perturb_edges(k4, {NoiseKind::EdgePerturb, 1.0, 1}),
                         doctest::Contains("too dense"), GsscError);
  }
}

TEST_CASE("biased edge removal spans a homophily ladder") {
  auto g = generate_sbm(400, 4, 0.08, 0.02, 8, 0.5, 12);
  const double base = homophily_ratio(g).value;
  auto low = remove_edges_biased(g, 0.5, -1.0, 3);
  auto high = remove_edges_biased(g, 0.5, 1.0, 3);
  CHECK(low.n_edges() == g.n_edges() - g.n_edges() / 2);
  CHECK(homophily_ratio(low).value < base);
  CHECK(homophily_ratio(high).value > base);
}

TEST_CASE("save/load round trip") {
  auto g = generate_sbm(60, 3, 0.2, 0.05, 7, 0.8, 99);
  TempDir dir("roundtrip");
  const auto target = dir.path() / "data";
  save_graph(g, target);
  auto loaded = load_graph(target);
  CHECK(loaded == g);

  SUBCASE("fingerprint is stable and content-sensitive") {
    const auto fp1 = dataset_fingerprint(target);
    save_graph(g, target);  // overwrite with identical content
    CHECK(dataset_fingerprint(target) == fp1);
    auto other = inject_label_noise(g, {NoiseKind::LabelAsymmetric, 1.0, 1});
    save_graph(other, target);
    CHECK(dataset_fingerprint(target) != fp1);
  }

  SUBCASE("overwrite replaces the directory") {
    auto small = make_graph(3, 2, {0, 1, 0}, {{0, 1}});
    save_graph(small, target);
    CHECK(load_graph(target) == small);
  }
}

TEST_CASE("empty-edge graph saves to valid files") {
  auto g = make_graph(3, 2, {0, 1, 0}, {});
  TempDir dir("empty-edges");
  const auto target = dir.path() / "data";
  save_graph(g, target);
  std::ifstream edges(target / "edges.tsv");
  std::string content((std::istreambuf_iterator<char>(edges)),
                      std::istreambuf_iterator<char>());
  CHECK(content.empty());
  CHECK(load_graph(target) == g);
}

TEST_CASE("loader reports parse errors with line numbers") {
  TempDir dir("parse-errors");
  const auto d = dir.path();
  auto write = [&](const char* name, const std::string& content) {
    std::ofstream out(d / name);
    out << content;
  };
  write("splits.json", R"({"train":[0],"val":[1],"test":[2]})");

  SUBCASE("missing file") {
    write("nodes.tsv", "0\t0\t1.5\n1\t1\t2.5\n2\t0\t0.5\n");
    CHECK_THROWS_WITH_AS(load_graph(d), doctest::Contains("missing file"), GsscError);
  }
  SUBCASE("self-loop carries its line number") {
    write("nodes.tsv", "0\t0\t1.5\n1\t1\t2.5\n2\t0\t0.5\n");
    write("edges.tsv", "0\t1\n2\t2\n");
    CHECK_THROWS_WITH_AS(load_graph(d), doctest::Contains("self-loop at line 2"), GsscError);
  }
  SUBCASE("non-numeric feature") {
    write("nodes.tsv", "0\t0\t1.5\n1\t1\tbad\n2\t0\t0.5\n");
    write("edges.tsv", "0\t1\n");
    CHECK_THROWS_WITH_AS(load_graph(d), doctest::Contains("line 2"), GsscError);
  }
  SUBCASE("endpoint out of range") {
    write("nodes.tsv", "0\t0\t1.5\n1\t1\t2.5\n2\t0\t0.5\n");
    write("edges.tsv", "0\t9\n");
    CHECK_THROWS_WITH_AS(load_graph(d), doctest::Contains("out of range at line 1"), GsscError);
  }
  SUBCASE("non-canonical order") {
    write("nodes.tsv", "0\t0\t1.5\n1\t1\t2.5\n2\t0\t0.5\n");
    write("edges.tsv", "1\t0\n");
    CHECK_THROWS_WITH_AS(load_graph(d), doctest::Contains("canonical"), GsscError);
  }
}
