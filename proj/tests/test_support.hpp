// Shared helpers for the test suites: scratch directories and small graph
// builders.
#pragma once

#include "gssc/graph.hpp"

#include <atomic>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace gssc::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gssc-test-" + tag + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Small graph with explicit labels/edges; features default to one-hot labels
// plus the node index in a second block for variety.
inline Graph make_graph(int n, int n_classes, std::vector<int> labels,
                        std::vector<std::pair<int, int>> edges, int extra_dims = 2) {
  const int d = n_classes + extra_dims;
  Matrix X(n, d);
  X.setZero();
  for (int i = 0; i < n; ++i) {
    X(i, labels[static_cast<std::size_t>(i)]) = 1.0;
    for (int k = 0; k < extra_dims; ++k) {
      X(i, n_classes + k) = 0.1 * static_cast<double>((i + 1) * (k + 2));
    }
  }
  Splits splits;
  for (int i = 0; i < n; ++i) {
    if (i % 3 == 0) {
      splits.train.push_back(i);
    } else if (i % 3 == 1) {
      splits.val.push_back(i);
    } else {
      splits.test.push_back(i);
    }
  }
  return Graph::build(std::move(X), std::move(labels), n_classes, std::move(edges),
                      std::move(splits));
}

}  // namespace gssc::test
